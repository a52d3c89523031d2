#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include <condition_variable>
#include <mutex>

#include "curp/metrics.hpp"
#include "curp/types.hpp"

namespace curp {

enum class FrameType : std::uint8_t {
    Hello = 0x01,
    IndexStream = 0x02,
    Ack = 0x03,
    Error = 0x04,
};

struct Frame {
    FrameType type = FrameType::Hello;
    std::vector<std::uint8_t> payload;
};

// Reliable ordered byte stream. read_exact blocks until n bytes are available
// and throws ConnectionClosed if the peer is gone.
struct Connection {
    virtual ~Connection() = default;
    virtual void write_bytes(const std::uint8_t* data, std::size_t len) = 0;
    virtual void read_exact(std::uint8_t* data, std::size_t len) = 0;
};

// type byte | u32 LE length | payload
std::vector<std::uint8_t> encode_frame(const Frame& frame);
Frame decode_frame(const std::vector<std::uint8_t>& bytes, std::size_t* consumed);
void send_frame(Connection& conn, const Frame& frame);
Frame recv_frame(Connection& conn);

struct ClientReport {
    std::size_t event_count = 0;
    std::size_t bytes_sent = 0;       // frames included
    std::size_t index_payload_bytes = 0; // count field + packed indices
    std::size_t raw_bytes = 0;        // count * d * 4, what embeddings would cost
    double compression_factor_per_event = 0.0; // (d*4) / (L*b/8)
    std::uint32_t local_crc = 0;      // CRC of the locally reconstructed matrix
    std::uint32_t server_crc = 0;     // CRC echoed by the server
};

// HELLO {codebook crc, K, L} -> ACK -> INDEX_STREAM {count, packed} -> ACK
// {reconstruction crc}. Only indices leave the edge; a codebook mismatch
// aborts before any embedding-derived data is sent.
ClientReport client_session(const EmbeddingPool& histories, const Codebook& cb,
                            Connection& conn);

struct ServerResult {
    Matrix reconstruction; // J x d quantized embeddings
    std::uint32_t crc = 0; // CRC-32 of the f32 LE reconstruction
    UsageStats usage;
    std::vector<std::uint8_t> inbound_log; // every byte received this session
};

ServerResult server_session(const Codebook& cb, Connection& conn);

// CRC-32 of a matrix serialized as f32 LE, the reconstruction identity both
// sides compare.
std::uint32_t matrix_crc(const Matrix& m);

// In-memory duplex pipe for loopback sessions; safe for one reader and one
// writer thread per direction.
class PipeConnection : public Connection {
  public:
    static std::pair<std::unique_ptr<PipeConnection>, std::unique_ptr<PipeConnection>>
    make_pair();

    void write_bytes(const std::uint8_t* data, std::size_t len) override;
    void read_exact(std::uint8_t* data, std::size_t len) override;
    void close();

  private:
    struct Channel {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::uint8_t> bytes;
        bool closed = false;
    };
    std::shared_ptr<Channel> in_;
    std::shared_ptr<Channel> out_;
};

} // namespace curp
