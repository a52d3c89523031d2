#include "curp/edge.hpp"

#include <bit>
#include <cstring>

#include "curp/codec.hpp"
#include "curp/quantizer.hpp"

namespace curp {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

bool valid_type(std::uint8_t t) { return t >= 0x01 && t <= 0x04; }

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    std::vector<std::uint8_t> out;
    out.reserve(5 + frame.payload.size());
    out.push_back(static_cast<std::uint8_t>(frame.type));
    put_u32(out, static_cast<std::uint32_t>(frame.payload.size()));
    out.insert(out.end(), frame.payload.begin(), frame.payload.end());
    return out;
}

Frame decode_frame(const std::vector<std::uint8_t>& bytes, std::size_t* consumed) {
    if (bytes.size() < 5) throw Truncated("frame header incomplete");
    if (!valid_type(bytes[0])) {
        throw UnknownFrameType("frame type " + std::to_string(bytes[0]));
    }
    const std::uint32_t len = get_u32(bytes.data() + 1);
    if (bytes.size() < 5 + static_cast<std::size_t>(len)) {
        throw Truncated("frame payload incomplete");
    }
    Frame f;
    f.type = static_cast<FrameType>(bytes[0]);
    f.payload.assign(bytes.begin() + 5, bytes.begin() + 5 + len);
    if (consumed) *consumed = 5 + static_cast<std::size_t>(len);
    return f;
}

void send_frame(Connection& conn, const Frame& frame) {
    const auto bytes = encode_frame(frame);
    conn.write_bytes(bytes.data(), bytes.size());
}

Frame recv_frame(Connection& conn) {
    std::uint8_t header[5];
    conn.read_exact(header, 5);
    if (!valid_type(header[0])) {
        throw UnknownFrameType("frame type " + std::to_string(header[0]));
    }
    Frame f;
    f.type = static_cast<FrameType>(header[0]);
    f.payload.resize(get_u32(header + 1));
    if (!f.payload.empty()) conn.read_exact(f.payload.data(), f.payload.size());
    return f;
}

std::uint32_t matrix_crc(const Matrix& m) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(m.data.size() * 4);
    for (double v : m.data) {
        put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return crc32_ieee(bytes);
}

ClientReport client_session(const EmbeddingPool& histories, const Codebook& cb,
                            Connection& conn) {
    ClientReport report;
    report.event_count = histories.count();
    report.raw_bytes = histories.count() * cb.spec.dim * 4;
    report.compression_factor_per_event =
        static_cast<double>(cb.spec.dim * 4) /
        (static_cast<double>(cb.spec.num_subspaces) * index_bits(cb.spec) / 8.0);

    Frame hello;
    hello.type = FrameType::Hello;
    put_u32(hello.payload, codebook_crc(cb));
    put_u32(hello.payload, cb.spec.vocab_size);
    put_u32(hello.payload, cb.spec.num_subspaces);
    send_frame(conn, hello);
    report.bytes_sent += 5 + hello.payload.size();

    Frame resp = recv_frame(conn);
    if (resp.type == FrameType::Error) {
        throw CodebookMismatch("server rejected codebook");
    }
    if (resp.type != FrameType::Ack) {
        throw ProtocolError("expected ACK after HELLO");
    }

    // only now does anything embedding-derived get computed and sent,
    // and it is indices only
    const BatchEncoding enc = encode_batch(histories, cb);
    Frame stream;
    stream.type = FrameType::IndexStream;
    put_u32(stream.payload, static_cast<std::uint32_t>(enc.codes.size()));
    const auto packed = pack_indices(enc.codes, cb.spec);
    stream.payload.insert(stream.payload.end(), packed.begin(), packed.end());
    send_frame(conn, stream);
    report.bytes_sent += 5 + stream.payload.size();
    report.index_payload_bytes = stream.payload.size();

    Frame final_ack = recv_frame(conn);
    if (final_ack.type != FrameType::Ack || final_ack.payload.size() != 4) {
        throw ProtocolError("expected final ACK with reconstruction CRC");
    }
    report.server_crc = get_u32(final_ack.payload.data());
    report.local_crc = matrix_crc(reconstruct_batch(enc.codes, cb));
    if (report.local_crc != report.server_crc) {
        throw ProtocolError("reconstruction CRC mismatch");
    }
    return report;
}

ServerResult server_session(const Codebook& cb, Connection& conn) {
    ServerResult result;
    auto recv_logged = [&]() {
        Frame f = recv_frame(conn);
        const auto bytes = encode_frame(f);
        result.inbound_log.insert(result.inbound_log.end(), bytes.begin(),
                                  bytes.end());
        return f;
    };

    Frame hello = recv_logged();
    if (hello.type != FrameType::Hello || hello.payload.size() != 12) {
        throw ProtocolError("expected HELLO{crc,K,L}");
    }
    const std::uint32_t client_crc = get_u32(hello.payload.data());
    if (client_crc != codebook_crc(cb)) {
        Frame err;
        err.type = FrameType::Error;
        send_frame(conn, err);
        throw CodebookMismatch("client codebook CRC differs");
    }
    Frame ack;
    ack.type = FrameType::Ack;
    send_frame(conn, ack);

    Frame stream = recv_logged();
    if (stream.type != FrameType::IndexStream || stream.payload.size() < 4) {
        throw ProtocolError("expected INDEX_STREAM");
    }
    const std::uint32_t count = get_u32(stream.payload.data());
    std::vector<std::uint8_t> packed(stream.payload.begin() + 4,
                                     stream.payload.end());
    const auto codes = unpack_indices(packed, cb.spec, count);
    result.reconstruction = reconstruct_batch(codes, cb);
    result.crc = matrix_crc(result.reconstruction);
    result.usage = usage_stats(codes, cb.spec);

    Frame final_ack;
    final_ack.type = FrameType::Ack;
    put_u32(final_ack.payload, result.crc);
    send_frame(conn, final_ack);
    return result;
}

// ---------------------------------------------------------------------------
// PipeConnection
// ---------------------------------------------------------------------------

std::pair<std::unique_ptr<PipeConnection>, std::unique_ptr<PipeConnection>>
PipeConnection::make_pair() {
    auto a = std::unique_ptr<PipeConnection>(new PipeConnection);
    auto b = std::unique_ptr<PipeConnection>(new PipeConnection);
    auto ab = std::make_shared<Channel>();
    auto ba = std::make_shared<Channel>();
    a->out_ = ab;
    a->in_ = ba;
    b->out_ = ba;
    b->in_ = ab;
    return {std::move(a), std::move(b)};
}

void PipeConnection::write_bytes(const std::uint8_t* data, std::size_t len) {
    std::lock_guard lock(out_->mu);
    if (out_->closed) throw ConnectionClosed("pipe closed");
    out_->bytes.insert(out_->bytes.end(), data, data + len);
    out_->cv.notify_all();
}

void PipeConnection::read_exact(std::uint8_t* data, std::size_t len) {
    std::unique_lock lock(in_->mu);
    for (std::size_t i = 0; i < len; ++i) {
        in_->cv.wait(lock, [&] { return !in_->bytes.empty() || in_->closed; });
        if (in_->bytes.empty()) throw ConnectionClosed("pipe closed");
        data[i] = in_->bytes.front();
        in_->bytes.pop_front();
    }
}

void PipeConnection::close() {
    for (auto& ch : {in_, out_}) {
        std::lock_guard lock(ch->mu);
        ch->closed = true;
        ch->cv.notify_all();
    }
}

} // namespace curp
