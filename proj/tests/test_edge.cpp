#include <doctest.h>

#include <thread>

#include "curp/balanced_kmeans.hpp"
#include "curp/codec.hpp"
#include "curp/edge.hpp"
#include "curp/quantizer.hpp"
#include "curp/synth.hpp"

using namespace curp;

TEST_CASE("frame encode/decode") {
    SUBCASE("HELLO with a 12-byte payload is 17 bytes, header first") {
        Frame f;
        f.type = FrameType::Hello;
        f.payload.assign(12, 0xAB);
        const auto bytes = encode_frame(f);
        REQUIRE(bytes.size() == 17);
        CHECK(bytes[0] == 0x01);
        CHECK(bytes[1] == 0x0C);
        CHECK(bytes[2] == 0x00);
        CHECK(bytes[3] == 0x00);
        CHECK(bytes[4] == 0x00);
    }
    SUBCASE("zero-length ACK") {
        Frame f;
        f.type = FrameType::Ack;
        const auto bytes = encode_frame(f);
        CHECK(bytes == std::vector<std::uint8_t>{0x03, 0x00, 0x00, 0x00, 0x00});
    }
    SUBCASE("round trip") {
        Frame f;
        f.type = FrameType::IndexStream;
        f.payload = {1, 2, 3, 4, 5};
        std::size_t consumed = 0;
        const Frame back = decode_frame(encode_frame(f), &consumed);
        CHECK(consumed == 10);
        CHECK(back.type == f.type);
        CHECK(back.payload == f.payload);
    }
    SUBCASE("unknown type and truncation") {
        CHECK_THROWS_AS(decode_frame({0x09, 0, 0, 0, 0}, nullptr), UnknownFrameType);
        CHECK_THROWS_AS(decode_frame({0x01, 0x05, 0, 0, 0, 1}, nullptr), Truncated);
        CHECK_THROWS_AS(decode_frame({0x01}, nullptr), Truncated);
    }
}

namespace {

struct SessionRun {
    ClientReport client;
    ServerResult server;
};

SessionRun loopback(const EmbeddingPool& pool, const Codebook& client_cb,
                    const Codebook& server_cb) {
    auto [client_conn, server_conn] = PipeConnection::make_pair();
    ServerResult server_result;
    std::exception_ptr server_error;
    std::thread server([&] {
        try {
            server_result = server_session(server_cb, *server_conn);
        } catch (...) {
            server_error = std::current_exception();
        }
    });
    ClientReport report;
    std::exception_ptr client_error;
    try {
        report = client_session(pool, client_cb, *client_conn);
    } catch (...) {
        client_error = std::current_exception();
    }
    client_conn->close();
    server.join();
    if (client_error) std::rethrow_exception(client_error);
    if (server_error) std::rethrow_exception(server_error);
    return {report, std::move(server_result)};
}

} // namespace

TEST_CASE("loopback session reconstructs bit-identically") {
    const CodebookSpec spec = make_spec(16, 4, 20);
    const MixturePool mp = generate_mixture_pool(3, 4, 4, spec, 0.2);
    const Codebook cb = init_balanced_kmeans(mp.pool, spec, 50, 1);

    const SessionRun run = loopback(mp.pool, cb, cb);
    CHECK(run.client.local_crc == run.client.server_crc);
    CHECK(run.client.server_crc == run.server.crc);

    // server-side reconstruction equals local reconstruction exactly
    const BatchEncoding enc = encode_batch(mp.pool, cb);
    const Matrix local = reconstruct_batch(enc.codes, cb);
    CHECK(run.server.reconstruction == local);

    // byte accounting: HELLO is 17, INDEX_STREAM is 5 + 4 + packed
    const std::size_t packed = packed_size(mp.pool.count(), spec);
    CHECK(run.client.index_payload_bytes == 4 + packed);
    CHECK(run.client.bytes_sent == 17 + 5 + 4 + packed);
    CHECK(run.client.raw_bytes == mp.pool.count() * spec.dim * 4);
    CHECK(run.client.bytes_sent < run.client.raw_bytes);
}

TEST_CASE("zero histories is a valid session") {
    const CodebookSpec spec = make_spec(8, 4, 4);
    const Codebook cb = random_codebook(spec, 2);
    EmbeddingPool empty;
    empty.data = Matrix(0, 8);
    const SessionRun run = loopback(empty, cb, cb);
    CHECK(run.client.event_count == 0);
    CHECK(run.server.reconstruction.rows == 0);
    CHECK(run.client.local_crc == run.client.server_crc);
}

TEST_CASE("codebook mismatch aborts before any indices are sent") {
    const CodebookSpec spec = make_spec(8, 4, 4);
    const Codebook cb_a = random_codebook(spec, 2);
    const Codebook cb_b = random_codebook(spec, 3);
    const MixturePool mp = generate_mixture_pool(4, 2, 3, spec, 0.1);

    auto [client_conn, server_conn] = PipeConnection::make_pair();
    std::exception_ptr server_error;
    ServerResult server_result;
    std::thread server([&] {
        try {
            server_result = server_session(cb_b, *server_conn);
        } catch (...) {
            server_error = std::current_exception();
        }
    });
    CHECK_THROWS_AS(client_session(mp.pool, cb_a, *client_conn), CodebookMismatch);
    client_conn->close();
    server.join();
    REQUIRE(server_error);
    CHECK_THROWS_AS(std::rethrow_exception(server_error), CodebookMismatch);
    // the only inbound bytes were the HELLO frame: type, length, 12-byte payload
    CHECK(server_result.inbound_log.empty());
}

TEST_CASE("the server only ever receives indices") {
    const CodebookSpec spec = make_spec(8, 2, 8);
    const MixturePool mp = generate_mixture_pool(5, 2, 6, spec, 0.2);
    const Codebook cb = init_balanced_kmeans(mp.pool, spec, 50, 1);
    const SessionRun run = loopback(mp.pool, cb, cb);

    // reparse the full inbound byte log: it must be exactly HELLO then
    // INDEX_STREAM, and the index payload must round-trip to the codes
    std::size_t consumed = 0;
    const Frame hello = decode_frame(run.server.inbound_log, &consumed);
    CHECK(hello.type == FrameType::Hello);
    CHECK(hello.payload.size() == 12);
    std::vector<std::uint8_t> rest(run.server.inbound_log.begin() + consumed,
                                   run.server.inbound_log.end());
    const Frame stream = decode_frame(rest, &consumed);
    CHECK(stream.type == FrameType::IndexStream);
    CHECK(consumed == rest.size());

    const BatchEncoding enc = encode_batch(mp.pool, cb);
    const std::vector<std::uint8_t> packed(stream.payload.begin() + 4,
                                           stream.payload.end());
    const auto codes = unpack_indices(packed, spec, enc.codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        CHECK(codes[i].indices == enc.codes[i].indices);
    }
}

TEST_CASE("tampered index payload is detected") {
    const CodebookSpec spec = make_spec(8, 2, 5); // 3 bits per index
    const MixturePool mp = generate_mixture_pool(6, 2, 4, spec, 0.1);
    const Codebook cb = init_balanced_kmeans(mp.pool, spec, 50, 1);

    // a tampering middlebox between client and server
    auto [client_conn, middle_client] = PipeConnection::make_pair();
    auto [middle_server, server_conn] = PipeConnection::make_pair();

    std::exception_ptr server_error;
    std::thread server([&] {
        try {
            server_session(cb, *server_conn);
        } catch (...) {
            server_error = std::current_exception();
        }
        server_conn->close();
    });
    std::thread middle([&] {
        try {
            Frame hello = recv_frame(*middle_client);
            send_frame(*middle_server, hello);
            Frame ack = recv_frame(*middle_server);
            send_frame(*middle_client, ack);
            Frame stream = recv_frame(*middle_client);
            stream.payload.back() ^= 0xFF; // flip bits in the packed indices
            send_frame(*middle_server, stream);
            Frame final_ack = recv_frame(*middle_server);
            send_frame(*middle_client, final_ack);
        } catch (...) {
        }
        middle_client->close();
        middle_server->close();
    });

    bool detected = false;
    try {
        client_session(mp.pool, cb, *client_conn);
    } catch (const IndexOutOfRange&) {
        detected = true;
    } catch (const ProtocolError&) {
        detected = true; // CRC mismatch on the client side
    } catch (const ConnectionClosed&) {
        detected = true; // server aborted on a bad index
    }
    client_conn->close();
    middle.join();
    server.join();
    if (server_error) {
        try {
            std::rethrow_exception(server_error);
        } catch (const IndexOutOfRange&) {
            detected = true;
        } catch (...) {
        }
    }
    CHECK(detected);
}

TEST_CASE("repeated sessions produce identical transcripts") {
    const CodebookSpec spec = make_spec(8, 4, 6);
    const MixturePool mp = generate_mixture_pool(7, 3, 5, spec, 0.3);
    const Codebook cb = init_balanced_kmeans(mp.pool, spec, 50, 1);
    const SessionRun a = loopback(mp.pool, cb, cb);
    const SessionRun b = loopback(mp.pool, cb, cb);
    CHECK(a.server.inbound_log == b.server.inbound_log);
    CHECK(a.client.server_crc == b.client.server_crc);
}
