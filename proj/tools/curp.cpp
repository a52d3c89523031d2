// Command-line front end for the prototype-codebook pipeline.

#include <arpa/inet.h>
#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "curp/balanced_kmeans.hpp"
#include "curp/codec.hpp"
#include "curp/edge.hpp"
#include "curp/metrics.hpp"
#include "curp/pba.hpp"
#include "curp/pcc.hpp"
#include "curp/quantizer.hpp"
#include "curp/synth.hpp"

namespace {

using namespace curp;

class TcpConnection : public Connection {
  public:
    explicit TcpConnection(int fd) : fd_(fd) {}
    ~TcpConnection() override {
        if (fd_ >= 0) ::close(fd_);
    }
    void write_bytes(const std::uint8_t* data, std::size_t len) override {
        std::size_t off = 0;
        while (off < len) {
            const ssize_t n = ::send(fd_, data + off, len - off, 0);
            if (n <= 0) throw ConnectionClosed("send failed");
            off += static_cast<std::size_t>(n);
        }
    }
    void read_exact(std::uint8_t* data, std::size_t len) override {
        std::size_t off = 0;
        while (off < len) {
            const ssize_t n = ::recv(fd_, data + off, len - off, 0);
            if (n <= 0) throw ConnectionClosed("peer closed connection");
            off += static_cast<std::size_t>(n);
        }
    }

  private:
    int fd_;
};

std::pair<std::string, std::uint16_t> split_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) {
        return {"0.0.0.0", static_cast<std::uint16_t>(std::stoi(addr))};
    }
    return {addr.substr(0, colon),
            static_cast<std::uint16_t>(std::stoi(addr.substr(colon + 1)))};
}

int run_serve(const std::string& cb_path, const std::string& listen_addr) {
    const Codebook cb = read_codebook(cb_path);
    const auto [host, port] = split_addr(listen_addr);

    const int sock = ::socket(AF_INET, SOCK_STREAM, 0);
    if (sock < 0) throw IoFailure("socket() failed");
    int one = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = host == "0.0.0.0" ? INADDR_ANY : ::inet_addr(host.c_str());
    if (::bind(sock, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0) {
        ::close(sock);
        throw IoFailure("bind to " + listen_addr + " failed");
    }
    if (::listen(sock, 1) < 0) {
        ::close(sock);
        throw IoFailure("listen failed");
    }
    const int client = ::accept(sock, nullptr, nullptr);
    ::close(sock);
    if (client < 0) throw IoFailure("accept failed");

    TcpConnection conn(client);
    const ServerResult result = server_session(cb, conn);
    std::cout << "events: " << result.reconstruction.rows << "\n"
              << "reconstruction_crc: " << result.crc << "\n"
              << "coverage: " << result.usage.coverage << "\n";
    return 0;
}

int run_send(const std::string& cb_path, const std::string& pool_path,
             const std::string& connect_addr) {
    const Codebook cb = read_codebook(cb_path);
    const EmbeddingPool pool = read_pool(pool_path);
    const auto [host, port] = split_addr(connect_addr);

    const int sock = ::socket(AF_INET, SOCK_STREAM, 0);
    if (sock < 0) throw IoFailure("socket() failed");
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = ::inet_addr(host == "localhost" ? "127.0.0.1" : host.c_str());
    if (::connect(sock, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) < 0) {
        ::close(sock);
        throw ConnectionClosed("connect to " + connect_addr + " failed");
    }
    TcpConnection conn(sock);
    const ClientReport report = client_session(pool, cb, conn);
    std::cout << "events: " << report.event_count << "\n"
              << "bytes_sent: " << report.bytes_sent << "\n"
              << "index_payload_bytes: " << report.index_payload_bytes << "\n"
              << "raw_bytes: " << report.raw_bytes << "\n"
              << "compression_factor_per_event: " << report.compression_factor_per_event
              << "\n"
              << "reconstruction_crc: " << report.server_crc << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prototype-codebook pipeline"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic embedding pool");
    std::uint64_t seed = 0;
    std::uint32_t archetypes = 8, per_archetype = 100, dim = 32, subspaces = 4;
    double sigma = 0.05;
    std::string out_path;
    synth->add_option("--seed", seed);
    synth->add_option("--archetypes", archetypes);
    synth->add_option("--per-archetype", per_archetype);
    synth->add_option("--dim", dim);
    synth->add_option("--subspaces", subspaces);
    synth->add_option("--sigma", sigma);
    synth->add_option("--out", out_path)->required();

    // init
    auto* init = app.add_subcommand("init", "balanced k-means codebook init");
    std::string pool_path, cb_out;
    std::uint32_t k = 64, iters = 100;
    init->add_option("--pool", pool_path)->required();
    init->add_option("--k", k);
    init->add_option("--subspaces", subspaces);
    init->add_option("--iters", iters);
    init->add_option("--seed", seed);
    init->add_option("--out", cb_out)->required();

    // train
    auto* train = app.add_subcommand("train", "stage-1 codebook training");
    std::string cb_in, log_path;
    PccConfig pcc_cfg;
    train->add_option("--pool", pool_path)->required();
    train->add_option("--codebook-in", cb_in)->required();
    train->add_option("--codebook-out", cb_out)->required();
    train->add_option("--lambda-quant", pcc_cfg.lambda_quant);
    train->add_option("--lambda-div", pcc_cfg.lambda_div);
    train->add_option("--lambda-usage", pcc_cfg.lambda_usage);
    train->add_option("--tau", pcc_cfg.tau);
    train->add_option("--lr", pcc_cfg.learning_rate);
    train->add_option("--wd", pcc_cfg.weight_decay);
    train->add_option("--clip", pcc_cfg.grad_clip);
    train->add_option("--batch", pcc_cfg.batch_size);
    train->add_option("--epochs", pcc_cfg.epochs);
    train->add_option("--seed", pcc_cfg.seed);
    train->add_option("--log", log_path);

    // encode
    auto* encode = app.add_subcommand("encode", "quantize a pool to PQ indices");
    std::string cb_path, idx_out;
    bool passthrough = false;
    encode->add_option("--pool", pool_path)->required();
    encode->add_option("--codebook", cb_path)->required();
    encode->add_option("--out", idx_out)->required();
    encode->add_flag("--passthrough", passthrough,
                     "skip quantization and emit the pool itself");

    // stats
    auto* stats = app.add_subcommand("stats", "usage report for an index stream");
    std::string idx_path, groups_path, report_out;
    stats->add_option("--codebook", cb_path)->required();
    stats->add_option("--indices", idx_path)->required();
    stats->add_option("--groups", groups_path);
    stats->add_option("--out", report_out)->required();

    // align
    auto* align = app.add_subcommand("align", "stage-2 adapter training");
    std::string records_path, adapter_out;
    std::uint32_t vocab = 64;
    PbaConfig pba_cfg;
    std::uint64_t decoder_seed = 0;
    align->add_option("--records", records_path)->required();
    align->add_option("--codebook", cb_path)->required();
    align->add_option("--vocab", vocab);
    align->add_option("--hidden", pba_cfg.hidden);
    align->add_option("--decoder-seed", decoder_seed);
    align->add_option("--lr", pba_cfg.learning_rate);
    align->add_option("--wd", pba_cfg.weight_decay);
    align->add_option("--clip", pba_cfg.grad_clip);
    align->add_option("--batch", pba_cfg.batch_size);
    align->add_option("--epochs", pba_cfg.epochs);
    align->add_option("--seed", pba_cfg.seed);
    align->add_flag("--passthrough", passthrough);
    align->add_option("--out", adapter_out)->required();
    align->add_option("--log", log_path);

    // serve / send
    auto* serve = app.add_subcommand("serve", "accept one edge session");
    std::string listen_addr, connect_addr;
    serve->add_option("--codebook", cb_path)->required();
    serve->add_option("--listen", listen_addr)->required();

    auto* send = app.add_subcommand("send", "transmit a pool as packed indices");
    send->add_option("--codebook", cb_path)->required();
    send->add_option("--pool", pool_path)->required();
    send->add_option("--connect", connect_addr)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            const CodebookSpec spec = make_spec(dim, subspaces, 2);
            const MixturePool mp =
                generate_mixture_pool(seed, archetypes, per_archetype, spec, sigma);
            write_pool(out_path, mp.pool);
        } else if (*init) {
            const EmbeddingPool pool = read_pool(pool_path);
            const CodebookSpec spec =
                make_spec(static_cast<std::uint32_t>(pool.dim()), subspaces, k);
            const Codebook cb = init_balanced_kmeans(pool, spec, iters, seed);
            write_codebook(cb_out, cb);
        } else if (*train) {
            const EmbeddingPool pool = read_pool(pool_path);
            const Codebook cb0 = read_codebook(cb_in);
            std::ofstream log;
            if (!log_path.empty()) {
                log.open(log_path + ".tmp", std::ios::trunc);
                if (!log) throw IoFailure("cannot open log " + log_path);
            }
            const PccTrainResult result =
                train_pcc(pool, cb0, pcc_cfg, log.is_open() ? &log : nullptr);
            if (log.is_open()) {
                log.close();
                std::filesystem::rename(log_path + ".tmp", log_path);
            }
            write_codebook(cb_out, result.codebook);
        } else if (*encode) {
            const EmbeddingPool pool = read_pool(pool_path);
            const Codebook cb = read_codebook(cb_path);
            if (passthrough) {
                if (pool.count() > 0 && pool.dim() != cb.spec.dim) {
                    throw DimMismatch("pool dim != codebook dim");
                }
                write_pool(idx_out, pool);
            } else {
                const BatchEncoding enc = encode_batch(pool, cb);
                write_indices(idx_out, enc.codes, cb.spec);
            }
        } else if (*stats) {
            const Codebook cb = read_codebook(cb_path);
            const auto codes = read_indices(idx_path, cb.spec);
            std::vector<std::string> labels;
            if (!groups_path.empty()) {
                std::ifstream is(groups_path);
                if (!is) throw IoFailure("cannot open " + groups_path);
                std::string line;
                while (std::getline(is, line)) labels.push_back(line);
                if (labels.size() != codes.size()) {
                    throw Error("label count != code count");
                }
            }
            const UsageStats us = usage_stats(codes, cb.spec);
            const auto tables = subspace_index_table(codes, labels, cb.spec);
            std::ofstream os(report_out + ".tmp", std::ios::trunc);
            if (!os) throw IoFailure("cannot open " + report_out);
            os << stats_report(us, tables, cb.spec);
            os.close();
            std::filesystem::rename(report_out + ".tmp", report_out);
        } else if (*align) {
            const auto records = read_records(records_path);
            const Codebook cb = read_codebook(cb_path);
            const ToyDecoder decoder = ToyDecoder::make(vocab, pba_cfg.hidden, decoder_seed);
            pba_cfg.quantize = !passthrough;
            std::ofstream log;
            if (!log_path.empty()) {
                log.open(log_path + ".tmp", std::ios::trunc);
                if (!log) throw IoFailure("cannot open log " + log_path);
            }
            const PbaTrainResult result =
                train_pba(records, cb, decoder, pba_cfg, log.is_open() ? &log : nullptr);
            if (log.is_open()) {
                log.close();
                std::filesystem::rename(log_path + ".tmp", log_path);
            }
            // adapter dump: pool format reused as a flat parameter matrix
            EmbeddingPool flat;
            const std::size_t n = result.params.w1.data.size() + result.params.b1.size() +
                                  result.params.w2.data.size() + result.params.b2.size();
            flat.data = Matrix(1, n);
            std::size_t off = 0;
            for (double v : result.params.w1.data) flat.data.data[off++] = v;
            for (double v : result.params.b1) flat.data.data[off++] = v;
            for (double v : result.params.w2.data) flat.data.data[off++] = v;
            for (double v : result.params.b2) flat.data.data[off++] = v;
            write_pool(adapter_out, flat);
        } else if (*serve) {
            return run_serve(cb_path, listen_addr);
        } else if (*send) {
            return run_send(cb_path, pool_path, connect_addr);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
