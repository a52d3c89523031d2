#include "curp/pba.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>

#include "curp/quantizer.hpp"

namespace curp {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

double gelu(double x) { return x * 0.5 * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_prime(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

} // namespace

AdapterParams AdapterParams::zeros(std::uint32_t in_dim, std::uint32_t hidden) {
    AdapterParams p;
    p.in_dim = in_dim;
    p.hidden = hidden;
    p.w1 = Matrix(in_dim, hidden);
    p.b1.assign(hidden, 0.0);
    p.w2 = Matrix(hidden, hidden);
    p.b2.assign(hidden, 0.0);
    return p;
}

AdapterParams AdapterParams::random(std::uint32_t in_dim, std::uint32_t hidden,
                                    std::uint64_t seed, double scale) {
    AdapterParams p = zeros(in_dim, hidden);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& v : p.w1.data) v = u(rng);
    for (double& v : p.b1) v = u(rng);
    for (double& v : p.w2.data) v = u(rng);
    for (double& v : p.b2) v = u(rng);
    return p;
}

AdapterGrads AdapterGrads::zeros(const AdapterParams& p) {
    AdapterGrads g;
    g.w1 = Matrix(p.in_dim, p.hidden);
    g.b1.assign(p.hidden, 0.0);
    g.w2 = Matrix(p.hidden, p.hidden);
    g.b2.assign(p.hidden, 0.0);
    return g;
}

void AdapterGrads::add(const AdapterGrads& o) {
    for (std::size_t i = 0; i < w1.data.size(); ++i) w1.data[i] += o.w1.data[i];
    for (std::size_t i = 0; i < b1.size(); ++i) b1[i] += o.b1[i];
    for (std::size_t i = 0; i < w2.data.size(); ++i) w2.data[i] += o.w2.data[i];
    for (std::size_t i = 0; i < b2.size(); ++i) b2[i] += o.b2[i];
}

void AdapterGrads::scale(double s) {
    for (double& v : w1.data) v *= s;
    for (double& v : b1) v *= s;
    for (double& v : w2.data) v *= s;
    for (double& v : b2) v *= s;
}

double AdapterGrads::global_norm() const {
    double n = 0.0;
    for (double v : w1.data) n += v * v;
    for (double v : b1) n += v * v;
    for (double v : w2.data) n += v * v;
    for (double v : b2) n += v * v;
    return std::sqrt(n);
}

ToyDecoder ToyDecoder::make(std::uint32_t vocab, std::uint32_t hidden,
                            std::uint64_t seed) {
    ToyDecoder d;
    d.vocab = vocab;
    d.hidden = hidden;
    d.seed = seed;
    d.token_table = Matrix(vocab, hidden);
    d.out_proj = Matrix(hidden, vocab);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (double& v : d.token_table.data) v = u(rng);
    for (double& v : d.out_proj.data) v = u(rng);
    return d;
}

std::vector<double> adapter_forward(std::span<const double> x,
                                    const AdapterParams& params,
                                    AdapterCache* cache) {
    if (x.size() != params.in_dim) throw DimMismatch("adapter input dim mismatch");
    const std::uint32_t h = params.hidden;
    std::vector<double> pre(params.b1);
    for (std::uint32_t i = 0; i < params.in_dim; ++i) {
        const double xi = x[i];
        auto w = params.w1.row(i);
        for (std::uint32_t j = 0; j < h; ++j) pre[j] += xi * w[j];
    }
    std::vector<double> act(h);
    for (std::uint32_t j = 0; j < h; ++j) act[j] = gelu(pre[j]);
    std::vector<double> out(params.b2);
    for (std::uint32_t i = 0; i < h; ++i) {
        const double ai = act[i];
        auto w = params.w2.row(i);
        for (std::uint32_t j = 0; j < h; ++j) out[j] += ai * w[j];
    }
    if (cache) {
        cache->pre = std::move(pre);
        cache->act = std::move(act);
    }
    return out;
}

namespace {

// Full embedding sequence: prefix rows, then token rows.
Matrix build_sequence(const DecoderInput& input, const ToyDecoder& decoder) {
    const std::size_t m = input.total_len();
    Matrix seq(m, decoder.hidden);
    std::size_t p = 0;
    for (std::size_t j = 0; j < input.prefix.rows; ++j, ++p) {
        auto src = input.prefix.row(j);
        std::copy(src.begin(), src.end(), seq.row(p).begin());
    }
    auto put_tokens = [&](const std::vector<std::uint32_t>& toks) {
        for (std::uint32_t t : toks) {
            if (t >= decoder.vocab) throw TokenOutOfRange("token id >= vocab");
            auto src = decoder.token_table.row(t);
            std::copy(src.begin(), src.end(), seq.row(p++).begin());
        }
    };
    put_tokens(input.query_tokens);
    put_tokens(input.response_tokens);
    return seq;
}

} // namespace

Matrix decoder_forward(const DecoderInput& input, const ToyDecoder& decoder) {
    const Matrix seq = build_sequence(input, decoder);
    const std::size_t first = input.label_start() - 1; // 0-based target position
    const std::size_t n_targets = input.response_tokens.size();
    Matrix logits(n_targets, decoder.vocab);
    std::vector<double> sum(decoder.hidden, 0.0);
    for (std::size_t i = 0; i < first; ++i) {
        auto row = seq.row(i);
        for (std::uint32_t j = 0; j < decoder.hidden; ++j) sum[j] += row[j];
    }
    for (std::size_t t = 0; t < n_targets; ++t) {
        const std::size_t ctx = first + t; // embeddings strictly before target
        auto out = logits.row(t);
        if (ctx > 0) {
            for (std::uint32_t h = 0; h < decoder.hidden; ++h) {
                const double hv = sum[h] / ctx;
                auto w = decoder.out_proj.row(h);
                for (std::uint32_t v = 0; v < decoder.vocab; ++v) out[v] += hv * w[v];
            }
        }
        if (t + 1 < n_targets) {
            auto row = seq.row(ctx);
            for (std::uint32_t j = 0; j < decoder.hidden; ++j) sum[j] += row[j];
        }
    }
    return logits;
}

PbaLoss pba_loss(const Matrix& histories, const std::vector<std::uint32_t>& query,
                 const std::vector<std::uint32_t>& response,
                 const ToyDecoder& decoder, const AdapterParams& params) {
    if (response.empty()) throw EmptyResponse("response must be non-empty");
    if (params.hidden != decoder.hidden) throw DimMismatch("adapter/decoder hidden");

    const std::size_t j_hist = histories.rows;
    std::vector<AdapterCache> caches(j_hist);
    DecoderInput input;
    input.prefix = Matrix(j_hist, decoder.hidden);
    for (std::size_t j = 0; j < j_hist; ++j) {
        const auto out = adapter_forward(histories.row(j), params, &caches[j]);
        std::copy(out.begin(), out.end(), input.prefix.row(j).begin());
    }
    input.query_tokens = query;
    input.response_tokens = response;

    const Matrix logits = decoder_forward(input, decoder);

    PbaLoss out;
    out.n_tokens = response.size();
    out.grads = AdapterGrads::zeros(params);

    // dL/d(mean context) accumulated with the 1/ctx mean weight; every prefix
    // slot appears in every context, so one vector serves all J slots
    std::vector<double> g_prefix(decoder.hidden, 0.0);
    const std::size_t first = input.label_start() - 1;
    for (std::size_t t = 0; t < out.n_tokens; ++t) {
        auto row = logits.row(t);
        const double amax = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - amax);
        const std::uint32_t target = response[t];
        if (target >= decoder.vocab) throw TokenOutOfRange("response token >= vocab");
        out.nll += -(row[target] - amax - std::log(z));

        const std::size_t ctx = first + t;
        if (ctx == 0 || j_hist == 0) continue;
        const double inv_ctx = 1.0 / static_cast<double>(ctx);
        for (std::uint32_t h = 0; h < decoder.hidden; ++h) {
            auto w = decoder.out_proj.row(h);
            double acc = 0.0;
            for (std::uint32_t v = 0; v < decoder.vocab; ++v) {
                const double p = std::exp(row[v] - amax) / z;
                acc += w[v] * (p - (v == target ? 1.0 : 0.0));
            }
            g_prefix[h] += inv_ctx * acc;
        }
    }

    // back through the adapter for each history
    const std::uint32_t h_dim = params.hidden;
    std::vector<double> da(h_dim), dpre(h_dim);
    for (std::size_t j = 0; j < j_hist; ++j) {
        const AdapterCache& c = caches[j];
        for (std::uint32_t i = 0; i < h_dim; ++i) {
            out.grads.b2[i] += g_prefix[i];
            auto gw2 = out.grads.w2.row(i);
            const double ai = c.act[i];
            auto w2 = params.w2.row(i);
            double acc = 0.0;
            for (std::uint32_t k = 0; k < h_dim; ++k) {
                gw2[k] += ai * g_prefix[k];
                acc += w2[k] * g_prefix[k];
            }
            da[i] = acc;
        }
        for (std::uint32_t i = 0; i < h_dim; ++i) {
            dpre[i] = da[i] * gelu_prime(c.pre[i]);
            out.grads.b1[i] += dpre[i];
        }
        auto x = histories.row(j);
        for (std::uint32_t i = 0; i < params.in_dim; ++i) {
            auto gw1 = out.grads.w1.row(i);
            const double xi = x[i];
            for (std::uint32_t k = 0; k < h_dim; ++k) gw1[k] += xi * dpre[k];
        }
    }
    return out;
}

namespace {

Matrix adapter_inputs(const UserRecord& rec, const Codebook& cb, bool quantize) {
    if (!quantize) return rec.histories;
    Matrix out(rec.histories.rows, rec.histories.cols);
    for (std::size_t j = 0; j < rec.histories.rows; ++j) {
        const auto rec_row = reconstruct(encode_pq(rec.histories.row(j), cb), cb);
        std::copy(rec_row.begin(), rec_row.end(), out.row(j).begin());
    }
    return out;
}

} // namespace

PbaTrainResult train_pba(const std::vector<UserRecord>& records, const Codebook& cb,
                         const ToyDecoder& decoder, const PbaConfig& cfg,
                         std::ostream* log_stream) {
    if (records.empty()) throw EmptyPool("train_pba on empty record set");
    const std::uint32_t in_dim = static_cast<std::uint32_t>(records[0].histories.cols);

    // histories pass through the frozen codebook once up front
    std::vector<Matrix> inputs;
    inputs.reserve(records.size());
    for (const UserRecord& rec : records) {
        inputs.push_back(adapter_inputs(rec, cb, cfg.quantize));
    }

    PbaTrainResult result;
    result.params = AdapterParams::random(in_dim, cfg.hidden, cfg.seed ^ 0x9e3779b97f4a7c15ull,
                                          cfg.init_scale);
    AdapterParams& params = result.params;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::uint64_t step = 0;
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            AdapterGrads accum = AdapterGrads::zeros(params);
            double nll = 0.0;
            std::size_t tokens = 0;
            for (std::size_t i = start; i < end; ++i) {
                const UserRecord& rec = records[order[i]];
                PbaLoss l = pba_loss(inputs[order[i]], rec.query_tokens,
                                     rec.response_tokens, decoder, params);
                nll += l.nll;
                tokens += l.n_tokens;
                accum.add(l.grads);
            }
            accum.scale(1.0 / static_cast<double>(tokens));

            PbaStepReport rep;
            rep.step = step++;
            rep.mean_nll = nll / static_cast<double>(tokens);
            rep.grad_norm_pre_clip = accum.global_norm();
            if (rep.grad_norm_pre_clip > cfg.grad_clip) {
                accum.scale(cfg.grad_clip / rep.grad_norm_pre_clip);
            }
            if (log_stream) {
                *log_stream << rep.step << '\t' << std::setprecision(9) << rep.mean_nll
                            << '\t' << rep.grad_norm_pre_clip << '\n';
            }
            result.log.push_back(rep);

            const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
            auto apply = [&](std::vector<double>& p, const std::vector<double>& g) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    p[i] = p[i] * decay - cfg.learning_rate * g[i];
                }
            };
            apply(params.w1.data, accum.w1.data);
            apply(params.b1, accum.b1);
            apply(params.w2.data, accum.w2.data);
            apply(params.b2, accum.b2);
        }
    }
    return result;
}

double evaluate_pba(const std::vector<UserRecord>& records, const Codebook& cb,
                    const ToyDecoder& decoder, const AdapterParams& params,
                    bool quantize, bool drop_prefix) {
    double nll = 0.0;
    std::size_t tokens = 0;
    for (const UserRecord& rec : records) {
        const Matrix inputs = drop_prefix ? Matrix(0, params.in_dim)
                                          : adapter_inputs(rec, cb, quantize);
        PbaLoss l = pba_loss(inputs, rec.query_tokens, rec.response_tokens, decoder,
                             params);
        nll += l.nll;
        tokens += l.n_tokens;
    }
    return nll / static_cast<double>(tokens);
}

} // namespace curp
