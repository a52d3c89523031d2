#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "curp/types.hpp"

namespace curp {

struct AdapterParams {
    std::uint32_t in_dim = 0; // d
    std::uint32_t hidden = 0; // H
    Matrix w1; // d x H
    std::vector<double> b1;
    Matrix w2; // H x H
    std::vector<double> b2;

    static AdapterParams zeros(std::uint32_t in_dim, std::uint32_t hidden);
    static AdapterParams random(std::uint32_t in_dim, std::uint32_t hidden,
                                std::uint64_t seed, double scale = 0.1);
};

struct AdapterGrads {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;

    static AdapterGrads zeros(const AdapterParams& p);
    void add(const AdapterGrads& o);
    void scale(double s);
    double global_norm() const;
};

// Frozen mean-pool decoder standing in for the LLM. All parameters are a pure
// function of (vocab, hidden, seed), drawn uniform in [-0.5, 0.5].
struct ToyDecoder {
    std::uint32_t vocab = 0;
    std::uint32_t hidden = 0;
    std::uint64_t seed = 0;
    Matrix token_table; // vocab x hidden
    Matrix out_proj;    // hidden x vocab

    static ToyDecoder make(std::uint32_t vocab, std::uint32_t hidden,
                           std::uint64_t seed);
};

struct DecoderInput {
    Matrix prefix; // J x hidden, already projected by the adapter
    std::vector<std::uint32_t> query_tokens;
    std::vector<std::uint32_t> response_tokens;

    // 1-based index of the first response position, and total length
    std::size_t label_start() const { return prefix.rows + query_tokens.size() + 1; }
    std::size_t total_len() const {
        return prefix.rows + query_tokens.size() + response_tokens.size();
    }
};

struct AdapterCache {
    std::vector<double> pre; // w1^T x + b1
    std::vector<double> act; // gelu(pre)
};

// w2^T gelu(w1^T x + b1) + b2 with the exact Gaussian-CDF gelu.
std::vector<double> adapter_forward(std::span<const double> x,
                                    const AdapterParams& params,
                                    AdapterCache* cache = nullptr);

// Logits for positions label_start..total_len. The context for a target is the
// mean of all embeddings strictly before it, so generation is causal.
Matrix decoder_forward(const DecoderInput& input, const ToyDecoder& decoder);

struct PbaLoss {
    double nll = 0.0; // summed over response positions
    std::size_t n_tokens = 0;
    AdapterGrads grads; // w.r.t. adapter params only
};

// Autoregressive NLL of the response given projected histories + query.
// histories is J x d of (reconstructed or raw) embeddings fed to the adapter.
PbaLoss pba_loss(const Matrix& histories, const std::vector<std::uint32_t>& query,
                 const std::vector<std::uint32_t>& response,
                 const ToyDecoder& decoder, const AdapterParams& params);

struct PbaConfig {
    double learning_rate = 1e-4;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    std::uint32_t batch_size = 8;
    std::uint32_t epochs = 1;
    std::uint64_t seed = 0;
    std::uint32_t hidden = 32;
    double init_scale = 0.1;
    bool quantize = true; // false = continuous passthrough ablation
};

struct PbaStepReport {
    std::uint64_t step = 0;
    double mean_nll = 0.0;
    double grad_norm_pre_clip = 0.0;
};

struct PbaTrainResult {
    AdapterParams params;
    std::vector<PbaStepReport> log;
};

// Histories are encoded through the frozen codebook (or passed through when
// cfg.quantize is false); only the adapter is trained.
PbaTrainResult train_pba(const std::vector<UserRecord>& records, const Codebook& cb,
                         const ToyDecoder& decoder, const PbaConfig& cfg,
                         std::ostream* log_stream = nullptr);

// Mean per-token NLL over records with a fixed adapter; drop_prefix evaluates
// the no-personalization (J = 0) baseline.
double evaluate_pba(const std::vector<UserRecord>& records, const Codebook& cb,
                    const ToyDecoder& decoder, const AdapterParams& params,
                    bool quantize, bool drop_prefix = false);

} // namespace curp
