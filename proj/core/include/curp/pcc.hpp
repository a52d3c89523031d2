#pragma once

#include <cstdint>
#include <ostream>
#include <vector>

#include "curp/metrics.hpp"
#include "curp/types.hpp"

namespace curp {

struct LossGrad {
    double value = 0.0;
    Matrix grad; // K x sub_dim, w.r.t. codebook entries
};

// Mean squared reconstruction error over the batch; gradients flow to the
// selected entries only, the embeddings are treated as stop-gradient.
LossGrad loss_quant(const Matrix& batch, const Codebook& cb);

// -tau * tanh(min_{i!=j} ||c_i - c_j|| / tau) over the single minimizing pair
// (lowest-index pair on ties). Duplicate entries give value 0 and zero grad.
LossGrad loss_div(const Codebook& cb, double tau);

struct UsageLoss {
    double value = 0.0;      // hard-count value, the one that is reported
    double value_soft = 0.0; // softmax-count surrogate, the one the grad matches
    Matrix grad;
    UsageStats stats; // hard per-batch usage
};

// Var(p_k * K) + (1 - coverage) + (1 - normalized entropy), on hard counts for
// the value and on softmax soft counts for the gradient.
UsageLoss loss_usage(const Matrix& batch, const Codebook& cb, double soft_count_temp);

struct PccStepReport {
    std::uint64_t step = 0;
    double loss_total = 0.0;
    double loss_quant = 0.0;
    double loss_div = 0.0;
    double loss_usage = 0.0;
    double grad_norm_pre_clip = 0.0;
    UsageStats hard_usage;
};

struct PccStep {
    PccStepReport report;
    Matrix grad;
};

PccStep loss_total(const Matrix& batch, const Codebook& cb, const PccConfig& cfg);

struct PccTrainResult {
    Codebook codebook;
    std::vector<PccStepReport> log;
};

// Seeded minibatch GD with 4-step gradient accumulation, global-norm clipping
// and decoupled weight decay. Optionally streams one tab-separated log line
// per step: step, total, quant, div, usage, grad norm, batch coverage.
PccTrainResult train_pcc(const EmbeddingPool& pool, const Codebook& init_cb,
                         const PccConfig& cfg, std::ostream* log_stream = nullptr);

void write_log_line(std::ostream& os, const PccStepReport& r);

} // namespace curp
