#include "curp/pcc.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "curp/quantizer.hpp"

namespace curp {

namespace {

double sqdist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

} // namespace

LossGrad loss_quant(const Matrix& batch, const Codebook& cb) {
    if (batch.rows == 0) throw EmptyBatch("loss_quant on empty batch");
    if (batch.cols != cb.spec.dim) throw DimMismatch("batch dim != spec dim");

    LossGrad out;
    out.grad = Matrix(cb.spec.vocab_size, cb.spec.sub_dim);
    const double inv_b = 1.0 / static_cast<double>(batch.rows);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        for (auto sub : split_subspaces(batch.row(i), cb.spec)) {
            const SubspaceMatch m = quantize_subvector(sub, cb);
            out.value += m.squared_distance;
            auto g = out.grad.row(m.index);
            auto c = cb.entries.row(m.index);
            for (std::size_t j = 0; j < sub.size(); ++j) {
                g[j] += 2.0 * inv_b * (c[j] - sub[j]);
            }
        }
    }
    out.value *= inv_b;
    return out;
}

LossGrad loss_div(const Codebook& cb, double tau) {
    const std::uint32_t k = cb.spec.vocab_size;
    if (k < 2) throw VocabTooSmall("loss_div needs K >= 2");
    if (tau <= 0) throw Error("tau must be positive");

    double best = std::numeric_limits<double>::infinity();
    std::uint32_t bi = 0, bj = 1;
    for (std::uint32_t i = 0; i < k; ++i) {
        for (std::uint32_t j = i + 1; j < k; ++j) {
            const double d = sqdist(cb.entries.row(i), cb.entries.row(j));
            if (d < best) {
                best = d;
                bi = i;
                bj = j;
            }
        }
    }
    const double m = std::sqrt(best);

    LossGrad out;
    out.grad = Matrix(k, cb.spec.sub_dim);
    out.value = -tau * std::tanh(m / tau);
    if (m > 0.0) {
        const double sech2 = 1.0 / (std::cosh(m / tau) * std::cosh(m / tau));
        auto gi = out.grad.row(bi);
        auto gj = out.grad.row(bj);
        auto ci = cb.entries.row(bi);
        auto cj = cb.entries.row(bj);
        for (std::uint32_t t = 0; t < cb.spec.sub_dim; ++t) {
            const double g = -sech2 * (ci[t] - cj[t]) / m;
            gi[t] = g;
            gj[t] = -g;
        }
    }
    return out;
}

namespace {

// Var(p_k*K) + (1 - coverage) + (1 - H/ln K) on an arbitrary count vector.
double usage_objective(const std::vector<double>& counts, double total,
                       std::uint32_t k) {
    double var = 0.0, h = 0.0;
    std::uint32_t used = 0;
    for (double n : counts) {
        const double p = n / total;
        const double t = p * k - 1.0;
        var += t * t;
        if (n > 0) {
            ++used;
            h -= p * std::log(p);
        }
    }
    var /= k;
    const double cov_pen = 1.0 - static_cast<double>(used) / k;
    const double ent_pen = 1.0 - h / std::log(static_cast<double>(k));
    return var + cov_pen + ent_pen;
}

} // namespace

UsageLoss loss_usage(const Matrix& batch, const Codebook& cb,
                     double soft_count_temp) {
    if (batch.rows == 0) throw EmptyBatch("loss_usage on empty batch");
    if (batch.cols != cb.spec.dim) throw DimMismatch("batch dim != spec dim");
    if (soft_count_temp <= 0) throw Error("soft_count_temp must be positive");

    const std::uint32_t k = cb.spec.vocab_size;
    const std::uint32_t big_l = cb.spec.num_subspaces;
    const std::size_t slots = batch.rows * big_l;
    const double ln_k = std::log(static_cast<double>(k));

    UsageLoss out;
    out.grad = Matrix(k, cb.spec.sub_dim);

    // hard path: reported value and stats
    std::vector<PQCode> codes;
    codes.reserve(batch.rows);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        codes.push_back(encode_pq(batch.row(i), cb));
    }
    out.stats = usage_stats(codes, cb.spec);
    {
        std::vector<double> hard(k);
        for (std::uint32_t c = 0; c < k; ++c) hard[c] = static_cast<double>(out.stats.counts[c]);
        out.value = usage_objective(hard, static_cast<double>(slots), k);
    }

    // soft path: softmax over entries of -||e_l - c_k||^2 / temp per slot
    Matrix soft(slots, k);
    std::vector<const double*> slot_ptr(slots);
    std::vector<double> soft_counts(k, 0.0);
    std::size_t s = 0;
    for (std::size_t i = 0; i < batch.rows; ++i) {
        for (auto sub : split_subspaces(batch.row(i), cb.spec)) {
            auto row = soft.row(s);
            double amax = -std::numeric_limits<double>::infinity();
            for (std::uint32_t c = 0; c < k; ++c) {
                row[c] = -sqdist(sub, cb.entries.row(c)) / soft_count_temp;
                amax = std::max(amax, row[c]);
            }
            double z = 0.0;
            for (std::uint32_t c = 0; c < k; ++c) {
                row[c] = std::exp(row[c] - amax);
                z += row[c];
            }
            for (std::uint32_t c = 0; c < k; ++c) {
                row[c] /= z;
                soft_counts[c] += row[c];
            }
            slot_ptr[s] = sub.data();
            ++s;
        }
    }
    const double total = static_cast<double>(slots); // soft counts sum to this
    out.value_soft = usage_objective(soft_counts, total, k);

    // dF/dp_k, then back through the softmax to the entries
    std::vector<double> gp(k);
    for (std::uint32_t c = 0; c < k; ++c) {
        const double p = std::max(soft_counts[c] / total, 1e-300);
        gp[c] = (2.0 * (p * k - 1.0) + (std::log(p) + 1.0) / ln_k) / total;
    }
    const double two_over_t = 2.0 / soft_count_temp;
    for (std::size_t l = 0; l < slots; ++l) {
        auto row = soft.row(l);
        double q = 0.0;
        for (std::uint32_t c = 0; c < k; ++c) q += gp[c] * row[c];
        const double* e = slot_ptr[l];
        for (std::uint32_t c = 0; c < k; ++c) {
            const double coef = row[c] * (gp[c] - q) * two_over_t;
            if (coef == 0.0) continue;
            auto g = out.grad.row(c);
            auto entry = cb.entries.row(c);
            for (std::uint32_t t = 0; t < cb.spec.sub_dim; ++t) {
                g[t] += coef * (e[t] - entry[t]);
            }
        }
    }
    return out;
}

PccStep loss_total(const Matrix& batch, const Codebook& cb, const PccConfig& cfg) {
    validate_config(cfg);
    const LossGrad q = loss_quant(batch, cb);
    const LossGrad d = loss_div(cb, cfg.tau);
    UsageLoss u = loss_usage(batch, cb, cfg.soft_count_temp);

    PccStep out;
    out.report.loss_quant = q.value;
    out.report.loss_div = d.value;
    out.report.loss_usage = u.value;
    out.report.loss_total = cfg.lambda_quant * q.value + cfg.lambda_div * d.value +
                            cfg.lambda_usage * u.value;
    out.report.hard_usage = std::move(u.stats);

    out.grad = Matrix(cb.spec.vocab_size, cb.spec.sub_dim);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < out.grad.data.size(); ++i) {
        out.grad.data[i] = cfg.lambda_quant * q.grad.data[i] +
                           cfg.lambda_div * d.grad.data[i] +
                           cfg.lambda_usage * u.grad.data[i];
        norm2 += out.grad.data[i] * out.grad.data[i];
    }
    out.report.grad_norm_pre_clip = std::sqrt(norm2);
    return out;
}

void write_log_line(std::ostream& os, const PccStepReport& r) {
    os << r.step << '\t' << std::setprecision(9) << r.loss_total << '\t'
       << r.loss_quant << '\t' << r.loss_div << '\t' << r.loss_usage << '\t'
       << r.grad_norm_pre_clip << '\t' << r.hard_usage.coverage << '\n';
}

PccTrainResult train_pcc(const EmbeddingPool& pool, const Codebook& init_cb,
                         const PccConfig& cfg, std::ostream* log_stream) {
    validate_config(cfg);
    if (pool.count() == 0) throw EmptyPool("train_pcc on empty pool");
    if (pool.dim() != init_cb.spec.dim) throw DimMismatch("pool dim != spec dim");

    PccTrainResult result;
    result.codebook = init_cb;
    Codebook& cb = result.codebook;

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(pool.count());
    std::iota(order.begin(), order.end(), std::size_t{0});

    Matrix accum(cb.spec.vocab_size, cb.spec.sub_dim);
    std::uint32_t accum_count = 0;
    std::uint64_t step = 0;

    auto apply_step = [&]() {
        if (accum_count == 0) return;
        double norm2 = 0.0;
        for (double& g : accum.data) {
            g /= accum_count;
            norm2 += g * g;
        }
        const double norm = std::sqrt(norm2);
        const double scale = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
        const double decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (std::size_t i = 0; i < cb.entries.data.size(); ++i) {
            cb.entries.data[i] =
                cb.entries.data[i] * decay - cfg.learning_rate * scale * accum.data[i];
        }
        std::fill(accum.data.begin(), accum.data.end(), 0.0);
        accum_count = 0;
    };

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Matrix batch(end - start, pool.dim());
            for (std::size_t i = start; i < end; ++i) {
                auto src = pool.data.row(order[i]);
                std::copy(src.begin(), src.end(), batch.row(i - start).begin());
            }
            PccStep ps = loss_total(batch, cb, cfg);
            ps.report.step = step++;
            if (log_stream) write_log_line(*log_stream, ps.report);

            for (std::size_t i = 0; i < accum.data.size(); ++i) {
                accum.data[i] += ps.grad.data[i];
            }
            ++accum_count;
            if (accum_count == cfg.accum_steps) apply_step();
            result.log.push_back(std::move(ps.report));
        }
        apply_step(); // flush the epoch remainder
    }
    return result;
}

} // namespace curp
