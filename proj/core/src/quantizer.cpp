#include "curp/quantizer.hpp"

#include <algorithm>
#include <limits>

namespace curp {

SubspaceMatch quantize_subvector(std::span<const double> sub, const Codebook& cb) {
    if (sub.size() != cb.spec.sub_dim) {
        throw DimMismatch("subvector dim != sub_dim");
    }
    SubspaceMatch best;
    best.squared_distance = std::numeric_limits<double>::infinity();
    for (std::uint32_t k = 0; k < cb.spec.vocab_size; ++k) {
        auto entry = cb.entries.row(k);
        double d = 0.0;
        for (std::size_t j = 0; j < sub.size(); ++j) {
            const double t = sub[j] - entry[j];
            d += t * t;
        }
        if (d < best.squared_distance) {
            best.squared_distance = d;
            best.index = k;
        }
    }
    return best;
}

PQCode encode_pq(std::span<const double> e, const Codebook& cb) {
    PQCode code;
    code.indices.reserve(cb.spec.num_subspaces);
    for (auto sub : split_subspaces(e, cb.spec)) {
        code.indices.push_back(quantize_subvector(sub, cb).index);
    }
    return code;
}

std::vector<double> reconstruct(const PQCode& code, const Codebook& cb) {
    code.validate(cb.spec);
    std::vector<double> out;
    out.reserve(cb.spec.dim);
    for (std::uint32_t idx : code.indices) {
        auto entry = cb.entries.row(idx);
        out.insert(out.end(), entry.begin(), entry.end());
    }
    return out;
}

BatchEncoding encode_batch(const EmbeddingPool& pool, const Codebook& cb) {
    if (pool.count() > 0 && pool.dim() != cb.spec.dim) {
        throw DimMismatch("pool dim != spec dim");
    }
    BatchEncoding out;
    out.codes.reserve(pool.count());
    double total = 0.0;
    for (std::size_t i = 0; i < pool.count(); ++i) {
        auto row = pool.data.row(i);
        double err = 0.0;
        PQCode code;
        code.indices.reserve(cb.spec.num_subspaces);
        for (auto sub : split_subspaces(row, cb.spec)) {
            const SubspaceMatch m = quantize_subvector(sub, cb);
            code.indices.push_back(m.index);
            err += m.squared_distance;
        }
        total += err;
        out.codes.push_back(std::move(code));
    }
    out.mean_reconstruction_error = pool.count() == 0 ? 0.0 : total / pool.count();
    return out;
}

Matrix reconstruct_batch(const std::vector<PQCode>& codes, const Codebook& cb) {
    Matrix out(codes.size(), cb.spec.dim);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const auto rec = reconstruct(codes[i], cb);
        std::copy(rec.begin(), rec.end(), out.row(i).begin());
    }
    return out;
}

} // namespace curp
