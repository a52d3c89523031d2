#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "curp/types.hpp"

namespace curp {

struct SubspaceMatch {
    std::uint32_t index = 0;
    double squared_distance = 0.0;
};

// Exhaustive scan over all K entries; ties go to the lowest index.
SubspaceMatch quantize_subvector(std::span<const double> sub, const Codebook& cb);

PQCode encode_pq(std::span<const double> e, const Codebook& cb);

// Concatenation of the L selected entries.
std::vector<double> reconstruct(const PQCode& code, const Codebook& cb);

struct BatchEncoding {
    std::vector<PQCode> codes;
    double mean_reconstruction_error = 0.0;
};

BatchEncoding encode_batch(const EmbeddingPool& pool, const Codebook& cb);

// Row-wise reconstruction of a code sequence into an N x d matrix.
Matrix reconstruct_batch(const std::vector<PQCode>& codes, const Codebook& cb);

} // namespace curp
