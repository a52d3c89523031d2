#include "curp/types.hpp"

namespace curp {

CodebookSpec make_spec(std::uint32_t dim, std::uint32_t num_subspaces,
                       std::uint32_t vocab_size) {
    CodebookSpec spec;
    spec.dim = dim;
    spec.num_subspaces = num_subspaces;
    spec.vocab_size = vocab_size;
    spec.sub_dim = num_subspaces == 0 ? 0 : dim / num_subspaces;
    validate_spec(spec);
    return spec;
}

const CodebookSpec& validate_spec(const CodebookSpec& spec) {
    if (spec.dim == 0 || spec.num_subspaces == 0) {
        throw DimNotDivisible("dim and num_subspaces must be positive");
    }
    if (spec.dim % spec.num_subspaces != 0) {
        throw DimNotDivisible("dim " + std::to_string(spec.dim) +
                              " not divisible by " +
                              std::to_string(spec.num_subspaces) + " subspaces");
    }
    if (spec.sub_dim != spec.dim / spec.num_subspaces) {
        throw DimNotDivisible("sub_dim inconsistent with dim / num_subspaces");
    }
    if (spec.vocab_size < 2) {
        throw VocabTooSmall("vocab_size must be at least 2");
    }
    return spec;
}

void PQCode::validate(const CodebookSpec& spec) const {
    if (indices.size() != spec.num_subspaces) {
        throw DimMismatch("code length " + std::to_string(indices.size()) +
                          " != num_subspaces " +
                          std::to_string(spec.num_subspaces));
    }
    for (std::uint32_t idx : indices) {
        if (idx >= spec.vocab_size) {
            throw IndexOutOfRange("index " + std::to_string(idx) +
                                  " >= vocab_size " +
                                  std::to_string(spec.vocab_size));
        }
    }
}

void validate_config(const PccConfig& cfg) {
    if (cfg.lambda_quant < 0 || cfg.lambda_div < 0 || cfg.lambda_usage < 0) {
        throw Error("loss weights must be non-negative");
    }
    if (cfg.tau <= 0) throw Error("tau must be positive");
    if (cfg.soft_count_temp <= 0) throw Error("soft_count_temp must be positive");
    if (cfg.grad_clip <= 0) throw Error("grad_clip must be positive");
    if (cfg.batch_size == 0) throw Error("batch_size must be positive");
    if (cfg.accum_steps == 0) throw Error("accum_steps must be positive");
    if (cfg.epochs == 0) throw Error("epochs must be positive");
}

std::vector<std::span<const double>> split_subspaces(std::span<const double> e,
                                                     const CodebookSpec& spec) {
    if (e.size() != spec.dim) {
        throw DimMismatch("embedding dim " + std::to_string(e.size()) +
                          " != spec dim " + std::to_string(spec.dim));
    }
    std::vector<std::span<const double>> out;
    out.reserve(spec.num_subspaces);
    for (std::uint32_t l = 0; l < spec.num_subspaces; ++l) {
        out.push_back(e.subspan(static_cast<std::size_t>(l) * spec.sub_dim,
                                spec.sub_dim));
    }
    return out;
}

} // namespace curp
