#pragma once

#include <cstdint>
#include <vector>

#include "curp/types.hpp"

namespace curp {

struct MixturePool {
    EmbeddingPool pool;
    std::vector<std::uint32_t> labels; // archetype id per row
    Matrix centers;                    // n_archetypes x dim
};

// Deterministic Gaussian mixture: centers uniform in [-1,1]^dim, each row is
// its archetype center plus N(0, sigma^2) noise. Rows are archetype-major.
MixturePool generate_mixture_pool(std::uint64_t seed,
                                  std::uint32_t n_archetypes,
                                  std::uint32_t points_per_archetype,
                                  const CodebookSpec& spec,
                                  double noise_sigma);

// K entries drawn i.i.d. uniform in [-range, range]^sub_dim. Used as the
// uncalibrated baseline against balanced initialization.
Codebook random_codebook(const CodebookSpec& spec, std::uint64_t seed,
                         double range = 1.0);

// ---------------------------------------------------------------------------
// Synthetic personalization task: users belong to archetypes; histories are
// noisy copies of the archetype center; responses are drawn from a small
// archetype-specific token group. Query tokens are uniform over the vocab.
// ---------------------------------------------------------------------------

struct PersonalizationTask {
    std::vector<UserRecord> train;
    std::vector<UserRecord> heldout;
    std::vector<std::uint32_t> train_archetype;
    std::vector<std::uint32_t> heldout_archetype;
    EmbeddingPool history_pool; // all training histories, for codebook work
};

PersonalizationTask make_personalization_task(std::uint64_t seed,
                                              std::uint32_t n_archetypes,
                                              std::uint32_t n_train,
                                              std::uint32_t n_heldout,
                                              std::uint32_t histories_per_user,
                                              std::uint32_t dim,
                                              std::uint32_t vocab,
                                              std::uint32_t query_len,
                                              std::uint32_t response_len,
                                              double noise_sigma);

} // namespace curp
