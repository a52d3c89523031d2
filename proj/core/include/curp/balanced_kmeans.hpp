#pragma once

#include <cstdint>
#include <vector>

#include "curp/types.hpp"

namespace curp {

struct BalancedAssignment {
    std::vector<std::uint32_t> labels;     // one per subspace vector
    std::vector<std::uint32_t> capacities; // per-cluster max size, ceil(M/K)
    std::vector<std::uint32_t> sizes;      // realized counts
};

// Flattens an N x dim pool into the (N*L) x sub_dim matrix of all subspace
// slices, event-major then subspace-major.
Matrix subspace_view(const EmbeddingPool& pool, const CodebookSpec& spec);

// Capacity-constrained nearest-centroid assignment. Points are processed in
// ascending order of (distance to 2nd nearest - distance to nearest), ties by
// point value then index; each goes to its nearest centroid that still has
// room. At most
// M mod K clusters may exceed floor(M/K), so sizes land in {floor, ceil}.
// rng_seed is accepted for interface stability; the fold is deterministic.
BalancedAssignment assign_balanced(const Matrix& points, const Codebook& centroids,
                                   std::uint64_t rng_seed = 0);

// Mean of each cluster; a cluster with no members keeps its previous centroid.
Matrix update_centroids(const Matrix& points, const BalancedAssignment& assignment,
                        const Matrix& previous);

// Sum over points of squared distance to the assigned centroid.
double kmeans_objective(const Matrix& points, const Matrix& centroids,
                        const std::vector<std::uint32_t>& labels);

// Balanced k-means over all subspace slices of the pool. Seeding is
// farthest-point: the max-norm slice first, then repeatedly the slice farthest
// from the chosen set (ties by lowest index), which makes the result invariant
// to row order on pools without exact ties. Alternates assign/update until the
// labels stop changing, the objective would increase, or max_iters is hit.
Codebook init_balanced_kmeans(const EmbeddingPool& pool, const CodebookSpec& spec,
                              std::uint32_t max_iters = 100,
                              std::uint64_t seed = 0);

} // namespace curp
