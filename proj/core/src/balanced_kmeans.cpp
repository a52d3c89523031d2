#include "curp/balanced_kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

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

Matrix subspace_view(const EmbeddingPool& pool, const CodebookSpec& spec) {
    validate_spec(spec);
    if (pool.dim() != spec.dim) {
        throw DimMismatch("pool dim != spec dim");
    }
    Matrix out(pool.count() * spec.num_subspaces, spec.sub_dim);
    std::size_t r = 0;
    for (std::size_t i = 0; i < pool.count(); ++i) {
        for (auto sub : split_subspaces(pool.data.row(i), spec)) {
            std::copy(sub.begin(), sub.end(), out.row(r++).begin());
        }
    }
    return out;
}

BalancedAssignment assign_balanced(const Matrix& points, const Codebook& centroids,
                                   std::uint64_t /*rng_seed*/) {
    const std::size_t m = points.rows;
    const std::uint32_t k = centroids.spec.vocab_size;
    if (m < k) {
        throw TooFewPoints("need at least K points, got " + std::to_string(m));
    }
    if (points.cols != centroids.spec.sub_dim) {
        throw DimMismatch("point dim != sub_dim");
    }

    // full distance table, then a margin-ordered greedy fill
    Matrix dist(m, k);
    std::vector<double> margin(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = std::numeric_limits<double>::infinity();
        double second = std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < k; ++c) {
            const double d = sqdist(points.row(i), centroids.entries.row(c));
            dist.at(i, c) = d;
            if (d < best) {
                second = best;
                best = d;
            } else if (d < second) {
                second = d;
            }
        }
        margin[i] = (k > 1) ? second - best : 0.0;
    }

    // margin ties are structural (mutually nearest seed points share one), so
    // they break on point value to stay invariant under row permutation
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (margin[a] != margin[b]) return margin[a] < margin[b];
        auto ra = points.row(a);
        auto rb = points.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(),
                                            rb.end());
    });

    const std::uint32_t floor_cap = static_cast<std::uint32_t>(m / k);
    std::uint32_t extra_slots = static_cast<std::uint32_t>(m % k);

    BalancedAssignment out;
    out.labels.assign(m, 0);
    out.capacities.assign(k, floor_cap + (extra_slots > 0 ? 1u : 0u));
    out.sizes.assign(k, 0);

    for (std::size_t i : order) {
        std::uint32_t best_c = k;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < k; ++c) {
            const bool open = out.sizes[c] < floor_cap ||
                              (out.sizes[c] == floor_cap && extra_slots > 0);
            if (!open) continue;
            if (dist.at(i, c) < best_d) {
                best_d = dist.at(i, c);
                best_c = c;
            }
        }
        if (out.sizes[best_c] == floor_cap) --extra_slots;
        out.labels[i] = best_c;
        ++out.sizes[best_c];
    }
    return out;
}

Matrix update_centroids(const Matrix& points, const BalancedAssignment& assignment,
                        const Matrix& previous) {
    Matrix out = previous;
    const std::size_t k = previous.rows;
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < points.rows; ++i) {
        members[assignment.labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (members[c].empty()) continue; // keep stale centroid
        // value-sorted accumulation keeps the sum independent of row order
        std::sort(members[c].begin(), members[c].end(),
                  [&](std::size_t a, std::size_t b) {
                      auto ra = points.row(a);
                      auto rb = points.row(b);
                      return std::lexicographical_compare(ra.begin(), ra.end(),
                                                          rb.begin(), rb.end());
                  });
        auto dst = out.row(c);
        std::fill(dst.begin(), dst.end(), 0.0);
        for (std::size_t i : members[c]) {
            auto p = points.row(i);
            for (std::size_t j = 0; j < points.cols; ++j) dst[j] += p[j];
        }
        for (std::size_t j = 0; j < points.cols; ++j) dst[j] /= members[c].size();
    }
    return out;
}

double kmeans_objective(const Matrix& points, const Matrix& centroids,
                        const std::vector<std::uint32_t>& labels) {
    double obj = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
        obj += sqdist(points.row(i), centroids.row(labels[i]));
    }
    return obj;
}

namespace {

// Farthest-point seeding anchored at the max-norm point. Duplicate picks are
// possible only when fewer than K distinct points exist.
Matrix farthest_point_seed(const Matrix& points, std::uint32_t k) {
    const std::size_t m = points.rows;
    std::vector<std::size_t> chosen;
    chosen.reserve(k);

    std::size_t first = 0;
    double best_norm = -1.0;
    for (std::size_t i = 0; i < m; ++i) {
        double n = 0.0;
        for (double v : points.row(i)) n += v * v;
        if (n > best_norm) {
            best_norm = n;
            first = i;
        }
    }
    chosen.push_back(first);

    std::vector<double> min_dist(m);
    std::vector<bool> taken(m, false);
    taken[first] = true;
    for (std::size_t i = 0; i < m; ++i) {
        min_dist[i] = sqdist(points.row(i), points.row(first));
    }
    while (chosen.size() < k) {
        std::size_t next = m;
        double best = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            if (taken[i]) continue;
            if (min_dist[i] > best) {
                best = min_dist[i];
                next = i;
            }
        }
        chosen.push_back(next);
        taken[next] = true;
        for (std::size_t i = 0; i < m; ++i) {
            min_dist[i] = std::min(min_dist[i], sqdist(points.row(i), points.row(next)));
        }
    }

    Matrix out(k, points.cols);
    for (std::uint32_t c = 0; c < k; ++c) {
        auto src = points.row(chosen[c]);
        std::copy(src.begin(), src.end(), out.row(c).begin());
    }
    return out;
}

} // namespace

Codebook init_balanced_kmeans(const EmbeddingPool& pool, const CodebookSpec& spec,
                              std::uint32_t max_iters, std::uint64_t seed) {
    validate_spec(spec);
    const Matrix points = subspace_view(pool, spec);
    if (points.rows < spec.vocab_size) {
        throw TooFewPoints("N*L < K");
    }

    Codebook cb;
    cb.spec = spec;
    cb.entries = farthest_point_seed(points, spec.vocab_size);

    std::vector<std::uint32_t> labels;
    for (std::uint32_t it = 0; it < max_iters; ++it) {
        BalancedAssignment a = assign_balanced(points, cb, seed);
        if (!labels.empty()) {
            // greedy fill can regress on adversarial geometry; if it would,
            // the previous labeling is already a fixed point
            if (kmeans_objective(points, cb.entries, a.labels) >
                kmeans_objective(points, cb.entries, labels)) {
                break;
            }
            if (a.labels == labels) break;
        }
        labels = std::move(a.labels);
        BalancedAssignment fixed;
        fixed.labels = labels;
        cb.entries = update_centroids(points, fixed, cb.entries);
    }
    return cb;
}

} // namespace curp
