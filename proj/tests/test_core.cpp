#include <doctest.h>

#include <cmath>
#include <random>

#include "curp/synth.hpp"
#include "curp/types.hpp"

using namespace curp;

TEST_CASE("validate_spec accepts legal shapes") {
    const CodebookSpec s = make_spec(768, 4, 1000);
    CHECK(s.sub_dim == 192);
    const CodebookSpec tiny = make_spec(8, 4, 2);
    CHECK(tiny.sub_dim == 2);
}

TEST_CASE("validate_spec rejects bad shapes") {
    CHECK_THROWS_AS(make_spec(10, 4, 16), DimNotDivisible);
    CHECK_THROWS_AS(make_spec(8, 4, 1), VocabTooSmall);
}

TEST_CASE("split_subspaces basic shapes") {
    const std::vector<double> e{1, 2, 3, 4};

    auto two = split_subspaces(e, make_spec(4, 2, 2));
    REQUIRE(two.size() == 2);
    CHECK(two[0][0] == 1);
    CHECK(two[0][1] == 2);
    CHECK(two[1][0] == 3);
    CHECK(two[1][1] == 4);

    auto four = split_subspaces(e, make_spec(4, 4, 2));
    REQUIRE(four.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(four[i][0] == i + 1);

    auto one = split_subspaces(e, make_spec(4, 1, 2));
    REQUIRE(one.size() == 1);
    CHECK(one[0].size() == 4);

    CHECK_THROWS_AS(split_subspaces(std::vector<double>{1, 2}, make_spec(4, 2, 2)),
                    DimMismatch);
}

TEST_CASE("split then concatenate is the identity, bit level") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10, 10);
    const CodebookSpec spec = make_spec(24, 6, 5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> e(spec.dim);
        for (double& v : e) v = u(rng);
        std::vector<double> cat;
        for (auto sub : split_subspaces(e, spec)) {
            cat.insert(cat.end(), sub.begin(), sub.end());
        }
        CHECK(cat == e);
    }
}

TEST_CASE("generate_mixture_pool zero noise reproduces centers") {
    const CodebookSpec spec = make_spec(8, 4, 2);
    const MixturePool mp = generate_mixture_pool(3, 4, 5, spec, 0.0);
    REQUIRE(mp.pool.count() == 20);
    for (std::size_t i = 0; i < mp.pool.count(); ++i) {
        auto row = mp.pool.data.row(i);
        auto c = mp.centers.row(mp.labels[i]);
        for (std::size_t j = 0; j < spec.dim; ++j) CHECK(row[j] == c[j]);
    }
}

TEST_CASE("generate_mixture_pool is pure and deterministic") {
    const CodebookSpec spec = make_spec(12, 3, 4);
    const MixturePool a = generate_mixture_pool(42, 3, 7, spec, 0.1);
    const MixturePool b = generate_mixture_pool(42, 3, 7, spec, 0.1);
    CHECK(a.pool.data == b.pool.data);
    CHECK(a.labels == b.labels);
    CHECK(a.centers == b.centers);
    const MixturePool c = generate_mixture_pool(43, 3, 7, spec, 0.1);
    CHECK(a.pool.data.data != c.pool.data.data);
}

namespace {

// plain Lloyd k-means seeded at given centers; the independent oracle for the
// generator's cluster structure
Matrix lloyd(const Matrix& points, Matrix centers, int iters) {
    const std::size_t k = centers.rows;
    std::vector<std::size_t> label(points.rows);
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < points.rows; ++i) {
            double best = 1e300;
            for (std::size_t c = 0; c < k; ++c) {
                double d = 0;
                for (std::size_t j = 0; j < points.cols; ++j) {
                    const double t = points.at(i, j) - centers.at(c, j);
                    d += t * t;
                }
                if (d < best) {
                    best = d;
                    label[i] = c;
                }
            }
        }
        Matrix sums(k, points.cols);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.rows; ++i) {
            for (std::size_t j = 0; j < points.cols; ++j) {
                sums.at(label[i], j) += points.at(i, j);
            }
            ++counts[label[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < points.cols; ++j) {
                centers.at(c, j) = sums.at(c, j) / counts[c];
            }
        }
    }
    return centers;
}

} // namespace

TEST_CASE("per-subspace k-means recovers archetype centers from the pool") {
    const CodebookSpec spec = make_spec(8, 4, 8);
    const double sigma = 0.05;
    const std::uint32_t points = 100;
    const MixturePool mp = generate_mixture_pool(11, 8, points, spec, sigma);
    const double tol = 3.0 * sigma / std::sqrt(static_cast<double>(points));

    for (std::uint32_t l = 0; l < spec.num_subspaces; ++l) {
        Matrix slice(mp.pool.count(), spec.sub_dim);
        Matrix seed(8, spec.sub_dim);
        for (std::size_t i = 0; i < mp.pool.count(); ++i) {
            for (std::uint32_t j = 0; j < spec.sub_dim; ++j) {
                slice.at(i, j) = mp.pool.data.at(i, l * spec.sub_dim + j);
            }
        }
        for (std::size_t a = 0; a < 8; ++a) {
            for (std::uint32_t j = 0; j < spec.sub_dim; ++j) {
                seed.at(a, j) = mp.centers.at(a, l * spec.sub_dim + j);
            }
        }
        const Matrix fit = lloyd(slice, seed, 50);
        for (std::size_t a = 0; a < 8; ++a) {
            for (std::uint32_t j = 0; j < spec.sub_dim; ++j) {
                CHECK(std::abs(fit.at(a, j) - seed.at(a, j)) < tol);
            }
        }
    }
}

TEST_CASE("PQCode validation") {
    const CodebookSpec spec = make_spec(8, 4, 3);
    PQCode ok{{0, 1, 2, 0}};
    CHECK_NOTHROW(ok.validate(spec));
    PQCode wrong_len{{0, 1}};
    CHECK_THROWS_AS(wrong_len.validate(spec), DimMismatch);
    PQCode big{{0, 1, 2, 3}};
    CHECK_THROWS_AS(big.validate(spec), IndexOutOfRange);
}
