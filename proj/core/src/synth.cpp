#include "curp/synth.hpp"

#include <random>

namespace curp {

MixturePool generate_mixture_pool(std::uint64_t seed,
                                  std::uint32_t n_archetypes,
                                  std::uint32_t points_per_archetype,
                                  const CodebookSpec& spec,
                                  double noise_sigma) {
    validate_spec(spec);
    if (n_archetypes == 0) throw Error("n_archetypes must be >= 1");
    if (noise_sigma < 0) throw Error("noise_sigma must be >= 0");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    MixturePool out;
    out.centers = Matrix(n_archetypes, spec.dim);
    for (double& v : out.centers.data) v = unit(rng);

    const std::size_t n = static_cast<std::size_t>(n_archetypes) * points_per_archetype;
    out.pool.data = Matrix(n, spec.dim);
    out.labels.reserve(n);
    std::size_t r = 0;
    for (std::uint32_t a = 0; a < n_archetypes; ++a) {
        for (std::uint32_t p = 0; p < points_per_archetype; ++p, ++r) {
            auto dst = out.pool.data.row(r);
            auto c = out.centers.row(a);
            for (std::uint32_t j = 0; j < spec.dim; ++j) {
                dst[j] = c[j] + noise_sigma * noise(rng);
            }
            out.labels.push_back(a);
        }
    }
    return out;
}

Codebook random_codebook(const CodebookSpec& spec, std::uint64_t seed,
                         double range) {
    validate_spec(spec);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-range, range);
    Codebook cb;
    cb.spec = spec;
    cb.entries = Matrix(spec.vocab_size, spec.sub_dim);
    for (double& v : cb.entries.data) v = unit(rng);
    return cb;
}

PersonalizationTask make_personalization_task(std::uint64_t seed,
                                              std::uint32_t n_archetypes,
                                              std::uint32_t n_train,
                                              std::uint32_t n_heldout,
                                              std::uint32_t histories_per_user,
                                              std::uint32_t dim,
                                              std::uint32_t vocab,
                                              std::uint32_t query_len,
                                              std::uint32_t response_len,
                                              double noise_sigma) {
    if (n_archetypes == 0 || vocab < n_archetypes) {
        throw Error("need vocab >= n_archetypes >= 1");
    }
    if (response_len == 0) throw EmptyResponse("response_len must be >= 1");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    Matrix centers(n_archetypes, dim);
    for (double& v : centers.data) v = unit(rng);

    const std::uint32_t tokens_per_arch = vocab / n_archetypes;
    std::uniform_int_distribution<std::uint32_t> any_token(0, vocab - 1);

    PersonalizationTask task;
    task.history_pool.data =
        Matrix(static_cast<std::size_t>(n_train) * histories_per_user, dim);

    auto make_user = [&](std::uint32_t uid, std::uint32_t arch) {
        UserRecord rec;
        rec.user_id = "user" + std::to_string(uid);
        rec.histories = Matrix(histories_per_user, dim);
        auto c = centers.row(arch);
        for (std::uint32_t j = 0; j < histories_per_user; ++j) {
            auto dst = rec.histories.row(j);
            for (std::uint32_t k = 0; k < dim; ++k) {
                dst[k] = c[k] + noise_sigma * noise(rng);
            }
        }
        std::uniform_int_distribution<std::uint32_t> arch_token(
            arch * tokens_per_arch, arch * tokens_per_arch + tokens_per_arch - 1);
        for (std::uint32_t q = 0; q < query_len; ++q) {
            rec.query_tokens.push_back(any_token(rng));
        }
        for (std::uint32_t r = 0; r < response_len; ++r) {
            rec.response_tokens.push_back(arch_token(rng));
        }
        return rec;
    };

    std::size_t pool_row = 0;
    for (std::uint32_t u = 0; u < n_train; ++u) {
        const std::uint32_t arch = u % n_archetypes;
        UserRecord rec = make_user(u, arch);
        for (std::uint32_t j = 0; j < histories_per_user; ++j) {
            auto src = rec.histories.row(j);
            auto dst = task.history_pool.data.row(pool_row++);
            std::copy(src.begin(), src.end(), dst.begin());
        }
        task.train.push_back(std::move(rec));
        task.train_archetype.push_back(arch);
    }
    for (std::uint32_t u = 0; u < n_heldout; ++u) {
        const std::uint32_t arch = u % n_archetypes;
        task.heldout.push_back(make_user(n_train + u, arch));
        task.heldout_archetype.push_back(arch);
    }
    return task;
}

} // namespace curp
