#include <benchmark/benchmark.h>

#include "curp/balanced_kmeans.hpp"
#include "curp/codec.hpp"
#include "curp/pcc.hpp"
#include "curp/quantizer.hpp"
#include "curp/synth.hpp"

using namespace curp;

static void BM_EncodeBatch(benchmark::State& state) {
    const CodebookSpec spec = make_spec(768, 4, static_cast<std::uint32_t>(state.range(0)));
    const MixturePool mp = generate_mixture_pool(1, 8, 16, spec, 0.1);
    const Codebook cb = random_codebook(spec, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_batch(mp.pool, cb));
    }
    state.SetItemsProcessed(state.iterations() *
                            static_cast<std::int64_t>(mp.pool.count()));
}
BENCHMARK(BM_EncodeBatch)->Arg(64)->Arg(256)->Arg(1000);

static void BM_BalancedAssign(benchmark::State& state) {
    const CodebookSpec spec = make_spec(32, 4, static_cast<std::uint32_t>(state.range(0)));
    const MixturePool mp = generate_mixture_pool(1, 8, 64, spec, 0.1);
    const Matrix points = subspace_view(mp.pool, spec);
    const Codebook cb = init_balanced_kmeans(mp.pool, spec, 1, 0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(assign_balanced(points, cb));
    }
}
BENCHMARK(BM_BalancedAssign)->Arg(16)->Arg(64);

static void BM_LossTotal(benchmark::State& state) {
    const CodebookSpec spec = make_spec(32, 4, 64);
    const MixturePool mp = generate_mixture_pool(1, 8, 1, spec, 0.1);
    const Codebook cb = random_codebook(spec, 2);
    const PccConfig cfg;
    for (auto _ : state) {
        benchmark::DoNotOptimize(loss_total(mp.pool.data, cb, cfg));
    }
}
BENCHMARK(BM_LossTotal);

static void BM_PackIndices(benchmark::State& state) {
    const CodebookSpec spec = make_spec(768, 4, 1000);
    std::vector<PQCode> codes(static_cast<std::size_t>(state.range(0)),
                              PQCode{{3, 7, 1, 9}});
    for (auto _ : state) {
        benchmark::DoNotOptimize(pack_indices(codes, spec));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PackIndices)->Arg(8)->Arg(1024);

BENCHMARK_MAIN();
