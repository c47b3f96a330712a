#include "transar/detection.hpp"
#include "transar/election.hpp"
#include "transar/harness.hpp"

#include <benchmark/benchmark.h>

#include <sstream>

using namespace transar;

namespace {

Execution mode(const benchmark::State& state) { return state.range(0) == 0 ? Execution::serial : Execution::parallel; }

void label(benchmark::State& state) { state.SetLabel(state.range(0) == 0 ? "serial" : "parallel"); }

void BM_RunGrid(benchmark::State& state) {
    ExperimentGrid g;
    g.base.n0 = 64;
    g.base.nk = 49;
    g.base.K = 6;
    g.base.q = 20;
    g.a_sizes = {0, 3, 6};
    g.h_values = {0, 2};
    g.replications = 4;
    for (auto _ : state) benchmark::DoNotOptimize(run_grid(g, mode(state)));
    label(state);
}

void BM_Detect(benchmark::State& state) {
    SimulationConfig c;
    c.seed = 3;
    auto studies = gen_study_collection(c);
    std::vector<Dataset> sources;
    for (std::size_t k = 1; k < studies.size(); ++k) sources.push_back(studies[k].dataset);
    DetectionOptions o;
    o.execution = mode(state);
    for (auto _ : state) benchmark::DoNotOptimize(detect(studies[0].dataset, sources, 7, o));
    label(state);
}

void BM_Election(benchmark::State& state) {
    auto synth = gen_synthetic_election({});
    std::istringstream c(synth.covariates), r(synth.response), a(synth.adjacency), v(synth.votes);
    auto data = ingest(c, r, a, v);
    ElectionOptions o;
    o.replications = 5;
    o.execution = mode(state);
    for (auto _ : state) benchmark::DoNotOptimize(run_election(data, {"S01", "S02", "S03", "S04"}, o));
    label(state);
}

}  // namespace

BENCHMARK(BM_RunGrid)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Detect)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Election)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
