#include <benchmark/benchmark.h>

#include <string>

#include "wadamp/dmi_synthesis.hpp"
#include "wadamp/network_estimation.hpp"
#include "wadamp/simulator.hpp"
#include "wadamp/system_io.hpp"

using namespace wadamp;

namespace {

const SystemData& golden() {
  static const SystemData sys = io::load_system(std::string(WADAMP_DATA) + "/ieee9_3area.json");
  return sys;
}

const ReducedNetwork& reduced() {
  static const ReducedNetwork net = reduce_to_generators(golden().network, golden().internal_voltages());
  return net;
}

void BM_KronReduction(benchmark::State& state) {
  const SystemData& sys = golden();
  const Vec E = sys.internal_voltages();
  for (auto _ : state) benchmark::DoNotOptimize(reduce_to_generators(sys.network, E));
}
BENCHMARK(BM_KronReduction);

void BM_Equilibrium(benchmark::State& state) {
  const Vec pg = golden().dispatch();
  for (auto _ : state) benchmark::DoNotOptimize(solve_equilibrium(reduced(), pg));
}
BENCHMARK(BM_Equilibrium);

void BM_Estimation(benchmark::State& state) {
  const Equilibrium eq = solve_equilibrium(reduced(), golden().dispatch());
  MeasurementWindow w = synthesize_window(
      reduced(), excitation_angles(eq.delta, static_cast<int>(state.range(0)), 0.01, 0.1, 1), 0.01);
  add_measurement_noise(w, 1e-3, 7);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_reduced_params(w));
}
BENCHMARK(BM_Estimation)->Arg(100)->Arg(500)->Arg(2000);

void BM_OptimizeLocal(benchmark::State& state) {
  const DmiPlant plant = generator_plant(golden().generators[state.range(0)]);
  const Mat F0 = initial_gain(plant);
  for (auto _ : state) benchmark::DoNotOptimize(optimize_local(plant, DmiWeights{0.4, {}}, F0));
}
BENCHMARK(BM_OptimizeLocal)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_Resynthesize(benchmark::State& state) {
  const SystemData& sys = golden();
  const Equilibrium eq = solve_equilibrium(reduced(), sys.dispatch());
  const Mat h = coupling_gains(reduced(), eq.delta, eq.delta);
  ControllerConfig cfg;
  cfg.kind = ControllerKind::DmiAdaptive;
  const CommTopology topo = build_topology(sys.areas(), TopologyKind::AllToAll);
  for (auto _ : state) benchmark::DoNotOptimize(resynthesize(sys, h, cfg, topo, nullptr));
}
BENCHMARK(BM_Resynthesize)->Unit(benchmark::kMillisecond);

void BM_Rk4Step(benchmark::State& state) {
  const Mat A = -Mat::Identity(13, 13) + 0.1 * Mat::Ones(13, 13);
  const auto rhs = [&](double, const Vec& x) -> Vec { return A * x; };
  Vec x = Vec::Ones(13);
  for (auto _ : state) {
    x = integrate_step(x, 0.0, 1e-3, rhs);
    benchmark::DoNotOptimize(x);
  }
}
BENCHMARK(BM_Rk4Step);

void BM_TraditionalRun(benchmark::State& state) {
  Scenario sc = io::load_scenario(std::string(WADAMP_DATA) + "/scenario_traditional.json");
  sc.t_end = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_scenario(golden(), sc));
}
BENCHMARK(BM_TraditionalRun)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
