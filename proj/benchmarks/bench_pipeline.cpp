#include <benchmark/benchmark.h>

#include <numbers>

#include "lambshift/dipole.hpp"
#include "lambshift/geometry.hpp"
#include "lambshift/linalg.hpp"
#include "lambshift/modes.hpp"

using namespace lambshift;

namespace {

AtomCloud cylinder(int n) {
  GeometrySpec spec;
  const double lambda = 2 * std::numbers::pi;
  // Keep rho/k^3 = 0.3 as n changes.
  const double length = std::cbrt(9.0 * n / (0.3 * std::numbers::pi));
  spec.shape = UniformCylinder{length / 3.0, length};
  spec.atom_count = n;
  spec.exclusion_radius = 0.05 * lambda;
  return sample_positions(spec, 1);
}

std::vector<double> grid(double step) {
  std::vector<double> g;
  for (double d = -20.0; d <= 20.0 + 1e-9; d += step) g.push_back(d);
  return g;
}

void BM_BuildMatrices(benchmark::State& state) {
  const AtomCloud cloud = cylinder(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_matrices(cloud));
}

void BM_Diagonalize(benchmark::State& state) {
  const AtomCloud cloud = cylinder(static_cast<int>(state.range(0)));
  const CouplingMatrices m = build_matrices(cloud);
  for (auto _ : state) benchmark::DoNotOptimize(diagonalize_real_part(m));
}

void sweep(benchmark::State& state, SweepBackend backend) {
  linalg::use_single_threaded_blas();
  const AtomCloud cloud = cylinder(static_cast<int>(state.range(0)));
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  const std::vector<double> g = grid(0.25);
  SweepOptions o;
  o.backend = backend;
  for (auto _ : state) benchmark::DoNotOptimize(spectrum_sweep(m, d, kDefaultRabi, g, o));
  state.counters["detunings"] = static_cast<double>(g.size());
}

void BM_SweepDirect(benchmark::State& state) { sweep(state, SweepBackend::direct); }
void BM_SweepSpectral(benchmark::State& state) { sweep(state, SweepBackend::spectral); }

}  // namespace

BENCHMARK(BM_BuildMatrices)->Arg(100)->Arg(701)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Diagonalize)->Arg(100)->Arg(701)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepDirect)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SweepSpectral)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
