#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "lambshift/ensemble.hpp"
#include "lambshift/exact_sum.hpp"

using namespace lambshift;

namespace {

RunConfig small_config(int n_configs) {
  RunConfig c;
  c.geometry.kind = GeometryInput::Kind::cylinder;
  c.geometry.radius = 2.0 * std::numbers::pi;
  c.geometry.length = 4.0 * std::numbers::pi;
  c.geometry.atom_count = 40;
  c.drive.coarse = {-6.0, 6.0, 0.5};
  c.drive.fine = {-1.0, 1.0, 0.1};
  c.ensemble.n_configs = n_configs;
  c.ensemble.master_seed = 777;
  c.analysis.angles = {0.0, 0.2};
  c.analysis.excitation_detunings = {-1.0, 0.0};
  c.binning.kf_max = 1.5;
  return c;
}

EnsembleAccumulator accumulate(const RunConfig& c, int from, int to) {
  EnsembleAccumulator acc(make_layout(c));
  for (int i = from; i < to; ++i) acc.add(run_single_configuration(c, i));
  return acc;
}

std::filesystem::path temp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lambshift_test_" + name);
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST(ExactSum, OrderIndependentAndExact) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> mant(-1.0, 1.0);
  std::uniform_int_distribution<int> expo(-300, 300);
  std::vector<double> xs;
  for (int i = 0; i < 5000; ++i) xs.push_back(std::ldexp(mant(gen), expo(gen)));
  ExactSum forward, backward, halves_a, halves_b;
  for (double x : xs) forward.add(x);
  for (auto it = xs.rbegin(); it != xs.rend(); ++it) backward.add(*it);
  for (std::size_t i = 0; i < xs.size(); ++i) (i % 2 ? halves_a : halves_b).add(xs[i]);
  halves_a += halves_b;
  EXPECT_EQ(forward, backward);
  EXPECT_EQ(forward, halves_a);
  EXPECT_EQ(forward.value(), backward.value());
}

TEST(ExactSum, CancellationAndRounding) {
  ExactSum s;
  s.add(1e300);
  s.add(1.0);
  s.add(-1e300);
  EXPECT_EQ(s.value(), 1.0);
  ExactSum t;
  t.add(0.1);
  t.add(0.2);
  EXPECT_EQ(t.value(), 0.30000000000000004);  // correctly rounded 0.1 + 0.2
  ExactSum tiny;
  tiny.add(std::numeric_limits<double>::denorm_min());
  tiny.add(std::numeric_limits<double>::denorm_min());
  EXPECT_EQ(tiny.value(), 2 * std::numeric_limits<double>::denorm_min());
  ExactSum neg;
  neg.add(-2.5);
  neg.add(0.5);
  EXPECT_EQ(neg.value(), -2.0);
  EXPECT_EQ(ExactSum{}.value(), 0.0);
}

TEST(ExactSum, SerializationRoundTrip) {
  ExactSum s;
  s.add(-123.456);
  s.add(std::ldexp(1.0, -1070));
  s.add(std::ldexp(3.0, 1000));
  EXPECT_EQ(ExactSum::deserialize(s.serialize()), s);
  ExactSum inf;
  inf.add(std::numeric_limits<double>::infinity());
  EXPECT_FALSE(inf.is_finite());
  EXPECT_FALSE(ExactSum::deserialize(inf.serialize()).is_finite());
}

TEST(Ensemble, BundleIsDeterministic) {
  const RunConfig c = small_config(5);
  const ConfigurationBundle a = run_single_configuration(c, 3);
  const ConfigurationBundle b = run_single_configuration(c, 3);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.seed, run_single_configuration(c, 4).seed);
  EXPECT_EQ(a.atom_count, 40);
  ASSERT_EQ(a.angle_total.size(), 2u);
  EXPECT_EQ(a.angle_total[0], a.i_total);
  EXPECT_EQ(a.energies.size(), 40u);
  EXPECT_EQ(a.mode_population.size(), 2u);
}

TEST(Ensemble, SingleConfigurationMatchesBundle) {
  const RunConfig c = small_config(1);
  const ConfigurationBundle bundle = run_single_configuration(c, 0);
  const EnsembleResult r = run_ensemble(c);
  EXPECT_EQ(r.completed, 1u);
  EXPECT_EQ(r.forward.i_total, bundle.i_total);
  EXPECT_EQ(r.forward.excitation, bundle.excitation);
  EXPECT_EQ(r.forward.detunings, c.drive.combined_grid());
  ASSERT_TRUE(r.dos.has_value());
  EXPECT_EQ(r.dos->total() + r.dos->underflow + r.dos->overflow, 40u);
}

TEST(Ensemble, MergeMatchesSequential) {
  const RunConfig c = small_config(2);
  EnsembleAccumulator a = accumulate(c, 0, 1);
  const EnsembleAccumulator b = accumulate(c, 1, 2);
  a.merge(b);
  EXPECT_EQ(a, accumulate(c, 0, 2));
  const EnsembleResult merged = finalize(a, c);
  const EnsembleResult direct = run_ensemble(c);
  EXPECT_EQ(merged.forward.i_total, direct.forward.i_total);
}

TEST(Ensemble, SplitInvariance) {
  const RunConfig c = small_config(100);
  const EnsembleAccumulator whole = accumulate(c, 0, 100);
  const EnsembleAccumulator split_37 = merge_accumulators(accumulate(c, 0, 37), accumulate(c, 37, 100));
  const EnsembleAccumulator split_50 = merge_accumulators(accumulate(c, 50, 100), accumulate(c, 0, 50));
  EXPECT_EQ(split_37, whole);
  EXPECT_EQ(split_50, whole);
  const EnsembleResult a = finalize(split_37, c), b = finalize(split_50, c);
  EXPECT_EQ(a.forward.i_total, b.forward.i_total);
  EXPECT_EQ(a.i_total_sem, b.i_total_sem);
  EXPECT_EQ(a.capability_vs_energy, b.capability_vs_energy);
  EXPECT_EQ(a.fourier_map->rows, b.fourier_map->rows);
}

TEST(Ensemble, MergeRejectsMismatchedLayouts) {
  RunConfig c = small_config(1);
  EnsembleAccumulator a(make_layout(c));
  c.drive.coarse = {-5.0, 5.0, 0.5};
  const EnsembleAccumulator b(make_layout(c));
  EXPECT_THROW(a.merge(b), AnalysisError);
}

TEST(Ensemble, WorkerCountDoesNotChangeResults) {
  const RunConfig c = small_config(24);
  EnsembleOptions one, four;
  one.workers = 1;
  four.workers = 4;
  const EnsembleResult a = run_ensemble(c, one);
  const EnsembleResult b = run_ensemble(c, four);
  EXPECT_EQ(a.forward.i_total, b.forward.i_total);
  EXPECT_EQ(a.forward.i_coherent, b.forward.i_coherent);
  EXPECT_EQ(a.i_total_sem, b.i_total_sem);
  EXPECT_EQ(a.dos->counts, b.dos->counts);
  EXPECT_EQ(a.capability_vs_energy, b.capability_vs_energy);
  ASSERT_EQ(a.angle_curves.size(), b.angle_curves.size());
  for (std::size_t i = 0; i < a.angle_curves.size(); ++i) {
    EXPECT_EQ(a.angle_curves[i].i_total, b.angle_curves[i].i_total);
  }
}

TEST(Ensemble, BundlesArriveInCanonicalOrder) {
  const RunConfig c = small_config(12);
  std::vector<int> seen;
  EnsembleOptions o;
  o.workers = 3;
  o.on_bundle = [&](const ConfigurationBundle& b) { seen.push_back(b.index); };
  run_ensemble(c, o);
  ASSERT_EQ(seen.size(), 12u);
  for (int i = 0; i < 12; ++i) EXPECT_EQ(seen[i], i);
}

TEST(Ensemble, CheckpointResumeExtendsRun) {
  const auto path = temp_path("resume.json");
  RunConfig c = small_config(10);
  c.ensemble.checkpoint_every = 4;
  EnsembleOptions o;
  o.checkpoint = path;
  run_ensemble(c, o);
  ASSERT_TRUE(std::filesystem::exists(path));

  c.ensemble.n_configs = 20;
  int fresh = 0;
  o.on_bundle = [&](const ConfigurationBundle& b) {
    EXPECT_GE(b.index, 10);
    ++fresh;
  };
  const EnsembleResult resumed = run_ensemble(c, o);
  EXPECT_EQ(fresh, 10);
  EXPECT_EQ(resumed.completed, 20u);

  RunConfig plain = small_config(20);
  const EnsembleResult uninterrupted = run_ensemble(plain);
  EXPECT_EQ(resumed.forward.i_total, uninterrupted.forward.i_total);
  EXPECT_EQ(resumed.dos->counts, uninterrupted.dos->counts);
  EXPECT_EQ(resumed.fourier_map->rows, uninterrupted.fourier_map->rows);
  std::filesystem::remove(path);
}

TEST(Ensemble, CheckpointFromDifferentPhysicsIsRejected) {
  const auto path = temp_path("mismatch.json");
  RunConfig c = small_config(3);
  c.ensemble.checkpoint_every = 1;
  EnsembleOptions o;
  o.checkpoint = path;
  run_ensemble(c, o);
  c.geometry.atom_count = 41;
  EXPECT_THROW(run_ensemble(c, o), ConfigError);
  std::filesystem::remove(path);
}

TEST(Ensemble, FailureBudgetAborts) {
  RunConfig c;
  c.geometry.kind = GeometryInput::Kind::gaussian;
  c.geometry.sigma = {0.01, 0.01, 0.01};
  c.geometry.atom_count = 20;
  c.geometry.exclusion_radius = 1.0;  // cannot be packed
  c.drive.coarse = {-2.0, 2.0, 0.5};
  c.drive.fine = {-0.5, 0.5, 0.1};
  c.ensemble.n_configs = 10;
  c.ensemble.failure_budget = 0.2;
  c.analysis.modes = false;
  try {
    run_ensemble(c);
    FAIL() << "expected FailureBudgetExceeded";
  } catch (const FailureBudgetExceeded& e) {
    ASSERT_EQ(e.failures().size(), 3u);  // third failure exceeds 0.2 * 10
    EXPECT_EQ(e.failures()[0].index, 0);
    EXPECT_EQ(e.failures()[2].index, 2);
  }
}

TEST(Ensemble, InvariantsStayTight) {
  RunConfig c = small_config(3);
  c.analysis.check_invariants = true;
  const EnsembleResult r = run_ensemble(c);
  ASSERT_TRUE(r.invariants.has_value());
  EXPECT_EQ(r.invariants->matrix_asymmetry, 0.0);
  EXPECT_LT(r.invariants->trace_m_real, 1e-12);
  EXPECT_LT(r.invariants->orthonormality, 1e-10);
  EXPECT_LT(r.invariants->parseval, 1e-10);
  EXPECT_LT(r.invariants->split_identity, 1e-12);
  EXPECT_LT(r.invariants->solver_residual, 1e-9);
}

TEST(Ensemble, BinByEnergyAveragesWithinBins) {
  const std::vector<std::pair<double, double>> pairs{{-0.9, 1.0}, {-0.6, 3.0}, {0.2, 5.0}, {7.0, 9.0}};
  const auto means = bin_by_energy(pairs, BinEdges::uniform(-1.0, 1.0, 0.5));
  ASSERT_EQ(means.size(), 4u);
  EXPECT_DOUBLE_EQ(*means[0], 2.0);
  EXPECT_FALSE(means[1].has_value());
  EXPECT_DOUBLE_EQ(*means[2], 5.0);
  EXPECT_FALSE(means[3].has_value());
}
