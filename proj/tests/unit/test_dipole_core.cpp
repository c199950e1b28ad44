#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "lambshift/dipole.hpp"
#include "lambshift/error.hpp"
#include "lambshift/geometry.hpp"
#include "lambshift/random.hpp"
#include "oracles.hpp"

using namespace lambshift;
using cd = std::complex<double>;

namespace {

constexpr double kPiD = std::numbers::pi;


AtomCloud make_cloud(std::vector<Vec3> positions) {
  AtomCloud c;
  c.positions = std::move(positions);
  c.spec.atom_count = static_cast<int>(c.positions.size());
  return c;
}

AtomCloud cylinder_701(std::uint64_t seed) {
  GeometrySpec spec;
  spec.shape = UniformCylinder{2 * kPiD, 6 * kPiD};
  spec.atom_count = 701;
  return sample_positions(spec, seed);
}

}  // namespace

TEST(Kernel, MagicAngleIsPurelyFarField) {
  const cd v = coupling_kernel(2 * kPiD, 1.0 / std::sqrt(3.0));
  EXPECT_NEAR(v.real(), -1.0 / (4 * kPiD), 1e-15);
  EXPECT_NEAR(v.imag(), 0.0, 1e-15);
}

TEST(Kernel, PerpendicularAtOneWavelength) {
  const cd v = coupling_kernel(2 * kPiD, 0.0);
  EXPECT_NEAR(v.real(), 0.75 * (-1.0 / (2 * kPiD) + 1.0 / (8 * kPiD * kPiD * kPiD)), 1e-15);
  EXPECT_NEAR(v.imag(), 0.75 * (-1.0 / (4 * kPiD * kPiD)), 1e-15);
  EXPECT_NEAR(v.real(), -0.116343, 1e-6);
  EXPECT_NEAR(v.imag(), -0.018998, 1e-6);
}

TEST(Kernel, MatchesHighPrecisionEvaluation) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> kr_dist(0.05, 60.0), c_dist(-1.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const double kr = kr_dist(gen), c = c_dist(gen);
    const cd got = coupling_kernel(kr, c);
    const cd want = oracle::kernel_mp(kr, c);
    EXPECT_LT(std::abs(got - want), 1e-13 * std::max(1.0, std::abs(want))) << "kr=" << kr << " c=" << c;
  }
}

TEST(Kernel, NearFieldLeadingTerm) {
  const cd v = coupling_kernel(0.1, 1.0);
  const double leading = -1.5 / 1e-3;
  EXPECT_LT(std::abs(v - leading) / std::abs(leading), 0.01);
}

TEST(Kernel, FarFieldDecayBound) {
  // Triangle inequality: |V| <= (3/4)(1 + 1/kr + 1/kr^2)/kr <= 0.8325/kr for kr >= 10.
  constexpr double kBound = 0.8325;
  for (double kr = 10.0; kr < 2000.0; kr *= 1.013) {
    for (double c = -1.0; c <= 1.0; c += 0.05) {
      ASSERT_LE(std::abs(coupling_kernel(kr, c)) * kr, kBound) << kr << " " << c;
    }
  }
}

TEST(Kernel, ImaginaryPartBounded) {
  for (double kr = 1e-3; kr < 100.0; kr *= 1.01) {
    for (double c = -1.0; c <= 1.0; c += 0.1) {
      ASSERT_LE(std::abs(coupling_kernel(kr, c).imag()), 1.0) << kr << " " << c;
    }
  }
}

TEST(Kernel, RejectsCoincidentAtoms) {
  EXPECT_THROW(coupling_kernel(1e-13, 0.0), NumericalError);
  EXPECT_THROW(pairwise_coupling(Vec3(1, 2, 3), Vec3(1, 2, 3)), NumericalError);
}

TEST(Kernel, ReciprocityIsExact) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> d(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(d(gen), d(gen), d(gen)), b(d(gen), d(gen), d(gen));
    EXPECT_EQ(pairwise_coupling(a, b), pairwise_coupling(b, a));
  }
}

TEST(Matrices, SingleAtom) {
  const CouplingMatrices m = build_matrices(make_cloud({Vec3(0, 0, 0)}));
  ASSERT_EQ(m.size(), 1);
  EXPECT_EQ(m.m_real(0, 0), 0.0);
  EXPECT_EQ(m.m_imag(0, 0), -0.5);
}

TEST(Matrices, TwoAtoms) {
  const Vec3 a(0.3, -0.2, 0.1), b(1.1, 0.4, 2.0);
  const CouplingMatrices m = build_matrices(make_cloud({a, b}));
  const cd v = pairwise_coupling(a, b);
  EXPECT_EQ(m.m_real(0, 1), v.real());
  EXPECT_EQ(m.m_real(1, 0), v.real());
  EXPECT_EQ(m.m_imag(0, 1), v.imag());
  EXPECT_EQ(m.m_real.trace(), 0.0);
}

TEST(Matrices, CylinderEntriesAndSymmetry) {
  const AtomCloud cloud = cylinder_701(77);
  const CouplingMatrices m = build_matrices(cloud);
  EXPECT_EQ((m.m_real - m.m_real.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((m.m_imag - m.m_imag.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(m.m_real.trace(), 0.0);
  for (int i = 0; i < m.size(); ++i) EXPECT_EQ(m.m_imag(i, i), -0.5);
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> pick(0, m.size() - 1);
  for (int t = 0; t < 100; ++t) {
    const int i = pick(gen);
    int j = pick(gen);
    if (j == i) j = (i + 1) % m.size();
    const Vec3 sep = cloud.positions[j] - cloud.positions[i];
    const cd want = oracle::kernel_mp(sep.norm(), sep.x() / sep.norm());
    EXPECT_LT(std::abs(cd(m.m_real(i, j), m.m_imag(i, j)) - want), 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST(Drive, PhaseFactors) {
  const Eigen::VectorXcd d = drive_vector(make_cloud({Vec3(0, 0, 0), Vec3(1, 2, kPiD), Vec3(0, 0, kPiD / 2)}));
  EXPECT_LT(std::abs(d[0] - cd(1, 0)), 1e-15);
  EXPECT_LT(std::abs(d[1] - cd(-1, 0)), 1e-15);
  EXPECT_LT(std::abs(d[2] - cd(0, 1)), 1e-15);
  EXPECT_FALSE(outside_weak_drive(1e-3));
  EXPECT_TRUE(outside_weak_drive(0.1));
}

TEST(SteadyState, SingleAtomOnResonance) {
  const AtomCloud cloud = make_cloud({Vec3(0, 0, 0)});
  const CouplingMatrices m = build_matrices(cloud);
  const double rabi = 1e-3;
  const SteadyState s = solve_steady_state(m, drive_vector(cloud), 0.0, rabi);
  EXPECT_LT(std::abs(s.amplitudes[0] - cd(0, -2 * rabi)), 1e-18);
  EXPECT_NEAR(std::norm(s.amplitudes[0]), 4 * rabi * rabi, 1e-18);
}

TEST(SteadyState, SingleAtomLorentzian) {
  const AtomCloud cloud = make_cloud({Vec3(0.4, -1.0, 2.5)});
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  const double rabi = 0.02;
  for (double delta = -20.0; delta <= 20.0; delta += 0.1) {
    const double got = std::norm(solve_steady_state(m, d, delta, rabi).amplitudes[0]);
    const double want = rabi * rabi / (delta * delta + 0.25);
    EXPECT_LT(std::abs(got - want) / want, 1e-12) << delta;
  }
}

TEST(SteadyState, TwoAtomClosedForm) {
  std::mt19937_64 gen(99);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const std::array<double, 3> r1{u(gen), u(gen), u(gen)}, r2{u(gen), u(gen), u(gen)};
    const double delta = 4.0 * u(gen);
    const auto want = oracle::two_atom(r1, r2, delta, 1e-3);
    const AtomCloud cloud = make_cloud({Vec3(r1[0], r1[1], r1[2]), Vec3(r2[0], r2[1], r2[2])});
    const SteadyState s = solve_steady_state(build_matrices(cloud), drive_vector(cloud), delta, 1e-3);
    const double scale = std::max(std::abs(want.b[0]), std::abs(want.b[1]));
    EXPECT_LT(std::abs(s.amplitudes[0] - want.b[0]) / scale, 1e-12);
    EXPECT_LT(std::abs(s.amplitudes[1] - want.b[1]) / scale, 1e-12);
  }
}

TEST(SteadyState, ResidualBoundAtFullSize) {
  const AtomCloud cloud = cylinder_701(3);
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  for (double delta : {-7.25, -0.2, 0.0, 9.5}) {
    const SteadyState s = solve_steady_state(m, d, delta, 1e-3);
    EXPECT_LT(relative_residual(m, d, s, 1e-3), 1e-9) << delta;
  }
}

TEST(SteadyState, LargeDetuningAsymptote) {
  GeometrySpec spec;
  spec.shape = UniformCylinder{2 * kPiD, 6 * kPiD};
  spec.atom_count = 200;
  const AtomCloud cloud = sample_positions(spec, 8);
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  for (double delta : {-1e3, 1e3}) {
    const double norm = solve_steady_state(m, d, delta, 1e-3).amplitudes.norm();
    const double want = 1e-3 * std::sqrt(200.0) / 1e3;
    EXPECT_LT(std::abs(norm - want) / want, 0.01);
  }
}

TEST(Sweep, SingleAtomThreePoints) {
  const AtomCloud cloud = make_cloud({Vec3(0, 0, 0)});
  const double grid[] = {-10.0, 0.0, 10.0};
  const SweepResult r = spectrum_sweep(build_matrices(cloud), drive_vector(cloud), 1e-3, grid);
  ASSERT_EQ(r.states.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(std::norm(r.states[i].amplitudes[0]) / (1e-6 / (grid[i] * grid[i] + 0.25)), 1.0, 1e-12);
  }
  EXPECT_EQ(r.backend, SolverTag::direct);  // short grid stays direct
}

TEST(Sweep, BackendsAgreeForTwoAtoms) {
  const AtomCloud cloud = make_cloud({Vec3(0.1, 0.2, 0.0), Vec3(0.5, -0.3, 0.9)});
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  std::vector<double> grid;
  for (int i = 0; i <= 160; ++i) grid.push_back(-20.0 + 0.25 * i);
  SweepOptions spectral;
  spectral.backend = SweepBackend::spectral;
  SweepOptions direct;
  direct.backend = SweepBackend::direct;
  const SweepResult a = spectrum_sweep(m, d, 1e-3, grid, spectral);
  const SweepResult b = spectrum_sweep(m, d, 1e-3, grid, direct);
  EXPECT_EQ(a.backend, SolverTag::spectral);
  EXPECT_FALSE(a.fell_back);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_LT((a.states[i].amplitudes - b.states[i].amplitudes).norm() / b.states[i].amplitudes.norm(), 1e-6);
  }
}

TEST(Sweep, BackendsAgreeAtFullSize) {
  const AtomCloud cloud = cylinder_701(21);
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd d = drive_vector(cloud);
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(-20.0 + 1.0 * i);
  SweepOptions spectral;
  spectral.backend = SweepBackend::spectral;
  const SweepResult a = spectrum_sweep(m, d, 1e-3, grid, spectral);
  ASSERT_EQ(a.backend, SolverTag::spectral) << a.fallback_reason;
  EXPECT_LT(a.validation_error, 1e-6);
  for (std::size_t i = 0; i < grid.size(); i += 7) {
    const SteadyState s = solve_steady_state(m, d, grid[i], 1e-3);
    EXPECT_LT((a.states[i].amplitudes - s.amplitudes).norm() / s.amplitudes.norm(), 1e-6) << grid[i];
  }
}

TEST(Sweep, ForcedFallbackOnTinyConditionLimit) {
  const AtomCloud cloud = make_cloud({Vec3(0.1, 0.2, 0.0), Vec3(0.5, -0.3, 0.9), Vec3(2, 1, -1)});
  std::vector<double> grid;
  for (int i = 0; i <= 60; ++i) grid.push_back(-3.0 + 0.1 * i);
  SweepOptions o;
  o.max_condition = 1.0 + 1e-12;  // any eigenvector matrix exceeds this
  const SweepResult r = spectrum_sweep(build_matrices(cloud), drive_vector(cloud), 1e-3, grid, o);
  EXPECT_TRUE(r.fell_back);
  EXPECT_EQ(r.backend, SolverTag::direct);
  EXPECT_FALSE(r.fallback_reason.empty());
}

TEST(Sweep, RejectsBadGrid) {
  const AtomCloud cloud = make_cloud({Vec3(0, 0, 0)});
  const double grid[] = {0.0, -1.0};
  EXPECT_THROW(spectrum_sweep(build_matrices(cloud), drive_vector(cloud), 1e-3, grid), std::exception);
  EXPECT_THROW(spectrum_sweep(build_matrices(cloud), drive_vector(cloud), 1e-3, std::span<const double>{}),
               std::exception);
}

TEST(Sweep, ValidationIndicesSpanGrid) {
  EXPECT_EQ(validation_indices(241, 5), (std::vector<int>{0, 60, 120, 180, 240}));
  EXPECT_EQ(validation_indices(3, 5), (std::vector<int>{0, 1, 2}));
}
