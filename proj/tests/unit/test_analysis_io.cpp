#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "lambshift/analysis.hpp"
#include "lambshift/config_io.hpp"
#include "lambshift/outputs.hpp"
#include "oracles.hpp"

using namespace lambshift;
namespace fs = std::filesystem;

namespace {

constexpr double kPiD = std::numbers::pi;
constexpr double kLam = 2.0 * kPiD;

SpectrumCurve synthetic_curve(const std::vector<double>& grid, const std::vector<std::array<double, 3>>& lines) {
  SpectrumCurve c;
  c.detunings = grid;
  for (double d : grid) {
    double y = 0.0;
    for (const auto& [center, hwhm, height] : lines) y += height * oracle::lorentzian(d, center, hwhm);
    c.i_total.push_back(y);
    c.i_coherent.push_back(y);
    c.i_incoherent.push_back(0.0);
    c.excitation.push_back(y);
  }
  return c;
}

std::vector<double> default_grid(double coarse_step = 0.25) {
  DriveSettings d;
  d.coarse.step = coarse_step;
  return d.combined_grid();
}

const std::vector<std::array<double, 3>> kThreePeaks{{-7.3, 1.2, 0.55}, {-0.2, 0.35, 1.0}, {9.6, 1.5, 0.25}};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lambshift_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(OpticalDepth, ReferenceClouds) {
  EXPECT_NEAR(optical_depth(1000, 1.5 * kLam, 1.5 * kLam), 16.89, 0.005);
  EXPECT_NEAR(optical_depth(1000, 0.5 * kLam, 0.5 * kLam), 151.98, 0.005);
  EXPECT_DOUBLE_EQ(optical_depth(2, 1.0, 1.0), 3.0);
}

TEST(Peaks, ThreeLorentzians) {
  const PeakReport r = find_peaks(synthetic_curve(default_grid(), kThreePeaks));
  ASSERT_TRUE(r.left && r.central && r.right);
  EXPECT_NEAR(r.left->position, -7.3, 0.05);
  EXPECT_NEAR(r.central->position, -0.2, 0.05);
  EXPECT_NEAR(r.right->position, 9.6, 0.05);
  EXPECT_NEAR(*r.collective_shift_left(), -7.3, 0.05);
  EXPECT_LT(r.roughness, 10.0);
}

TEST(Peaks, SingleLorentzianHasOnlyCentral) {
  const PeakReport r = find_peaks(synthetic_curve(default_grid(), {{0.13, 0.5, 1.0}}));
  ASSERT_TRUE(r.central.has_value());
  EXPECT_NEAR(r.central->position, 0.13, 0.01);
  EXPECT_FALSE(r.left.has_value());
  EXPECT_FALSE(r.right.has_value());
}

TEST(Peaks, LeftPeakCloseToCentralTip) {
  // Dilute cigar shape: collective line at -1.2 and a narrow resonant tip.
  const PeakReport r = find_peaks(synthetic_curve(default_grid(), {{-1.2, 0.6, 1.0}, {-0.1, 0.2, 0.5}}));
  ASSERT_TRUE(r.left && r.central);
  EXPECT_NEAR(r.left->position, -1.2, 0.1);
  EXPECT_NEAR(r.central->position, -0.1, 0.1);
  EXPECT_FALSE(r.right.has_value());
}

TEST(Peaks, RobustToGridHalving) {
  const PeakReport fine = find_peaks(synthetic_curve(default_grid(0.25), kThreePeaks));
  const PeakReport coarse = find_peaks(synthetic_curve(default_grid(0.5), kThreePeaks));
  EXPECT_LT(std::abs(fine.left->position - coarse.left->position), 0.05);
  EXPECT_LT(std::abs(fine.central->position - coarse.central->position), 0.05);
  EXPECT_LT(std::abs(fine.right->position - coarse.right->position), 0.05);
}

TEST(Peaks, SmallBumpsBelowProminenceAreIgnored) {
  auto lines = kThreePeaks;
  lines.push_back({15.0, 0.3, 0.004});
  const PeakReport r = find_peaks(synthetic_curve(default_grid(), lines));
  EXPECT_NEAR(r.right->position, 9.6, 0.05);
}

TEST(Peaks, RoughCurveIsRejected) {
  SpectrumCurve c = synthetic_curve(default_grid(), kThreePeaks);
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& y : c.i_total) y = u(gen);
  EXPECT_THROW(find_peaks(c), AnalysisError);
}

TEST(Peaks, LocalPeaksProminence) {
  const std::vector<double> x{0, 1, 2, 3, 4, 5, 6};
  const std::vector<double> y{0, 3, 1, 2, 1, 5, 0};
  const auto peaks = local_peaks(x, y, 0.0);
  ASSERT_EQ(peaks.size(), 3u);
  EXPECT_EQ(peaks[0].index, 1u);
  EXPECT_DOUBLE_EQ(peaks[0].prominence, 2.0);  // col at y = 1 towards the higher peak
  EXPECT_DOUBLE_EQ(peaks[1].prominence, 1.0);
  EXPECT_DOUBLE_EQ(peaks[2].prominence, 5.0);
  EXPECT_EQ(local_peaks(x, y, 2.0).size(), 2u);
}

TEST(Peaks, QuadraticRefinementIsExactForParabola) {
  std::vector<double> x, y;
  for (int i = 0; i < 11; ++i) {
    x.push_back(0.3 * i);
    y.push_back(2.0 - std::pow(0.3 * i - 1.37, 2));
  }
  const auto [pos, height] = refine_quadratic(x, y, 5, 5);
  EXPECT_NEAR(pos, 1.37, 1e-12);
  EXPECT_NEAR(height, 2.0, 1e-12);
}

TEST(Fit, ExactAndNoisyLines) {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{3, 5, 7, 9};
  const LinearFit f = linear_fit(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-14);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-14);
  // Hand-computed: Sxx = 5, Sxy = 4.9, Syy = 4.82.
  const std::vector<double> yn{0.7, 1.5, 2.6, 3.6};
  const LinearFit g = linear_fit(x, yn);
  EXPECT_NEAR(g.slope, 0.98, 1e-12);
  EXPECT_NEAR(g.intercept, -0.35, 1e-12);
  const double sse = 0.07 * 0.07 + 0.11 * 0.11 + 0.01 * 0.01 + 0.03 * 0.03;
  EXPECT_NEAR(g.slope_stderr, std::sqrt(sse / 2.0 / 5.0), 1e-12);
  EXPECT_NEAR(g.r_squared, 1.0 - sse / 4.82, 1e-12);
  EXPECT_EQ(g.points, 4u);
}

TEST(Scaling, FixedDensityPoints) {
  RunConfig base;
  base.geometry.kind = GeometryInput::Kind::gaussian;
  base.geometry.unit = LengthUnit::lambda0;
  base.geometry.peak_density = 0.01;
  base.scaling = ScalingSettings{ScalingMode::fixed_density_vary_size, {0.5, 0.75, 1.0, 1.25}, 0.01, {1, 1, 10}};
  const std::vector<double> grid = default_grid();
  int calls = 0;
  const ScalingTable t = scaling_sweep(base, [&](const RunConfig& c) {
    ++calls;
    EnsembleResult r;
    r.config = c;
    r.forward = synthetic_curve(grid, kThreePeaks);
    return r;
  });
  EXPECT_EQ(calls, 4);
  const int expected_n[] = {49, 165, 391, 763};
  const double expected_od[] = {7.4, 11.1, 14.9, 18.6};
  ASSERT_EQ(t.rows.size(), 4u);
  for (int i = 0; i < 4; ++i) {
    const ScalingRow& r = t.rows[i];
    ASSERT_TRUE(r.ok()) << r.error;
    EXPECT_EQ(r.atom_count, expected_n[i]);
    EXPECT_NEAR(r.od, 3.0 * r.atom_count / (2.0 * r.sigma_x * r.sigma_y), 1e-12 * r.od);
    EXPECT_NEAR(r.od, expected_od[i], 0.1);
    EXPECT_NEAR(r.sigma_z, 10.0 * r.sigma_x, 1e-12);
    EXPECT_NEAR(r.sigma_x, base.scaling->points[i] * kLam, 1e-12);
    EXPECT_NEAR(r.peak_density, 0.01, 0.01 * 0.02);  // N rounding
    EXPECT_NEAR(*r.shift_left, -7.3, 0.05);
  }
}

TEST(Scaling, FixedSizePointsAndRowFailures) {
  RunConfig base;
  base.geometry.kind = GeometryInput::Kind::gaussian;
  base.geometry.unit = LengthUnit::lambda0;
  base.geometry.sigma = {1.5, 1.5, 15.0};
  base.geometry.peak_density = 0.0046;
  base.scaling = ScalingSettings{ScalingMode::fixed_size_vary_density, {0.0023, 0.0046}, 0.01, {1, 1, 10}};
  int call = 0;
  const ScalingTable t = scaling_sweep(base, [&](const RunConfig& c) -> EnsembleResult {
    if (call++ == 1) throw NumericalError("synthetic failure");
    EnsembleResult r;
    r.config = c;
    r.forward = synthetic_curve(default_grid(), kThreePeaks);
    return r;
  });
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_TRUE(t.rows[0].ok());
  EXPECT_NEAR(t.rows[0].atom_count, 303, 1);
  EXPECT_FALSE(t.rows[1].ok());
  EXPECT_NE(t.rows[1].error.find("synthetic failure"), std::string::npos);
  EXPECT_NEAR(t.rows[1].atom_count, 606, 1);
}

TEST(Config, RoundTripThroughText) {
  RunConfig c;
  c.geometry.kind = GeometryInput::Kind::gaussian;
  c.geometry.unit = LengthUnit::lambda0;
  c.geometry.sigma = {0.5, 0.5, 4.0};
  c.geometry.atom_count = 321;
  c.geometry.exclusion_radius = 0.04;
  c.drive.rabi = 2e-3;
  c.drive.coarse = {-10.0, 10.0, 0.5};
  c.ensemble.n_configs = 17;
  c.ensemble.master_seed = 0xFFFFFFFFFFFFFFFFULL;
  c.solver.backend = SweepBackend::direct;
  c.analysis.angles = {0.0, kPiD / 15};
  c.analysis.azimuth = Azimuth::average16;
  c.binning.kf_step = 0.01;
  c.peaks.prominence_fraction = 0.1;
  c.scaling = ScalingSettings{ScalingMode::fixed_size_vary_density, {0.001, 0.002}, 0.01, {1, 1, 10}};
  EXPECT_EQ(parse_config(config_to_text(c)), c);
  RunConfig defaults;
  defaults.geometry.atom_count = 1;
  EXPECT_EQ(parse_config(config_to_text(defaults)), defaults);
}

TEST(Config, UnknownKeyNamesItsPath) {
  try {
    parse_config(R"({"geometry": {"atom_count": 5, "radiuss": 1.0}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "geometry.radiuss");
  }
  try {
    parse_config(R"({"drive": {"coarse": {"step": "fast"}}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "drive.coarse.step");
  }
  EXPECT_THROW(parse_config("{ not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"geometry": {"kind": "cube", "atom_count": 3}})"), ConfigError);
}

TEST(Config, MinimalFileTakesDefaults) {
  const RunConfig c = parse_config(R"(
    // comments are allowed
    {"geometry": {"atom_count": 10}}
  )");
  RunConfig want;
  want.geometry.atom_count = 10;
  EXPECT_EQ(c, want);
  // Coarse and fine grids share only -1, -0.5, 0, 0.5 and 1.
  EXPECT_EQ(c.drive.combined_grid().size(), 161u + 101u - 5u);
}

TEST(Config, ShippedConfigsLoad) {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(LAMBSHIFT_CONFIGS_DIR)) {
    if (entry.path().extension() != ".json") continue;
    ++count;
    EXPECT_NO_THROW({
      const RunConfig c = load_config(entry.path());
      c.validate();
      c.geometry.resolve();
    }) << entry.path();
  }
  EXPECT_GE(count, 6);
  const RunConfig cyl = load_config(fs::path(LAMBSHIFT_CONFIGS_DIR) / "cylinder.json");
  EXPECT_EQ(cyl.geometry.resolve().atom_count, 701);
}

TEST(Outputs, FormatDoubleRoundTrips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(Outputs, ByteIdenticalAcrossRuns) {
  RunConfig c;
  c.geometry.atom_count = 20;
  c.drive.coarse = {-4.0, 4.0, 0.5};
  c.drive.fine = {-0.5, 0.5, 0.1};
  c.ensemble.n_configs = 4;
  c.analysis.angles = {0.0, 0.1};
  const RunMetadata meta{"run", "inline", {"lambshift", "run"}, utc_timestamp(), 0.0, {}};
  const fs::path a = fresh_dir("a"), b = fresh_dir("b");
  EnsembleOptions serial, parallel;
  serial.workers = 1;
  parallel.workers = 3;
  write_run_outputs(run_ensemble(c, serial), meta, a);
  write_run_outputs(run_ensemble(c, parallel), meta, b);
  for (const char* name : {"spectrum.csv", "dos.csv", "dos_fine.csv", "capability_vs_energy.csv", "fourier_map.csv",
                           "spatial_order.csv", "excitation_hist.csv", "peaks.csv"}) {
    ASSERT_TRUE(fs::exists(a / name)) << name;
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  EXPECT_TRUE(fs::exists(a / "run_metadata.json"));
  EXPECT_FALSE(fs::exists(a / "INCOMPLETE"));
  const std::string spectrum = slurp(a / "spectrum.csv");
  EXPECT_EQ(spectrum.substr(0, spectrum.find('\n')),
            "delta[gamma0],i_total[arb],i_coherent[arb],i_incoherent[arb],excitation[arb],i_total_sem[arb],"
            "i_total_norm[1],i_total_theta_0[arb],i_total_theta_0.1[arb]");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Invariants, ViolationsAreListed) {
  InvariantReport r;
  EXPECT_TRUE(invariant_violations(r).empty());
  r.parseval = 1e-6;
  r.matrix_asymmetry = 1e-17;
  const auto v = invariant_violations(r);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NE(v[0].find("matrix_asymmetry"), std::string::npos);
}

TEST(Histogram, PeakPositionRefined) {
  const BinEdges edges = BinEdges::uniform(-2.0, 2.0, 0.1);
  std::vector<std::uint64_t> counts;
  for (int b = 0; b < edges.bin_count(); ++b) {
    counts.push_back(static_cast<std::uint64_t>(std::llround(1e6 * std::exp(-std::pow(edges.center(b) - 0.33, 2)))));
  }
  const EnergyHistogram h = histogram_from_counts(edges, counts, 0, 0);
  EXPECT_NEAR(histogram_peak_position(h), 0.33, 0.02);
}
