#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lambshift/ensemble.hpp"
#include "lambshift/run_config.hpp"
#include "lambshift/scattering.hpp"

namespace lambshift {

/// OD = 3N / (2 sigma_x sigma_y), lengths in units of 1/k.
double optical_depth(int atom_count, double sigma_x, double sigma_y);

struct Peak {
  double position = 0.0;  // gamma0
  double height = 0.0;
  double prominence = 0.0;
  std::size_t index = 0;  // grid index of the sampled maximum
};

/// Interior local maxima of y(x) with their topographic prominence, keeping
/// those with prominence >= min_prominence. Plateaus report their left edge.
std::vector<Peak> local_peaks(std::span<const double> x, std::span<const double> y,
                              double min_prominence);

/// Vertex of the least-squares parabola through the `points` samples nearest
/// index i. Falls back to (x[i], y[i]) when the fit is not concave or its
/// vertex leaves the fitted span.
std::pair<double, double> refine_quadratic(std::span<const double> x, std::span<const double> y,
                                           std::size_t i, int points);

struct PeakReport {
  std::optional<Peak> left;
  std::optional<Peak> central;
  std::optional<Peak> right;
  double global_max = 0.0;
  double roughness = 0.0;  // total variation / max

  std::optional<double> collective_shift_left() const {
    return left ? std::optional<double>(left->position) : std::nullopt;
  }
  std::optional<double> collective_shift_central() const {
    return central ? std::optional<double>(central->position) : std::nullopt;
  }
};

/// Locates the left, central and right peaks of curve.i_total. The central
/// peak is the candidate nearest 0; left and right are the most prominent
/// candidates on either side of it. Throws AnalysisError when the curve is too
/// rough to be an ensemble average.
PeakReport find_peaks(const SpectrumCurve& curve, const PeakSettings& settings = {});

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = slope x + intercept (at least 2 points).
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct ScalingRow {
  ScalingMode mode = ScalingMode::fixed_density_vary_size;
  double point = 0.0;  // the swept value as given in the config
  double od = 0.0;
  std::optional<double> shift_left;
  std::optional<double> shift_central;
  int atom_count = 0;
  double sigma_x = 0.0, sigma_y = 0.0, sigma_z = 0.0;  // 1/k
  double peak_density = 0.0;                           // rho0 / k^3
  std::string error;  // non-empty when this point failed

  bool ok() const { return error.empty(); }
};

struct ScalingTable {
  std::vector<ScalingRow> rows;
};

/// Gaussian run configuration for one scaling point.
RunConfig scaling_point_config(const RunConfig& base, const ScalingSettings& scaling, double point);

using EnsembleRunner = std::function<EnsembleResult(const RunConfig&)>;

/// One ensemble per point of base.scaling; a failing point only fails its row.
ScalingTable scaling_sweep(const RunConfig& base, const EnsembleRunner& runner = {});

/// Ensemble with analysis.angles replaced by `angles`; one curve per angle,
/// each evaluated on the same steady states.
EnsembleResult angular_sweep(const RunConfig& base, std::span<const double> angles,
                             const EnsembleRunner& runner = {});

/// Tolerances of the per-configuration invariant suite.
struct InvariantLimits {
  double symmetry = 0.0;
  double trace = 1e-12;
  double imag_diagonal = 0.0;
  double orthonormality = 1e-10;
  double eigen_residual = 1e-10;
  double energy_sum = 1e-10;
  double parseval = 1e-10;
  double reconstruction = 1e-10;
  double split_identity = 1e-12;
  double solver_residual = 1e-9;
  double backend_agreement = 1e-6;
};

/// Human-readable description of every limit the report exceeds.
std::vector<std::string> invariant_violations(const InvariantReport& report, const InvariantLimits& limits = {});

/// Peak of an area-normalized histogram refined by a 3-point parabola.
double histogram_peak_position(const EnergyHistogram& hist);

}  // namespace lambshift
