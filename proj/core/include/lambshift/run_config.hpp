#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lambshift/dipole.hpp"
#include "lambshift/geometry.hpp"
#include "lambshift/scattering.hpp"

namespace lambshift {

enum class LengthUnit { inverse_k, lambda0 };

/// Geometry as written in a config file. Lengths are in `unit`; the atom
/// count is given directly or derived from a density.
struct GeometryInput {
  enum class Kind { cylinder, gaussian };
  Kind kind = Kind::cylinder;
  LengthUnit unit = LengthUnit::inverse_k;
  double radius = kLambda0;
  double length = 3.0 * kLambda0;
  std::array<double, 3> sigma{kLambda0, kLambda0, kLambda0};
  std::optional<int> atom_count;
  std::optional<double> density;       // cylinder: rho / k^3
  std::optional<double> peak_density;  // gaussian: rho0 / k^3
  std::optional<double> exclusion_radius;  // in `unit`; default 0.05 lambda0

  bool operator==(const GeometryInput&) const = default;

  double to_internal(double length_value) const;
  /// Throws ConfigError for inconsistent input (e.g. both atom_count and a density).
  GeometrySpec resolve() const;
};

struct DetuningGrid {
  double min = -20.0;
  double max = 20.0;
  double step = 0.25;

  std::vector<double> values() const;
  bool contains(double delta, double tolerance = 1e-9) const;
  bool operator==(const DetuningGrid&) const = default;
};

struct DriveSettings {
  double rabi = kDefaultRabi;
  DetuningGrid coarse{-20.0, 20.0, 0.25};
  DetuningGrid fine{-1.0, 1.0, 0.02};

  /// Sorted union of both grids (points closer than 1e-9 merged, coarse
  /// values kept).
  std::vector<double> combined_grid() const;
  bool operator==(const DriveSettings&) const = default;
};

struct EnsembleSettings {
  int n_configs = 1000;
  std::uint64_t master_seed = 20200101;
  int workers = 1;
  /// Write a resumable checkpoint every this many configurations (0: never).
  int checkpoint_every = 0;
  /// Largest tolerated fraction of failed configurations.
  double failure_budget = 0.01;

  bool operator==(const EnsembleSettings&) const = default;
};

struct AnalysisSettings {
  bool modes = true;
  bool fourier = true;
  /// Extra detection angles (radians) evaluated on every steady state.
  std::vector<double> angles;
  Azimuth azimuth = Azimuth::yz_plane;
  std::vector<double> excitation_detunings{-10.0, -5.0, 0.0, 5.0, 10.0};
  /// Evaluate the per-configuration invariant suite (costs one extra O(N^3)).
  bool check_invariants = false;

  bool operator==(const AnalysisSettings&) const = default;
};

struct BinningSettings {
  double energy_min = -20.0;
  double energy_max = 20.0;
  double energy_width = 0.5;
  /// Finer density-of-states histogram around the resonance.
  double fine_dos_min = -2.0;
  double fine_dos_max = 2.0;
  double fine_dos_width = 0.05;
  double kf_max = 2.0;
  /// Defaults to 2 pi / (8 L) with L the axial length of the geometry.
  std::optional<double> kf_step;
  /// Minimum max/mean ratio of an energy bin's Fourier profile to count as
  /// spatially ordered.
  double order_contrast = 1.5;

  bool operator==(const BinningSettings&) const = default;
};

struct PeakSettings {
  /// Prominence threshold as a fraction of the global maximum.
  double prominence_fraction = 0.01;
  /// |Delta| below which a peak can be central when none lies in the fine window.
  double central_window = 2.0;
  /// Half-width of the fine-grid window searched for the central peak.
  double fine_window = 1.0;
  int fit_points = 5;
  /// Curves with total variation / max above this are rejected as unaveraged.
  double roughness_limit = 10.0;

  bool operator==(const PeakSettings&) const = default;
};

enum class ScalingMode { fixed_density_vary_size, fixed_size_vary_density };

struct ScalingSettings {
  ScalingMode mode = ScalingMode::fixed_density_vary_size;
  /// fixed_density_vary_size: sigma_x values (geometry length unit);
  /// fixed_size_vary_density: peak densities rho0 / k^3.
  std::vector<double> points;
  /// Peak density held fixed in fixed_density_vary_size mode.
  double peak_density = 0.01;
  /// sigma_x : sigma_y : sigma_z in fixed_density_vary_size mode.
  std::array<double, 3> aspect{1.0, 1.0, 10.0};

  bool operator==(const ScalingSettings&) const = default;
};

struct RunConfig {
  GeometryInput geometry;
  DriveSettings drive;
  EnsembleSettings ensemble;
  SweepOptions solver;
  AnalysisSettings analysis;
  BinningSettings binning;
  PeakSettings peaks;
  std::optional<ScalingSettings> scaling;

  bool operator==(const RunConfig&) const = default;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  double kf_step(const GeometrySpec& spec) const;
};

std::string_view to_string(ScalingMode mode);
std::string_view to_string(SweepBackend backend);
std::string_view to_string(LengthUnit unit);

}  // namespace lambshift
