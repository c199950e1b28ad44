#include "lambshift/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lambshift/error.hpp"

namespace lambshift {

std::string_view to_string(ScalingMode mode) {
  return mode == ScalingMode::fixed_density_vary_size ? "fixed_density_vary_size"
                                                      : "fixed_size_vary_density";
}

std::string_view to_string(SweepBackend backend) {
  switch (backend) {
    case SweepBackend::automatic: return "auto";
    case SweepBackend::direct: return "direct";
    case SweepBackend::spectral: return "spectral";
  }
  return "auto";
}

std::string_view to_string(LengthUnit unit) {
  return unit == LengthUnit::inverse_k ? "inverse_k" : "lambda0";
}

double GeometryInput::to_internal(double length_value) const {
  return unit == LengthUnit::lambda0 ? length_value * kLambda0 : length_value;
}

GeometrySpec GeometryInput::resolve() const {
  GeometrySpec spec;
  spec.exclusion_radius = exclusion_radius ? to_internal(*exclusion_radius) : kDefaultExclusionRadius;
  if (kind == Kind::cylinder) {
    if (peak_density) throw ConfigError("geometry.peak_density", "only valid for gaussian clouds");
    UniformCylinder c{to_internal(radius), to_internal(length)};
    spec.shape = c;
    if (atom_count && density) {
      throw ConfigError("geometry", "give either atom_count or density, not both");
    }
    if (density) {
      spec.atom_count = atom_count_from_density(c, *density);
      if (spec.atom_count < 1) throw ConfigError("geometry.density", "density times volume rounds to zero atoms");
    } else if (atom_count) {
      spec.atom_count = *atom_count;
    } else {
      throw ConfigError("geometry", "one of atom_count or density is required");
    }
  } else {
    if (density) throw ConfigError("geometry.density", "only valid for cylinders; use peak_density");
    GaussianEllipsoid g{to_internal(sigma[0]), to_internal(sigma[1]), to_internal(sigma[2])};
    spec.shape = g;
    if (atom_count && peak_density) {
      throw ConfigError("geometry", "give either atom_count or peak_density, not both");
    }
    if (peak_density) {
      spec.atom_count = atom_count_from_peak_density(g, *peak_density);
      if (spec.atom_count < 1) throw ConfigError("geometry.peak_density", "rounds to zero atoms");
    } else if (atom_count) {
      spec.atom_count = *atom_count;
    } else {
      throw ConfigError("geometry", "one of atom_count or peak_density is required");
    }
  }
  spec.validate();
  return spec;
}

std::vector<double> DetuningGrid::values() const {
  const int n = static_cast<int>(std::lround((max - min) / step));
  std::vector<double> v(n + 1);
  for (int i = 0; i <= n; ++i) v[i] = min + i * step;
  return v;
}

bool DetuningGrid::contains(double delta, double tolerance) const {
  if (delta < min - tolerance || delta > max + tolerance) return false;
  const double i = std::round((delta - min) / step);
  return std::abs(min + i * step - delta) <= tolerance;
}

std::vector<double> DriveSettings::combined_grid() const {
  std::vector<double> out = coarse.values();
  for (double f : fine.values()) {
    bool duplicate = false;
    for (double c : out) {
      if (std::abs(c - f) <= 1e-9) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) out.push_back(f);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void RunConfig::validate() const {
  const GeometrySpec spec = geometry.resolve();
  auto grid_ok = [](const DetuningGrid& g, const char* path) {
    if (!(g.step > 0.0) || !(g.max > g.min)) {
      throw ConfigError(path, "grid needs max > min and a positive step");
    }
    const double n = (g.max - g.min) / g.step;
    if (std::abs(n - std::round(n)) > 1e-6) {
      throw ConfigError(path, "(max - min) must be a whole number of steps");
    }
  };
  grid_ok(drive.coarse, "drive.coarse");
  grid_ok(drive.fine, "drive.fine");
  if (!(drive.rabi > 0.0)) throw ConfigError("drive.rabi", "must be positive");
  if (!drive.coarse.contains(0.0) && !drive.fine.contains(0.0)) {
    throw ConfigError("drive", "Delta = 0 must lie on a detuning grid (normalization point)");
  }
  if (ensemble.n_configs < 1) throw ConfigError("ensemble.n_configs", "must be >= 1");
  if (ensemble.workers < 1) throw ConfigError("ensemble.workers", "must be >= 1");
  if (ensemble.checkpoint_every < 0) throw ConfigError("ensemble.checkpoint_every", "must be >= 0");
  if (!(ensemble.failure_budget >= 0.0 && ensemble.failure_budget < 1.0)) {
    throw ConfigError("ensemble.failure_budget", "must lie in [0, 1)");
  }
  if (solver.validation_points < 0) throw ConfigError("solver.validation_points", "must be >= 0");
  if (!(solver.validation_tolerance > 0.0)) throw ConfigError("solver.validation_tolerance", "must be positive");
  if (!(solver.max_condition > 1.0)) throw ConfigError("solver.max_condition", "must exceed 1");
  for (double a : analysis.angles) {
    if (!(a >= 0.0 && a < std::numbers::pi / 2)) {
      throw ConfigError("analysis.angles", "angles must lie in [0, pi/2)");
    }
  }
  if (analysis.modes && analysis.excitation_detunings.empty()) {
    throw ConfigError("analysis.excitation_detunings", "required when modes are enabled");
  }
  if (!(binning.energy_width > 0.0) || !(binning.energy_max > binning.energy_min)) {
    throw ConfigError("binning.energy_width", "invalid energy binning");
  }
  if (!(binning.fine_dos_width > 0.0) || !(binning.fine_dos_max > binning.fine_dos_min)) {
    throw ConfigError("binning.fine_dos_width", "invalid fine binning");
  }
  if (!(binning.kf_max > 0.0)) throw ConfigError("binning.kf_max", "must be positive");
  if (binning.kf_step && !(*binning.kf_step > 0.0)) throw ConfigError("binning.kf_step", "must be positive");
  if (!(peaks.prominence_fraction > 0.0 && peaks.prominence_fraction < 1.0)) {
    throw ConfigError("peaks.prominence_fraction", "must lie in (0, 1)");
  }
  if (peaks.fit_points < 3) throw ConfigError("peaks.fit_points", "must be >= 3");
  if (scaling) {
    if (scaling->points.empty()) throw ConfigError("scaling.points", "must not be empty");
    for (double p : scaling->points) {
      if (!(p > 0.0)) throw ConfigError("scaling.points", "points must be positive");
    }
    if (geometry.kind != GeometryInput::Kind::gaussian) {
      throw ConfigError("scaling", "scaling sweeps need a gaussian geometry");
    }
    for (double a : scaling->aspect) {
      if (!(a > 0.0)) throw ConfigError("scaling.aspect", "entries must be positive");
    }
    if (!(scaling->peak_density > 0.0)) throw ConfigError("scaling.peak_density", "must be positive");
  }
  (void)spec;
}

double RunConfig::kf_step(const GeometrySpec& spec) const {
  return binning.kf_step ? *binning.kf_step : 2.0 * std::numbers::pi / (8.0 * spec.axial_length());
}

}  // namespace lambshift
