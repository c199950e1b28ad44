#pragma once

#include <Eigen/Core>

#include <optional>
#include <string_view>
#include <vector>

#include "lambshift/dipole.hpp"
#include "lambshift/geometry.hpp"

namespace lambshift {

/// How off-axis detection directions are chosen. `yz_plane` puts the
/// detector in the y-z plane (perpendicular to the x dipoles);
/// `average16` averages the intensity over 16 equally spaced azimuths.
enum class Azimuth { yz_plane, average16 };

std::string_view to_string(Azimuth azimuth);

struct ForwardIntensity {
  double total = 0.0;
  double coherent = 0.0;    // total - incoherent; may be negative
  double incoherent = 0.0;  // sum |b_i|^2
};

/// Unit vector at polar angle theta from +z and azimuth phi from +x.
Vec3 detection_direction(double theta, double phi);

/// exp(-i n.r_i) for every atom.
Eigen::VectorXcd detection_phases(const AtomCloud& cloud, const Vec3& direction);

/// Far-field amplitude sum_i b_i exp(-i n.r_i) for precomputed phases.
cdouble scattered_amplitude(const Eigen::VectorXcd& amplitudes, const Eigen::VectorXcd& phases);

/// |sum_i b_i e^{-i z_i}|^2 split into coherent and incoherent parts.
ForwardIntensity forward_intensity(const SteadyState& state, const AtomCloud& cloud);

/// Intensity along n = (0, sin theta, cos theta), or averaged over azimuth.
/// theta = 0 reproduces forward_intensity(...).total exactly.
double intensity_at_angle(const SteadyState& state, const AtomCloud& cloud, double theta,
                          Azimuth azimuth = Azimuth::yz_plane);

/// sum_i |b_i|^2
double total_excitation(const SteadyState& state);

/// Detection directions used for a given polar angle and azimuth mode.
std::vector<Vec3> detection_directions(double theta, Azimuth azimuth);

struct SpectrumCurve {
  std::vector<double> detunings;
  std::vector<double> i_total;
  std::vector<double> i_coherent;
  std::vector<double> i_incoherent;
  std::vector<double> excitation;
  bool normalized = false;
  double detection_angle = 0.0;
  Azimuth azimuth = Azimuth::yz_plane;

  std::size_t size() const { return detunings.size(); }
  /// Grid index of `delta`, if present to within `tolerance`.
  std::optional<std::size_t> index_of(double delta, double tolerance = 1e-9) const;
  /// Intensities divided by `intensity_reference`, excitation by
  /// `excitation_reference`.
  SpectrumCurve normalized_by(double intensity_reference, double excitation_reference) const;
  /// Each curve divided by its own value at Delta = 0 (intensity columns all
  /// by i_total(0), so the split identity is preserved).
  SpectrumCurve normalized_at_zero() const;
};

}  // namespace lambshift
