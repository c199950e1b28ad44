#include "lambshift/scattering.hpp"

#include <cmath>
#include <numbers>

#include "lambshift/error.hpp"

namespace lambshift {

std::string_view to_string(Azimuth azimuth) {
  return azimuth == Azimuth::yz_plane ? "yz_plane" : "average16";
}

Vec3 detection_direction(double theta, double phi) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

std::vector<Vec3> detection_directions(double theta, Azimuth azimuth) {
  if (azimuth == Azimuth::yz_plane) return {Vec3(0.0, std::sin(theta), std::cos(theta))};
  std::vector<Vec3> out;
  for (int m = 0; m < 16; ++m) {
    out.push_back(detection_direction(theta, 2.0 * std::numbers::pi * m / 16.0));
  }
  return out;
}

Eigen::VectorXcd detection_phases(const AtomCloud& cloud, const Vec3& direction) {
  Eigen::VectorXcd phases(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    const Vec3& r = cloud.positions[i];
    phases[i] = std::polar(1.0, -(direction.x() * r.x() + direction.y() * r.y() + direction.z() * r.z()));
  }
  return phases;
}

cdouble scattered_amplitude(const Eigen::VectorXcd& amplitudes, const Eigen::VectorXcd& phases) {
  return (amplitudes.array() * phases.array()).sum();
}

double total_excitation(const SteadyState& state) { return state.amplitudes.squaredNorm(); }

ForwardIntensity forward_intensity(const SteadyState& state, const AtomCloud& cloud) {
  const Eigen::VectorXcd phases = detection_phases(cloud, Vec3::UnitZ());
  ForwardIntensity out;
  out.total = std::norm(scattered_amplitude(state.amplitudes, phases));
  out.incoherent = total_excitation(state);
  out.coherent = out.total - out.incoherent;
  return out;
}

double intensity_at_angle(const SteadyState& state, const AtomCloud& cloud, double theta,
                          Azimuth azimuth) {
  if (!(theta >= 0.0 && theta < std::numbers::pi / 2)) {
    throw ConfigError("analysis.angles", "detection angle must lie in [0, pi/2)");
  }
  if (theta == 0.0) return forward_intensity(state, cloud).total;
  const auto directions = detection_directions(theta, azimuth);
  double sum = 0.0;
  for (const Vec3& n : directions) {
    sum += std::norm(scattered_amplitude(state.amplitudes, detection_phases(cloud, n)));
  }
  return sum / static_cast<double>(directions.size());
}

std::optional<std::size_t> SpectrumCurve::index_of(double delta, double tolerance) const {
  for (std::size_t i = 0; i < detunings.size(); ++i) {
    if (std::abs(detunings[i] - delta) <= tolerance) return i;
  }
  return std::nullopt;
}

SpectrumCurve SpectrumCurve::normalized_by(double intensity_reference,
                                           double excitation_reference) const {
  SpectrumCurve out = *this;
  auto scale = [](std::vector<double>& v, double ref) {
    for (double& x : v) x /= ref;
  };
  scale(out.i_total, intensity_reference);
  scale(out.i_coherent, intensity_reference);
  scale(out.i_incoherent, intensity_reference);
  scale(out.excitation, excitation_reference);
  out.normalized = true;
  return out;
}

SpectrumCurve SpectrumCurve::normalized_at_zero() const {
  const auto zero = index_of(0.0);
  if (!zero) throw AnalysisError("normalization requires Delta = 0 on the detuning grid");
  return normalized_by(i_total[*zero], excitation.empty() ? 1.0 : excitation[*zero]);
}

}  // namespace lambshift
