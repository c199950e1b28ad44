#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <variant>
#include <vector>

#include "lambshift/units.hpp"

namespace lambshift {

using Vec3 = Eigen::Vector3d;

/// Atoms uniformly filling a cylinder of radius R and length L whose axis is
/// the z axis, centred on the origin.
struct UniformCylinder {
  double radius = kLambda0;
  double length = 3.0 * kLambda0;
  bool operator==(const UniformCylinder&) const = default;
};

/// Unbounded Gaussian cloud with independent per-axis widths.
struct GaussianEllipsoid {
  double sigma_x = kLambda0;
  double sigma_y = kLambda0;
  double sigma_z = kLambda0;
  bool operator==(const GaussianEllipsoid&) const = default;
};

inline constexpr double kDefaultExclusionRadius = 0.05 * kLambda0;

struct GeometrySpec {
  std::variant<UniformCylinder, GaussianEllipsoid> shape;
  int atom_count = 1;
  double exclusion_radius = kDefaultExclusionRadius;

  bool operator==(const GeometrySpec&) const = default;

  bool is_cylinder() const { return std::holds_alternative<UniformCylinder>(shape); }
  /// Extent along the propagation axis used to set spatial-frequency
  /// resolution: L for a cylinder, sqrt(2 pi) sigma_z for a Gaussian.
  double axial_length() const;
  /// Throws ConfigError when a field violates its invariants.
  void validate() const;
};

struct AtomCloud {
  std::vector<Vec3> positions;
  std::uint64_t seed = 0;
  GeometrySpec spec;
  std::uint64_t resample_count = 0;

  int size() const { return static_cast<int>(positions.size()); }
};

/// Draws `spec.atom_count` positions. Atoms closer than the exclusion radius
/// to an already accepted atom are redrawn; after 1000*N rejections the
/// sampler gives up with PackingError. Pure function of (spec, seed).
AtomCloud sample_positions(const GeometrySpec& spec, std::uint64_t seed);

/// round(rho * pi R^2 L) for density rho (in units of k^3).
int atom_count_from_density(const UniformCylinder& cylinder, double rho_over_k3);

/// Peak density N / ((2 pi)^{3/2} sigma_x sigma_y sigma_z), in units of k^3.
double peak_density(const GaussianEllipsoid& cloud, int atom_count);

/// Atom count giving peak density rho0 for the given widths (rounded).
int atom_count_from_peak_density(const GaussianEllipsoid& cloud, double rho0_over_k3);

double minimum_pair_distance(const AtomCloud& cloud);

}  // namespace lambshift
