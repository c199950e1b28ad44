#include "lambshift/geometry.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "lambshift/error.hpp"
#include "lambshift/random.hpp"

namespace lambshift {
namespace {

const double kTwoPiPow1p5 = std::pow(2.0 * kPi, 1.5);

Vec3 draw(const UniformCylinder& c, Rng& rng) {
  // Rejection from the bounding box keeps x^2 + y^2 <= R^2 exact in floating point.
  for (;;) {
    const double x = rng.uniform(-c.radius, c.radius);
    const double y = rng.uniform(-c.radius, c.radius);
    const double z = rng.uniform(-0.5 * c.length, 0.5 * c.length);
    if (x * x + y * y <= c.radius * c.radius) return {x, y, z};
  }
}

Vec3 draw(const GaussianEllipsoid& g, Rng& rng) {
  const double x = g.sigma_x * rng.normal();
  const double y = g.sigma_y * rng.normal();
  const double z = g.sigma_z * rng.normal();
  return {x, y, z};
}

}  // namespace

double GeometrySpec::axial_length() const {
  if (const auto* c = std::get_if<UniformCylinder>(&shape)) return c->length;
  return std::sqrt(2.0 * kPi) * std::get<GaussianEllipsoid>(shape).sigma_z;
}

void GeometrySpec::validate() const {
  auto positive = [](double v, const char* path) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(path, "must be a positive finite length, got " + std::to_string(v));
    }
  };
  if (atom_count < 1) throw ConfigError("geometry.atom_count", "must be >= 1");
  positive(exclusion_radius, "geometry.exclusion_radius");
  if (const auto* c = std::get_if<UniformCylinder>(&shape)) {
    positive(c->radius, "geometry.radius");
    positive(c->length, "geometry.length");
    const double volume = kPi * c->radius * c->radius * c->length;
    const double excluded = atom_count * (4.0 / 3.0) * kPi * std::pow(exclusion_radius, 3);
    if (!(excluded < 0.1 * volume)) {
      throw ConfigError("geometry.exclusion_radius",
                        "N * (4/3) pi r_excl^3 must stay below 10% of the cylinder volume");
    }
  } else {
    const auto& g = std::get<GaussianEllipsoid>(shape);
    positive(g.sigma_x, "geometry.sigma[0]");
    positive(g.sigma_y, "geometry.sigma[1]");
    positive(g.sigma_z, "geometry.sigma[2]");
  }
}

AtomCloud sample_positions(const GeometrySpec& spec, std::uint64_t seed) {
  spec.validate();
  const int n = spec.atom_count;
  const double r2_min = spec.exclusion_radius * spec.exclusion_radius;
  const std::uint64_t budget = 1000ULL * static_cast<std::uint64_t>(n);

  AtomCloud cloud;
  cloud.seed = seed;
  cloud.spec = spec;
  cloud.positions.reserve(n);

  Rng rng(seed);
  while (cloud.size() < n) {
    const Vec3 candidate = std::visit([&](const auto& s) { return draw(s, rng); }, spec.shape);
    bool clear = true;
    for (const Vec3& p : cloud.positions) {
      if ((p - candidate).squaredNorm() < r2_min) {
        clear = false;
        break;
      }
    }
    if (clear) {
      cloud.positions.push_back(candidate);
    } else if (++cloud.resample_count > budget) {
      throw PackingError("packing too dense: exceeded " + std::to_string(budget) +
                         " rejections after placing " + std::to_string(cloud.size()) +
                         " of " + std::to_string(n) + " atoms");
    }
  }
  return cloud;
}

int atom_count_from_density(const UniformCylinder& cylinder, double rho_over_k3) {
  if (!(rho_over_k3 > 0.0)) throw ConfigError("geometry.density", "must be positive");
  const double volume = kPi * cylinder.radius * cylinder.radius * cylinder.length;
  return static_cast<int>(std::lround(rho_over_k3 * volume));
}

double peak_density(const GaussianEllipsoid& cloud, int atom_count) {
  return atom_count / (kTwoPiPow1p5 * cloud.sigma_x * cloud.sigma_y * cloud.sigma_z);
}

int atom_count_from_peak_density(const GaussianEllipsoid& cloud, double rho0_over_k3) {
  if (!(rho0_over_k3 > 0.0)) throw ConfigError("geometry.peak_density", "must be positive");
  return static_cast<int>(
      std::lround(rho0_over_k3 * kTwoPiPow1p5 * cloud.sigma_x * cloud.sigma_y * cloud.sigma_z));
}

double minimum_pair_distance(const AtomCloud& cloud) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cloud.size(); ++i) {
    for (int j = i + 1; j < cloud.size(); ++j) {
      best = std::min(best, (cloud.positions[i] - cloud.positions[j]).norm());
    }
  }
  return best;
}

}  // namespace lambshift
