#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lambshift/dipole.hpp"
#include "lambshift/geometry.hpp"

namespace lambshift {

/// Orthonormal eigenbasis of the real coupling matrix M_R. Column j of
/// `vectors` is the collective state with energy shift energies[j]; energies
/// ascend, and each column's first non-negligible component is positive.
struct ModeBasis {
  Eigen::VectorXd energies;
  Eigen::MatrixXd vectors;

  int size() const { return static_cast<int>(energies.size()); }
};

ModeBasis diagonalize_real_part(const CouplingMatrices& m);

/// p = R^T b, the weight of each collective state in the steady state.
Eigen::VectorXcd mode_excitations(const ModeBasis& basis, const SteadyState& state);

struct EmissionCapability {
  Eigen::VectorXcd amplitude;  // A_j = sum_i R_j^(i) e^{-i z_i}
  Eigen::VectorXd capability;  // |A_j|
};

EmissionCapability emission_capability(const ModeBasis& basis, const AtomCloud& cloud);

/// F_j(k_f) = sum_i R_j^(i) e^{-i k_f z_i}; rows are modes, columns follow
/// `kf_grid`. Evaluated directly (positions are irregular).
Eigen::MatrixXcd spatial_fourier(const ModeBasis& basis, const AtomCloud& cloud,
                                 std::span<const double> kf_grid);

/// {0, step, 2 step, ...} up to and including kf_max (within step/1e6).
std::vector<double> make_kf_grid(double kf_max, double step);

/// Sorted bin edges; bin b covers [edges[b], edges[b+1]).
class BinEdges {
 public:
  BinEdges() = default;
  explicit BinEdges(std::vector<double> edges);
  /// Bins of `width` covering [lo, hi]; edges are lo + i*width.
  static BinEdges uniform(double lo, double hi, double width);

  int bin_count() const { return edges_.empty() ? 0 : static_cast<int>(edges_.size()) - 1; }
  /// Bin index, or nullopt when value lies outside [front, back).
  std::optional<int> find(double value) const;
  double lower(int bin) const { return edges_[bin]; }
  double upper(int bin) const { return edges_[bin + 1]; }
  double center(int bin) const { return 0.5 * (edges_[bin] + edges_[bin + 1]); }
  double width(int bin) const { return edges_[bin + 1] - edges_[bin]; }
  const std::vector<double>& edges() const { return edges_; }

  bool operator==(const BinEdges&) const = default;

 private:
  std::vector<double> edges_;
};

/// Histogram of collective energies pooled over configurations.
struct EnergyHistogram {
  BinEdges edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;
  /// counts / (in-range total * bin width); integrates to one over the bins.
  std::vector<double> density;

  std::uint64_t total() const;
  /// Integral of `density` over all bins (piecewise constant).
  double area() const;
  /// Fraction of all samples (overflow included) in bins lying entirely
  /// inside [lo, hi].
  double fraction_within(double lo, double hi) const;
};

EnergyHistogram histogram_from_counts(BinEdges edges, std::vector<std::uint64_t> counts,
                                      std::uint64_t underflow, std::uint64_t overflow);

/// Area-normalized density of states pooled over all configurations.
EnergyHistogram dos_histogram(std::span<const std::vector<double>> energies_per_config,
                              const BinEdges& edges);

/// Ensemble-averaged |F| binned by energy: rows[b][k] = mean over states in
/// bin b of |F_j(kf_grid[k])|. Unpopulated bins have empty rows.
struct FourierMap {
  BinEdges edges;
  std::vector<double> kf_grid;
  std::vector<std::vector<double>> rows;
};

struct SpatialOrder {
  std::optional<double> kf_max;  // missing for unpopulated bins
  double contrast = 0.0;         // max |F| / (sqrt(pi)/2), the random-phase mean
  bool ordered = false;          // contrast >= threshold
};

/// Per energy bin, the k_f maximizing the averaged Fourier modulus (ties go to
/// the smaller k_f). The contrast compares that maximum with the mean modulus
/// of a unit-norm mode with random phases, which every profile approaches at
/// large k_f.
std::vector<SpatialOrder> max_spatial_frequency(const FourierMap& map,
                                                double contrast_threshold = 1.5);

}  // namespace lambshift
