#include "lambshift/modes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lambshift/error.hpp"
#include "lambshift/linalg.hpp"

namespace lambshift {

ModeBasis diagonalize_real_part(const CouplingMatrices& m) {
  linalg::SymmetricEigen eig = linalg::symmetric_eigen(m.m_real);
  ModeBasis basis{std::move(eig.values), std::move(eig.vectors)};
  // LAPACK already returns ascending eigenvalues; fix the sign of each vector.
  for (int j = 0; j < basis.size(); ++j) {
    auto col = basis.vectors.col(j);
    const double cutoff = 1e-10 * col.cwiseAbs().maxCoeff();
    for (int i = 0; i < col.size(); ++i) {
      if (std::abs(col[i]) > cutoff) {
        if (col[i] < 0.0) col = -col;
        break;
      }
    }
  }
  return basis;
}

Eigen::VectorXcd mode_excitations(const ModeBasis& basis, const SteadyState& state) {
  Eigen::VectorXcd p(basis.size());
  p.real() = basis.vectors.transpose() * state.amplitudes.real();
  p.imag() = basis.vectors.transpose() * state.amplitudes.imag();
  return p;
}

EmissionCapability emission_capability(const ModeBasis& basis, const AtomCloud& cloud) {
  const int n = cloud.size();
  Eigen::VectorXd c(n), s(n);
  for (int i = 0; i < n; ++i) {
    c[i] = std::cos(cloud.positions[i].z());
    s[i] = -std::sin(cloud.positions[i].z());
  }
  EmissionCapability out;
  out.amplitude.resize(n);
  out.amplitude.real() = basis.vectors.transpose() * c;
  out.amplitude.imag() = basis.vectors.transpose() * s;
  out.capability = out.amplitude.cwiseAbs();
  return out;
}

Eigen::MatrixXcd spatial_fourier(const ModeBasis& basis, const AtomCloud& cloud,
                                 std::span<const double> kf_grid) {
  const int n = cloud.size();
  const int k = static_cast<int>(kf_grid.size());
  Eigen::MatrixXd re(n, k), im(n, k);
  for (int col = 0; col < k; ++col) {
    for (int i = 0; i < n; ++i) {
      const double phase = kf_grid[col] * cloud.positions[i].z();
      re(i, col) = std::cos(phase);
      im(i, col) = -std::sin(phase);
    }
  }
  Eigen::MatrixXcd f(n, k);
  f.real() = basis.vectors.transpose() * re;
  f.imag() = basis.vectors.transpose() * im;
  return f;
}

std::vector<double> make_kf_grid(double kf_max, double step) {
  if (!(step > 0.0) || !(kf_max >= 0.0)) {
    throw ConfigError("binning.kf_step", "k_f grid needs a positive step and non-negative maximum");
  }
  std::vector<double> grid;
  for (int i = 0;; ++i) {
    const double v = i * step;
    if (v > kf_max + step * 1e-6) break;
    grid.push_back(v);
  }
  return grid;
}

BinEdges::BinEdges(std::vector<double> edges) : edges_(std::move(edges)) {
  if (edges_.size() < 2) throw ConfigError("binning", "need at least two bin edges");
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    if (!(edges_[i] > edges_[i - 1])) throw ConfigError("binning", "bin edges must increase strictly");
  }
}

BinEdges BinEdges::uniform(double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) throw ConfigError("binning", "invalid uniform binning");
  const int n = static_cast<int>(std::lround((hi - lo) / width));
  if (n < 1) throw ConfigError("binning", "bin width exceeds range");
  std::vector<double> e(n + 1);
  for (int i = 0; i <= n; ++i) e[i] = lo + i * width;
  return BinEdges(std::move(e));
}

std::optional<int> BinEdges::find(double value) const {
  if (edges_.empty() || !(value >= edges_.front()) || !(value < edges_.back())) return std::nullopt;
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), value);
  return static_cast<int>(it - edges_.begin()) - 1;
}

std::uint64_t EnergyHistogram::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}) + underflow + overflow;
}

double EnergyHistogram::area() const {
  double a = 0.0;
  for (int b = 0; b < edges.bin_count(); ++b) a += density[b] * edges.width(b);
  return a;
}

double EnergyHistogram::fraction_within(double lo, double hi) const {
  const double tol = 1e-9;
  std::uint64_t inside = 0;
  for (int b = 0; b < edges.bin_count(); ++b) {
    if (edges.lower(b) >= lo - tol && edges.upper(b) <= hi + tol) inside += counts[b];
  }
  const std::uint64_t all = total();
  return all == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(all);
}

EnergyHistogram histogram_from_counts(BinEdges edges, std::vector<std::uint64_t> counts,
                                      std::uint64_t underflow, std::uint64_t overflow) {
  EnergyHistogram h;
  h.edges = std::move(edges);
  h.counts = std::move(counts);
  h.underflow = underflow;
  h.overflow = overflow;
  const double in_range =
      static_cast<double>(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}));
  h.density.assign(h.counts.size(), 0.0);
  if (in_range > 0.0) {
    for (int b = 0; b < h.edges.bin_count(); ++b) {
      h.density[b] = static_cast<double>(h.counts[b]) / (in_range * h.edges.width(b));
    }
  }
  return h;
}

EnergyHistogram dos_histogram(std::span<const std::vector<double>> energies_per_config,
                              const BinEdges& edges) {
  if (energies_per_config.empty()) throw AnalysisError("density of states needs at least one configuration");
  std::vector<std::uint64_t> counts(edges.bin_count(), 0);
  std::uint64_t under = 0, over = 0;
  for (const auto& energies : energies_per_config) {
    for (double e : energies) {
      if (auto b = edges.find(e)) {
        ++counts[*b];
      } else if (e < edges.edges().front()) {
        ++under;
      } else {
        ++over;
      }
    }
  }
  return histogram_from_counts(edges, std::move(counts), under, over);
}

// Mean |F| of a unit-norm mode whose phases along z carry no structure: |F|
// is then Rayleigh distributed with E|F|^2 = 1.
constexpr double kRandomPhaseModulus = 0.88622692545275801365;  // sqrt(pi) / 2

std::vector<SpatialOrder> max_spatial_frequency(const FourierMap& map, double contrast_threshold) {
  std::vector<SpatialOrder> out(map.rows.size());
  for (std::size_t b = 0; b < map.rows.size(); ++b) {
    const auto& row = map.rows[b];
    if (row.empty()) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    out[b].kf_max = map.kf_grid[best];
    out[b].contrast = row[best] / kRandomPhaseModulus;
    out[b].ordered = out[b].contrast >= contrast_threshold;
  }
  return out;
}

}  // namespace lambshift
