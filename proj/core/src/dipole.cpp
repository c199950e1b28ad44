#include "lambshift/dipole.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "lambshift/error.hpp"
#include "lambshift/linalg.hpp"

namespace lambshift {

cdouble coupling_kernel(double kr, double cos_theta) {
  if (!(kr >= 1e-12)) {
    throw NumericalError(fmt::format("degenerate atom pair: kr = {:.3e}", kr));
  }
  const double c2 = cos_theta * cos_theta;
  const cdouble phase = std::polar(1.0, kr);
  const cdouble far = -(1.0 - c2) * phase / kr;
  const cdouble near = (1.0 - 3.0 * c2) * (cdouble(0.0, -1.0) * phase / (kr * kr) + phase / (kr * kr * kr));
  return 0.75 * (far + near);
}

cdouble pairwise_coupling(const Vec3& r_i, const Vec3& r_j) {
  const Vec3 sep = r_j - r_i;
  const double r = sep.norm();
  if (!(r >= 1e-12)) {
    throw NumericalError(fmt::format("degenerate atom pair: kr = {:.3e}", r));
  }
  // |x| makes the kernel exactly symmetric under i <-> j (it depends on cos^2).
  return coupling_kernel(r, std::abs(sep.x()) / r);
}

Eigen::MatrixXcd CouplingMatrices::system_matrix(double detuning) const {
  Eigen::MatrixXcd a(size(), size());
  a.real() = m_real;
  a.imag() = m_imag;
  a.diagonal().array() -= detuning;
  return a;
}

CouplingMatrices build_matrices(const AtomCloud& cloud) {
  const int n = cloud.size();
  CouplingMatrices m;
  m.m_real = Eigen::MatrixXd::Zero(n, n);
  m.m_imag = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    m.m_imag(j, j) = -0.5;
    for (int i = 0; i < j; ++i) {
      const cdouble v = pairwise_coupling(cloud.positions[i], cloud.positions[j]);
      m.m_real(i, j) = m.m_real(j, i) = v.real();
      m.m_imag(i, j) = m.m_imag(j, i) = v.imag();
    }
  }
  return m;
}

Eigen::VectorXcd drive_vector(const AtomCloud& cloud) {
  Eigen::VectorXcd d(cloud.size());
  for (int i = 0; i < cloud.size(); ++i) d[i] = std::polar(1.0, cloud.positions[i].z());
  return d;
}

bool outside_weak_drive(double rabi) { return rabi >= 0.1; }

double relative_residual(const CouplingMatrices& m, const Eigen::VectorXcd& drive,
                         const SteadyState& state, double rabi) {
  const Eigen::VectorXcd& b = state.amplitudes;
  Eigen::VectorXcd r = (m.m_real * b) + cdouble(0.0, 1.0) * (m.m_imag * b);
  r -= state.detuning * b;
  r += rabi * drive;
  return r.norm() / (rabi * std::sqrt(static_cast<double>(std::max(1, m.size()))));
}

SteadyState solve_steady_state(const CouplingMatrices& m, const Eigen::VectorXcd& drive,
                               double detuning, double rabi) {
  linalg::ComplexLu lu(m.system_matrix(detuning));
  if (!(lu.rcond() > 1e-15)) {
    throw NumericalError(fmt::format("singular factorization at detuning {} (condition estimate {:.3e})",
                                     detuning, 1.0 / lu.rcond()));
  }
  Eigen::VectorXcd rhs = -rabi * drive;
  return {lu.solve(rhs), detuning, SolverTag::direct};
}

SpectralResolvent::SpectralResolvent(const CouplingMatrices& m, const Eigen::VectorXcd& drive) {
  Eigen::MatrixXcd a(m.size(), m.size());
  a.real() = m.m_real;
  a.imag() = m.m_imag;
  linalg::ComplexEigen eig = linalg::complex_eigen(a);
  eigenvalues_ = std::move(eig.values);
  eigenvectors_ = std::move(eig.vectors);
  if (m.size() == 0) return;
  linalg::ComplexLu lu(eigenvectors_);
  condition_ = lu.rcond() > 0.0 ? 1.0 / lu.rcond() : std::numeric_limits<double>::infinity();
  coefficients_ = lu.solve(drive);
}

Eigen::VectorXcd SpectralResolvent::amplitudes(double detuning, double rabi) const {
  Eigen::VectorXcd scaled =
      (-rabi) * coefficients_.array() / (eigenvalues_.array() - detuning);
  return eigenvectors_ * scaled;
}

Eigen::MatrixXcd SpectralResolvent::amplitudes(std::span<const double> detunings,
                                               double rabi) const {
  const int n = static_cast<int>(eigenvalues_.size());
  const int k = static_cast<int>(detunings.size());
  Eigen::MatrixXcd scaled(n, k);
  for (int c = 0; c < k; ++c) {
    scaled.col(c) = (-rabi) * coefficients_.array() / (eigenvalues_.array() - detunings[c]);
  }
  return eigenvectors_ * scaled;
}

std::vector<int> validation_indices(int grid_size, int count) {
  std::vector<int> out;
  if (grid_size <= 0 || count <= 0) return out;
  if (count == 1) return {grid_size / 2};
  for (int i = 0; i < count; ++i) {
    out.push_back(static_cast<int>(std::lround(static_cast<double>(i) * (grid_size - 1) / (count - 1))));
  }
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("drive.grid", "detuning grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw ConfigError("drive.grid", "detuning grid must be strictly increasing");
    }
  }
}

SweepResult direct_sweep(const CouplingMatrices& m, const Eigen::VectorXcd& drive, double rabi,
                         std::span<const double> grid) {
  SweepResult out;
  out.backend = SolverTag::direct;
  out.states.reserve(grid.size());
  for (double delta : grid) {
    out.states.push_back(solve_steady_state(m, drive, delta, rabi));
    out.max_direct_residual =
        std::max(out.max_direct_residual, relative_residual(m, drive, out.states.back(), rabi));
  }
  return out;
}

}  // namespace

SweepResult spectrum_sweep(const CouplingMatrices& m, const Eigen::VectorXcd& drive, double rabi,
                           std::span<const double> grid, const SweepOptions& options) {
  check_grid(grid);
  const bool spectral =
      options.backend == SweepBackend::spectral ||
      (options.backend == SweepBackend::automatic &&
       static_cast<int>(grid.size()) >= options.spectral_min_points);
  if (!spectral) return direct_sweep(m, drive, rabi, grid);

  std::string reason;
  try {
    SpectralResolvent resolvent(m, drive);
    if (!(resolvent.condition_estimate() <= options.max_condition)) {
      reason = fmt::format("eigenvector condition estimate {:.3e} exceeds {:.1e}",
                           resolvent.condition_estimate(), options.max_condition);
    } else {
      const Eigen::MatrixXcd b = resolvent.amplitudes(grid, rabi);
      SweepResult out;
      out.backend = SolverTag::spectral;
      for (int idx : validation_indices(static_cast<int>(grid.size()), options.validation_points)) {
        const SteadyState reference = solve_steady_state(m, drive, grid[idx], rabi);
        out.max_direct_residual =
            std::max(out.max_direct_residual, relative_residual(m, drive, reference, rabi));
        const double scale = reference.amplitudes.norm();
        const double err = scale > 0.0 ? (b.col(idx) - reference.amplitudes).norm() / scale
                                       : (b.col(idx) - reference.amplitudes).norm();
        out.validation_error = std::max(out.validation_error, err);
      }
      if (out.validation_error <= options.validation_tolerance) {
        out.states.reserve(grid.size());
        for (std::size_t c = 0; c < grid.size(); ++c) {
          out.states.push_back({b.col(static_cast<Eigen::Index>(c)), grid[c], SolverTag::spectral});
        }
        return out;
      }
      reason = fmt::format("spectral/direct mismatch {:.3e} exceeds {:.1e}", out.validation_error,
                           options.validation_tolerance);
    }
  } catch (const NumericalError& e) {
    reason = std::string("spectral backend failed: ") + e.what();
  }

  SweepResult out = direct_sweep(m, drive, rabi, grid);
  out.fell_back = true;
  out.fallback_reason = std::move(reason);
  return out;
}

}  // namespace lambshift
