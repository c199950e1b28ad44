#pragma once

#include <Eigen/Core>

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "lambshift/geometry.hpp"

namespace lambshift {

using cdouble = std::complex<double>;

/// Default Rabi frequency. The model is linear in the drive, so this only
/// sets the output scale.
inline constexpr double kDefaultRabi = 1e-3;

/// Resonant dipole-dipole coupling between two atoms with dipoles along x,
/// in units of gamma0:
///   (3/4) [ -(1 - cos^2 t) e^{ikr}/kr + (1 - 3 cos^2 t)(-i e^{ikr}/(kr)^2 + e^{ikr}/(kr)^3) ]
/// where cos t is the x component of the unit separation vector.
/// Throws NumericalError if kr < 1e-12.
cdouble pairwise_coupling(const Vec3& r_i, const Vec3& r_j);

/// Same kernel written in terms of (kr, cos theta).
cdouble coupling_kernel(double kr, double cos_theta);

/// Real and imaginary parts of the interaction matrix. Off-diagonal entries
/// are Re/Im V_ij; the diagonal is 0 (real) and -1/2 (imaginary).
struct CouplingMatrices {
  Eigen::MatrixXd m_real;
  Eigen::MatrixXd m_imag;

  int size() const { return static_cast<int>(m_real.rows()); }
  /// -detuning * I + M_R + i M_I
  Eigen::MatrixXcd system_matrix(double detuning) const;
};

CouplingMatrices build_matrices(const AtomCloud& cloud);

/// D_i = exp(i z_i): plane wave along +z with k = 1.
Eigen::VectorXcd drive_vector(const AtomCloud& cloud);

/// True when the Rabi frequency is large enough that the weak-drive
/// (single-excitation) picture is questionable. Advisory only.
bool outside_weak_drive(double rabi);

enum class SolverTag { direct, spectral };

struct SteadyState {
  Eigen::VectorXcd amplitudes;
  double detuning = 0.0;
  SolverTag solver = SolverTag::direct;
};

/// ||(-Delta I + M_R + i M_I) b + Omega D|| / (Omega sqrt(N)).
double relative_residual(const CouplingMatrices& m, const Eigen::VectorXcd& drive,
                         const SteadyState& state, double rabi);

/// Solves (-Delta I + M_R + i M_I) b = -Omega D by LU factorization.
/// Throws NumericalError (with the condition estimate) when singular.
SteadyState solve_steady_state(const CouplingMatrices& m, const Eigen::VectorXcd& drive,
                               double detuning, double rabi);

/// Eigendecomposition M_R + i M_I = S Lambda S^-1 computed once, after which
/// b(Delta) = -Omega S (Lambda - Delta)^-1 S^-1 D is cheap for any Delta.
class SpectralResolvent {
 public:
  SpectralResolvent(const CouplingMatrices& m, const Eigen::VectorXcd& drive);

  /// 1-norm condition number estimate of the eigenvector matrix S.
  double condition_estimate() const { return condition_; }
  const Eigen::VectorXcd& eigenvalues() const { return eigenvalues_; }

  Eigen::VectorXcd amplitudes(double detuning, double rabi) const;
  /// One column per detuning.
  Eigen::MatrixXcd amplitudes(std::span<const double> detunings, double rabi) const;

 private:
  Eigen::VectorXcd eigenvalues_;
  Eigen::MatrixXcd eigenvectors_;
  Eigen::VectorXcd coefficients_;  // S^-1 D
  double condition_ = 0.0;
};

enum class SweepBackend { automatic, direct, spectral };

struct SweepOptions {
  SweepBackend backend = SweepBackend::automatic;
  /// `automatic` picks the spectral backend for grids at least this long.
  int spectral_min_points = 50;
  /// Detunings at which the spectral result is checked against direct solves.
  int validation_points = 5;
  double validation_tolerance = 1e-6;
  /// Eigenvector condition numbers above this trigger the direct fallback.
  double max_condition = 1e8;

  bool operator==(const SweepOptions&) const = default;
};

struct SweepResult {
  std::vector<SteadyState> states;
  SolverTag backend = SolverTag::direct;
  /// Spectral backend was attempted and rejected.
  bool fell_back = false;
  std::string fallback_reason;
  /// Largest relative difference between spectral and direct amplitudes at the
  /// validation detunings (0 when no validation ran).
  double validation_error = 0.0;
  /// Largest relative residual among the direct solves performed.
  double max_direct_residual = 0.0;
};

/// Steady states over a strictly increasing, non-empty detuning grid.
SweepResult spectrum_sweep(const CouplingMatrices& m, const Eigen::VectorXcd& drive, double rabi,
                           std::span<const double> grid, const SweepOptions& options = {});

/// Indices of `count` validation detunings spread evenly over a grid of
/// `grid_size` points (ends included, duplicates removed).
std::vector<int> validation_indices(int grid_size, int count);

}  // namespace lambshift
