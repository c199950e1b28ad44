#pragma once

// Thin RAII wrappers over the LAPACK kernels the pipeline relies on. Storage
// is Eigen column-major throughout.

#include <Eigen/Core>

#include <complex>
#include <vector>

namespace lambshift::linalg {

using cdouble = std::complex<double>;

/// Dense LU factorization of a general complex matrix with a reciprocal
/// condition estimate (1-norm).
class ComplexLu {
 public:
  /// Throws NumericalError if the matrix is exactly singular.
  explicit ComplexLu(Eigen::MatrixXcd matrix);

  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  Eigen::MatrixXcd solve(const Eigen::MatrixXcd& rhs) const;
  /// Reciprocal 1-norm condition number estimate.
  double rcond() const { return rcond_; }
  int size() const { return static_cast<int>(lu_.rows()); }

 private:
  Eigen::MatrixXcd lu_;
  std::vector<int> pivots_;
  double rcond_ = 0.0;
};

struct ComplexEigen {
  Eigen::VectorXcd values;
  /// Unit-norm right eigenvectors, one per column.
  Eigen::MatrixXcd vectors;
};

/// Right eigenpairs of a general complex matrix. Throws NumericalError when
/// the QR iteration fails to converge.
ComplexEigen complex_eigen(const Eigen::MatrixXcd& matrix);

struct SymmetricEigen {
  /// Ascending.
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Full eigendecomposition of a real symmetric matrix (lower triangle used).
SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& matrix);

/// Pins the BLAS backend to one thread; the ensemble driver parallelises
/// across configurations instead.
void use_single_threaded_blas();

}  // namespace lambshift::linalg
