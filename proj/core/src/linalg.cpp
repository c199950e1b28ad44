#include "lambshift/linalg.hpp"

#include <complex>
#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <string>

#include <Eigen/Eigenvalues>

#include "lambshift/error.hpp"

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace lambshift::linalg {

ComplexLu::ComplexLu(Eigen::MatrixXcd matrix) : lu_(std::move(matrix)) {
  const lapack_int n = static_cast<lapack_int>(lu_.rows());
  if (lu_.cols() != n) throw NumericalError("ComplexLu: matrix is not square");
  pivots_.assign(n, 0);
  if (n == 0) return;
  const double anorm = lu_.cwiseAbs().colwise().sum().maxCoeff();
  const lapack_int info = LAPACKE_zgetrf(LAPACK_COL_MAJOR, n, n, lu_.data(), n, pivots_.data());
  if (info > 0) {
    throw NumericalError("singular factorization: zero pivot at column " + std::to_string(info) +
                         " (condition estimate: infinite)");
  }
  if (info < 0) throw NumericalError("zgetrf: invalid argument " + std::to_string(-info));
  if (LAPACKE_zgecon(LAPACK_COL_MAJOR, '1', n, lu_.data(), n, anorm, &rcond_) != 0) {
    throw NumericalError("zgecon failed");
  }
}

Eigen::MatrixXcd ComplexLu::solve(const Eigen::MatrixXcd& rhs) const {
  const lapack_int n = size();
  Eigen::MatrixXcd x = rhs;
  if (n == 0) return x;
  const lapack_int info =
      LAPACKE_zgetrs(LAPACK_COL_MAJOR, 'N', n, static_cast<lapack_int>(x.cols()), lu_.data(), n,
                     pivots_.data(), x.data(), n);
  if (info != 0) throw NumericalError("zgetrs failed with info " + std::to_string(info));
  return x;
}

Eigen::VectorXcd ComplexLu::solve(const Eigen::VectorXcd& rhs) const {
  Eigen::MatrixXcd x = solve(Eigen::MatrixXcd(rhs));
  return x.col(0);
}

ComplexEigen complex_eigen(const Eigen::MatrixXcd& matrix) {
  const lapack_int n = static_cast<lapack_int>(matrix.rows());
  ComplexEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  if (n == 0) return out;
  Eigen::MatrixXcd work = matrix;
  const lapack_int info =
      LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', 'V', n, work.data(), n, out.values.data(), nullptr, 1,
                    out.vectors.data(), n);
  if (info > 0) throw NumericalError("zgeev: QR iteration failed to converge");
  if (info < 0) throw NumericalError("zgeev: invalid argument " + std::to_string(-info));
  return out;
}

SymmetricEigen symmetric_eigen(const Eigen::MatrixXd& matrix) {
  // Eigen's tridiagonal QR rather than LAPACK dsyevd: some OpenBLAS builds
  // ship a broken real dgemm (seen with 0.3.20 on Cooperlake) that dsyevd
  // depends on, and the damage is silent.
  SymmetricEigen out;
  if (matrix.rows() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed to converge");
  out.values = solver.eigenvalues();
  out.vectors = solver.eigenvectors();
  return out;
}

void use_single_threaded_blas() {
  if (openblas_set_num_threads != nullptr) openblas_set_num_threads(1);
}

}  // namespace lambshift::linalg
