#pragma once

#include <utility>
#include <vector>

#include "homog/sparse.hpp"

namespace homog::sparse {

enum class Method { CG, GMRES, DIRECT };

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  Method method = Method::CG;
  /// Monotone convergence envelope: best relative residual seen by the end of
  /// each iteration (the returned iterate is the best one, not the last).
  std::vector<double> residual_history;
};

/// Conjugate gradients with Jacobi preconditioning. Symmetry is asserted by
/// random probes of ||(A - A^T)x|| (AsymmetryError). Throws NotConverged when
/// the tolerance is not met within max_iter.
std::pair<std::vector<double>, SolveReport> solve_spd(const CsrMatrix& A,
                                                      const std::vector<double>& b,
                                                      double tol = 1e-10, int max_iter = 20000);

/// Restarted GMRES with zero-fill incomplete-LU preconditioning (right) and
/// row equilibration. On stagnation falls back to the direct path: reverse
/// Cuthill-McKee reordering plus banded LU with partial pivoting (skipped
/// when the band would not fit in memory). x0 warm-starts the iteration.
std::pair<std::vector<double>, SolveReport> solve_general(
    const CsrMatrix& A, const std::vector<double>& b, double tol = 1e-10, int restart = 150,
    int max_iter = 40000, const std::vector<double>* x0 = nullptr);

/// Reverse Cuthill-McKee ordering of the symmetrized pattern: perm[k] = old
/// index of new index k.
std::vector<int> rcm_ordering(const CsrMatrix& A);

/// Banded LU with partial pivoting (LAPACK-style band storage).
struct BandedLU {
  int n = 0, kl = 0, ku = 0;
  std::vector<double> ab;  // (2*kl+ku+1) x n, column-major bands
  std::vector<int> piv;
};
/// Factors A (already reordered by the caller); throws SingularMatrix.
BandedLU banded_lu_factor(const CsrMatrix& A);
std::vector<double> banded_lu_solve(const BandedLU& lu, std::vector<double> b);

}  // namespace homog::sparse
