#pragma once

#include <string>
#include <vector>

#include "homog/common.hpp"

namespace homog::sparse {

struct Triplet {
  int i = 0, j = 0;
  double v = 0.0;
};

/// Compressed-row square matrix. Column indices are strictly increasing
/// within each row and every row carries an explicit diagonal slot (possibly
/// zero) so Jacobi/ILU0 preconditioners never chase missing pivots.
struct CsrMatrix {
  int n = 0;
  std::vector<int> row_ptr;  // size n+1
  std::vector<int> col;
  std::vector<double> val;

  /// Builds from triplets, summing duplicates in their input order (fixed
  /// summation order keeps results bitwise deterministic).
  static CsrMatrix from_triplets(int n, const std::vector<Triplet>& entries);
  /// Builds the sparsity pattern only (values zero), from index pairs.
  static CsrMatrix pattern(int n, const std::vector<std::pair<int, int>>& pairs);

  int nnz() const { return static_cast<int>(val.size()); }
  /// Index into val/col for entry (i,j); -1 if not in the pattern.
  int find(int i, int j) const;
  /// Reference to an existing entry; throws ArgumentError if absent.
  double& at(int i, int j);
  /// Adds v to entry (i,j); throws ArgumentError if absent from the pattern.
  void add(int i, int j, double v) { at(i, j) += v; }

  /// y = A x. OpenMP-parallel over rows; each row is a serial dot product,
  /// so results are bitwise identical for any thread count.
  void mul(const double* x, double* y) const;
  std::vector<double> mul(const std::vector<double>& x) const;
  /// Serial reference kernel (kept for determinism tests and benchmarks).
  void mul_serial(const double* x, double* y) const;
  /// y = A^T x (serial).
  void mul_transpose(const double* x, double* y) const;

  CsrMatrix transpose() const;
  /// max_ij |A_ij + A_ji| over the pattern (exact skewness check).
  double max_symmetric_part() const;
  /// Coordinate text dump: one "i j value" line per entry.
  void dump_coordinate(const std::string& path) const;
};

/// Dense vector helpers shared by the solvers.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace homog::sparse
