#include "homog/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace homog::sparse {

namespace {

// Shared pattern construction: pairs (i,j) -> sorted unique CSR with explicit
// diagonal slots.
CsrMatrix build_pattern(int n, std::vector<std::pair<int, int>> pairs) {
  if (n < 0) throw ArgumentError("matrix dimension must be nonnegative");
  pairs.reserve(pairs.size() + n);
  for (int i = 0; i < n; ++i) pairs.emplace_back(i, i);
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  CsrMatrix A;
  A.n = n;
  A.row_ptr.assign(n + 1, 0);
  for (const auto& [i, j] : pairs) {
    if (i < 0 || i >= n || j < 0 || j >= n) throw ArgumentError("triplet index out of range");
    ++A.row_ptr[i + 1];
  }
  for (int i = 0; i < n; ++i) A.row_ptr[i + 1] += A.row_ptr[i];
  A.col.resize(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) A.col[k] = pairs[k].second;
  A.val.assign(pairs.size(), 0.0);
  return A;
}

}  // namespace

CsrMatrix CsrMatrix::pattern(int n, const std::vector<std::pair<int, int>>& pairs) {
  return build_pattern(n, pairs);
}

CsrMatrix CsrMatrix::from_triplets(int n, const std::vector<Triplet>& entries) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(entries.size());
  for (const Triplet& t : entries) pairs.emplace_back(t.i, t.j);
  CsrMatrix A = build_pattern(n, std::move(pairs));
  for (const Triplet& t : entries) A.val[A.find(t.i, t.j)] += t.v;
  return A;
}

int CsrMatrix::find(int i, int j) const {
  const int* lo = col.data() + row_ptr[i];
  const int* hi = col.data() + row_ptr[i + 1];
  const int* it = std::lower_bound(lo, hi, j);
  if (it == hi || *it != j) return -1;
  return static_cast<int>(it - col.data());
}

double& CsrMatrix::at(int i, int j) {
  int k = find(i, j);
  if (k < 0)
    throw ArgumentError("entry (" + std::to_string(i) + "," + std::to_string(j) +
                        ") is not in the sparsity pattern");
  return val[k];
}

void CsrMatrix::mul(const double* x, double* y) const {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

std::vector<double> CsrMatrix::mul(const std::vector<double>& x) const {
  if (static_cast<int>(x.size()) != n) throw ArgumentError("matvec size mismatch");
  std::vector<double> y(n);
  mul(x.data(), y.data());
  return y;
}

void CsrMatrix::mul_serial(const double* x, double* y) const {
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
    y[i] = s;
  }
}

void CsrMatrix::mul_transpose(const double* x, double* y) const {
  std::fill(y, y + n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y[col[k]] += val[k] * x[i];
}

CsrMatrix CsrMatrix::transpose() const {
  CsrMatrix T;
  T.n = n;
  T.row_ptr.assign(n + 1, 0);
  for (int c : col) ++T.row_ptr[c + 1];
  for (int i = 0; i < n; ++i) T.row_ptr[i + 1] += T.row_ptr[i];
  T.col.resize(col.size());
  T.val.resize(val.size());
  std::vector<int> next(T.row_ptr.begin(), T.row_ptr.end() - 1);
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) {
      int pos = next[col[k]]++;
      T.col[pos] = i;
      T.val[pos] = val[k];
    }
  return T;
}

double CsrMatrix::max_symmetric_part() const {
  CsrMatrix T = transpose();
  double m = 0.0;
  for (int i = 0; i < n; ++i) {
    int ka = row_ptr[i], kb = T.row_ptr[i];
    int ea = row_ptr[i + 1], eb = T.row_ptr[i + 1];
    while (ka < ea || kb < eb) {
      int ca = ka < ea ? col[ka] : n, cb = kb < eb ? T.col[kb] : n;
      if (ca < cb) {
        m = std::max(m, std::fabs(val[ka++]));
      } else if (cb < ca) {
        m = std::max(m, std::fabs(T.val[kb++]));
      } else {
        m = std::max(m, std::fabs(val[ka++] + T.val[kb++]));
      }
    }
  }
  return m;
}

void CsrMatrix::dump_coordinate(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open matrix dump file " + path);
  out.precision(17);
  for (int i = 0; i < n; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      out << i << " " << col[k] << " " << val[k] << "\n";
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace homog::sparse
