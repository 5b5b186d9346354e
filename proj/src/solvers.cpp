#include "homog/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

namespace homog::sparse {

namespace {

double inf_norm_estimate(const CsrMatrix& A) {
  double m = 0.0;
  for (int i = 0; i < A.n; ++i) {
    double s = 0.0;
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) s += std::fabs(A.val[k]);
    m = std::max(m, s);
  }
  return m;
}

void assert_symmetric(const CsrMatrix& A) {
  if (A.n == 0) return;
  std::mt19937 rng(12345);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double scale = inf_norm_estimate(A);
  if (scale == 0.0) return;
  std::vector<double> x(A.n), y(A.n), z(A.n);
  for (int probe = 0; probe < 3; ++probe) {
    for (double& v : x) v = uni(rng);
    A.mul_serial(x.data(), y.data());
    A.mul_transpose(x.data(), z.data());
    double d = 0.0;
    for (int i = 0; i < A.n; ++i) d = std::max(d, std::fabs(y[i] - z[i]));
    if (d > 1e-12 * scale)
      throw AsymmetryError("matrix fails the symmetry probe: |(A-A^T)x| = " + std::to_string(d));
  }
}

// Zero-fill incomplete LU on the matrix's own pattern, with pivot repair so
// indefinite (saddle) systems still yield a usable preconditioner.
struct Ilu0 {
  const CsrMatrix* A = nullptr;
  std::vector<double> lu;
  std::vector<int> diag_ptr;

  void factor(const CsrMatrix& M) {
    A = &M;
    lu = M.val;
    const int n = M.n;
    diag_ptr.resize(n);
    for (int i = 0; i < n; ++i) {
      diag_ptr[i] = M.find(i, i);
      if (diag_ptr[i] < 0) throw SingularMatrix("missing diagonal slot in ILU0");
    }
    std::vector<int> pos(n, -1);
    for (int i = 0; i < n; ++i) {
      double row_scale = 0.0;
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k) {
        pos[M.col[k]] = k;
        row_scale = std::max(row_scale, std::fabs(lu[k]));
      }
      if (row_scale == 0.0) row_scale = 1.0;
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1] && M.col[k] < i; ++k) {
        int c = M.col[k];
        double l = lu[k] / lu[diag_ptr[c]];
        lu[k] = l;
        for (int kk = diag_ptr[c] + 1; kk < M.row_ptr[c + 1]; ++kk) {
          int p = pos[M.col[kk]];
          if (p >= 0) lu[p] -= l * lu[kk];
        }
      }
      double& piv = lu[diag_ptr[i]];
      double floor_mag = 1e-6 * row_scale;
      if (std::fabs(piv) < floor_mag) piv = (piv < 0.0) ? -floor_mag : floor_mag;
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1]; ++k) pos[M.col[k]] = -1;
    }
  }

  // z = (LU)^{-1} r
  void apply(const double* r, double* z) const {
    const CsrMatrix& M = *A;
    const int n = M.n;
    for (int i = 0; i < n; ++i) {
      double s = r[i];
      for (int k = M.row_ptr[i]; k < M.row_ptr[i + 1] && M.col[k] < i; ++k)
        s -= lu[k] * z[M.col[k]];
      z[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = z[i];
      for (int k = M.row_ptr[i + 1] - 1; k >= M.row_ptr[i] && M.col[k] > i; --k)
        s -= lu[k] * z[M.col[k]];
      z[i] = s / lu[diag_ptr[i]];
    }
  }
};

CsrMatrix permute(const CsrMatrix& A, const std::vector<int>& perm) {
  // perm[k] = old index of new index k
  std::vector<int> iperm(A.n);
  for (int k = 0; k < A.n; ++k) iperm[perm[k]] = k;
  std::vector<Triplet> trips;
  trips.reserve(A.val.size());
  for (int i = 0; i < A.n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      trips.push_back({iperm[i], iperm[A.col[k]], A.val[k]});
  return CsrMatrix::from_triplets(A.n, trips);
}

}  // namespace

std::pair<std::vector<double>, SolveReport> solve_spd(const CsrMatrix& A,
                                                      const std::vector<double>& b, double tol,
                                                      int max_iter) {
  if (static_cast<int>(b.size()) != A.n) throw ArgumentError("rhs size mismatch");
  assert_symmetric(A);
  SolveReport rep;
  rep.method = Method::CG;
  std::vector<double> x(A.n, 0.0);
  double bnorm = norm2(b);
  if (bnorm == 0.0) return {x, rep};

  std::vector<double> diag(A.n, 1.0);
  for (int i = 0; i < A.n; ++i) {
    int k = A.find(i, i);
    if (k >= 0 && A.val[k] > 0.0) diag[i] = A.val[k];
  }
  std::vector<double> r = b, z(A.n), p(A.n), q(A.n);
  for (int i = 0; i < A.n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = dot(r, z);
  std::vector<double> best_x = x;
  double best_res = 1.0;
  rep.residual_history.push_back(1.0);
  for (int it = 1; it <= max_iter; ++it) {
    A.mul(p.data(), q.data());
    double pq = dot(p, q);
    if (!(pq > 0.0)) throw SingularMatrix("matrix is not positive definite in CG");
    double alpha = rz / pq;
    for (int i = 0; i < A.n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * q[i];
    }
    double res = norm2(r) / bnorm;
    rep.iterations = it;
    if (res < best_res) {
      best_res = res;
      best_x = x;
    }
    rep.residual_history.push_back(best_res);
    if (best_res <= tol) break;
    for (int i = 0; i < A.n; ++i) z[i] = r[i] / diag[i];
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < A.n; ++i) p[i] = z[i] + beta * p[i];
  }
  rep.relative_residual = best_res;
  if (best_res > tol)
    throw NotConverged("CG reached " + std::to_string(rep.iterations) + " iterations at residual " +
                       std::to_string(best_res));
  return {best_x, rep};
}

std::vector<int> rcm_ordering(const CsrMatrix& A) {
  const int n = A.n;
  // Symmetrized adjacency, diagonal dropped.
  std::vector<std::vector<int>> adj(n);
  for (int i = 0; i < n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) {
      int j = A.col[k];
      if (j != i) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  std::vector<int> order;
  order.reserve(n);
  std::vector<char> seen(n, 0);
  std::vector<int> candidates(n);
  std::iota(candidates.begin(), candidates.end(), 0);
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    if (adj[a].size() != adj[b].size()) return adj[a].size() < adj[b].size();
    return a < b;
  });
  std::deque<int> queue;
  for (int start : candidates) {
    if (seen[start]) continue;
    seen[start] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      order.push_back(v);
      std::vector<int> nb;
      for (int w : adj[v])
        if (!seen[w]) nb.push_back(w);
      std::sort(nb.begin(), nb.end(), [&](int a, int b) {
        if (adj[a].size() != adj[b].size()) return adj[a].size() < adj[b].size();
        return a < b;
      });
      for (int w : nb) {
        seen[w] = 1;
        queue.push_back(w);
      }
    }
  }
  std::reverse(order.begin(), order.end());
  return order;
}

BandedLU banded_lu_factor(const CsrMatrix& A) {
  const int n = A.n;
  int kl = 0, ku = 0;
  for (int i = 0; i < n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) {
      kl = std::max(kl, i - A.col[k]);
      ku = std::max(ku, A.col[k] - i);
    }
  BandedLU f;
  f.n = n;
  f.kl = kl;
  f.ku = ku;
  const int ldab = 2 * kl + ku + 1;
  if (static_cast<double>(ldab) * n > 2.5e8)
    throw NotConverged("band too wide for the direct fallback");
  f.ab.assign(static_cast<std::size_t>(ldab) * n, 0.0);
  f.piv.resize(n);
  auto ab = [&](int i, int j) -> double& {
    return f.ab[static_cast<std::size_t>(j) * ldab + (kl + ku + i - j)];
  };
  for (int i = 0; i < n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) ab(i, A.col[k]) = A.val[k];

  for (int j = 0; j < n; ++j) {
    int ilast = std::min(n - 1, j + kl);
    int jp = j;
    double pmax = std::fabs(ab(j, j));
    for (int i = j + 1; i <= ilast; ++i)
      if (std::fabs(ab(i, j)) > pmax) {
        pmax = std::fabs(ab(i, j));
        jp = i;
      }
    f.piv[j] = jp;
    if (pmax == 0.0) throw SingularMatrix("zero pivot in banded LU at column " + std::to_string(j));
    int clast = std::min(n - 1, j + kl + ku);
    if (jp != j)
      for (int c = j; c <= clast; ++c) std::swap(ab(j, c), ab(jp, c));
    for (int i = j + 1; i <= ilast; ++i) ab(i, j) /= ab(j, j);
    for (int c = j + 1; c <= clast; ++c) {
      double ajc = ab(j, c);
      if (ajc != 0.0)
        for (int i = j + 1; i <= ilast; ++i) ab(i, c) -= ab(i, j) * ajc;
    }
  }
  return f;
}

std::vector<double> banded_lu_solve(const BandedLU& f, std::vector<double> b) {
  const int n = f.n, kl = f.kl, ku = f.ku, ldab = 2 * kl + ku + 1;
  auto ab = [&](int i, int j) -> double {
    return f.ab[static_cast<std::size_t>(j) * ldab + (kl + ku + i - j)];
  };
  for (int j = 0; j < n; ++j) {
    if (f.piv[j] != j) std::swap(b[j], b[f.piv[j]]);
    int ilast = std::min(n - 1, j + kl);
    for (int i = j + 1; i <= ilast; ++i) b[i] -= ab(i, j) * b[j];
  }
  for (int i = n - 1; i >= 0; --i) {
    int clast = std::min(n - 1, i + kl + ku);
    double s = b[i];
    for (int c = i + 1; c <= clast; ++c) s -= ab(i, c) * b[c];
    b[i] = s / ab(i, i);
  }
  return b;
}

std::pair<std::vector<double>, SolveReport> solve_general(const CsrMatrix& A,
                                                          const std::vector<double>& b,
                                                          double tol, int restart, int max_iter,
                                                          const std::vector<double>* x0) {
  const int n = A.n;
  if (static_cast<int>(b.size()) != n) throw ArgumentError("rhs size mismatch");
  SolveReport rep;
  rep.method = Method::GMRES;
  double bnorm = norm2(b);
  if (bnorm == 0.0) return {std::vector<double>(n, 0.0), rep};

  // Symmetric equilibration D A D keeps the saddle structure while taming
  // the element-size spread of graded meshes; the iterate lives in the
  // scaled variable and the unscaled solution is recovered as D y.
  std::vector<double> dr(n, 1.0);
  for (int i = 0; i < n; ++i) {
    double m = 0.0;
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k) m = std::max(m, std::fabs(A.val[k]));
    if (m > 0.0) dr[i] = 1.0 / std::sqrt(m);
  }
  CsrMatrix As = A;
  for (int i = 0; i < n; ++i)
    for (int k = As.row_ptr[i]; k < As.row_ptr[i + 1]; ++k) As.val[k] *= dr[i] * dr[As.col[k]];
  std::vector<double> bs(n);
  for (int i = 0; i < n; ++i) bs[i] = b[i] * dr[i];
  double bsnorm = norm2(bs);

  std::vector<double> x(n, 0.0);
  if (x0) {
    if (static_cast<int>(x0->size()) != n) throw ArgumentError("warm start size mismatch");
    for (int i = 0; i < n; ++i) x[i] = (*x0)[i] / dr[i];
  }

  Ilu0 prec;
  prec.factor(As);

  auto unscale = [&](const std::vector<double>& y) {
    std::vector<double> xu(n);
    for (int i = 0; i < n; ++i) xu[i] = dr[i] * y[i];
    return xu;
  };
  auto true_rel_residual = [&](const std::vector<double>& y) {
    const std::vector<double> xu = unscale(y);
    std::vector<double> r(n);
    A.mul(xu.data(), r.data());
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    return norm2(r) / bnorm;
  };

  const int m = std::max(5, restart);
  std::vector<std::vector<double>> V;
  std::vector<double> H(static_cast<std::size_t>(m + 1) * m, 0.0);
  auto h = [&](int i, int j) -> double& { return H[static_cast<std::size_t>(j) * (m + 1) + i]; };
  std::vector<double> cs(m), sn(m), g(m + 1);
  std::vector<double> w(n), z(n);

  double best_true = true_rel_residual(x);
  std::vector<double> best_x = x;
  rep.residual_history.push_back(best_true);
  bool gmres_done = best_true <= tol;
  bool stagnated = false;
  int total_iters = 0;

  while (!gmres_done && !stagnated && total_iters < max_iter) {
    std::vector<double> r(n);
    As.mul(x.data(), r.data());
    for (int i = 0; i < n; ++i) r[i] = bs[i] - r[i];
    double beta = norm2(r);
    if (!std::isfinite(beta)) {
      stagnated = true;
      break;
    }
    if (beta == 0.0) break;
    V.assign(1, r);
    for (double& v : V[0]) v /= beta;
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;
    int j = 0;
    double cycle_start = best_true;
    for (; j < m && total_iters < max_iter; ++j, ++total_iters) {
      prec.apply(V[j].data(), z.data());
      As.mul(z.data(), w.data());
      for (int i = 0; i <= j; ++i) {
        double hij = dot(w, V[i]);
        h(i, j) = hij;
        for (int kk = 0; kk < n; ++kk) w[kk] -= hij * V[i][kk];
      }
      double hj1 = norm2(w);
      h(j + 1, j) = hj1;
      if (!std::isfinite(hj1)) {
        stagnated = true;
        break;
      }
      for (int i = 0; i < j; ++i) {
        double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
        h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
        h(i, j) = t;
      }
      double denom = std::hypot(h(j, j), h(j + 1, j));
      if (denom == 0.0) {
        cs[j] = 1.0;
        sn[j] = 0.0;
      } else {
        cs[j] = h(j, j) / denom;
        sn[j] = h(j + 1, j) / denom;
      }
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      double inner_rel = std::fabs(g[j + 1]) / bsnorm;
      if (inner_rel <= 0.25 * tol || hj1 == 0.0) {
        ++j;
        ++total_iters;
        break;
      }
      V.push_back(w);
      for (double& v : V.back()) v /= hj1;
    }
    if (stagnated) break;
    // x += M^{-1} (V y) with y from the triangular system.
    if (j > 0) {
      std::vector<double> y(j);
      for (int i = j - 1; i >= 0; --i) {
        double s = g[i];
        for (int kk = i + 1; kk < j; ++kk) s -= h(i, kk) * y[kk];
        y[i] = s / h(i, i);
      }
      std::vector<double> vy(n, 0.0);
      for (int kk = 0; kk < j; ++kk)
        for (int i = 0; i < n; ++i) vy[i] += y[kk] * V[kk][i];
      prec.apply(vy.data(), z.data());
      for (int i = 0; i < n; ++i) x[i] += z[i];
    }
    double tr = true_rel_residual(x);
    if (std::isfinite(tr) && tr < best_true) {
      best_true = tr;
      best_x = x;
    }
    rep.residual_history.push_back(best_true);
    rep.iterations = total_iters;
    if (best_true <= tol) {
      gmres_done = true;
      break;
    }
    if (tr > 0.98 * cycle_start) stagnated = true;  // no useful progress this cycle
  }

  rep.iterations = total_iters;
  rep.relative_residual = best_true;
  if (best_true <= tol) {
    rep.method = Method::GMRES;
    return {unscale(best_x), rep};
  }

  // Direct fallback: RCM + banded LU with partial pivoting.
  HOMOG_INFO("GMRES stalled at residual %.3e after %d iterations; direct fallback",
             best_true, total_iters);
  std::vector<int> perm = rcm_ordering(A);
  CsrMatrix Ap = permute(A, perm);
  BandedLU lu = banded_lu_factor(Ap);
  std::vector<int> iperm(n);
  for (int k = 0; k < n; ++k) iperm[perm[k]] = k;
  std::vector<double> bp(n);
  for (int i = 0; i < n; ++i) bp[iperm[i]] = b[i];
  std::vector<double> xp = banded_lu_solve(lu, std::move(bp));
  std::vector<double> xd(n);
  for (int i = 0; i < n; ++i) xd[i] = xp[iperm[i]];
  std::vector<double> rd(n);
  A.mul(xd.data(), rd.data());
  for (int i = 0; i < n; ++i) rd[i] = b[i] - rd[i];
  double td = norm2(rd) / bnorm;
  rep.relative_residual = td;
  rep.method = Method::DIRECT;
  rep.residual_history.push_back(std::min(best_true, td));
  if (!(td <= std::max(tol, 1e-9)))
    throw NotConverged("GMRES and the banded direct path both failed (residuals " +
                       std::to_string(best_true) + ", " + std::to_string(td) + ")");
  return {xd, rep};
}

}  // namespace homog::sparse
