#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "homog/solvers.hpp"
#include "homog/sparse.hpp"
#include "oracles.hpp"

using homog::sparse::CsrMatrix;
using homog::sparse::Triplet;

namespace {

std::vector<double> densify(const CsrMatrix& A) {
  std::vector<double> d(static_cast<std::size_t>(A.n) * A.n, 0.0);
  for (int i = 0; i < A.n; ++i)
    for (int k = A.row_ptr[i]; k < A.row_ptr[i + 1]; ++k)
      d[static_cast<std::size_t>(i) * A.n + A.col[k]] = A.val[k];
  return d;
}

CsrMatrix tridiagonal(int n, double lo, double di, double up) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    if (i > 0) t.push_back({i, i - 1, lo});
    t.push_back({i, i, di});
    if (i + 1 < n) t.push_back({i, i + 1, up});
  }
  return CsrMatrix::from_triplets(n, t);
}

}  // namespace

TEST_CASE("csr assembly sums duplicates and orders columns") {
  std::vector<Triplet> t = {{1, 0, 2.0}, {0, 1, 3.0}, {1, 0, 0.5}, {0, 0, 1.0}};
  auto A = CsrMatrix::from_triplets(2, t);
  for (int i = 0; i < A.n; ++i)
    for (int k = A.row_ptr[i] + 1; k < A.row_ptr[i + 1]; ++k) CHECK(A.col[k] > A.col[k - 1]);
  CHECK(A.val[A.find(1, 0)] == 2.5);
  CHECK(A.val[A.find(0, 1)] == 3.0);
  CHECK(A.val[A.find(0, 0)] == 1.0);
  CHECK(A.find(1, 1) >= 0);  // diagonal slot always present
  CHECK(A.val[A.find(1, 1)] == 0.0);
}

TEST_CASE("parallel and serial matrix-vector products agree bitwise") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_int_distribution<int> ic(0, 199);
  std::vector<Triplet> t;
  for (int k = 0; k < 4000; ++k) t.push_back({ic(rng), ic(rng), uni(rng)});
  auto A = CsrMatrix::from_triplets(200, t);
  std::vector<double> x(200), y1(200), y2(200);
  for (double& v : x) v = uni(rng);
  A.mul(x.data(), y1.data());
  A.mul_serial(x.data(), y2.data());
  for (int i = 0; i < 200; ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("transpose product matches explicit transpose") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::uniform_int_distribution<int> ic(0, 49);
  std::vector<Triplet> t;
  for (int k = 0; k < 400; ++k) t.push_back({ic(rng), ic(rng), uni(rng)});
  auto A = CsrMatrix::from_triplets(50, t);
  auto At = A.transpose();
  std::vector<double> x(50), y1(50), y2(50);
  for (double& v : x) v = uni(rng);
  A.mul_transpose(x.data(), y1.data());
  At.mul_serial(x.data(), y2.data());
  for (int i = 0; i < 50; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
}

TEST_CASE("cg on the identity converges in one iteration") {
  std::vector<Triplet> t;
  std::vector<double> b;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  for (int i = 0; i < 17; ++i) {
    t.push_back({i, i, 1.0});
    b.push_back(uni(rng));
  }
  auto A = CsrMatrix::from_triplets(17, t);
  auto [x, rep] = homog::sparse::solve_spd(A, b, 1e-12);
  CHECK(rep.iterations == 1);
  CHECK(rep.method == homog::sparse::Method::CG);
  for (int i = 0; i < 17; ++i) CHECK(x[i] == doctest::Approx(b[i]).epsilon(1e-13));
}

TEST_CASE("cg solves the 1d laplacian with the known profile") {
  auto A = tridiagonal(4, -1.0, 2.0, -1.0);
  std::vector<double> b(4, 1.0);
  auto [x, rep] = homog::sparse::solve_spd(A, b, 1e-12);
  // cross-check against a dense factorization of the same system
  oracle::DenseLU lu(densify(A), 4);
  auto xo = lu.solve(b);
  const double expect[4] = {2.0, 3.0, 3.0, 2.0};
  for (int i = 0; i < 4; ++i) {
    CHECK(x[i] == doctest::Approx(expect[i]).epsilon(1e-10));
    CHECK(xo[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
  CHECK(rep.relative_residual <= 1e-12);
}

TEST_CASE("cg matches a dense oracle on a random spd system") {
  const int n = 50;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> G(n * n);
  for (double& v : G) v = uni(rng);
  // S = G^T G + I, dense SPD
  std::vector<double> S(n * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = (i == j) ? 1.0 : 0.0;
      for (int k = 0; k < n; ++k) s += G[k * n + i] * G[k * n + j];
      S[i * n + j] = s;
    }
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.push_back({i, j, S[i * n + j]});
  auto A = CsrMatrix::from_triplets(n, t);
  std::vector<double> b(n);
  for (double& v : b) v = uni(rng);
  auto [x, rep] = homog::sparse::solve_spd(A, b, 1e-11, 5000);
  CHECK(rep.relative_residual <= 1e-11);
  oracle::DenseLU lu(S, n);
  auto xo = lu.solve(b);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += (x[i] - xo[i]) * (x[i] - xo[i]);
    den += xo[i] * xo[i];
  }
  CHECK(std::sqrt(num / den) <= 1e-9);
}

TEST_CASE("cg residual history is monotone nonincreasing") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 4; ++trial) {
    int n = 20 + 15 * trial;
    std::vector<double> G(n * n);
    for (double& v : G) v = uni(rng);
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double s = (i == j) ? 0.5 : 0.0;
        for (int k = 0; k < n; ++k) s += G[k * n + i] * G[k * n + j];
        t.push_back({i, j, s});
      }
    auto A = CsrMatrix::from_triplets(n, t);
    std::vector<double> b(n);
    for (double& v : b) v = uni(rng);
    auto [x, rep] = homog::sparse::solve_spd(A, b, 1e-10, 10000);
    REQUIRE(rep.residual_history.size() >= 2);
    for (std::size_t k = 1; k < rep.residual_history.size(); ++k)
      CHECK(rep.residual_history[k] <= rep.residual_history[k - 1]);
  }
}

TEST_CASE("cg rejects a visibly nonsymmetric matrix") {
  std::vector<Triplet> t = {{0, 0, 2.0}, {0, 1, 1.0}, {1, 0, -1.0}, {1, 1, 2.0}};
  auto A = CsrMatrix::from_triplets(2, t);
  std::vector<double> b = {1.0, 1.0};
  CHECK_THROWS_AS(homog::sparse::solve_spd(A, b), homog::AsymmetryError);
}

TEST_CASE("gmres solves the 2x2 permutation system") {
  std::vector<Triplet> t = {{0, 1, 1.0}, {1, 0, 1.0}};
  auto A = CsrMatrix::from_triplets(2, t);
  std::vector<double> b = {1.0, 2.0};
  auto [x, rep] = homog::sparse::solve_general(A, b, 1e-12);
  CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-11));
  CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(rep.relative_residual <= 1e-12);
}

TEST_CASE("gmres matches a dense oracle on a skew-perturbed laplacian") {
  const int n = 40;
  auto L = tridiagonal(n, -1.0, 2.0, -1.0);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int k = L.row_ptr[i]; k < L.row_ptr[i + 1]; ++k) t.push_back({i, L.col[k], L.val[k]});
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i + 3 < n; i += 2) {
    double v = uni(rng);
    t.push_back({i, i + 3, v});
    t.push_back({i + 3, i, -v});
  }
  auto A = CsrMatrix::from_triplets(n, t);
  std::vector<double> b(n);
  for (double& v : b) v = uni(rng);
  auto [x, rep] = homog::sparse::solve_general(A, b, 1e-11);
  oracle::DenseLU lu(densify(A), n);
  auto xo = lu.solve(b);
  for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(xo[i]).epsilon(1e-8));
}

TEST_CASE("gmres warm start accepts an exact initial guess") {
  auto A = tridiagonal(25, -1.0, 2.1, -1.0);
  std::vector<double> xstar(25);
  for (int i = 0; i < 25; ++i) xstar[i] = std::sin(0.3 * i);
  std::vector<double> b(25);
  A.mul(xstar.data(), b.data());
  auto [x, rep] = homog::sparse::solve_general(A, b, 1e-10, 150, 40000, &xstar);
  CHECK(rep.iterations == 0);
  for (int i = 0; i < 25; ++i) CHECK(x[i] == doctest::Approx(xstar[i]).epsilon(1e-12));
}

TEST_CASE("a singular system reaches the direct path and reports it") {
  std::vector<Triplet> t = {{0, 0, 1.0}, {2, 2, 1.0}, {1, 1, 0.0}};
  auto A = CsrMatrix::from_triplets(3, t);
  std::vector<double> b = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(homog::sparse::solve_general(A, b), homog::SingularMatrix);
}

TEST_CASE("rcm ordering is a permutation that shrinks the band") {
  // a path graph numbered badly: 0-5-1-6-2-7-3-8-4
  std::vector<int> path = {0, 5, 1, 6, 2, 7, 3, 8, 4};
  std::vector<Triplet> t;
  for (int i = 0; i < 9; ++i) t.push_back({i, i, 2.0});
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    t.push_back({path[k], path[k + 1], -1.0});
    t.push_back({path[k + 1], path[k], -1.0});
  }
  auto A = CsrMatrix::from_triplets(9, t);
  auto perm = homog::sparse::rcm_ordering(A);
  std::vector<char> seen(9, 0);
  for (int p : perm) {
    REQUIRE(p >= 0);
    REQUIRE(p < 9);
    CHECK(!seen[p]);
    seen[p] = 1;
  }
  std::vector<int> inv(9);
  for (int k = 0; k < 9; ++k) inv[perm[k]] = k;
  int band = 0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k)
    band = std::max(band, std::abs(inv[path[k]] - inv[path[k + 1]]));
  CHECK(band == 1);
}

TEST_CASE("banded lu reconstructs the pivoted matrix columnwise") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    int n = 12 + 11 * trial;
    int kl = 1 + trial % 3, ku = 1 + (trial + 1) % 3;
    std::vector<Triplet> t;
    for (int i = 0; i < n; ++i)
      for (int j = std::max(0, i - kl); j <= std::min(n - 1, i + ku); ++j)
        t.push_back({i, j, uni(rng) + (i == j ? 2.0 : 0.0)});
    auto A = CsrMatrix::from_triplets(n, t);
    auto f = homog::sparse::banded_lu_factor(A);
    const int ldab = 2 * f.kl + f.ku + 1;
    auto ab = [&](int i, int j) {
      int r = f.kl + f.ku + i - j;
      if (r < 0 || r >= ldab) return 0.0;
      return f.ab[static_cast<std::size_t>(j) * ldab + r];
    };
    double scale = 0.0;
    for (double v : A.val) scale = std::max(scale, std::fabs(v));
    // Apply L then the inverse pivot sequence to U e_k; must reproduce A e_k.
    for (int c = 0; c < n; ++c) {
      std::vector<double> y(n, 0.0);
      for (int i = std::max(0, c - f.kl - f.ku); i <= c; ++i) y[i] = ab(i, c);  // U e_c
      for (int j = n - 1; j >= 0; --j) {
        for (int i = std::min(n - 1, j + f.kl); i > j; --i) y[i] += ab(i, j) * y[j];
        std::swap(y[j], y[f.piv[j]]);
      }
      std::vector<double> ac(n, 0.0);
      for (int i = 0; i < n; ++i) {
        int p = A.find(i, c);
        if (p >= 0) ac[i] = A.val[p];
      }
      for (int i = 0; i < n; ++i) CHECK(std::fabs(y[i] - ac[i]) <= 1e-10 * scale);
    }
    // and the solve is accurate
    std::vector<double> xstar(n), b(n);
    for (double& v : xstar) v = uni(rng);
    A.mul(xstar.data(), b.data());
    auto x = homog::sparse::banded_lu_solve(f, b);
    for (int i = 0; i < n; ++i) CHECK(x[i] == doctest::Approx(xstar[i]).epsilon(1e-9));
  }
}

TEST_CASE("solver outputs are deterministic across repeated runs") {
  auto A = tridiagonal(60, -1.0, 2.0, -1.0);
  std::vector<double> b(60);
  for (int i = 0; i < 60; ++i) b[i] = std::cos(0.1 * i);
  auto [x1, r1] = homog::sparse::solve_spd(A, b, 1e-12);
  auto [x2, r2] = homog::sparse::solve_spd(A, b, 1e-12);
  CHECK(r1.iterations == r2.iterations);
  for (int i = 0; i < 60; ++i) CHECK(x1[i] == x2[i]);
}

TEST_CASE("coordinate dump writes one entry per stored value") {
  std::vector<Triplet> t = {{0, 0, 1.5}, {1, 0, -2.0}, {1, 1, 4.0}};
  auto A = CsrMatrix::from_triplets(2, t);
  const char* path = "sparse_dump_test.txt";
  A.dump_coordinate(path);
  std::ifstream in(path);
  REQUIRE(in.good());
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == A.nnz());
  std::remove(path);
}
