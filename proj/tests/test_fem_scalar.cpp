#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "homog/closed_form.hpp"
#include "homog/fem_scalar.hpp"
#include "homog/mesh.hpp"
#include "homog/solvers.hpp"
#include "oracles.hpp"

using namespace homog;
using fem::ScalarBc;

namespace {

constexpr double kPi = 3.14159265358979323846;

mesh::Mesh two_triangle_square() {
  mesh::Mesh m;
  m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  m.subdomain = {mesh::Subdomain::Exterior, mesh::Subdomain::Exterior};
  m.boundary_edges = {{0, 1, mesh::BoundaryTag::Outer},
                      {1, 2, mesh::BoundaryTag::Outer},
                      {2, 3, mesh::BoundaryTag::Outer},
                      {3, 0, mesh::BoundaryTag::Outer}};
  return m;
}

double entry(const sparse::CsrMatrix& A, int i, int j) {
  int k = A.find(i, j);
  REQUIRE(k >= 0);
  return A.val[static_cast<size_t>(k)];
}

double sum_entries(const sparse::CsrMatrix& A) {
  double s = 0.0;
  for (double v : A.val) s += v;
  return s;
}

// Capacity-profile drift tiled over a perforated lattice: per cell of side
// `pitch`, w = 1 inside r_in, log(r/R_out)/log(r_in/R_out) on the annulus, 0
// outside; b = grad w = -(alpha/r) r_hat there.
struct LatticeDrift {
  Vec2 origin;
  double pitch = 0.0;
  int nx = 0, ny = 0;
  double r_in = 0.0, r_out = 0.0;  // physical radii
  double alpha = 0.0;              // 1/log(R/r_eps), scale-invariant

  Vec2 center_of(Vec2 p) const {
    int ix = std::clamp(static_cast<int>(std::floor((p.x - origin.x) / pitch)), 0, nx - 1);
    int iy = std::clamp(static_cast<int>(std::floor((p.y - origin.y) / pitch)), 0, ny - 1);
    return {origin.x + (ix + 0.5) * pitch, origin.y + (iy + 0.5) * pitch};
  }
  double w(Vec2 p) const {
    Vec2 d = p - center_of(p);
    double r = d.norm();
    if (r <= r_in) return 1.0;
    if (r >= r_out) return 0.0;
    return std::log(r / r_out) / std::log(r_in / r_out);
  }
  Vec2 grad_w(Vec2 p, mesh::Subdomain s) const {
    if (s != mesh::Subdomain::Annulus) return {0.0, 0.0};
    Vec2 d = p - center_of(p);
    double r2 = d.x * d.x + d.y * d.y;
    return d * (-alpha / r2);
  }
  double grad_w_sq(Vec2 p, mesh::Subdomain s) const {
    if (s != mesh::Subdomain::Annulus) return 0.0;
    Vec2 d = p - center_of(p);
    return alpha * alpha / (d.x * d.x + d.y * d.y);
  }
};

struct LatticeCase {
  mesh::Mesh mesh;
  LatticeDrift drift;
};

LatticeCase make_lattice(double mu, double eps, double R, double target_h) {
  double re = closed_form::scalar_radius(mu, eps, R);
  closed_form::AnnulusSpec ann{R, re};
  mesh::GradingSpec grading{0, 1.3, target_h};
  LatticeCase lc{mesh::perforated_lattice({0.0, 0.0}, {1.0, 1.0}, eps, ann, grading), {}};
  lc.drift.origin = {0.0, 0.0};
  lc.drift.pitch = eps;
  lc.drift.nx = static_cast<int>(std::lround(1.0 / eps));
  lc.drift.ny = lc.drift.nx;
  lc.drift.r_in = re * eps;
  lc.drift.r_out = R * eps;
  lc.drift.alpha = ann.alpha();
  return lc;
}

double field_linf_diff(const fem::ScalarField& a, const fem::ScalarField& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::fabs(a.values[i] - b.values[i]));
  return d;
}

double sinsin(Vec2 p) { return std::sin(kPi * p.x) * std::sin(kPi * p.y); }

}  // namespace

TEST_CASE("stiffness matches the hand-assembled two-triangle square") {
  mesh::Mesh m = two_triangle_square();
  fem::VectorCoef zero_b = [](Vec2, mesh::Subdomain) { return Vec2{0.0, 0.0}; };
  fem::ScalarCoef zero_c = [](Vec2, mesh::Subdomain) { return 0.0; };
  fem::ScalarForms forms = fem::assemble_scalar_forms(m, zero_c, zero_b, nullptr, ScalarBc::Neumann);

  REQUIRE(forms.ndof == 4);
  // Classic P1 stiffness of the unit square cut along the (0,0)-(1,1)
  // diagonal; vertices 1 and 3 never share a triangle.
  CHECK(entry(forms.K, 0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(entry(forms.K, 1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(entry(forms.K, 2, 2) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(entry(forms.K, 3, 3) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(entry(forms.K, 0, 1) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(entry(forms.K, 0, 3) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(entry(forms.K, 1, 2) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(entry(forms.K, 2, 3) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(entry(forms.K, 0, 2) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(forms.K.find(1, 3) == -1);
  CHECK(forms.K.find(3, 1) == -1);

  // Zero drift callback assembles a structurally present but exactly zero B.
  CHECK(forms.B.n == forms.ndof);
  for (double v : forms.B.val) CHECK(v == 0.0);
  CHECK(forms.B.max_symmetric_part() == 0.0);

  // Row sums of K vanish (constants are in the kernel).
  for (int i = 0; i < 4; ++i) {
    double rs = 0.0;
    for (int k = forms.K.row_ptr[i]; k < forms.K.row_ptr[i + 1]; ++k)
      rs += forms.K.val[static_cast<size_t>(k)];
    CHECK(std::fabs(rs) <= 1e-14);
  }
}

TEST_CASE("drift matrices are exactly skew for arbitrary drifts") {
  fem::VectorCoef b = [](Vec2 p, mesh::Subdomain) {
    return Vec2{std::sin(3.0 * p.x + 1.0) * std::cos(2.0 * p.y),
                std::cos(5.0 * p.x) - 0.3 * std::sin(p.y) + 0.1};
  };
  SUBCASE("structured square, Dirichlet") {
    mesh::Mesh m = mesh::structured_square(13, {0.0, 0.0}, {1.0, 1.0});
    fem::ScalarForms forms = fem::assemble_scalar_forms(m, nullptr, b, nullptr, ScalarBc::Dirichlet);
    CHECK(forms.B.max_symmetric_part() == 0.0);
    CHECK(forms.M.n == 0);
  }
  SUBCASE("periodic cell with merged slaves") {
    closed_form::AnnulusSpec ann{0.4, 0.1};
    mesh::Mesh m = mesh::periodic_cell(ann, 0.5, {0, 1.3, 0.06});
    fem::ScalarForms forms = fem::assemble_scalar_forms(m, nullptr, b, nullptr, ScalarBc::Periodic);
    CHECK(forms.B.max_symmetric_part() == 0.0);
    CHECK(forms.ndof < static_cast<int>(m.vertices.size()));
  }
  SUBCASE("graded disk, Neumann") {
    mesh::Mesh m = mesh::disk_cell(0.4, {0, 1.3, 0.05}, 0.05);
    fem::ScalarForms forms = fem::assemble_scalar_forms(m, nullptr, b, nullptr, ScalarBc::Neumann);
    CHECK(forms.B.max_symmetric_part() == 0.0);
  }
}

TEST_CASE("mass entries sum to the mesh area") {
  fem::ScalarCoef one = [](Vec2, mesh::Subdomain) { return 1.0; };
  SUBCASE("structured square") {
    mesh::Mesh m = mesh::structured_square(9, {0.0, 0.0}, {2.0, 1.5});
    fem::ScalarForms forms = fem::assemble_scalar_forms(m, one, nullptr, nullptr, ScalarBc::Neumann);
    CHECK(sum_entries(forms.M) == doctest::Approx(3.0).epsilon(1e-13));
    fem::AssemblyOptions lumped;
    lumped.lumped_mass = true;
    fem::ScalarForms fl = fem::assemble_scalar_forms(m, one, nullptr, nullptr, ScalarBc::Neumann, lumped);
    CHECK(sum_entries(fl.M) == doctest::Approx(3.0).epsilon(1e-13));
    // Lumping leaves only diagonal entries.
    for (int i = 0; i < fl.M.n; ++i)
      for (int k = fl.M.row_ptr[i]; k < fl.M.row_ptr[i + 1]; ++k)
        if (fl.M.col[static_cast<size_t>(k)] != i) CHECK(fl.M.val[static_cast<size_t>(k)] == 0.0);
  }
  SUBCASE("graded disk") {
    mesh::Mesh m = mesh::disk_cell(0.4, {0, 1.3, 0.04}, 0.08);
    fem::ScalarForms forms = fem::assemble_scalar_forms(m, one, nullptr, nullptr, ScalarBc::Neumann);
    CHECK(sum_entries(forms.M) == doctest::Approx(m.total_area()).epsilon(1e-12));
  }
}

TEST_CASE("poisson manufactured solution converges at second order") {
  fem::ScalarCoef f = [](Vec2 p, mesh::Subdomain) { return 2.0 * kPi * kPi * sinsin(p); };
  std::vector<double> errs;
  for (int n : {12, 24, 48}) {
    mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});
    fem::ScalarSolveResult r = fem::solve_drift(m, nullptr, f, 1e-12);
    CHECK(r.report.method == sparse::Method::CG);
    errs.push_back(fem::l2_error(r.field, sinsin));
  }
  for (size_t k = 0; k + 1 < errs.size(); ++k) {
    double order = std::log2(errs[k] / errs[k + 1]);
    CHECK(order >= 1.9);
    CHECK(order <= 2.4);
  }
}

TEST_CASE("potential solve with V=0 reduces to the poisson solve") {
  mesh::Mesh m = mesh::structured_square(16, {0.0, 0.0}, {1.0, 1.0});
  fem::ScalarCoef f = [](Vec2 p, mesh::Subdomain) { return 2.0 * kPi * kPi * sinsin(p); };
  fem::ScalarCoef zero_v = [](Vec2, mesh::Subdomain) { return 0.0; };
  fem::ScalarSolveResult pois = fem::solve_drift(m, nullptr, f, 1e-12);
  fem::ScalarSolveResult pot = fem::solve_potential(m, zero_v, f, 1e-12);
  CHECK(field_linf_diff(pois.field, pot.field) <= 1e-13);
}

TEST_CASE("potential manufactured solution converges at second order") {
  fem::ScalarCoef v = [](Vec2, mesh::Subdomain) { return 1.0; };
  fem::ScalarCoef g = [](Vec2 p, mesh::Subdomain) { return (2.0 * kPi * kPi + 1.0) * sinsin(p); };
  std::vector<double> errs;
  for (int n : {12, 24, 48}) {
    mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});
    fem::ScalarSolveResult r = fem::solve_potential(m, v, g, 1e-12);
    errs.push_back(fem::l2_error(r.field, sinsin));
  }
  for (size_t k = 0; k + 1 < errs.size(); ++k) CHECK(std::log2(errs[k] / errs[k + 1]) >= 1.9);
}

TEST_CASE("homogenized scalar solve: manufactured order and poisson consistency") {
  const double gamma = 3.7;
  fem::ScalarCoef zo = [gamma](Vec2, mesh::Subdomain) { return gamma; };
  fem::ScalarCoef f = [gamma](Vec2 p, mesh::Subdomain) {
    return (2.0 * kPi * kPi + gamma) * sinsin(p);
  };
  std::vector<double> errs;
  for (int n : {12, 24, 48}) {
    mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});
    fem::ScalarSolveResult r = fem::solve_homogenized_scalar(m, zo, nullptr, f, 1e-12);
    errs.push_back(fem::l2_error(r.field, sinsin));
  }
  for (size_t k = 0; k + 1 < errs.size(); ++k) CHECK(std::log2(errs[k] / errs[k + 1]) >= 1.9);

  mesh::Mesh m = mesh::structured_square(14, {0.0, 0.0}, {1.0, 1.0});
  fem::ScalarCoef fp = [](Vec2 p, mesh::Subdomain) { return 2.0 * kPi * kPi * sinsin(p); };
  fem::ScalarCoef zero = [](Vec2, mesh::Subdomain) { return 0.0; };
  fem::ScalarSolveResult a = fem::solve_homogenized_scalar(m, zero, nullptr, fp, 1e-12);
  fem::ScalarSolveResult b = fem::solve_drift(m, nullptr, fp, 1e-12);
  CHECK(field_linf_diff(a.field, b.field) <= 1e-13);
}

TEST_CASE("energy identities hold to 1e-8 for drift and zero-order solves") {
  fem::ScalarCoef one = [](Vec2, mesh::Subdomain) { return 1.0; };
  SUBCASE("swirly drift on the square") {
    mesh::Mesh m = mesh::structured_square(24, {0.0, 0.0}, {1.0, 1.0});
    fem::VectorCoef b = [](Vec2 p, mesh::Subdomain) {
      return Vec2{std::cos(2.0 * kPi * p.y) + 0.5, std::sin(3.0 * kPi * p.x)};
    };
    fem::ScalarSolveResult r = fem::solve_drift(m, b, one, 1e-11);
    CHECK(r.report.method == sparse::Method::GMRES);
    CHECK(r.energy_residual <= 1e-8);
    // Cross-check against field-level quantities: |u|_H1^2 == int u.
    double lhs = fem::h1_seminorm(r.field);
    double rhs = fem::integral(r.field);
    CHECK(std::fabs(lhs * lhs - rhs) / std::fabs(rhs) <= 1e-8);
  }
  SUBCASE("constant drift with zero-order term") {
    mesh::Mesh m = mesh::structured_square(20, {0.0, 0.0}, {1.0, 1.0});
    fem::VectorCoef b = [](Vec2, mesh::Subdomain) { return Vec2{0.4, -0.3}; };
    fem::ScalarCoef zo = [](Vec2, mesh::Subdomain) { return 2.0; };
    fem::ScalarSolveResult r = fem::solve_homogenized_scalar(m, zo, b, one, 1e-11);
    CHECK(r.energy_residual <= 1e-8);
  }
}

TEST_CASE("callback producing non-finite values raises CallbackDomainError") {
  mesh::Mesh m = mesh::structured_square(4, {0.0, 0.0}, {1.0, 1.0});
  fem::ScalarCoef bad = [](Vec2 p, mesh::Subdomain) { return 1.0 / (p.x - p.x); };
  CHECK_THROWS_AS(fem::assemble_scalar_forms(m, bad, nullptr, nullptr, ScalarBc::Neumann),
                  CallbackDomainError);
}

TEST_CASE("lumped mass keeps nonnegative data nonnegative") {
  mesh::Mesh m = mesh::structured_square(16, {0.0, 0.0}, {1.0, 1.0});
  fem::ScalarCoef v = [](Vec2 p, mesh::Subdomain) {
    return 5.0 + 4.0 * std::sin(2.0 * kPi * p.x) * std::sin(2.0 * kPi * p.y);
  };
  fem::ScalarCoef g = [](Vec2 p, mesh::Subdomain) {
    return 2.0 + std::cos(2.0 * kPi * p.x) * std::cos(kPi * p.y);
  };
  fem::AssemblyOptions lumped;
  lumped.lumped_mass = true;
  fem::ScalarSolveResult r = fem::solve_potential(m, v, g, 1e-12, lumped);
  double mn = *std::min_element(r.field.values.begin(), r.field.values.end());
  CHECK(mn >= -1e-12);
}

TEST_CASE("z cell solve converges to the radial profile at second order") {
  const closed_form::AnnulusSpec ann{0.4, 0.05};
  const double eps = 0.7;
  closed_form::ZProfile zp = closed_form::z_profile(eps, ann);
  std::vector<double> linf;
  double zmax = 0.0;
  for (int level : {0, 1}) {
    mesh::Mesh m = mesh::disk_cell(ann.R, {0, 1.3, 0.05}, ann.r_eps, level);
    fem::ScalarSolveResult r = fem::solve_z_cell(m, eps, ann);
    CHECK(r.report.method == sparse::Method::CG);  // no pinning needed
    double e = 0.0;
    for (size_t vtx = 0; vtx < m.vertices.size(); ++vtx) {
      double rr = m.vertices[vtx].norm();
      double exact = zp.value(rr);
      e = std::max(e, std::fabs(r.field.values[vtx] - exact));
      zmax = std::max(zmax, std::fabs(exact));
    }
    linf.push_back(e);
  }
  CHECK(linf[0] / zmax >= 1e-9);  // errors are genuinely nonzero
  CHECK(linf[0] / linf[1] >= 3.5);
}

TEST_CASE("z cell averages track the finite-difference oracle and its limit") {
  const double mu = 50.0, R = 0.4;
  const double coth1 = (std::exp(2.0) + 1.0) / (std::exp(2.0) - 1.0);
  std::vector<double> dist;
  for (double eps : {0.25, 1.0 / 6.0}) {
    const double re = closed_form::scalar_radius(mu, eps, R);
    const closed_form::AnnulusSpec ann{R, re};
    mesh::Mesh m = mesh::disk_cell(R, {0, 1.3, 0.02}, re);
    fem::ScalarSolveResult r = fem::solve_z_cell(m, eps, ann);

    // Average over the unit cell: integral over the disk plus the constant
    // extension Z(R) on the remaining area.
    double over_disk = fem::integral(r.field);
    std::vector<int> tags = m.boundary_vertex_tag();
    double zr = 0.0;
    int nb = 0;
    for (size_t vtx = 0; vtx < m.vertices.size(); ++vtx)
      if (tags[vtx] != -1) {
        zr += r.field.values[vtx];
        ++nb;
      }
    zr /= nb;
    const double avg = over_disk + (1.0 - kPi * R * R) * zr;

    const double L = std::fabs(std::log(re));
    oracle::RadialZSolution fd = oracle::fd_radial_z(eps, R, re, static_cast<int>(2000 * std::max(1.0, L)));
    CHECK(std::fabs(avg - fd.cell_average()) / fd.cell_average() <= 3e-3);
    const closed_form::ZProfile zp = closed_form::z_profile(eps, ann);
    CHECK(std::fabs(avg - zp.cell_average()) / zp.cell_average() <= 3e-3);
    dist.push_back(std::fabs(avg * mu - coth1));
  }
  // The scaled averages approach coth(1) from below as eps shrinks.
  CHECK(dist[1] <= 0.7 * dist[0]);
}

TEST_CASE("drift and potential solves agree through the exponential change of unknown") {
  const double mu = 50.0, eps = 0.25, R = 0.4;
  LatticeCase lc = make_lattice(mu, eps, R, 0.05);
  const LatticeDrift& d = lc.drift;

  fem::ScalarCoef one = [](Vec2, mesh::Subdomain) { return 1.0; };
  fem::VectorCoef b = [&d](Vec2 p, mesh::Subdomain s) { return d.grad_w(p, s); };
  fem::ScalarSolveResult drift = fem::solve_drift(lc.mesh, b, one, 1e-11);
  CHECK(drift.energy_residual <= 1e-8);

  fem::ScalarCoef pot = [&d](Vec2 p, mesh::Subdomain s) { return d.grad_w_sq(p, s); };
  fem::ScalarCoef g = [&d](Vec2 p, mesh::Subdomain) { return std::exp(1.0 - d.w(p)); };
  fem::ScalarSolveResult trans = fem::solve_potential(lc.mesh, pot, g, 1e-11);

  fem::ScalarField recovered = trans.field;
  for (size_t vtx = 0; vtx < lc.mesh.vertices.size(); ++vtx)
    recovered.values[vtx] *= std::exp(d.w(lc.mesh.vertices[vtx]) - 1.0);

  double num = 0.0;
  {
    fem::ScalarField diff = recovered;
    for (size_t i = 0; i < diff.values.size(); ++i) diff.values[i] -= drift.field.values[i];
    num = fem::l2_norm(diff);
  }
  double den = fem::l2_norm(drift.field);
  CHECK(num / den <= 0.05);
}

TEST_CASE("lattice drift solves keep a uniform H1 bound across eps") {
  fem::ScalarCoef one = [](Vec2, mesh::Subdomain) { return 1.0; };
  std::vector<double> h1;
  double h1_poisson = 0.0;
  for (double eps : {0.25, 0.2}) {
    LatticeCase lc = make_lattice(50.0, eps, 0.4, 0.06);
    const LatticeDrift& d = lc.drift;
    fem::VectorCoef b = [&d](Vec2 p, mesh::Subdomain s) { return d.grad_w(p, s); };
    fem::ScalarSolveResult r = fem::solve_drift(lc.mesh, b, one, 1e-10);
    CHECK(r.energy_residual <= 1e-8);
    h1.push_back(fem::h1_seminorm(r.field));
    if (eps == 0.25) {
      fem::ScalarSolveResult pois = fem::solve_drift(lc.mesh, nullptr, one, 1e-10);
      h1_poisson = fem::h1_seminorm(pois.field);
    }
  }
  // The zero-order limit term only dissipates energy: the drift solutions stay
  // below the drift-free Poisson energy and do not blow up as eps shrinks.
  CHECK(h1[0] <= h1_poisson);
  CHECK(h1[1] <= h1_poisson);
  CHECK(h1[1] / h1[0] >= 0.5);
  CHECK(h1[1] / h1[0] <= 1.5);
}

TEST_CASE("csv export writes one line per vertex") {
  mesh::Mesh m = mesh::structured_square(5, {0.0, 0.0}, {1.0, 1.0});
  fem::ScalarCoef f = [](Vec2 p, mesh::Subdomain) { return p.x; };
  fem::ScalarSolveResult r = fem::solve_drift(m, nullptr, f, 1e-10);
  const std::string path = "fem_scalar_test_field.csv";
  fem::write_csv(r.field, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == static_cast<int>(m.vertices.size()) + 1);
  std::remove(path.c_str());
}
