#include "homog/fem_scalar.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "homog/solvers.hpp"
#include "fem_internal.hpp"

namespace homog::fem {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kChunk = 8192;

struct DofMap {
  int ndof = 0;
  std::vector<int> dof_of_vertex;
  std::vector<int> vertex_of_dof;
};

DofMap build_dof_map(const mesh::Mesh& m, ScalarBc bc) {
  const int nv = static_cast<int>(m.vertices.size());
  DofMap d;
  d.dof_of_vertex.assign(static_cast<size_t>(nv), -1);
  std::vector<int> master;
  if (bc == ScalarBc::Periodic) master = m.periodic_master_map();
  std::vector<int> btag;
  if (bc == ScalarBc::Dirichlet) btag = m.boundary_vertex_tag();
  for (int v = 0; v < nv; ++v) {
    if (bc == ScalarBc::Dirichlet && btag[static_cast<size_t>(v)] != -1) continue;
    if (bc == ScalarBc::Periodic && master[static_cast<size_t>(v)] != v) continue;
    d.dof_of_vertex[static_cast<size_t>(v)] = d.ndof++;
    d.vertex_of_dof.push_back(v);
  }
  if (bc == ScalarBc::Periodic) {
    for (int v = 0; v < nv; ++v) {
      int mv = master[static_cast<size_t>(v)];
      if (mv != v) d.dof_of_vertex[static_cast<size_t>(v)] = d.dof_of_vertex[static_cast<size_t>(mv)];
    }
  }
  return d;
}

// Per-triangle contributions. The drift entries are stored once per vertex
// pair; the merge step writes the exact +/- pair so B + B^T vanishes at the
// bit level.
struct ElemScalar {
  double K[3][3];
  double M[3][3];
  double B[3];  // pairs (0,1), (0,2), (1,2)
  double f[3];
  bool finite;
};

void element_forms(const mesh::Mesh& m, int t, const ScalarCoef& c, const VectorCoef& b,
                   const ScalarCoef& src, ElemScalar& e) {
  TriGeom g(m, t);
  const mesh::Subdomain sub = m.subdomain[static_cast<size_t>(t)];
  const TriQuad& q =
      (sub == mesh::Subdomain::Annulus) ? quad_deg5() : quad_mid3();

  e.finite = true;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      e.K[i][j] = g.area * g.grad[i].dot(g.grad[j]);
      e.M[i][j] = 0.0;
    }
    e.B[i] = 0.0;
    e.f[i] = 0.0;
  }

  for (int k = 0; k < q.n; ++k) {
    const std::array<double, 3>& l = q.bary[static_cast<size_t>(k)];
    const double wq = q.w[static_cast<size_t>(k)] * g.area;
    const Vec2 p = g.point(l);
    if (c) {
      const double cv = c(p, sub);
      if (!std::isfinite(cv)) e.finite = false;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e.M[i][j] += wq * cv * l[static_cast<size_t>(i)] * l[static_cast<size_t>(j)];
    }
    if (src) {
      const double fv = src(p, sub);
      if (!std::isfinite(fv)) e.finite = false;
      for (int i = 0; i < 3; ++i) e.f[i] += wq * fv * l[static_cast<size_t>(i)];
    }
    if (b) {
      const Vec2 bv = b(p, sub);
      if (!std::isfinite(bv.x) || !std::isfinite(bv.y)) e.finite = false;
      const double bg[3] = {bv.dot(g.grad[0]), bv.dot(g.grad[1]), bv.dot(g.grad[2])};
      // B_ij = int (b.grad phi_j) phi_i - (b.grad phi_i) phi_j for i<j
      e.B[0] += wq * (bg[1] * l[0] - bg[0] * l[1]);
      e.B[1] += wq * (bg[2] * l[0] - bg[0] * l[2]);
      e.B[2] += wq * (bg[2] * l[1] - bg[1] * l[2]);
    }
  }
}

double quad_form(const sparse::CsrMatrix& A, const std::vector<double>& x) {
  if (A.n == 0 || A.nnz() == 0) return 0.0;
  std::vector<double> y(x.size(), 0.0);
  A.mul(x.data(), y.data());
  return sparse::dot(x, y);
}

sparse::CsrMatrix csr_sum(int n, std::initializer_list<const sparse::CsrMatrix*> terms) {
  std::vector<sparse::Triplet> trip;
  size_t total = 0;
  for (const sparse::CsrMatrix* a : terms) total += static_cast<size_t>(a->nnz());
  trip.reserve(total);
  for (const sparse::CsrMatrix* a : terms) {
    if (a->n == 0) continue;
    for (int i = 0; i < a->n; ++i)
      for (int k = a->row_ptr[static_cast<size_t>(i)]; k < a->row_ptr[static_cast<size_t>(i) + 1]; ++k)
        trip.push_back({i, a->col[static_cast<size_t>(k)], a->val[static_cast<size_t>(k)]});
  }
  return sparse::CsrMatrix::from_triplets(n, trip);
}

ScalarSolveResult solve_forms(ScalarForms forms, bool spd, double tol) {
  sparse::CsrMatrix A = csr_sum(forms.ndof, {&forms.K, &forms.M, &forms.B});
  std::vector<double> x;
  sparse::SolveReport rep;
  if (spd) {
    std::tie(x, rep) = sparse::solve_spd(A, forms.f, tol);
  } else {
    std::tie(x, rep) = sparse::solve_general(A, forms.f, tol);
  }
  const double uku = quad_form(forms.K, x);
  const double umu = quad_form(forms.M, x);
  const double fu = sparse::dot(forms.f, x);
  const double denom = std::max(std::abs(fu), 1e-300);
  ScalarSolveResult r;
  r.energy_residual = std::abs(uku + umu - fu) / denom;
  r.report = std::move(rep);
  r.field = forms.expand(x);
  return r;
}

}  // namespace

ScalarField ScalarForms::expand(const std::vector<double>& x) const {
  ScalarField u;
  u.mesh = mesh;
  u.values.assign(mesh->vertices.size(), 0.0);
  for (size_t v = 0; v < u.values.size(); ++v) {
    const int d = dof_of_vertex[v];
    if (d >= 0) u.values[v] = x[static_cast<size_t>(d)];
  }
  return u;
}

std::vector<double> ScalarForms::restrict_to_dofs(const std::vector<double>& vertex_values) const {
  std::vector<double> x(static_cast<size_t>(ndof), 0.0);
  for (int d = 0; d < ndof; ++d)
    x[static_cast<size_t>(d)] = vertex_values[static_cast<size_t>(vertex_of_dof[static_cast<size_t>(d)])];
  return x;
}

ScalarForms assemble_scalar_forms(const mesh::Mesh& mesh, const ScalarCoef& c,
                                  const VectorCoef& b, const ScalarCoef& f, ScalarBc bc,
                                  const AssemblyOptions& opts) {
  const int nt = static_cast<int>(mesh.triangles.size());
  DofMap dm = build_dof_map(mesh, bc);

  ScalarForms forms;
  forms.mesh = &mesh;
  forms.bc = bc;
  forms.ndof = dm.ndof;
  forms.dof_of_vertex = std::move(dm.dof_of_vertex);
  forms.vertex_of_dof = std::move(dm.vertex_of_dof);
  forms.f.assign(static_cast<size_t>(forms.ndof), 0.0);

  std::vector<sparse::Triplet> tk, tm, tb;
  tk.reserve(static_cast<size_t>(nt) * 9);
  if (c) tm.reserve(static_cast<size_t>(nt) * (opts.lumped_mass ? 3 : 9));
  if (b) tb.reserve(static_cast<size_t>(nt) * 12);

  std::vector<ElemScalar> buf(static_cast<size_t>(std::min(nt, kChunk)));
  for (int start = 0; start < nt; start += kChunk) {
    const int end = std::min(nt, start + kChunk);
#pragma omp parallel for schedule(static)
    for (int t = start; t < end; ++t)
      element_forms(mesh, t, c, b, f, buf[static_cast<size_t>(t - start)]);

    // Serial accumulation in triangle order keeps every matrix and the load
    // bitwise independent of the thread count.
    for (int t = start; t < end; ++t) {
      const ElemScalar& e = buf[static_cast<size_t>(t - start)];
      if (!e.finite)
        throw CallbackDomainError("coefficient callback produced a non-finite value on triangle " +
                                  std::to_string(t));
      const auto& tri = mesh.triangles[static_cast<size_t>(t)];
      int d[3];
      for (int i = 0; i < 3; ++i) d[i] = forms.dof_of_vertex[static_cast<size_t>(tri[i])];
      for (int i = 0; i < 3; ++i) {
        if (d[i] < 0) continue;
        forms.f[static_cast<size_t>(d[i])] += e.f[i];
        for (int j = 0; j < 3; ++j) {
          if (d[j] < 0) continue;
          tk.push_back({d[i], d[j], e.K[i][j]});
          if (c && !opts.lumped_mass) tm.push_back({d[i], d[j], e.M[i][j]});
        }
        if (c && opts.lumped_mass)
          tm.push_back({d[i], d[i], e.M[i][0] + e.M[i][1] + e.M[i][2]});
      }
      if (b) {
        static const int pi_[3] = {0, 0, 1};
        static const int pj_[3] = {1, 2, 2};
        for (int k = 0; k < 3; ++k) {
          const int di = d[pi_[k]], dj = d[pj_[k]];
          if (di < 0 || dj < 0) continue;
          tb.push_back({di, dj, e.B[k]});
          tb.push_back({dj, di, -e.B[k]});
        }
      }
    }
  }

  forms.K = sparse::CsrMatrix::from_triplets(forms.ndof, tk);
  // Absent callbacks leave a dimensionless empty matrix (n == 0), which the
  // solve paths use to tell "no drift" from "drift that happens to vanish".
  forms.M = c ? sparse::CsrMatrix::from_triplets(forms.ndof, tm) : sparse::CsrMatrix{};
  forms.B = b ? sparse::CsrMatrix::from_triplets(forms.ndof, tb) : sparse::CsrMatrix{};
  return forms;
}

ScalarSolveResult solve_drift(const mesh::Mesh& mesh, const VectorCoef& b_eps,
                              const ScalarCoef& f, double tol) {
  ScalarForms forms = assemble_scalar_forms(mesh, nullptr, b_eps, f, ScalarBc::Dirichlet);
  const bool spd = forms.B.n == 0;
  return solve_forms(std::move(forms), spd, tol);
}

ScalarSolveResult solve_potential(const mesh::Mesh& mesh, const ScalarCoef& V,
                                  const ScalarCoef& g, double tol, const AssemblyOptions& opts) {
  ScalarForms forms = assemble_scalar_forms(mesh, V, nullptr, g, ScalarBc::Dirichlet, opts);
  return solve_forms(std::move(forms), /*spd=*/true, tol);
}

ScalarSolveResult solve_z_cell(const mesh::Mesh& mesh, double eps,
                               const closed_form::AnnulusSpec& annulus, double tol) {
  annulus.validate();
  if (!(eps > 0.0)) throw ArgumentError("solve_z_cell: eps must be positive");
  const double a2 = annulus.alpha() * annulus.alpha();
  ScalarCoef c = [a2](Vec2 p, mesh::Subdomain s) {
    if (s != mesh::Subdomain::Annulus) return 0.0;
    return a2 / (p.x * p.x + p.y * p.y);
  };
  const double load = eps * eps / (kPi * annulus.R * annulus.R);
  ScalarCoef f = [load](Vec2, mesh::Subdomain) { return load; };
  ScalarForms forms = assemble_scalar_forms(mesh, c, nullptr, f, ScalarBc::Neumann);
  return solve_forms(std::move(forms), /*spd=*/true, tol);
}

ScalarSolveResult solve_homogenized_scalar(const mesh::Mesh& mesh, const ScalarCoef& zero_order,
                                           const VectorCoef& b_limit, const ScalarCoef& f,
                                           double tol) {
  ScalarForms forms = assemble_scalar_forms(mesh, zero_order, b_limit, f, ScalarBc::Dirichlet);
  const bool spd = forms.B.n == 0;
  return solve_forms(std::move(forms), spd, tol);
}

double integral(const ScalarField& u) {
  const mesh::Mesh& m = *u.mesh;
  const TriQuad& q = quad_deg5();
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
    TriGeom g(m, t);
    const auto& tri = m.triangles[static_cast<size_t>(t)];
    for (int k = 0; k < q.n; ++k) {
      double uh = 0.0;
      for (int i = 0; i < 3; ++i)
        uh += q.bary[static_cast<size_t>(k)][static_cast<size_t>(i)] * u.values[static_cast<size_t>(tri[i])];
      s += q.w[static_cast<size_t>(k)] * g.area * uh;
    }
  }
  return s;
}

namespace {
double l2_quad(const ScalarField& u, const std::function<double(Vec2)>* exact) {
  const mesh::Mesh& m = *u.mesh;
  const TriQuad& q = quad_deg5();
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
    TriGeom g(m, t);
    const auto& tri = m.triangles[static_cast<size_t>(t)];
    for (int k = 0; k < q.n; ++k) {
      double uh = 0.0;
      for (int i = 0; i < 3; ++i)
        uh += q.bary[static_cast<size_t>(k)][static_cast<size_t>(i)] * u.values[static_cast<size_t>(tri[i])];
      if (exact) uh -= (*exact)(g.point(q.bary[static_cast<size_t>(k)]));
      s += q.w[static_cast<size_t>(k)] * g.area * uh * uh;
    }
  }
  return std::sqrt(s);
}
}  // namespace

double l2_norm(const ScalarField& u) { return l2_quad(u, nullptr); }

double l2_error(const ScalarField& u, const std::function<double(Vec2)>& exact) {
  return l2_quad(u, &exact);
}

Vec2 gradient_on_triangle(const ScalarField& u, int tri) {
  TriGeom g(*u.mesh, tri);
  const auto& tv = u.mesh->triangles[static_cast<size_t>(tri)];
  Vec2 gr{0.0, 0.0};
  for (int i = 0; i < 3; ++i) gr += g.grad[static_cast<size_t>(i)] * u.values[static_cast<size_t>(tv[i])];
  return gr;
}

double h1_seminorm(const ScalarField& u) {
  const mesh::Mesh& m = *u.mesh;
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(m.triangles.size()); ++t) {
    TriGeom g(m, t);
    const auto& tri = m.triangles[static_cast<size_t>(t)];
    Vec2 gr{0.0, 0.0};
    for (int i = 0; i < 3; ++i) gr += g.grad[static_cast<size_t>(i)] * u.values[static_cast<size_t>(tri[i])];
    s += g.area * gr.dot(gr);
  }
  return std::sqrt(s);
}

void write_csv(const ScalarField& u, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_csv: cannot open " + path);
  out << "vertex,value\n";
  char line[64];
  for (size_t v = 0; v < u.values.size(); ++v) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", v, u.values[v]);
    out << line;
  }
}

}  // namespace homog::fem
