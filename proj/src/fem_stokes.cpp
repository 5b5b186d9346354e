#include "homog/fem_stokes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <unordered_map>

#include "fem_internal.hpp"

namespace homog::fem {

namespace {

constexpr int kChunk = 4096;

struct P2Basis {
  std::array<double, 6> s{};
  std::array<Vec2, 6> g{};
};

// Quadratic basis: vertex functions l(2l - 1), edge functions 4 l_a l_b with
// local edge k opposite local vertex k.
P2Basis p2_eval(const TriGeom& geo, const std::array<double, 3>& bary) {
  P2Basis b;
  for (int i = 0; i < 3; ++i) {
    b.s[i] = bary[i] * (2.0 * bary[i] - 1.0);
    b.g[i] = geo.grad[i] * (4.0 * bary[i] - 1.0);
  }
  for (int k = 0; k < 3; ++k) {
    const int i1 = (k + 1) % 3, i2 = (k + 2) % 3;
    b.s[3 + k] = 4.0 * bary[i1] * bary[i2];
    b.g[3 + k] = geo.grad[i2] * (4.0 * bary[i1]) + geo.grad[i1] * (4.0 * bary[i2]);
  }
  return b;
}

// Ordered pairs (alpha < beta) of the 12 local velocity dofs; the skew terms
// are stored once per pair and emitted as exact +/- twins.
struct PairTable {
  int a[66], b[66];
  PairTable() {
    int k = 0;
    for (int i = 0; i < 12; ++i)
      for (int j = i + 1; j < 12; ++j) {
        a[k] = i;
        b[k] = j;
        ++k;
      }
  }
};
const PairTable& pair_table() {
  static const PairTable t;
  return t;
}

struct ElemStokes {
  double K[6][6];    // per-component stiffness
  double C[12][3];   // -int p div(phi), shared by both saddle blocks
  double S[12][12];  // symmetric part of the zero-order mass
  double skw[66];    // skew values (drift + skew zero-order), alpha < beta
  double pw[3];      // integrals of the pressure basis
  double vw[6];      // integrals of the velocity basis
  bool has_S, has_skw, finite;
};

void add_j_mass(ElemStokes& e, const P2Basis& bb, double coef) {
  static const double Jm[2][2] = {{0.0, -1.0}, {1.0, 0.0}};
  const PairTable& pt = pair_table();
  for (int k = 0; k < 66; ++k) {
    const int al = pt.a[k], be = pt.b[k];
    const int ca = al & 1, cb = be & 1;
    if (ca == cb) continue;
    e.skw[k] += coef * bb.s[al >> 1] * bb.s[be >> 1] * Jm[ca][cb];
  }
}

ElemStokes element_stokes(const mesh::Mesh& m, const TaylorHoodSpace& sp, const DriftSpec& drift,
                          const MatrixCoef& zero, int t) {
  ElemStokes e{};
  e.finite = true;
  const mesh::Subdomain sub = m.subdomain[t];
  const bool core = sub == mesh::Subdomain::DiskCore;
  e.has_S = static_cast<bool>(zero);
  e.has_skw = static_cast<bool>(zero) || drift.kind == DriftSpec::Kind::Smooth ||
              (drift.kind == DriftSpec::Kind::Concentrated && core);
  (void)sp;

  const TriGeom geo(m, t);
  const TriQuad& q = quad_deg5();
  const PairTable& pt = pair_table();
  for (int iq = 0; iq < q.n; ++iq) {
    const double wq = q.w[iq] * geo.area;
    const P2Basis bb = p2_eval(geo, q.bary[iq]);
    const Vec2 x = geo.point(q.bary[iq]);

    for (int a = 0; a < 6; ++a)
      for (int b = a; b < 6; ++b) {
        const double v = wq * bb.g[a].dot(bb.g[b]);
        e.K[a][b] += v;
        if (a != b) e.K[b][a] += v;
      }
    for (int a = 0; a < 6; ++a) {
      const double gc[2] = {bb.g[a].x, bb.g[a].y};
      for (int c = 0; c < 2; ++c)
        for (int j = 0; j < 3; ++j) e.C[2 * a + c][j] -= wq * q.bary[iq][j] * gc[c];
      e.vw[a] += wq * bb.s[a];
    }
    for (int j = 0; j < 3; ++j) e.pw[j] += wq * q.bary[iq][j];

    if (zero) {
      const Mat2 Z = zero(x, sub);
      if (!(std::isfinite(Z.m[0][0]) && std::isfinite(Z.m[0][1]) && std::isfinite(Z.m[1][0]) &&
            std::isfinite(Z.m[1][1])))
        e.finite = false;
      const double s01 = 0.5 * (Z.m[0][1] + Z.m[1][0]);
      const double sym[2][2] = {{Z.m[0][0], s01}, {s01, Z.m[1][1]}};
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) {
          const double sab = wq * bb.s[a] * bb.s[b];
          for (int ca = 0; ca < 2; ++ca)
            for (int cb = 0; cb < 2; ++cb) e.S[2 * a + ca][2 * b + cb] += sab * sym[ca][cb];
        }
      const double jc = 0.5 * (Z.m[1][0] - Z.m[0][1]);
      if (jc != 0.0) add_j_mass(e, bb, wq * jc);
    }
    if (drift.kind == DriftSpec::Kind::Concentrated && core && drift.weight != 0.0)
      add_j_mass(e, bb, wq * drift.weight);
    if (drift.kind == DriftSpec::Kind::Smooth) {
      const Vec2 v = drift.v(x, sub);
      if (!(std::isfinite(v.x) && std::isfinite(v.y))) e.finite = false;
      const double vc[2] = {v.x, v.y};
      for (int k = 0; k < 66; ++k) {
        const int al = pt.a[k], be = pt.b[k];
        const int a = al >> 1, ca = al & 1, b = be >> 1, cb = be & 1;
        const double gb_ca = (ca == 0) ? bb.g[b].x : bb.g[b].y;
        const double ga_cb = (cb == 0) ? bb.g[a].x : bb.g[a].y;
        e.skw[k] += wq * (vc[cb] * gb_ca * bb.s[a] - vc[ca] * ga_cb * bb.s[b]);
      }
    }
  }
  return e;
}

int64_t edge_key(int a, int b) {
  const int lo = std::min(a, b), hi = std::max(a, b);
  return (static_cast<int64_t>(lo) << 32) | static_cast<int64_t>(hi);
}

struct QuadPointVisitor {
  const StokesField* u;
  // Per quadrature point: weight, position, velocity, gradient, pressure.
  template <typename F>
  void run(F&& body) const {
    const mesh::Mesh& m = *u->mesh;
    const TaylorHoodSpace& sp = *u->space;
    const TriQuad& q = quad_deg5();
    const int nv = sp.n_vertices;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
      const TriGeom geo(m, static_cast<int>(t));
      const auto& tri = m.triangles[t];
      const int node[6] = {tri[0],      tri[1],
                           tri[2],      nv + sp.tri_edges[t][0],
                           nv + sp.tri_edges[t][1], nv + sp.tri_edges[t][2]};
      for (int iq = 0; iq < q.n; ++iq) {
        const double wq = q.w[iq] * geo.area;
        const P2Basis bb = p2_eval(geo, q.bary[iq]);
        Vec2 val{0.0, 0.0};
        Mat2 grad;
        for (int a = 0; a < 6; ++a) {
          const double uxa = u->vel[2 * static_cast<size_t>(node[a])];
          const double uya = u->vel[2 * static_cast<size_t>(node[a]) + 1];
          val.x += uxa * bb.s[a];
          val.y += uya * bb.s[a];
          grad.m[0][0] += uxa * bb.g[a].x;
          grad.m[0][1] += uxa * bb.g[a].y;
          grad.m[1][0] += uya * bb.g[a].x;
          grad.m[1][1] += uya * bb.g[a].y;
        }
        double pv = 0.0;
        for (int j = 0; j < 3; ++j) pv += q.bary[iq][j] * u->pres[tri[j]];
        body(static_cast<int>(t), wq, geo.point(q.bary[iq]), val, grad, pv);
      }
    }
  }
};

double frobenius2(const Mat2& a) {
  return a.m[0][0] * a.m[0][0] + a.m[0][1] * a.m[0][1] + a.m[1][0] * a.m[1][0] +
         a.m[1][1] * a.m[1][1];
}

// <f, u_h> with the assembly quadrature; used by the energy identities.
double load_inner(const StokesField& u, const VectorCoef& f) {
  const mesh::Mesh& m = *u.mesh;
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int t, double wq, Vec2 x, Vec2 val, const Mat2&, double) {
    const Vec2 fv = f(x, m.subdomain[t]);
    acc += wq * (fv.x * val.x + fv.y * val.y);
  });
  return acc;
}

double sym_zero_energy(const StokesField& u, const MatrixCoef& zero) {
  const mesh::Mesh& m = *u.mesh;
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int t, double wq, Vec2 x, Vec2 val, const Mat2&, double) {
    const Mat2 Z = zero(x, m.subdomain[t]);
    acc += wq * Z.apply(val).dot(val);
  });
  return acc;
}

double relative_gap(double lhs, double rhs) {
  return std::abs(lhs - rhs) / std::max(std::abs(rhs), 1e-300);
}

StokesSolveResult finish_general_solve(const StokesSystem& sys, const std::vector<double>& rhs,
                                       double tol, const std::vector<double>* x0) {
  auto [x, rep] = sparse::solve_general(sys.A, rhs, tol, 150, 40000, x0);
  StokesSolveResult r;
  r.field = sys.expand(x);
  r.report = std::move(rep);
  r.div_residual = divergence_residual(sys, r.field);
  r.pressure_mean_abs = std::abs(pressure_mean(r.field));
  r.dofs = std::move(x);
  return r;
}

void require_periodic(const mesh::Mesh& m, const char* who) {
  if (m.periodic_pairs.empty())
    throw ArgumentError(std::string(who) + " requires a mesh with periodic pairs");
}

}  // namespace

Vec2 TaylorHoodSpace::node_position(int node) const {
  if (node < n_vertices) return mesh->vertices[node];
  const auto& ev = edge_vertices[node - n_vertices];
  const Vec2 a = mesh->vertices[ev[0]], b = mesh->vertices[ev[1]];
  return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
}

std::shared_ptr<const TaylorHoodSpace> build_taylor_hood(const mesh::Mesh& mesh) {
  auto sp = std::make_shared<TaylorHoodSpace>();
  sp->mesh = &mesh;
  sp->n_vertices = static_cast<int>(mesh.vertices.size());
  sp->tri_edges.assign(mesh.triangles.size(), {-1, -1, -1});
  std::unordered_map<int64_t, int> ids;
  ids.reserve(3 * mesh.triangles.size());
  for (size_t t = 0; t < mesh.triangles.size(); ++t)
    for (int k = 0; k < 3; ++k) {
      const int a = mesh.triangles[t][(k + 1) % 3], b = mesh.triangles[t][(k + 2) % 3];
      const int64_t key = edge_key(a, b);
      auto it = ids.find(key);
      if (it == ids.end()) {
        it = ids.emplace(key, sp->n_edges++).first;
        sp->edge_vertices.push_back({std::min(a, b), std::max(a, b)});
      }
      sp->tri_edges[t][k] = it->second;
    }
  return sp;
}

StokesSystem assemble_stokes(const mesh::Mesh& mesh, const DriftSpec& drift,
                             const MatrixCoef& zero_order, StokesBc bc,
                             const BoundaryVelocity& dirichlet_data) {
  if (mesh.triangles.empty()) throw ArgumentError("assemble_stokes: empty mesh");
  if (drift.kind == DriftSpec::Kind::Smooth && !drift.v)
    throw ArgumentError("smooth drift requires a velocity callback");

  StokesSystem sys;
  sys.mesh = &mesh;
  sys.space = build_taylor_hood(mesh);
  sys.bc = bc;
  const TaylorHoodSpace& sp = *sys.space;
  const int nv = sp.n_vertices, ne = sp.n_edges, nn = nv + ne;

  std::unordered_map<int64_t, int> edge_of;
  edge_of.reserve(ne);
  for (int e = 0; e < ne; ++e)
    edge_of.emplace(edge_key(sp.edge_vertices[e][0], sp.edge_vertices[e][1]), e);

  std::vector<int> vmaster, emaster(ne);
  for (int e = 0; e < ne; ++e) emaster[e] = e;
  std::vector<char> vel_fixed(nn, 0);
  sys.lift.assign(2 * static_cast<size_t>(nn), 0.0);

  if (bc == StokesBc::Dirichlet) {
    const std::vector<int> btag = mesh.boundary_vertex_tag();
    for (int v = 0; v < nv; ++v)
      if (btag[v] >= 0) {
        vel_fixed[v] = 1;
        if (dirichlet_data) {
          const Vec2 g = dirichlet_data(mesh.vertices[v], btag[v]);
          sys.lift[2 * static_cast<size_t>(v)] = g.x;
          sys.lift[2 * static_cast<size_t>(v) + 1] = g.y;
        }
      }
    for (const auto& be : mesh.boundary_edges) {
      const auto it = edge_of.find(edge_key(be.a, be.b));
      if (it == edge_of.end())
        throw PairingError("boundary edge is not an edge of any triangle");
      const int node = nv + it->second;
      vel_fixed[node] = 1;
      if (dirichlet_data) {
        const Vec2 g = dirichlet_data(sp.node_position(node), static_cast<int>(be.tag));
        sys.lift[2 * static_cast<size_t>(node)] = g.x;
        sys.lift[2 * static_cast<size_t>(node) + 1] = g.y;
      }
    }
  } else {
    require_periodic(mesh, "periodic Stokes assembly");
    vmaster = mesh.periodic_master_map();
    // Congruent side edges share the resolved endpoints of their vertices;
    // group boundary edges by that key and alias each pair to one edge dof.
    std::unordered_map<int64_t, std::array<int, 3>> groups;  // {count, e1, e2}
    for (const auto& be : mesh.boundary_edges) {
      const auto it = edge_of.find(edge_key(be.a, be.b));
      if (it == edge_of.end())
        throw PairingError("boundary edge is not an edge of any triangle");
      auto& g = groups[edge_key(vmaster[be.a], vmaster[be.b])];
      if (g[0] < 2) g[1 + g[0]] = it->second;
      g[0]++;
    }
    for (const auto& [key, g] : groups) {
      (void)key;
      if (g[0] == 1) continue;
      if (g[0] > 2) throw PairingError("periodic edge group with more than two sides");
      emaster[std::max(g[1], g[2])] = std::min(g[1], g[2]);
    }
  }

  // Velocities are numbered before all pressures. The pressure rows couple
  // to the edge bubbles (the vertex-velocity blocks cancel to roundoff on
  // symmetric patches), so the incomplete factorization can only form usable
  // pressure pivots if every velocity column precedes every pressure row.
  sys.dof_ux.assign(nn, -1);
  sys.dof_uy.assign(nn, -1);
  sys.dof_p.assign(nv, -1);
  int c = 0;
  for (int v = 0; v < nv; ++v) {
    if (bc == StokesBc::Periodic && vmaster[v] != v) continue;
    if (!vel_fixed[v]) {
      sys.dof_ux[v] = c++;
      sys.dof_uy[v] = c++;
    }
  }
  for (int e = 0; e < ne; ++e) {
    if (bc == StokesBc::Periodic && emaster[e] != e) continue;
    if (!vel_fixed[nv + e]) {
      sys.dof_ux[nv + e] = c++;
      sys.dof_uy[nv + e] = c++;
    }
  }
  for (int v = 0; v < nv; ++v) {
    if (bc == StokesBc::Periodic && vmaster[v] != v) continue;
    sys.dof_p[v] = c++;
  }
  if (bc == StokesBc::Periodic) {
    for (int v = 0; v < nv; ++v)
      if (vmaster[v] != v) {
        sys.dof_ux[v] = sys.dof_ux[vmaster[v]];
        sys.dof_uy[v] = sys.dof_uy[vmaster[v]];
        sys.dof_p[v] = sys.dof_p[vmaster[v]];
      }
    for (int e = 0; e < ne; ++e)
      if (emaster[e] != e) {
        sys.dof_ux[nv + e] = sys.dof_ux[nv + emaster[e]];
        sys.dof_uy[nv + e] = sys.dof_uy[nv + emaster[e]];
      }
  }
  sys.n_border = bc == StokesBc::Dirichlet ? 1 : 3;
  sys.ndof = c + sys.n_border;

  const int n_tri = static_cast<int>(mesh.triangles.size());
  std::vector<sparse::Triplet> trips;
  size_t per_tri = 144 + (zero_order ? 276 : 0) + (drift.kind != DriftSpec::Kind::None ? 132 : 0);
  trips.reserve(static_cast<size_t>(n_tri) * per_tri + 8 * static_cast<size_t>(nv));
  sys.lift_rhs.assign(sys.ndof, 0.0);
  std::vector<double> pmass(sys.ndof, 0.0), vmx(sys.ndof, 0.0), vmy(sys.ndof, 0.0);
  std::vector<ElemStokes> buf(std::min(n_tri, kChunk));
  const PairTable& pt = pair_table();

  for (int chunk0 = 0; chunk0 < n_tri; chunk0 += kChunk) {
    const int n = std::min(kChunk, n_tri - chunk0);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < n; ++k)
      buf[k] = element_stokes(mesh, sp, drift, zero_order, chunk0 + k);

    for (int k = 0; k < n; ++k) {
      const int t = chunk0 + k;
      const ElemStokes& e = buf[k];
      if (!e.finite)
        throw CallbackDomainError(
            "stokes coefficient callback produced a non-finite value on triangle " +
            std::to_string(t));
      const auto& tri = mesh.triangles[t];
      const int node[6] = {tri[0],      tri[1],
                           tri[2],      nv + sp.tri_edges[t][0],
                           nv + sp.tri_edges[t][1], nv + sp.tri_edges[t][2]};
      int gd[12];
      double lv[12];
      for (int a = 0; a < 6; ++a) {
        gd[2 * a] = sys.dof_ux[node[a]];
        gd[2 * a + 1] = sys.dof_uy[node[a]];
        lv[2 * a] = sys.lift[2 * static_cast<size_t>(node[a])];
        lv[2 * a + 1] = sys.lift[2 * static_cast<size_t>(node[a]) + 1];
      }
      const int gp[3] = {sys.dof_p[tri[0]], sys.dof_p[tri[1]], sys.dof_p[tri[2]]};
      auto emit = [&](int r, int cd, double cl, double v) {
        if (r < 0 || v == 0.0) return;
        if (cd >= 0)
          trips.push_back({r, cd, v});
        else if (cl != 0.0)
          sys.lift_rhs[r] -= v * cl;
      };

      for (int cc = 0; cc < 2; ++cc)
        for (int a = 0; a < 6; ++a)
          for (int b = 0; b < 6; ++b)
            emit(gd[2 * a + cc], gd[2 * b + cc], lv[2 * b + cc], e.K[a][b]);
      // Continuity rows are negated: [K B^T; -B 0] has a positive
      // semidefinite symmetric part, which keeps the incomplete-LU pivots of
      // the pressure rows positive and the Krylov solve from stalling. The
      // solution is unchanged.
      for (int al = 0; al < 12; ++al)
        for (int j = 0; j < 3; ++j) {
          const double v = e.C[al][j];
          emit(gd[al], gp[j], 0.0, v);
          emit(gp[j], gd[al], lv[al], -v);
        }
      if (e.has_S)
        for (int al = 0; al < 12; ++al)
          for (int be = 0; be < 12; ++be) emit(gd[al], gd[be], lv[be], e.S[al][be]);
      if (e.has_skw)
        for (int k66 = 0; k66 < 66; ++k66) {
          const double v = e.skw[k66];
          if (v == 0.0) continue;
          const int al = pt.a[k66], be = pt.b[k66];
          emit(gd[al], gd[be], lv[be], v);
          emit(gd[be], gd[al], lv[al], -v);
        }
      for (int j = 0; j < 3; ++j) pmass[gp[j]] += e.pw[j];
      for (int a = 0; a < 6; ++a) {
        if (gd[2 * a] >= 0) vmx[gd[2 * a]] += e.vw[a];
        if (gd[2 * a + 1] >= 0) vmy[gd[2 * a + 1]] += e.vw[a];
      }
    }
  }

  const int nb0 = sys.ndof - sys.n_border;
  for (int d = 0; d < nb0; ++d)
    if (pmass[d] != 0.0) {
      trips.push_back({nb0, d, pmass[d]});
      trips.push_back({d, nb0, pmass[d]});
    }
  if (bc == StokesBc::Periodic) {
    for (int d = 0; d < nb0; ++d)
      if (vmx[d] != 0.0) {
        trips.push_back({nb0 + 1, d, vmx[d]});
        trips.push_back({d, nb0 + 1, vmx[d]});
      }
    for (int d = 0; d < nb0; ++d)
      if (vmy[d] != 0.0) {
        trips.push_back({nb0 + 2, d, vmy[d]});
        trips.push_back({d, nb0 + 2, vmy[d]});
      }
  }
  sys.A = sparse::CsrMatrix::from_triplets(sys.ndof, trips);
  return sys;
}

StokesField StokesSystem::expand(const std::vector<double>& x) const {
  StokesField u;
  u.mesh = mesh;
  u.space = space;
  const int nn = space->n_nodes();
  u.vel.assign(2 * static_cast<size_t>(nn), 0.0);
  u.pres.assign(space->n_vertices, 0.0);
  for (int n = 0; n < nn; ++n) {
    u.vel[2 * static_cast<size_t>(n)] =
        dof_ux[n] >= 0 ? x[dof_ux[n]] : lift[2 * static_cast<size_t>(n)];
    u.vel[2 * static_cast<size_t>(n) + 1] =
        dof_uy[n] >= 0 ? x[dof_uy[n]] : lift[2 * static_cast<size_t>(n) + 1];
  }
  for (int v = 0; v < space->n_vertices; ++v) u.pres[v] = x[dof_p[v]];
  return u;
}

std::vector<double> assemble_body_force(const StokesSystem& sys, const VectorCoef& f) {
  if (!f) throw ArgumentError("assemble_body_force: callback required");
  const mesh::Mesh& m = *sys.mesh;
  const TaylorHoodSpace& sp = *sys.space;
  const TriQuad& q = quad_deg5();
  const int nv = sp.n_vertices;
  std::vector<double> rhs(sys.ndof, 0.0);
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const TriGeom geo(m, static_cast<int>(t));
    const auto& tri = m.triangles[t];
    const int node[6] = {tri[0],      tri[1],
                         tri[2],      nv + sp.tri_edges[t][0],
                         nv + sp.tri_edges[t][1], nv + sp.tri_edges[t][2]};
    for (int iq = 0; iq < q.n; ++iq) {
      const double wq = q.w[iq] * geo.area;
      const P2Basis bb = p2_eval(geo, q.bary[iq]);
      const Vec2 fv = f(geo.point(q.bary[iq]), m.subdomain[t]);
      if (!(std::isfinite(fv.x) && std::isfinite(fv.y)))
        throw CallbackDomainError("body force produced a non-finite value on triangle " +
                                  std::to_string(t));
      for (int a = 0; a < 6; ++a) {
        const int dx = sys.dof_ux[node[a]], dy = sys.dof_uy[node[a]];
        if (dx >= 0) rhs[dx] += wq * fv.x * bb.s[a];
        if (dy >= 0) rhs[dy] += wq * fv.y * bb.s[a];
      }
    }
  }
  return rhs;
}

std::vector<double> assemble_gradient_force(const StokesSystem& sys, const MatrixCoef& F) {
  if (!F) throw ArgumentError("assemble_gradient_force: callback required");
  const mesh::Mesh& m = *sys.mesh;
  const TaylorHoodSpace& sp = *sys.space;
  const TriQuad& q = quad_deg5();
  const int nv = sp.n_vertices;
  std::vector<double> rhs(sys.ndof, 0.0);
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const TriGeom geo(m, static_cast<int>(t));
    const auto& tri = m.triangles[t];
    const int node[6] = {tri[0],      tri[1],
                         tri[2],      nv + sp.tri_edges[t][0],
                         nv + sp.tri_edges[t][1], nv + sp.tri_edges[t][2]};
    for (int iq = 0; iq < q.n; ++iq) {
      const double wq = q.w[iq] * geo.area;
      const P2Basis bb = p2_eval(geo, q.bary[iq]);
      const Mat2 Fv = F(geo.point(q.bary[iq]), m.subdomain[t]);
      if (!(std::isfinite(Fv.m[0][0]) && std::isfinite(Fv.m[0][1]) && std::isfinite(Fv.m[1][0]) &&
            std::isfinite(Fv.m[1][1])))
        throw CallbackDomainError("gradient force produced a non-finite value on triangle " +
                                  std::to_string(t));
      for (int a = 0; a < 6; ++a) {
        const int dx = sys.dof_ux[node[a]], dy = sys.dof_uy[node[a]];
        if (dx >= 0) rhs[dx] += wq * (Fv.m[0][0] * bb.g[a].x + Fv.m[0][1] * bb.g[a].y);
        if (dy >= 0) rhs[dy] += wq * (Fv.m[1][0] * bb.g[a].x + Fv.m[1][1] * bb.g[a].y);
      }
    }
  }
  return rhs;
}

StokesSolveResult solve_perturbed(const mesh::Mesh& mesh, const DriftSpec& drift,
                                  const VectorCoef& f, double tol,
                                  const std::vector<double>* x0) {
  const StokesSystem sys = assemble_stokes(mesh, drift, nullptr, StokesBc::Dirichlet);
  std::vector<double> rhs = assemble_body_force(sys, f);
  for (int i = 0; i < sys.ndof; ++i) rhs[i] += sys.lift_rhs[i];
  StokesSolveResult r = finish_general_solve(sys, rhs, tol, x0);
  r.energy_residual = relative_gap(dirichlet_energy(r.field), load_inner(r.field, f));
  return r;
}

StokesSolveResult solve_brinkman(const mesh::Mesh& mesh, double curl_const, const Mat2& G,
                                 const VectorCoef& f, double tol,
                                 const std::vector<double>* x0) {
  const double s01 = 0.5 * (G.m[0][1] + G.m[1][0]);
  const double tr = G.m[0][0] + G.m[1][1];
  const double det_sym = G.m[0][0] * G.m[1][1] - s01 * s01;
  if (tr < -1e-14 || det_sym < -1e-12 * std::max(1.0, tr * tr))
    throw ArgumentError("solve_brinkman: sym(G) must be positive semidefinite");
  Mat2 Z = G;
  Z.m[0][1] -= curl_const;
  Z.m[1][0] += curl_const;
  const MatrixCoef zc = [Z](Vec2, mesh::Subdomain) { return Z; };
  const StokesSystem sys = assemble_stokes(mesh, DriftSpec::none(), zc, StokesBc::Dirichlet);
  std::vector<double> rhs = assemble_body_force(sys, f);
  for (int i = 0; i < sys.ndof; ++i) rhs[i] += sys.lift_rhs[i];
  StokesSolveResult r = finish_general_solve(sys, rhs, tol, x0);
  r.energy_residual = relative_gap(dirichlet_energy(r.field) + sym_zero_energy(r.field, zc),
                                   load_inner(r.field, f));
  return r;
}

CellVResult solve_cell_V(const mesh::Mesh& annulus_mesh, double r_eps, int component,
                         double tol) {
  if (component != 1 && component != 2)
    throw ArgumentError("solve_cell_V: component must be 1 or 2");
  if (!(r_eps > 0.0 && r_eps < 1.0))
    throw ArgumentError("solve_cell_V: r_eps must lie in (0, 1)");
  bool has_inner = false;
  for (const auto& be : annulus_mesh.boundary_edges)
    if (be.tag == mesh::BoundaryTag::InnerCircle) {
      has_inner = true;
      break;
    }
  if (!has_inner) throw ArgumentError("solve_cell_V: mesh has no inner circle boundary");

  const Vec2 ei = component == 1 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
  const BoundaryVelocity data = [ei](Vec2, int tag) {
    return tag == static_cast<int>(mesh::BoundaryTag::InnerCircle) ? ei : Vec2{0.0, 0.0};
  };
  // Compatibility of the boundary data: the net flux through the boundary
  // must vanish for an incompressible extension to exist.
  double flux = 0.0, scale = 0.0;
  for (const auto& be : annulus_mesh.boundary_edges) {
    const Vec2 a = annulus_mesh.vertices[be.a], b = annulus_mesh.vertices[be.b];
    const Vec2 mid{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)};
    const Vec2 g = data(mid, static_cast<int>(be.tag));
    const Vec2 nL{b.y - a.y, a.x - b.x};
    flux += g.dot(nL);
    scale += std::hypot(nL.x, nL.y) * std::max(1.0, g.norm());
  }
  if (std::abs(flux) > 1e-10 * std::max(1.0, scale))
    throw FluxError("solve_cell_V: boundary data carries net flux " + std::to_string(flux));

  const StokesSystem sys =
      assemble_stokes(annulus_mesh, DriftSpec::none(), nullptr, StokesBc::Dirichlet, data);
  const StokesSolveResult base = finish_general_solve(sys, sys.lift_rhs, tol, nullptr);
  CellVResult r;
  r.field = base.field;
  r.report = base.report;
  r.gamma_cell = dirichlet_energy(r.field);
  return r;
}

CellWsharpResult solve_cell_Wsharp(const mesh::Mesh& torus, double eps, double r_eps,
                                   Vec2 lambda, double tol) {
  require_periodic(torus, "solve_cell_Wsharp");
  if (!(eps > 0.0)) throw ArgumentError("solve_cell_Wsharp: eps must be positive");
  const double core = torus.area_of(mesh::Subdomain::DiskCore);
  if (!(core > 0.0)) throw ArgumentError("solve_cell_Wsharp: mesh has no disk core");
  (void)r_eps;

  const Vec2 jl = Mat2::rotation_j().apply(lambda);
  const VectorCoef f = [=](Vec2, mesh::Subdomain sub) {
    const double dens = (sub == mesh::Subdomain::DiskCore ? 1.0 / core : 0.0) - 0.25;
    return jl * (-eps * dens);
  };
  const StokesSystem sys = assemble_stokes(torus, DriftSpec::none(), nullptr, StokesBc::Periodic);
  const std::vector<double> rhs = assemble_body_force(sys, f);
  const StokesSolveResult base = finish_general_solve(sys, rhs, tol, nullptr);

  CellWsharpResult r;
  r.field = base.field;
  r.report = base.report;
  Vec2 wint{0.0, 0.0};
  QuadPointVisitor{&r.field}.run([&](int t, double wq, Vec2, Vec2 val, const Mat2&, double) {
    if (torus.subdomain[t] == mesh::Subdomain::DiskCore) wint += val * wq;
  });
  r.wbar = wint * (eps / core);
  r.m_quadratic = 0.25 * Mat2::rotation_j().apply(r.wbar).dot(lambda);
  r.energy_residual = relative_gap(dirichlet_energy(r.field), load_inner(r.field, f));
  return r;
}

CellSmoothResult solve_cell_w_smooth(const mesh::Mesh& torus, const VectorCoef& v_field,
                                     Vec2 lambda, double tol) {
  require_periodic(torus, "solve_cell_w_smooth");
  if (!v_field) throw ArgumentError("solve_cell_w_smooth: velocity callback required");
  const MatrixCoef F = [=](Vec2 x, mesh::Subdomain sub) {
    const Vec2 v = v_field(x, sub);
    Mat2 out;
    out.m[0][0] = v.x * lambda.x;
    out.m[0][1] = v.x * lambda.y;
    out.m[1][0] = v.y * lambda.x;
    out.m[1][1] = v.y * lambda.y;
    return out;
  };
  const StokesSystem sys = assemble_stokes(torus, DriftSpec::none(), nullptr, StokesBc::Periodic);
  const std::vector<double> rhs = assemble_gradient_force(sys, F);
  const StokesSolveResult base = finish_general_solve(sys, rhs, tol, nullptr);

  CellSmoothResult r;
  r.field = base.field;
  r.report = base.report;
  Vec2 acc{0.0, 0.0};
  QuadPointVisitor{&r.field}.run([&](int t, double wq, Vec2 x, Vec2, const Mat2& g, double) {
    const Vec2 v = v_field(x, torus.subdomain[t]);
    acc += g.transpose().apply(v) * wq;
  });
  r.m_lambda = acc * (1.0 / torus.total_area());
  return r;
}

Vec2 velocity_at(const StokesField& u, int tri, const std::array<double, 3>& bary) {
  const TaylorHoodSpace& sp = *u.space;
  const TriGeom geo(*u.mesh, tri);
  const P2Basis bb = p2_eval(geo, bary);
  const auto& tr = u.mesh->triangles[tri];
  const int node[6] = {tr[0],       tr[1],
                       tr[2],       sp.n_vertices + sp.tri_edges[tri][0],
                       sp.n_vertices + sp.tri_edges[tri][1],
                       sp.n_vertices + sp.tri_edges[tri][2]};
  Vec2 val{0.0, 0.0};
  for (int a = 0; a < 6; ++a) {
    val.x += u.vel[2 * static_cast<size_t>(node[a])] * bb.s[a];
    val.y += u.vel[2 * static_cast<size_t>(node[a]) + 1] * bb.s[a];
  }
  return val;
}

Mat2 velocity_gradient(const StokesField& u, int tri, const std::array<double, 3>& bary) {
  const TaylorHoodSpace& sp = *u.space;
  const TriGeom geo(*u.mesh, tri);
  const P2Basis bb = p2_eval(geo, bary);
  const auto& tr = u.mesh->triangles[tri];
  const int node[6] = {tr[0],       tr[1],
                       tr[2],       sp.n_vertices + sp.tri_edges[tri][0],
                       sp.n_vertices + sp.tri_edges[tri][1],
                       sp.n_vertices + sp.tri_edges[tri][2]};
  Mat2 g;
  for (int a = 0; a < 6; ++a) {
    const double ux = u.vel[2 * static_cast<size_t>(node[a])];
    const double uy = u.vel[2 * static_cast<size_t>(node[a]) + 1];
    g.m[0][0] += ux * bb.g[a].x;
    g.m[0][1] += ux * bb.g[a].y;
    g.m[1][0] += uy * bb.g[a].x;
    g.m[1][1] += uy * bb.g[a].y;
  }
  return g;
}

double pressure_at(const StokesField& u, int tri, const std::array<double, 3>& bary) {
  const auto& tr = u.mesh->triangles[tri];
  return bary[0] * u.pres[tr[0]] + bary[1] * u.pres[tr[1]] + bary[2] * u.pres[tr[2]];
}

double dirichlet_energy(const StokesField& u) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run(
      [&](int, double wq, Vec2, Vec2, const Mat2& g, double) { acc += wq * frobenius2(g); });
  return acc;
}

double divergence_l2(const StokesField& u) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int, double wq, Vec2, Vec2, const Mat2& g, double) {
    const double d = g.m[0][0] + g.m[1][1];
    acc += wq * d * d;
  });
  return std::sqrt(acc);
}

double divergence_residual(const StokesSystem& sys, const StokesField& u) {
  const mesh::Mesh& m = *sys.mesh;
  const TriQuad& q = quad_deg5();
  std::vector<double> r(sys.ndof, 0.0), mass(sys.ndof, 0.0);
  for (size_t t = 0; t < m.triangles.size(); ++t) {
    const TriGeom geo(m, static_cast<int>(t));
    const auto& tri = m.triangles[t];
    for (int iq = 0; iq < q.n; ++iq) {
      const double wq = q.w[iq] * geo.area;
      const Mat2 g = velocity_gradient(u, static_cast<int>(t), q.bary[iq]);
      const double d = g.m[0][0] + g.m[1][1];
      for (int j = 0; j < 3; ++j) {
        const int pd = sys.dof_p[tri[j]];
        r[pd] += wq * q.bary[iq][j] * d;
        mass[pd] += wq * q.bary[iq][j];
      }
    }
  }
  double acc = 0.0;
  for (int d = 0; d < sys.ndof; ++d)
    if (mass[d] > 0.0) acc += r[d] * r[d] / mass[d];
  return std::sqrt(acc);
}

double pressure_mean(const StokesField& u) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run(
      [&](int, double wq, Vec2, Vec2, const Mat2&, double p) { acc += wq * p; });
  return acc;
}

Vec2 velocity_mean(const StokesField& u) {
  Vec2 acc{0.0, 0.0};
  QuadPointVisitor{&u}.run(
      [&](int, double wq, Vec2, Vec2 val, const Mat2&, double) { acc += val * wq; });
  return acc;
}

double velocity_l2_error(const StokesField& u, const std::function<Vec2(Vec2)>& exact) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int, double wq, Vec2 x, Vec2 val, const Mat2&, double) {
    const Vec2 e = exact ? val - exact(x) : val;
    acc += wq * e.dot(e);
  });
  return std::sqrt(acc);
}

double velocity_h1_error(const StokesField& u, const std::function<Mat2(Vec2)>& exact_grad) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int, double wq, Vec2 x, Vec2, const Mat2& g, double) {
    acc += wq * frobenius2(exact_grad ? g - exact_grad(x) : g);
  });
  return std::sqrt(acc);
}

double pressure_l2_error(const StokesField& u, const std::function<double(Vec2)>& exact) {
  double acc = 0.0;
  QuadPointVisitor{&u}.run([&](int, double wq, Vec2 x, Vec2, const Mat2&, double p) {
    const double e = exact ? p - exact(x) : p;
    acc += wq * e * e;
  });
  return std::sqrt(acc);
}

void write_stokes_vtk(const StokesField& u, const std::string& path) {
  std::FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw ArgumentError("cannot open " + path + " for writing");
  const mesh::Mesh& m = *u.mesh;
  std::fprintf(fp, "# vtk DataFile Version 3.0\nstokes field\nASCII\nDATASET UNSTRUCTURED_GRID\n");
  std::fprintf(fp, "POINTS %zu double\n", m.vertices.size());
  for (const auto& p : m.vertices) std::fprintf(fp, "%.17g %.17g 0\n", p.x, p.y);
  std::fprintf(fp, "CELLS %zu %zu\n", m.triangles.size(), 4 * m.triangles.size());
  for (const auto& t : m.triangles) std::fprintf(fp, "3 %d %d %d\n", t[0], t[1], t[2]);
  std::fprintf(fp, "CELL_TYPES %zu\n", m.triangles.size());
  for (size_t t = 0; t < m.triangles.size(); ++t) std::fprintf(fp, "5\n");
  std::fprintf(fp, "POINT_DATA %zu\nVECTORS velocity double\n", m.vertices.size());
  for (size_t v = 0; v < m.vertices.size(); ++v)
    std::fprintf(fp, "%.17g %.17g 0\n", u.vel[2 * v], u.vel[2 * v + 1]);
  std::fprintf(fp, "SCALARS pressure double 1\nLOOKUP_TABLE default\n");
  for (size_t v = 0; v < m.vertices.size(); ++v) std::fprintf(fp, "%.17g\n", u.pres[v]);
  std::fclose(fp);
}

}  // namespace homog::fem
