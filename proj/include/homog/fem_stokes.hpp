#pragma once

// Taylor-Hood (P2 velocity / P1 pressure) elements for the perturbed Stokes
// systems, the Brinkman limits, and the Stokes cell problems.

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "homog/common.hpp"
#include "homog/fem_scalar.hpp"
#include "homog/mesh.hpp"
#include "homog/solvers.hpp"
#include "homog/sparse.hpp"

namespace homog::fem {

// Quadratic velocity nodes: mesh vertices followed by edge midpoints. Edges
// are numbered in first-encounter order over the triangle list, so the space
// is deterministic for a given mesh.
struct TaylorHoodSpace {
  const mesh::Mesh* mesh = nullptr;
  int n_vertices = 0;
  int n_edges = 0;
  std::vector<std::array<int, 3>> tri_edges;      // edge opposite local vertex k
  std::vector<std::array<int, 2>> edge_vertices;  // endpoints, a < b

  int n_nodes() const { return n_vertices + n_edges; }
  Vec2 node_position(int node) const;
};

std::shared_ptr<const TaylorHoodSpace> build_taylor_hood(const mesh::Mesh& mesh);

// Drift term of the perturbed Stokes operator.
//  - Smooth: curl(v) J u assembled derivative-free as
//      T(u, phi) = int ((Du)^T v) . phi - int (v (x) u) : Dphi
//    (the pressure absorbs grad(v . u), so v is never differentiated).
//  - Concentrated: weight * int_{DiskCore} (J u) . phi, the indicator-weighted
//    rotation mass of the lattice scenarios.
struct DriftSpec {
  enum class Kind { None, Smooth, Concentrated };
  Kind kind = Kind::None;
  VectorCoef v;         // Smooth
  double weight = 0.0;  // Concentrated

  static DriftSpec none() { return {}; }
  static DriftSpec smooth(VectorCoef field) {
    DriftSpec d;
    d.kind = Kind::Smooth;
    d.v = std::move(field);
    return d;
  }
  static DriftSpec concentrated(double weight) {
    DriftSpec d;
    d.kind = Kind::Concentrated;
    d.weight = weight;
    return d;
  }
};

using MatrixCoef = std::function<Mat2(Vec2, mesh::Subdomain)>;
// Velocity data on the Dirichlet boundary, by position and boundary tag.
using BoundaryVelocity = std::function<Vec2(Vec2, int)>;

enum class StokesBc { Dirichlet, Periodic };

struct StokesField {
  const mesh::Mesh* mesh = nullptr;
  std::shared_ptr<const TaylorHoodSpace> space;
  std::vector<double> vel;   // 2 * n_nodes, interleaved (ux, uy) per node
  std::vector<double> pres;  // one per vertex

  Vec2 velocity_node(int node) const {
    return {vel[2 * static_cast<size_t>(node)], vel[2 * static_cast<size_t>(node) + 1]};
  }
};

// Monolithic saddle system on the constrained unknowns. Layout: all velocity
// unknowns first ((ux, uy) per vertex, then per edge node), then one pressure
// per vertex, then the border rows (1 pressure-mean row for Dirichlet;
// pressure-mean plus two velocity-mean rows for periodic cells). Dirichlet
// velocity nodes are eliminated before accumulation; their data lives in
// `lift` and the matching right-hand-side corrections in `lift_rhs`.
struct StokesSystem {
  const mesh::Mesh* mesh = nullptr;
  std::shared_ptr<const TaylorHoodSpace> space;
  StokesBc bc = StokesBc::Dirichlet;
  int ndof = 0;
  int n_border = 0;
  std::vector<int> dof_ux, dof_uy;  // per node, -1 when eliminated
  std::vector<int> dof_p;           // per vertex
  std::vector<double> lift;         // 2 * n_nodes
  sparse::CsrMatrix A;
  std::vector<double> lift_rhs;

  StokesField expand(const std::vector<double>& x) const;
};

StokesSystem assemble_stokes(const mesh::Mesh& mesh, const DriftSpec& drift,
                             const MatrixCoef& zero_order, StokesBc bc,
                             const BoundaryVelocity& dirichlet_data = nullptr);

// Load vectors (border rows stay zero): body force int f . phi, and the
// gradient force int F : Dphi used by the smooth cell problem.
std::vector<double> assemble_body_force(const StokesSystem& sys, const VectorCoef& f);
std::vector<double> assemble_gradient_force(const StokesSystem& sys, const MatrixCoef& F);

struct StokesSolveResult {
  StokesField field;
  sparse::SolveReport report;
  double energy_residual = 0.0;    // |int|Du|^2 + sym zero-order - <f,u>| / |<f,u>|
  double div_residual = 0.0;       // ||div_h u||_{L2}, the P1-projected divergence
  double pressure_mean_abs = 0.0;  // |int p_h|
  std::vector<double> dofs;        // raw solution, reusable as a warm start
};

// -Delta u + drift + grad p = f, div u = 0, u = 0 on the boundary.
StokesSolveResult solve_perturbed(const mesh::Mesh& mesh, const DriftSpec& drift,
                                  const VectorCoef& f, double tol = 1e-10,
                                  const std::vector<double>* x0 = nullptr);

// -Delta u + curl_const J u + G u + grad p = f, div u = 0, u = 0 on the
// boundary; sym(G) must be positive semidefinite.
StokesSolveResult solve_brinkman(const mesh::Mesh& mesh, double curl_const, const Mat2& G,
                                 const VectorCoef& f, double tol = 1e-10,
                                 const std::vector<double>* x0 = nullptr);

// Oscillating test function V = e_i on the inner circle, 0 on the outer unit
// circle, Stokes in the annulus between them. gamma_cell = int |DV|^2.
struct CellVResult {
  StokesField field;
  double gamma_cell = 0.0;
  sparse::SolveReport report;
};
CellVResult solve_cell_V(const mesh::Mesh& annulus_mesh, double r_eps, int component,
                         double tol = 1e-10);

// Periodic torus cell problem
//   -Delta W + eps (1_{Q_r}/|Q_r| - 1/4) J lambda + grad Q = 0, div W = 0,
// with zero-mean velocity and pressure. Returns Wbar = eps * avg_{Q_r}(W) and
// M_quadratic = (1/4) (J Wbar) . lambda.
struct CellWsharpResult {
  StokesField field;
  Vec2 wbar;
  double m_quadratic = 0.0;
  double energy_residual = 0.0;
  sparse::SolveReport report;
};
CellWsharpResult solve_cell_Wsharp(const mesh::Mesh& torus, double eps, double r_eps,
                                   Vec2 lambda, double tol = 1e-10);

// Periodic cell problem -Delta w + grad q = -Div(v (x) lambda), div w = 0 for
// a zero-mean field v; returns M_lambda = cell average of (Dw)^T v.
struct CellSmoothResult {
  StokesField field;
  Vec2 m_lambda;
  sparse::SolveReport report;
};
CellSmoothResult solve_cell_w_smooth(const mesh::Mesh& torus, const VectorCoef& v_field,
                                     Vec2 lambda, double tol = 1e-10);

// --- field utilities (7-point quadrature) ----------------------------------

Vec2 velocity_at(const StokesField& u, int tri, const std::array<double, 3>& bary);
Mat2 velocity_gradient(const StokesField& u, int tri, const std::array<double, 3>& bary);
double pressure_at(const StokesField& u, int tri, const std::array<double, 3>& bary);

double dirichlet_energy(const StokesField& u);  // int |Du|^2
// Pointwise ||div u_h||_{L2} (O(h^2) for Taylor-Hood, a discretization error).
double divergence_l2(const StokesField& u);
// ||div_h u||_{L2}: the divergence tested against the pressure basis and
// measured in the lumped pressure mass, accumulated element by element
// (independent of the assembled matrix). Solver-tolerance small.
double divergence_residual(const StokesSystem& sys, const StokesField& u);
double pressure_mean(const StokesField& u);
Vec2 velocity_mean(const StokesField& u);
double velocity_l2_error(const StokesField& u, const std::function<Vec2(Vec2)>& exact);
double velocity_h1_error(const StokesField& u, const std::function<Mat2(Vec2)>& exact_grad);
double pressure_l2_error(const StokesField& u, const std::function<double(Vec2)>& exact);

// Legacy VTK with vertex velocity vectors and pressure scalars.
void write_stokes_vtk(const StokesField& u, const std::string& path);

}  // namespace homog::fem
