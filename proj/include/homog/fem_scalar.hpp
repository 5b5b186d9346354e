#pragma once

// P1 finite elements for the scalar problems: drift equations in skew form,
// the transformed potential equation, the radial cell problem, and the
// homogenized limits.

#include <functional>
#include <string>
#include <vector>

#include "homog/closed_form.hpp"
#include "homog/common.hpp"
#include "homog/mesh.hpp"
#include "homog/solvers.hpp"
#include "homog/sparse.hpp"

namespace homog::fem {

// Pointwise data callbacks. Each receives the physical point and the
// subdomain tag of the triangle being integrated.
using ScalarCoef = std::function<double(Vec2, mesh::Subdomain)>;
using VectorCoef = std::function<Vec2(Vec2, mesh::Subdomain)>;

enum class ScalarBc { Dirichlet, Periodic, Neumann };

struct ScalarField {
  const mesh::Mesh* mesh = nullptr;
  std::vector<double> values;  // one per vertex

  double value_at(int vertex) const { return values[static_cast<size_t>(vertex)]; }
};

// Assembled bilinear forms on the constrained degrees of freedom.
// Constraints are applied before accumulation: Dirichlet vertices are
// eliminated (homogeneous data) and periodic slaves are merged into their
// masters, so every matrix below already lives on the reduced index set.
struct ScalarForms {
  const mesh::Mesh* mesh = nullptr;
  ScalarBc bc = ScalarBc::Neumann;
  int ndof = 0;
  std::vector<int> dof_of_vertex;  // -1 for eliminated vertices
  std::vector<int> vertex_of_dof;  // representative vertex per dof
  sparse::CsrMatrix K;             // stiffness
  sparse::CsrMatrix M;             // weighted mass; empty (n == 0) if c absent
  sparse::CsrMatrix B;             // drift, skew, B + B^T == 0 exactly; empty if b absent
  std::vector<double> f;           // load vector

  // Expand a dof vector to a full per-vertex field (constrained vertices get
  // 0 for Dirichlet, the master value for periodic slaves).
  ScalarField expand(const std::vector<double>& x) const;
  // Restrict a per-vertex vector to the dof numbering.
  std::vector<double> restrict_to_dofs(const std::vector<double>& vertex_values) const;
};

struct AssemblyOptions {
  bool lumped_mass = false;  // row-sum lumping of M (maximum-principle runs)
};

ScalarForms assemble_scalar_forms(const mesh::Mesh& mesh, const ScalarCoef& c,
                                  const VectorCoef& b, const ScalarCoef& f, ScalarBc bc,
                                  const AssemblyOptions& opts = {});

struct ScalarSolveResult {
  ScalarField field;
  sparse::SolveReport report;
  // |a_sym(u,u) - <f,u>| / |<f,u>| with a_sym the symmetric part of the
  // assembled operator (the skew drift block contributes exactly zero).
  double energy_residual = 0.0;
};

// -Delta u + b.grad(u) + div(b u) = f, u = 0 on the boundary.
ScalarSolveResult solve_drift(const mesh::Mesh& mesh, const VectorCoef& b_eps,
                              const ScalarCoef& f, double tol = 1e-10);

// -Delta v + V v = g, v = 0 on the boundary; V >= 0, SPD path.
ScalarSolveResult solve_potential(const mesh::Mesh& mesh, const ScalarCoef& V,
                                  const ScalarCoef& g, double tol = 1e-10,
                                  const AssemblyOptions& opts = {});

// Radial cell problem on a disk mesh with natural (Neumann) outer boundary:
//   -(1/eps^2) Delta Z + (1/eps^2) (alpha^2/r^2) 1_{annulus} Z = 1/(pi R^2).
// Assembled in the eps^2-scaled form; the potential term removes the kernel,
// so no pinning is required.
ScalarSolveResult solve_z_cell(const mesh::Mesh& mesh, double eps,
                               const closed_form::AnnulusSpec& annulus, double tol = 1e-12);

// -Delta u + b.grad(u) + div(b u) + zero_order u = f, u = 0 on the boundary.
// Pass b_limit = nullptr for a drift-free (SPD) solve.
ScalarSolveResult solve_homogenized_scalar(const mesh::Mesh& mesh, const ScalarCoef& zero_order,
                                           const VectorCoef& b_limit, const ScalarCoef& f,
                                           double tol = 1e-10);

// --- field utilities -------------------------------------------------------

// Integrals use the 7-point (degree 5) rule so that smooth references are
// integrated well beyond the P1 consistency order.
double integral(const ScalarField& u);
double l2_norm(const ScalarField& u);
double l2_error(const ScalarField& u, const std::function<double(Vec2)>& exact);
double h1_seminorm(const ScalarField& u);
Vec2 gradient_on_triangle(const ScalarField& u, int tri);

void write_csv(const ScalarField& u, const std::string& path);

}  // namespace homog::fem
