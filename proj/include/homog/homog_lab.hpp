#pragma once

// Effective-coefficient extraction from computed eps-solutions, corrector
// norms, and the diagnostic probes that connect the numerics to the limit
// equations.

#include <functional>
#include <string>
#include <vector>

#include "homog/closed_form.hpp"
#include "homog/common.hpp"
#include "homog/fem_scalar.hpp"
#include "homog/fem_stokes.hpp"
#include "homog/mesh.hpp"

namespace homog::lab {

/// Result of a least-squares fit of an effective coefficient. Scalar fits
/// populate gamma_eff; matrix fits populate (s, t[, m22]) parameterizing
/// s*I + t*J + m22*e2(x)e2. `diverged` flags a non-unimodal objective scan
/// (the best point found is still returned).
struct FitResult {
  double gamma_eff = 0.0;
  double s = 0.0;
  double t = 0.0;
  double m22 = 0.0;
  double objective = 0.0;
  int iterations = 0;  // objective evaluations
  double interior_margin = 0.0;
  bool diverged = false;
};

/// gamma_eff = argmin over [0, 2*mu] of ||u_eps - hom_solver(gamma)||_{L2(O')}
/// by golden-section search to relative bracket width 1e-3; O' is the
/// bounding box of u_eps's mesh shrunk by interior_margin on every side.
/// hom_solver must return fields on one fixed mesh across calls.
FitResult fit_gamma_scalar(const fem::ScalarField& u_eps,
                           const std::function<fem::ScalarField(double)>& hom_solver, double mu,
                           double interior_margin = 0.1);

struct BrinkmanFitOptions {
  double gamma = 0.0;            // sets the starting point (gamma/(4(gamma^2+1)), 0)
  double interior_margin = 0.1;
  bool fit_m22 = false;          // extend the ansatz by an e2(x)e2 component
  double s_max = 0.0;            // bracket [0, s_max]; 0 -> 1/gamma
  double t_max = 0.0;            // bracket [-t_max, t_max]; 0 -> 1/(gamma^2+1)
  double m22_max = 1.0;          // bracket [0, m22_max] when fit_m22
  double rel_step_tol = 1e-3;    // coordinate-descent stopping threshold
};

/// (s, t[, m22]) = argmin ||u_eps - hom_solver(s*I + t*J + m22*e2(x)e2)||
/// over the interior window, by coordinate descent with golden-section line
/// searches. hom_solver must return fields on one fixed mesh across calls.
FitResult fit_brinkman_matrix(const fem::StokesField& u_eps,
                              const std::function<fem::StokesField(const Mat2&)>& hom_solver,
                              const BrinkmanFitOptions& opts);

/// || grad u_eps - grad u_hom - grad_w_eps * u_hom ||_{L^p(O')} with the
/// oscillating corrector gradient supplied analytically (pass nullptr to drop
/// the corrector term and obtain the no-corrector baseline). p in [1, 2).
double corrector_norm_scalar(const fem::ScalarField& u_eps, const fem::ScalarField& u_hom,
                             const fem::VectorCoef& grad_w_eps, double p,
                             double interior_margin = 0.1);

/// || D(u_eps - u_hom - v1*V^1_eps - v2*V^2_eps) ||_{L2} with nodal corrector
/// coefficients (v1, v2) = stokes_corrector_coeffs(u_hom(x), gamma) and the
/// cell solutions V^i tiled over u_eps's lattice (pitch = 2*eps, cells in
/// unit-disk coordinates, V = e_i inside the core, 0 outside the disk).
/// Pass v1_cell = v2_cell = nullptr for the no-corrector baseline.
double corrector_norm_stokes(const fem::StokesField& u_eps, const fem::StokesField& u_hom,
                             const fem::StokesField* v1_cell, const fem::StokesField* v2_cell,
                             double gamma, double r_eps_cell);

struct WeakLimitProbe {
  double probe = 0.0;      // sum over cells of int |grad w_eps|^2 g
  double predicted = 0.0;  // (2 pi / (eps^2 ln(R/r_eps))) * int g
  double mass_fraction = 0.0;  // Dirichlet mass carried by the annuli
  double area_fraction = 0.0;  // area of the annuli over the probed area
  int cells = 0;
};

/// Per-cell analytic radial quadrature of |grad w_eps|^2 against a smooth
/// test function g over every whole eps-cell inside [lower, upper] shrunk by
/// interior_margin. The per-cell mass identity probe == predicted holds to
/// quadrature accuracy for g = 1 at every eps.
WeakLimitProbe weak_limit_probe(double eps, const closed_form::AnnulusSpec& annulus,
                                const std::function<double(Vec2)>& g, Vec2 lower, Vec2 upper,
                                double interior_margin = 0.0);

/// |x^T A x - f.x| / |f.x|: the discrete energy identity. Skew blocks drop
/// out of the quadratic form exactly, so any drift or saddle solve from this
/// artifact satisfies this to solver tolerance; a one-sided (broken) drift
/// assembly does not.
double energy_identity_residual(const sparse::CsrMatrix& A, const std::vector<double>& x,
                                const std::vector<double>& f);

/// One report row per (scenario, eps). Quantities that do not apply to a
/// scenario stay NaN and serialize as empty CSV cells / JSON nulls.
struct EffectiveRow {
  std::string scenario;
  double eps = 0.0;
  double r_eps = 0.0;
  int dofs = 0;
  double h_min = 0.0;
  double energy_residual = 0.0;
  double gamma_eff = 0.0;
  double s = 0.0;
  double t = 0.0;
  double corrector_norm = 0.0;
  double probe_ratio = 0.0;
  int solver_iters = 0;
  double wall_seconds = 0.0;

  EffectiveRow();
};

/// Fixed column set: scenario, eps, r_eps, dofs, h_min, energy_residual,
/// gamma_eff, s, t, corrector_norm, probe_ratio, solver_iters, wall_seconds.
extern const char* const kReportColumns;

/// Rows are sorted by (scenario, eps) before writing; numeric formatting is
/// deterministic, so identical inputs produce identical bytes.
void write_report_csv(std::vector<EffectiveRow> rows, const std::string& path);
void write_report_json(std::vector<EffectiveRow> rows, const std::string& path);

/// Parses a CSV produced by write_report_csv. Throws SchemaError on an
/// unknown or missing column.
std::vector<EffectiveRow> read_report_csv(const std::string& path);

/// Merges rows from several reports, sorted by (scenario, eps).
std::vector<EffectiveRow> merge_reports(std::vector<std::vector<EffectiveRow>> parts);

}  // namespace homog::lab
