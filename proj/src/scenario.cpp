#include "homog/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "homog/closed_form.hpp"
#include "homog/common.hpp"
#include "homog/fem_scalar.hpp"
#include "homog/fem_stokes.hpp"
#include "json.hpp"

namespace homog::scenario {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
const char* const kArtifactVersion = "1.0.0";

using nlohmann::json;

// ---------------------------------------------------------------------------
// config parsing

const std::map<std::string, Kind>& kind_table() {
  static const std::map<std::string, Kind> t = {
      {"SCALAR_SMOOTH", Kind::ScalarSmooth},
      {"SCALAR_CONCENTRATED", Kind::ScalarConcentrated},
      {"STOKES_SMOOTH", Kind::StokesSmooth},
      {"STOKES_CONCENTRATED", Kind::StokesConcentrated},
      {"CELL_Z", Kind::CellZ},
      {"CELL_V", Kind::CellV},
      {"CELL_WSHARP", Kind::CellWsharp},
      {"MANUFACTURED", Kind::Manufactured},
  };
  return t;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

// Typed field access over one JSON object; every key read is recorded so that
// leftovers can be rejected (a misspelled key must not silently change the
// run or its hash).
struct FieldReader {
  const json& obj;
  std::string path;
  std::set<std::string> seen;

  bool has(const std::string& key) {
    if (obj.contains(key)) {
      seen.insert(key);
      return true;
    }
    return false;
  }
  const json& raw(const std::string& key) { return obj.at(key); }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    if (!obj.at(key).is_number()) fail(path + "." + key, "expected a number");
    return obj.at(key).get<double>();
  }
  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    if (!obj.at(key).is_number_integer()) fail(path + "." + key, "expected an integer");
    return obj.at(key).get<int>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
    return obj.at(key).get<std::string>();
  }
  std::vector<double> number_list(const std::string& key) {
    std::vector<double> out;
    if (!has(key)) return out;
    if (!obj.at(key).is_array()) fail(path + "." + key, "expected an array of numbers");
    for (const auto& v : obj.at(key)) {
      if (!v.is_number()) fail(path + "." + key, "expected an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }
  void reject_unknown() const {
    for (const auto& item : obj.items())
      if (!seen.count(item.key())) fail(path + "." + item.key(), "unknown field");
  }
};

void check_ladder(const std::vector<double>& v, const std::string& path, double lo, double hi) {
  if (v.empty()) fail(path, "must be a non-empty decreasing list");
  for (size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] > lo && v[i] < hi)) {
      std::ostringstream os;
      os << "entry " << i << " = " << v[i] << " outside (" << lo << ", " << hi << ")";
      fail(path, os.str());
    }
    if (i > 0 && !(v[i] < v[i - 1])) fail(path, "must be strictly decreasing");
  }
}

bool is_scalar_kind(Kind k) {
  return k == Kind::ScalarSmooth || k == Kind::ScalarConcentrated || k == Kind::CellZ;
}
bool is_stokes_vector_kind(Kind k) {
  return k == Kind::StokesSmooth || k == Kind::StokesConcentrated;
}
bool uses_r_list(Kind k) { return k == Kind::CellV || k == Kind::CellWsharp; }

ScenarioConfig parse_scenario(const json& obj, const std::string& path) {
  if (!obj.is_object()) fail(path, "expected an object");
  FieldReader r{obj, path, {}};
  ScenarioConfig c;

  c.name = r.text("name", "");
  if (c.name.empty()) fail(path + ".name", "required non-empty string");

  const std::string kind_str = r.text("kind", "");
  auto it = kind_table().find(kind_str);
  if (it == kind_table().end())
    fail(path + ".kind", kind_str.empty() ? "required" : "unknown kind '" + kind_str + "'");
  c.kind = it->second;

  c.mu = r.number("mu", 0.0);
  c.gamma = r.number("gamma", 0.0);
  c.eps_list = r.number_list("eps_list");
  c.r_list = r.number_list("r_list");
  c.R = r.number("R", 0.4);
  c.amplitude = r.number("amplitude", 1.0);
  c.interior_margin = r.number("interior_margin", 0.1);
  c.tol = r.number("tol", 1e-10);
  c.hom_n = r.integer("hom_n", 48);
  c.corrector_p = r.number("corrector_p", 1.5);
  c.problem = r.text("problem", "scalar");

  if (r.has("mesh")) {
    const json& mo = r.raw("mesh");
    FieldReader mr{mo, path + ".mesh", {}};
    if (!mo.is_object()) fail(path + ".mesh", "expected an object");
    c.mesh.n = mr.integer("n", 0);
    if (mr.has("grading")) {
      const json& go = mr.raw("grading");
      if (!go.is_object()) fail(path + ".mesh.grading", "expected an object");
      FieldReader gr{go, path + ".mesh.grading", {}};
      c.mesh.grading.layers = gr.integer("layers", 0);
      c.mesh.grading.ratio = gr.number("ratio", 1.3);
      c.mesh.grading.target_h = gr.number("target_h", 0.05);
      gr.reject_unknown();
      if (!(c.mesh.grading.target_h > 0.0)) fail(path + ".mesh.grading.target_h", "must be > 0");
      if (!(c.mesh.grading.ratio > 1.0)) fail(path + ".mesh.grading.ratio", "must be > 1");
      if (c.mesh.grading.layers < 0) fail(path + ".mesh.grading.layers", "must be >= 0");
    }
    mr.reject_unknown();
    if (c.mesh.n < 0) fail(path + ".mesh.n", "must be >= 0");
  }

  if (r.has("f")) {
    const json& fo = r.raw("f");
    if (fo.is_string()) {
      c.f_preset = fo.get<std::string>();
    } else if (fo.is_array()) {
      c.f_preset = "poly";
      for (const auto& v : fo) {
        if (!v.is_number()) fail(path + ".f", "polynomial coefficients must be numbers");
        c.f_poly.push_back(v.get<double>());
      }
      if (c.f_poly.empty() || c.f_poly.size() > 6)
        fail(path + ".f", "expected 1..6 monomial coefficients (1, x, y, x^2, xy, y^2)");
    } else {
      fail(path + ".f", "expected a preset name or an array of coefficients");
    }
  } else {
    c.f_preset = is_stokes_vector_kind(c.kind) ? "swirl" : "one";
  }

  if (r.has("lambda")) {
    auto l = r.number_list("lambda");
    if (l.size() != 2) fail(path + ".lambda", "expected [x, y]");
    c.lambda = {l[0], l[1]};
    if (!(c.lambda.norm() > 0.0)) fail(path + ".lambda", "must be non-zero");
  }
  r.reject_unknown();

  // -- semantic validation -------------------------------------------------
  if (!(c.interior_margin > 0.0 && c.interior_margin < 0.5))
    fail(path + ".interior_margin", "must lie in (0, 0.5)");
  if (!(c.tol > 0.0)) fail(path + ".tol", "must be > 0");
  if (c.hom_n < 4) fail(path + ".hom_n", "must be >= 4");
  if (!(c.corrector_p >= 1.0 && c.corrector_p < 2.0))
    fail(path + ".corrector_p", "must lie in [1, 2)");
  if (!(c.amplitude > 0.0)) fail(path + ".amplitude", "must be > 0");

  if (uses_r_list(c.kind)) {
    if (!c.eps_list.empty()) fail(path + ".eps_list", "not used by this kind; give r_list");
    check_ladder(c.r_list, path + ".r_list", 0.0, c.kind == Kind::CellWsharp ? 0.5 : 1.0);
  } else {
    if (!c.r_list.empty()) fail(path + ".r_list", "only used by CELL_V / CELL_WSHARP");
    check_ladder(c.eps_list, path + ".eps_list", 0.0, 1.0);
  }

  if (c.kind == Kind::ScalarConcentrated || c.kind == Kind::CellZ) {
    if (!(c.mu > 0.0)) fail(path + ".mu", "required > 0 for this kind");
    if (!(c.R > 0.0 && c.R < 0.5)) fail(path + ".R", "must lie in (0, 0.5)");
    for (size_t j = 0; j < c.eps_list.size(); ++j) {
      double re = 0.0;
      try {
        re = closed_form::scalar_radius(c.mu, c.eps_list[j], c.R);
      } catch (const std::exception& e) {
        fail(path + ".eps_list[" + std::to_string(j) + "]", e.what());
      }
      if (!(re > 0.0 && re < c.R))
        fail(path + ".eps_list[" + std::to_string(j) + "]",
             "hole radius degenerates at this eps (underflow or >= R)");
    }
  }
  if (c.kind == Kind::StokesConcentrated || c.kind == Kind::CellWsharp) {
    if (!(c.gamma > 0.0)) fail(path + ".gamma", "required > 0 for this kind");
  }
  if (c.kind == Kind::StokesConcentrated) {
    for (size_t j = 0; j < c.eps_list.size(); ++j) {
      double ry = 0.0;
      try {
        ry = closed_form::stokes_radius(c.gamma, c.eps_list[j]);
      } catch (const std::exception& e) {
        fail(path + ".eps_list[" + std::to_string(j) + "]", e.what());
      }
      if (!(ry > 0.0 && ry < 1.0))
        fail(path + ".eps_list[" + std::to_string(j) + "]",
             "hole radius degenerates at this eps (underflow or >= cell)");
    }
  }
  if (c.kind == Kind::Manufactured) {
    if (c.problem != "scalar" && c.problem != "stokes")
      fail(path + ".problem", "expected 'scalar' or 'stokes'");
    for (size_t j = 0; j < c.eps_list.size(); ++j) {
      const double n = 1.0 / c.eps_list[j];
      if (std::abs(n - std::lround(n)) > 1e-9 || std::lround(n) < 2)
        fail(path + ".eps_list[" + std::to_string(j) + "]",
             "manufactured ladder entries must be 1/n for integer n >= 2");
    }
  }

  static const std::set<std::string> scalar_presets = {"one", "sinsin", "poly"};
  static const std::set<std::string> stokes_presets = {"swirl", "unit_x", "shear", "poly"};
  if (is_scalar_kind(c.kind) && !scalar_presets.count(c.f_preset))
    fail(path + ".f", "unknown scalar source preset '" + c.f_preset + "'");
  if (is_stokes_vector_kind(c.kind) && !stokes_presets.count(c.f_preset))
    fail(path + ".f", "unknown vector source preset '" + c.f_preset + "'");

  return c;
}

// ---------------------------------------------------------------------------
// sources

fem::ScalarCoef scalar_source(const ScenarioConfig& c) {
  if (c.f_preset == "sinsin")
    return [](Vec2 p, mesh::Subdomain) { return std::sin(kPi * p.x) * std::sin(kPi * p.y); };
  if (c.f_preset == "poly") {
    std::array<double, 6> a{};
    for (size_t i = 0; i < c.f_poly.size(); ++i) a[i] = c.f_poly[i];
    return [a](Vec2 p, mesh::Subdomain) {
      return a[0] + a[1] * p.x + a[2] * p.y + a[3] * p.x * p.x + a[4] * p.x * p.y +
             a[5] * p.y * p.y;
    };
  }
  return [](Vec2, mesh::Subdomain) { return 1.0; };
}

fem::VectorCoef vector_source(const ScenarioConfig& c) {
  if (c.f_preset == "unit_x") return [](Vec2, mesh::Subdomain) { return Vec2{1.0, 0.0}; };
  if (c.f_preset == "shear")
    return [](Vec2 p, mesh::Subdomain) { return Vec2{std::sin(2.0 * kPi * p.y), 0.0}; };
  if (c.f_preset == "poly") {
    std::array<double, 6> a{};
    for (size_t i = 0; i < c.f_poly.size(); ++i) a[i] = c.f_poly[i];
    return [a](Vec2 p, mesh::Subdomain) {
      const double v = a[0] + a[1] * p.x + a[2] * p.y + a[3] * p.x * p.x + a[4] * p.x * p.y +
                       a[5] * p.y * p.y;
      return Vec2{v, v};
    };
  }
  // Two-component, non-gradient default: a gradient force is absorbed by the
  // pressure and yields u = 0, which carries no coefficient information.
  return [](Vec2 p, mesh::Subdomain) {
    return Vec2{std::sin(2.0 * kPi * p.y), std::sin(2.0 * kPi * p.x)};
  };
}

// ---------------------------------------------------------------------------
// per-row execution

struct RowResult {
  lab::EffectiveRow row;
  std::array<double, 4> aux{};  // kind-specific side-table payload
  bool has_aux = false;
  std::string vtk;
};

// Radial capacity-profile drift on every annulus of a perforated lattice;
// the coefficient alpha = 1/ln(R/r_eps) is scale invariant, the radii are
// physical.
struct LatticeProfile {
  Vec2 origin;
  double pitch = 0.0;
  int nx = 0, ny = 0;
  double alpha = 0.0;

  Vec2 center_of(Vec2 p) const {
    int ix = std::clamp(static_cast<int>(std::floor((p.x - origin.x) / pitch)), 0, nx - 1);
    int iy = std::clamp(static_cast<int>(std::floor((p.y - origin.y) / pitch)), 0, ny - 1);
    return {origin.x + (ix + 0.5) * pitch, origin.y + (iy + 0.5) * pitch};
  }
  Vec2 grad_w(Vec2 p, mesh::Subdomain s) const {
    if (s != mesh::Subdomain::Annulus) return {0.0, 0.0};
    Vec2 d = p - center_of(p);
    const double r2 = d.x * d.x + d.y * d.y;
    return d * (-alpha / r2);
  }
};

std::string vtk_path(const RunOptions& o, const ScenarioConfig& c, int idx) {
  std::ostringstream os;
  os << o.out_dir << "/" << c.name << "_" << idx << ".vtk";
  return os.str();
}

double effective_tol(const ScenarioConfig& c, const RunOptions& o) {
  return o.tol_override > 0.0 ? o.tol_override : c.tol;
}

RowResult run_scalar_smooth(const ScenarioConfig& c, double eps, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const int per = c.mesh.n > 0 ? c.mesh.n : 12;
  const int n = static_cast<int>(std::lround(per / eps));
  const mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});

  const double a = c.amplitude, k = 2.0 * kPi / eps;
  const fem::VectorCoef b = [a, k](Vec2 p, mesh::Subdomain) {
    return Vec2{a * std::cos(k * p.x), 0.0};
  };
  const auto f = scalar_source(c);
  const auto sol = fem::solve_drift(m, b, f, tol);
  const double mu = a * a / 2.0;

  auto hm = std::make_shared<mesh::Mesh>(mesh::structured_square(c.hom_n, {0.0, 0.0}, {1.0, 1.0}));
  auto solver = [hm, f, tol](double g) {
    return fem::solve_homogenized_scalar(*hm, [g](Vec2, mesh::Subdomain) { return g; },
                                         fem::VectorCoef{}, f, tol)
        .field;
  };
  const auto fit = lab::fit_gamma_scalar(sol.field, solver, mu, c.interior_margin);
  const auto u_hom = solver(mu);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = kNan;
  out.row.dofs = static_cast<int>(m.vertices.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = sol.energy_residual;
  out.row.gamma_eff = fit.gamma_eff;
  out.row.corrector_norm =
      lab::corrector_norm_scalar(sol.field, u_hom, b, c.corrector_p, c.interior_margin);
  out.row.solver_iters = sol.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    m.write_vtk(out.vtk, sol.field.values);
  }
  return out;
}

RowResult run_scalar_concentrated(const ScenarioConfig& c, double eps, int idx,
                                  const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const double re = closed_form::scalar_radius(c.mu, eps, c.R);
  const closed_form::AnnulusSpec ann{c.R, re};
  const mesh::Mesh m = mesh::perforated_lattice({0.0, 0.0}, {1.0, 1.0}, eps, ann, c.mesh.grading);

  LatticeProfile prof;
  prof.origin = {0.0, 0.0};
  prof.pitch = eps;
  prof.nx = prof.ny = static_cast<int>(std::lround(1.0 / eps));
  prof.alpha = ann.alpha();
  const fem::VectorCoef b = [prof](Vec2 p, mesh::Subdomain s) { return prof.grad_w(p, s); };

  const auto f = scalar_source(c);
  const auto sol = fem::solve_drift(m, b, f, tol);

  auto hm = std::make_shared<mesh::Mesh>(mesh::structured_square(c.hom_n, {0.0, 0.0}, {1.0, 1.0}));
  auto solver = [hm, f, tol](double g) {
    return fem::solve_homogenized_scalar(*hm, [g](Vec2, mesh::Subdomain) { return g; },
                                         fem::VectorCoef{}, f, tol)
        .field;
  };
  const auto fit = lab::fit_gamma_scalar(sol.field, solver, c.mu, c.interior_margin);

  const auto probe = lab::weak_limit_probe(
      eps, ann, [](Vec2) { return 1.0; }, {0.0, 0.0}, {1.0, 1.0}, c.interior_margin);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = re * eps;  // physical hole radius
  out.row.dofs = static_cast<int>(m.vertices.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = sol.energy_residual;
  out.row.gamma_eff = fit.gamma_eff;
  out.row.probe_ratio = probe.probe / probe.predicted;
  out.row.solver_iters = sol.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    m.write_vtk(out.vtk, sol.field.values);
  }
  return out;
}

RowResult run_stokes_smooth(const ScenarioConfig& c, double eps, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const int per = c.mesh.n > 0 ? c.mesh.n : 8;
  const int n = static_cast<int>(std::lround(per / eps));
  const mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});

  const double a = c.amplitude, k = 2.0 * kPi / eps;
  const fem::VectorCoef v = [a, k](Vec2 p, mesh::Subdomain) {
    return Vec2{a * std::cos(k * p.y), 0.0};
  };
  const auto f = vector_source(c);
  const auto sol = fem::solve_perturbed(m, fem::DriftSpec::smooth(v), f, tol);

  auto hm = std::make_shared<mesh::Mesh>(mesh::structured_square(c.hom_n, {0.0, 0.0}, {1.0, 1.0}));
  auto warm = std::make_shared<std::vector<double>>();
  auto solver = [hm, f, tol, warm](const Mat2& G) {
    auto r = fem::solve_brinkman(*hm, 0.0, G, f, tol, warm->empty() ? nullptr : warm.get());
    *warm = r.dofs;
    return r.field;
  };
  lab::BrinkmanFitOptions opts;
  opts.gamma = 0.0;
  opts.interior_margin = c.interior_margin;
  opts.fit_m22 = true;
  opts.m22_max = std::max(1.0, a * a);
  const auto fit = lab::fit_brinkman_matrix(sol.field, solver, opts);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = kNan;
  out.row.dofs = static_cast<int>(sol.dofs.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = sol.energy_residual;
  out.row.gamma_eff = fit.m22;  // effective zero-order strength diag(0, m22)
  out.row.s = fit.s;
  out.row.t = fit.t;
  out.row.solver_iters = sol.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    fem::write_stokes_vtk(sol.field, out.vtk);
  }
  return out;
}

RowResult run_stokes_concentrated(const ScenarioConfig& c, double eps, int idx,
                                  const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const double ry = closed_form::stokes_radius(c.gamma, eps);
  const closed_form::AnnulusSpec ann{0.5, 0.5 * ry};
  const mesh::Mesh m =
      mesh::perforated_lattice({0.0, 0.0}, {1.0, 1.0}, 2.0 * eps, ann, c.mesh.grading);

  const double weight = 1.0 / (kPi * ry * ry);
  const auto f = vector_source(c);
  const auto sol = fem::solve_perturbed(m, fem::DriftSpec::concentrated(weight), f, tol);

  auto hm = std::make_shared<mesh::Mesh>(mesh::structured_square(c.hom_n, {0.0, 0.0}, {1.0, 1.0}));
  auto warm = std::make_shared<std::vector<double>>();
  auto solver = [hm, f, tol, warm](const Mat2& G) {
    auto r = fem::solve_brinkman(*hm, 0.0, G, f, tol, warm->empty() ? nullptr : warm.get());
    *warm = r.dofs;
    return r.field;
  };
  lab::BrinkmanFitOptions opts;
  opts.gamma = c.gamma;
  opts.interior_margin = c.interior_margin;
  const auto fit = lab::fit_brinkman_matrix(sol.field, solver, opts);

  // Corrector norm against the closed-form limit matrix, with the oscillating
  // part carried by the two cell solutions tiled over the lattice.
  const mesh::Mesh cell_mesh = mesh::annulus_cell(1.0, ry, {0, 1.3, 0.08});
  const auto v1 = fem::solve_cell_V(cell_mesh, ry, 1, tol);
  const auto v2 = fem::solve_cell_V(cell_mesh, ry, 2, tol);
  const auto u_hom = fem::solve_brinkman(*hm, 0.0, closed_form::brinkman_matrix(c.gamma), f, tol);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = ry * eps;  // physical hole radius (pitch 2*eps, unit-cell 0.5*ry)
  out.row.dofs = static_cast<int>(sol.dofs.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = sol.energy_residual;
  out.row.gamma_eff = std::abs(fit.t) > 0.0 ? fit.s / std::abs(fit.t) : kNan;
  out.row.s = fit.s;
  out.row.t = fit.t;
  out.row.corrector_norm =
      lab::corrector_norm_stokes(sol.field, u_hom.field, &v1.field, &v2.field, c.gamma, ry);
  out.row.probe_ratio = v1.gamma_cell / closed_form::stokes_gamma_asymptotic(ry);
  out.row.solver_iters = sol.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    fem::write_stokes_vtk(sol.field, out.vtk);
  }
  return out;
}

RowResult run_cell_z(const ScenarioConfig& c, double eps, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const double re = closed_form::scalar_radius(c.mu, eps, c.R);
  const closed_form::AnnulusSpec ann{c.R, re};
  const mesh::Mesh m = mesh::disk_cell(c.R, c.mesh.grading, re);
  const auto sol = fem::solve_z_cell(m, eps, ann, tol);

  // The solve lives on the disk of radius R; the profile is constant (= its
  // boundary value) from R out to the cell boundary, so the cell average adds
  // that constant over the remaining area.
  const auto tags = m.boundary_vertex_tag();
  double bsum = 0.0;
  int bcount = 0;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] != -1) {
      bsum += sol.field.values[i];
      ++bcount;
    }
  }
  const double boundary_value = bcount > 0 ? bsum / bcount : 0.0;
  const double avg = fem::integral(sol.field) + (1.0 - kPi * c.R * c.R) * boundary_value;

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = re;
  out.row.dofs = static_cast<int>(m.vertices.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = sol.energy_residual;
  out.row.gamma_eff = avg * c.mu;
  out.row.solver_iters = sol.report.iterations;

  out.has_aux = true;
  out.aux = {eps, avg * c.mu, closed_form::z_profile(eps, ann).cell_average() * c.mu,
             closed_form::z_profile_shifted(eps, ann, 3.0).cell_average() * c.mu};
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    m.write_vtk(out.vtk, sol.field.values);
  }
  return out;
}

RowResult run_cell_v(const ScenarioConfig& c, double r, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const mesh::Mesh m = mesh::annulus_cell(1.0, r, c.mesh.grading);
  const auto res = fem::solve_cell_V(m, r, 1, tol);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = r;  // the ladder parameter of this kind is the inner radius
  out.row.r_eps = r;
  out.row.dofs = static_cast<int>(res.field.vel.size() + res.field.pres.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = kNan;
  out.row.gamma_eff = res.gamma_cell;
  out.row.probe_ratio = res.gamma_cell / closed_form::stokes_gamma_asymptotic(r);
  out.row.solver_iters = res.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    fem::write_stokes_vtk(res.field, out.vtk);
  }
  return out;
}

RowResult run_cell_wsharp(const ScenarioConfig& c, double r, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const double eps = std::sqrt(4.0 * kPi / (c.gamma * std::abs(std::log(r))));
  const mesh::Mesh m = mesh::periodic_cell(closed_form::AnnulusSpec{0.5, r}, 1.0, c.mesh.grading);
  const auto res = fem::solve_cell_Wsharp(m, eps, r, c.lambda, tol);

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = r;
  out.row.dofs = static_cast<int>(res.field.vel.size() + res.field.pres.size());
  out.row.h_min = m.h_min();
  out.row.energy_residual = res.energy_residual;
  out.row.s = res.wbar.x;
  out.row.t = res.wbar.y;
  const double l2 = c.lambda.x * c.lambda.x + c.lambda.y * c.lambda.y;
  out.row.probe_ratio = res.m_quadratic * 4.0 * c.gamma / l2;  // -> 1 as r -> 0
  out.row.solver_iters = res.report.iterations;
  if (o.vtk) {
    out.vtk = vtk_path(o, c, idx);
    fem::write_stokes_vtk(res.field, out.vtk);
  }
  return out;
}

// Manufactured Stokes solution: u = curl(g(x) g(y)) with g(t) = t^2 (1-t)^2,
// p = x + y - 1 (zero mean).
double mg(double t) { return t * t * (1.0 - t) * (1.0 - t); }
double mg1(double t) { return 2.0 * t - 6.0 * t * t + 4.0 * t * t * t; }
double mg2(double t) { return 2.0 - 12.0 * t + 12.0 * t * t; }
double mg3(double t) { return -12.0 + 24.0 * t; }
Vec2 manufactured_velocity(Vec2 p) { return {mg(p.x) * mg1(p.y), -mg1(p.x) * mg(p.y)}; }

RowResult run_manufactured(const ScenarioConfig& c, double eps, int idx, const RunOptions& o) {
  const double tol = effective_tol(c, o);
  const int n = static_cast<int>(std::lround(1.0 / eps));
  const mesh::Mesh m = mesh::structured_square(n, {0.0, 0.0}, {1.0, 1.0});

  RowResult out;
  out.row.scenario = c.name;
  out.row.eps = eps;
  out.row.r_eps = kNan;
  out.row.h_min = m.h_min();
  out.has_aux = true;

  if (c.problem == "scalar") {
    auto exact = [](Vec2 p) { return std::sin(kPi * p.x) * std::sin(kPi * p.y); };
    const fem::ScalarCoef f = [exact](Vec2 p, mesh::Subdomain) {
      return 2.0 * kPi * kPi * exact(p);
    };
    const auto sol = fem::solve_homogenized_scalar(
        m, [](Vec2, mesh::Subdomain) { return 0.0; }, fem::VectorCoef{}, f, tol);
    const double el2 = fem::l2_error(sol.field, exact);
    // H1 seminorm error by midpoint quadrature (exact for the P1 gradient).
    double eh1 = 0.0;
    for (size_t t = 0; t < m.triangles.size(); ++t) {
      const Vec2 g = fem::gradient_on_triangle(sol.field, static_cast<int>(t));
      const auto& tri = m.triangles[t];
      const double area = std::abs(m.signed_area(static_cast<int>(t)));
      for (int e = 0; e < 3; ++e) {
        const Vec2 mid = (m.vertices[tri[e]] + m.vertices[tri[(e + 1) % 3]]) * 0.5;
        const Vec2 ge{kPi * std::cos(kPi * mid.x) * std::sin(kPi * mid.y),
                      kPi * std::sin(kPi * mid.x) * std::cos(kPi * mid.y)};
        const Vec2 d = g - ge;
        eh1 += area / 3.0 * (d.x * d.x + d.y * d.y);
      }
    }
    eh1 = std::sqrt(eh1);
    out.row.dofs = static_cast<int>(m.vertices.size());
    out.row.energy_residual = sol.energy_residual;
    out.row.corrector_norm = el2;  // the scenario's convergent error metric
    out.row.solver_iters = sol.report.iterations;
    out.aux = {1.0 / n, el2, eh1, kNan};
    if (o.vtk) {
      out.vtk = vtk_path(o, c, idx);
      m.write_vtk(out.vtk, sol.field.values);
    }
  } else {
    const fem::VectorCoef f = [](Vec2 p, mesh::Subdomain) {
      const double du1 = mg2(p.x) * mg1(p.y) + mg(p.x) * mg3(p.y);
      const double du2 = -mg3(p.x) * mg(p.y) - mg1(p.x) * mg2(p.y);
      return Vec2{-du1 + 1.0, -du2 + 1.0};
    };
    const auto sol = fem::solve_brinkman(m, 0.0, Mat2{}, f, tol);
    const double eu = fem::velocity_l2_error(sol.field, manufactured_velocity);
    const double ep = fem::pressure_l2_error(sol.field, [](Vec2 p) { return p.x + p.y - 1.0; });
    out.row.dofs = static_cast<int>(sol.dofs.size());
    out.row.energy_residual = sol.energy_residual;
    out.row.corrector_norm = eu;
    out.row.solver_iters = sol.report.iterations;
    out.aux = {1.0 / n, eu, ep, kNan};
    if (o.vtk) {
      out.vtk = vtk_path(o, c, idx);
      fem::write_stokes_vtk(sol.field, out.vtk);
    }
  }
  return out;
}

RowResult run_one(const ScenarioConfig& c, double ladder, int idx, const RunOptions& o) {
  switch (c.kind) {
    case Kind::ScalarSmooth:
      return run_scalar_smooth(c, ladder, idx, o);
    case Kind::ScalarConcentrated:
      return run_scalar_concentrated(c, ladder, idx, o);
    case Kind::StokesSmooth:
      return run_stokes_smooth(c, ladder, idx, o);
    case Kind::StokesConcentrated:
      return run_stokes_concentrated(c, ladder, idx, o);
    case Kind::CellZ:
      return run_cell_z(c, ladder, idx, o);
    case Kind::CellV:
      return run_cell_v(c, ladder, idx, o);
    case Kind::CellWsharp:
      return run_cell_wsharp(c, ladder, idx, o);
    case Kind::Manufactured:
      return run_manufactured(c, ladder, idx, o);
  }
  throw ArgumentError("run_one: unknown kind");
}

std::string aux_header(Kind k) {
  if (k == Kind::CellZ) return "eps,zbar_fem,zbar_profile,zbar_printed";
  return "h,err_u,err_aux,order_u,order_aux";
}

std::string fmt_g(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

const char* kind_name(Kind k) {
  for (const auto& [name, kind] : kind_table())
    if (kind == k) return name.c_str();
  return "?";
}

std::vector<ScenarioConfig> parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("scenarios") || !doc.at("scenarios").is_array())
    throw ConfigError("config: expected an object with a 'scenarios' array");
  for (const auto& item : doc.items())
    if (item.key() != "scenarios") throw ConfigError("config." + item.key() + ": unknown field");

  std::vector<ScenarioConfig> out;
  std::set<std::string> names;
  const auto& arr = doc.at("scenarios");
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string path = "scenarios[" + std::to_string(i) + "]";
    ScenarioConfig c = parse_scenario(arr[i], path);
    if (!names.insert(c.name).second) fail(path + ".name", "duplicate scenario name");
    out.push_back(std::move(c));
  }
  if (out.empty()) throw ConfigError("config.scenarios: must not be empty");
  return out;
}

std::vector<ScenarioConfig> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_hash(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  const std::string canon = doc.dump();  // sorted keys, fixed spacing
  uint64_t h = 1469598103934665603ull;   // FNV-1a 64
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunOutcome run_scenarios(const std::vector<ScenarioConfig>& configs, const RunOptions& opts) {
  RunOutcome outcome;

  struct Task {
    const ScenarioConfig* cfg;
    double ladder;
    int idx;
  };
  std::vector<Task> tasks;
  for (const auto& c : configs) {
    const auto& ladder = uses_r_list(c.kind) ? c.r_list : c.eps_list;
    for (size_t j = 0; j < ladder.size(); ++j)
      tasks.push_back({&c, ladder[j], static_cast<int>(j)});
  }

  const std::string report_csv = opts.out_dir + "/report.csv";
  const std::string report_json = opts.out_dir + "/report.json";
  outcome.outputs.push_back(report_csv);
  outcome.outputs.push_back(report_json);
  for (const auto& c : configs)
    if (c.kind == Kind::CellZ)
      outcome.outputs.push_back(opts.out_dir + "/" + c.name + "_zbar.csv");
    else if (c.kind == Kind::Manufactured)
      outcome.outputs.push_back(opts.out_dir + "/" + c.name + "_orders.csv");

  if (opts.dry_run) return outcome;

  std::filesystem::create_directories(opts.out_dir);

  std::vector<RowResult> results(tasks.size());
  std::vector<char> ok(tasks.size(), 0);
  for (size_t i = 0; i < tasks.size(); ++i) {
    const auto& t = tasks[i];
    HOMOG_INFO("scenario %s: point %g (%zu/%zu)", t.cfg->name.c_str(), t.ladder, i + 1,
               tasks.size());
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[i] = run_one(*t.cfg, t.ladder, t.idx, opts);
      ok[i] = 1;
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << t.cfg->name << " at " << t.ladder << ": " << e.what();
      outcome.errors.push_back(os.str());
      outcome.solver_failure = true;
      continue;
    }
    results[i].row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  for (size_t i = 0; i < tasks.size(); ++i) {
    if (!ok[i]) continue;
    outcome.rows.push_back(results[i].row);
    if (!results[i].vtk.empty()) outcome.outputs.push_back(results[i].vtk);
  }

  lab::write_report_csv(outcome.rows, report_csv);
  lab::write_report_json(outcome.rows, report_json);

  // Side tables, in configured ladder order.
  for (const auto& c : configs) {
    if (c.kind != Kind::CellZ && c.kind != Kind::Manufactured) continue;
    std::vector<const RowResult*> mine;
    for (size_t i = 0; i < tasks.size(); ++i)
      if (ok[i] && tasks[i].cfg == &c && results[i].has_aux) mine.push_back(&results[i]);
    if (mine.empty()) continue;
    const std::string path = opts.out_dir + "/" + c.name +
                             (c.kind == Kind::CellZ ? "_zbar.csv" : "_orders.csv");
    std::ofstream f(path);
    f << aux_header(c.kind) << "\n";
    for (size_t j = 0; j < mine.size(); ++j) {
      const auto& a = mine[j]->aux;
      if (c.kind == Kind::CellZ) {
        f << fmt_g(a[0]) << "," << fmt_g(a[1]) << "," << fmt_g(a[2]) << "," << fmt_g(a[3]) << "\n";
      } else {
        double ou = kNan, oa = kNan;
        if (j > 0) {
          const auto& prev = mine[j - 1]->aux;
          const double dh = std::log(prev[0] / a[0]);
          ou = std::log(prev[1] / a[1]) / dh;
          oa = std::log(prev[2] / a[2]) / dh;
        }
        f << fmt_g(a[0]) << "," << fmt_g(a[1]) << "," << fmt_g(a[2]) << "," << fmt_g(ou) << ","
          << fmt_g(oa) << "\n";
      }
    }
  }
  return outcome;
}

void write_manifest(const std::string& path, const std::string& config_hash,
                    const std::vector<std::string>& outputs, const std::string& started,
                    const std::string& finished) {
  json doc;
  doc["artifact_version"] = kArtifactVersion;
  doc["config_hash"] = config_hash;
  doc["outputs"] = outputs;
  doc["started"] = started;
  doc["finished"] = finished;
  std::ofstream f(path);
  if (!f) throw ArgumentError("write_manifest: cannot write '" + path + "'");
  f << doc.dump(2) << "\n";
}

std::vector<std::string> report_assertions(const std::vector<lab::EffectiveRow>& rows) {
  std::vector<std::string> failures;
  std::map<std::string, std::vector<const lab::EffectiveRow*>> by_scenario;
  for (const auto& r : rows) by_scenario[r.scenario].push_back(&r);

  for (auto& [name, list] : by_scenario) {
    std::sort(list.begin(), list.end(),
              [](const lab::EffectiveRow* a, const lab::EffectiveRow* b) { return a->eps < b->eps; });
    for (const auto* r : list) {
      if (std::isfinite(r->energy_residual) && !(r->energy_residual <= 1e-8)) {
        std::ostringstream os;
        os << name << ": energy residual " << r->energy_residual << " at eps=" << r->eps
           << " exceeds 1e-8";
        failures.push_back(os.str());
      }
    }
    // Rows are ascending in eps, so along the refinement ladder (descending
    // eps) the corrector norm must be strictly decreasing.
    for (size_t i = 0; i + 1 < list.size(); ++i) {
      const double fine = list[i]->corrector_norm, coarse = list[i + 1]->corrector_norm;
      if (std::isfinite(fine) && std::isfinite(coarse) && !(fine < coarse)) {
        std::ostringstream os;
        os << name << ": corrector norm does not decrease with refinement (" << coarse
           << " at eps=" << list[i + 1]->eps << " -> " << fine << " at eps=" << list[i]->eps
           << ")";
        failures.push_back(os.str());
      }
    }
  }
  return failures;
}

}  // namespace homog::scenario
