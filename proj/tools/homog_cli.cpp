// Command-line front end: execute scenario configs, merge and gate reports,
// and expose the mesh builders and cell problems for one-off inspection.

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "homog/closed_form.hpp"
#include "homog/common.hpp"
#include "homog/fem_scalar.hpp"
#include "homog/fem_stokes.hpp"
#include "homog/homog_lab.hpp"
#include "homog/mesh.hpp"
#include "homog/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitSolver = 2;
constexpr int kExitConfig = 3;

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw homog::ConfigError("config: cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string cell_str(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void print_table(const std::vector<homog::lab::EffectiveRow>& rows) {
  const std::vector<std::string> headers = {"scenario",      "eps",       "r_eps",
                                            "dofs",          "h_min",     "energy_res",
                                            "gamma_eff",     "s",         "t",
                                            "corrector",     "probe",     "iters",
                                            "wall_s"};
  std::vector<std::vector<std::string>> table;
  table.push_back(headers);
  for (const auto& r : rows) {
    table.push_back({r.scenario, cell_str(r.eps), cell_str(r.r_eps), std::to_string(r.dofs),
                     cell_str(r.h_min), cell_str(r.energy_residual), cell_str(r.gamma_eff),
                     cell_str(r.s), cell_str(r.t), cell_str(r.corrector_norm),
                     cell_str(r.probe_ratio), std::to_string(r.solver_iters),
                     cell_str(r.wall_seconds)});
  }
  std::vector<size_t> width(headers.size(), 0);
  for (const auto& row : table)
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  for (const auto& row : table) {
    for (size_t c = 0; c < row.size(); ++c) {
      std::printf("%-*s", static_cast<int>(width[c] + 2), row[c].c_str());
    }
    std::printf("\n");
  }
}

struct RunArgs {
  std::string config_path;
  std::string out_dir = "out";
  int threads = 1;
  double tol = 0.0;
  bool vtk = false;
  bool dry_run = false;
};

int cmd_run(const RunArgs& a) {
  const std::string text = read_file(a.config_path);
  const auto configs = homog::scenario::parse_config(text);
  const std::string hash = homog::scenario::config_hash(text);

#ifdef _OPENMP
  if (a.threads > 0) omp_set_num_threads(a.threads);
#endif

  homog::scenario::RunOptions opts;
  opts.out_dir = a.out_dir;
  opts.threads = a.threads;
  opts.tol_override = a.tol;
  opts.vtk = a.vtk;
  opts.dry_run = a.dry_run;

  const std::string started = now_utc();
  const auto outcome = homog::scenario::run_scenarios(configs, opts);

  if (a.dry_run) {
    std::printf("config_hash %s\n", hash.c_str());
    for (const auto& o : outcome.outputs) std::printf("planned %s\n", o.c_str());
    return kExitOk;
  }

  homog::scenario::write_manifest(a.out_dir + "/manifest.json", hash, outcome.outputs, started,
                                  now_utc());
  print_table(outcome.rows);
  for (const auto& e : outcome.errors) std::fprintf(stderr, "solver failure: %s\n", e.c_str());
  return outcome.solver_failure ? kExitSolver : kExitOk;
}

int cmd_report(const std::vector<std::string>& paths, const std::string& out_path) {
  std::vector<std::vector<homog::lab::EffectiveRow>> parts;
  for (const auto& p : paths) parts.push_back(homog::lab::read_report_csv(p));
  const auto merged = homog::lab::merge_reports(parts);
  print_table(merged);
  if (!out_path.empty()) homog::lab::write_report_csv(merged, out_path);
  const auto failures = homog::scenario::report_assertions(merged);
  for (const auto& f : failures) std::fprintf(stderr, "ASSERTION FAILED: %s\n", f.c_str());
  if (!failures.empty()) return kExitAssertion;
  std::printf("all report assertions passed (%zu rows)\n", merged.size());
  return kExitOk;
}

struct MeshArgs {
  std::string kind = "structured";
  std::string out;
  int n = 16;
  double R = 0.4;
  double inner = 0.0;
  double pitch = 0.25;
  double target_h = 0.05;
};

int cmd_mesh(const MeshArgs& a) {
  homog::mesh::Mesh m;
  const homog::mesh::GradingSpec grading{0, 1.3, a.target_h};
  if (a.kind == "structured") {
    m = homog::mesh::structured_square(a.n, {0.0, 0.0}, {1.0, 1.0});
  } else if (a.kind == "disk") {
    m = homog::mesh::disk_cell(a.R, grading, a.inner);
  } else if (a.kind == "annulus") {
    if (!(a.inner > 0.0)) throw homog::ConfigError("mesh.inner: required > 0 for annulus");
    m = homog::mesh::annulus_cell(1.0, a.inner, grading);
  } else if (a.kind == "lattice") {
    if (!(a.inner > 0.0)) throw homog::ConfigError("mesh.inner: required > 0 for lattice");
    m = homog::mesh::perforated_lattice({0.0, 0.0}, {1.0, 1.0}, a.pitch,
                                        homog::closed_form::AnnulusSpec{a.R, a.inner}, grading);
  } else {
    throw homog::ConfigError("mesh.kind: expected structured|disk|annulus|lattice");
  }
  std::printf("vertices   %zu\n", m.vertices.size());
  std::printf("triangles  %zu\n", m.triangles.size());
  std::printf("h_min      %.6g\n", m.h_min());
  std::printf("h_max      %.6g\n", m.h_max());
  if (!a.out.empty()) {
    m.write_vtk(a.out);
    std::printf("wrote %s\n", a.out.c_str());
  }
  return kExitOk;
}

struct CellArgs {
  std::string kind = "z";
  double mu = 50.0;
  double gamma = 50.0;
  double eps = 0.25;
  double r = 0.1;
  double R = 0.4;
  double target_h = 0.05;
  std::vector<double> lambda = {1.0, 0.0};
  double tol = 1e-11;
  std::string out;
};

int cmd_cell(const CellArgs& a) {
  const homog::mesh::GradingSpec grading{0, 1.3, a.target_h};
  if (a.kind == "z") {
    const double re = homog::closed_form::scalar_radius(a.mu, a.eps, a.R);
    const homog::closed_form::AnnulusSpec ann{a.R, re};
    const auto m = homog::mesh::disk_cell(a.R, grading, re);
    const auto sol = homog::fem::solve_z_cell(m, a.eps, ann, a.tol);
    const auto tags = m.boundary_vertex_tag();
    double bsum = 0.0;
    int bcount = 0;
    for (size_t i = 0; i < tags.size(); ++i)
      if (tags[i] != -1) {
        bsum += sol.field.values[i];
        ++bcount;
      }
    const double pi = 3.14159265358979323846;
    const double avg =
        homog::fem::integral(sol.field) + (1.0 - pi * a.R * a.R) * (bsum / bcount);
    std::printf("r_eps            = %.12g\n", re);
    std::printf("cell_average_mu  = %.12g\n", avg * a.mu);
    std::printf("profile_mu       = %.12g\n",
                homog::closed_form::z_profile(a.eps, ann).cell_average() * a.mu);
    std::printf("printed_mu       = %.12g\n",
                homog::closed_form::z_profile_shifted(a.eps, ann, 3.0).cell_average() * a.mu);
    if (!a.out.empty()) m.write_vtk(a.out, sol.field.values);
  } else if (a.kind == "v") {
    const auto m = homog::mesh::annulus_cell(1.0, a.r, grading);
    const auto res = homog::fem::solve_cell_V(m, a.r, 1, a.tol);
    std::printf("gamma_cell       = %.12g\n", res.gamma_cell);
    std::printf("asymptotic       = %.12g\n", homog::closed_form::stokes_gamma_asymptotic(a.r));
    std::printf("ratio            = %.12g\n",
                res.gamma_cell / homog::closed_form::stokes_gamma_asymptotic(a.r));
    if (!a.out.empty()) homog::fem::write_stokes_vtk(res.field, a.out);
  } else if (a.kind == "wsharp") {
    if (a.lambda.size() != 2) throw homog::ConfigError("cell.lambda: expected two components");
    const double pi = 3.14159265358979323846;
    const double eps = std::sqrt(4.0 * pi / (a.gamma * std::abs(std::log(a.r))));
    const auto m =
        homog::mesh::periodic_cell(homog::closed_form::AnnulusSpec{0.5, a.r}, 1.0, grading);
    const homog::Vec2 lambda{a.lambda[0], a.lambda[1]};
    const auto res = homog::fem::solve_cell_Wsharp(m, eps, a.r, lambda, a.tol);
    const double l2 = lambda.x * lambda.x + lambda.y * lambda.y;
    std::printf("eps              = %.12g\n", eps);
    std::printf("wbar             = (%.12g, %.12g)\n", res.wbar.x, res.wbar.y);
    std::printf("predicted_wbar   = (%.12g, %.12g)\n", lambda.y / a.gamma, -lambda.x / a.gamma);
    std::printf("m_quadratic      = %.12g\n", res.m_quadratic);
    std::printf("predicted_mq     = %.12g\n", l2 / (4.0 * a.gamma));
    std::printf("energy_residual  = %.3g\n", res.energy_residual);
    if (!a.out.empty()) homog::fem::write_stokes_vtk(res.field, a.out);
  } else {
    throw homog::ConfigError("cell.kind: expected z|v|wsharp");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical homogenization laboratory"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Execute a scenario config and write reports");
  run->add_option("config", run_args.config_path, "JSON config file")->required();
  run->add_option("--out-dir", run_args.out_dir, "Output directory");
  run->add_option("--threads", run_args.threads, "OpenMP thread count");
  run->add_option("--tol", run_args.tol, "Override every scenario's solver tolerance");
  run->add_flag("--vtk", run_args.vtk, "Write a VTK field per scenario point");
  run->add_flag("--dry-run", run_args.dry_run, "Validate, print hash and planned outputs");

  std::vector<std::string> report_paths;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Merge report CSVs and check trend assertions");
  report->add_option("csv", report_paths, "Report CSV files")->required();
  report->add_option("--out", report_out, "Write the merged CSV here");

  MeshArgs mesh_args;
  auto* mesh = app.add_subcommand("mesh", "Build a mesh and print its statistics");
  mesh->add_option("--kind", mesh_args.kind, "structured|disk|annulus|lattice");
  mesh->add_option("--n", mesh_args.n, "Structured resolution");
  mesh->add_option("--R", mesh_args.R, "Outer radius");
  mesh->add_option("--inner", mesh_args.inner, "Inner radius");
  mesh->add_option("--pitch", mesh_args.pitch, "Lattice pitch");
  mesh->add_option("--target-h", mesh_args.target_h, "Grading target h");
  mesh->add_option("--out", mesh_args.out, "VTK output path");

  CellArgs cell_args;
  auto* cell = app.add_subcommand("cell", "Solve one cell problem and print its quantities");
  cell->add_option("--kind", cell_args.kind, "z|v|wsharp");
  cell->add_option("--mu", cell_args.mu, "Zero-order scale (z)");
  cell->add_option("--gamma", cell_args.gamma, "Zero-order scale (wsharp)");
  cell->add_option("--eps", cell_args.eps, "Cell size (z)");
  cell->add_option("--r", cell_args.r, "Inner radius (v, wsharp)");
  cell->add_option("--R", cell_args.R, "Outer radius (z)");
  cell->add_option("--target-h", cell_args.target_h, "Grading target h");
  cell->add_option("--lambda", cell_args.lambda, "Direction (wsharp)")->expected(2);
  cell->add_option("--tol", cell_args.tol, "Solver tolerance");
  cell->add_option("--out", cell_args.out, "VTK output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (report->parsed()) return cmd_report(report_paths, report_out);
    if (mesh->parsed()) return cmd_mesh(mesh_args);
    if (cell->parsed()) return cmd_cell(cell_args);
  } catch (const homog::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const homog::SchemaError& e) {
    std::fprintf(stderr, "schema error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitSolver;
  }
  return kExitOk;
}
