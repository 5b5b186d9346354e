#pragma once

#include <string>
#include <vector>

#include "homog/homog_lab.hpp"
#include "homog/mesh.hpp"

namespace homog::scenario {

enum class Kind {
  ScalarSmooth,
  ScalarConcentrated,
  StokesSmooth,
  StokesConcentrated,
  CellZ,
  CellV,
  CellWsharp,
  Manufactured,
};

const char* kind_name(Kind k);

struct MeshSpec {
  // Structured resolution. For oscillating-drift scenarios this is the number
  // of grid points per oscillation period (the grid is n/eps); for
  // manufactured runs it is the coarsest grid.
  int n = 0;
  mesh::GradingSpec grading{0, 1.3, 0.05};  // graded lattice / cell meshes
};

struct ScenarioConfig {
  std::string name;
  Kind kind = Kind::ScalarSmooth;
  double mu = 0.0;     // scalar zero-order scale
  double gamma = 0.0;  // Stokes zero-order scale
  std::vector<double> eps_list;  // strictly decreasing ladder
  std::vector<double> r_list;    // CELL_V / CELL_WSHARP inner radii, decreasing
  double R = 0.4;                // outer annulus radius (cell coordinates)
  double amplitude = 1.0;        // smooth drift amplitude
  MeshSpec mesh;
  std::string f_preset = "one";  // named source preset
  std::vector<double> f_poly;    // or monomial coefficients 1,x,y,x2,xy,y2
  Vec2 lambda{1.0, 0.0};         // CELL_WSHARP direction
  std::string problem = "scalar";  // MANUFACTURED: scalar | stokes
  double interior_margin = 0.1;
  double tol = 1e-10;
  int hom_n = 48;           // homogenized reference grid
  double corrector_p = 1.5;  // L^p exponent of the scalar corrector norm
};

struct RunOptions {
  std::string out_dir = ".";
  int threads = 1;
  double tol_override = 0.0;  // 0 keeps each scenario's tol
  bool vtk = false;
  bool dry_run = false;  // validate, plan and hash only
};

struct RunOutcome {
  std::vector<lab::EffectiveRow> rows;
  std::vector<std::string> outputs;  // files written (report, aux tables, vtk)
  std::vector<std::string> errors;   // per-row solver failures, "scenario/eps: what"
  bool solver_failure = false;
};

/// Parses and validates a config document. Throws ConfigError whose message
/// names the offending field path (e.g. "scenarios[1].eps_list").
std::vector<ScenarioConfig> parse_config(const std::string& json_text);
std::vector<ScenarioConfig> load_config_file(const std::string& path);

/// FNV-1a hash of the canonicalized document: key order and whitespace do not
/// change it, any semantic change does.
std::string config_hash(const std::string& json_text);

/// Executes every scenario row (scenario x ladder point), writes report.csv /
/// report.json plus per-kind auxiliary tables under out_dir, and returns the
/// rows. Solver failures are recorded per row and flagged, not thrown.
RunOutcome run_scenarios(const std::vector<ScenarioConfig>& configs, const RunOptions& opts);

/// Writes manifest.json (config hash, artifact version, outputs, timestamps).
void write_manifest(const std::string& path, const std::string& config_hash,
                    const std::vector<std::string>& outputs, const std::string& started,
                    const std::string& finished);

/// Trend/tolerance gate over merged report rows: energy residuals at most
/// 1e-8, corrector norms strictly decreasing along each scenario's refinement
/// ladder, per-cell probe ratios equal to 1 within 1e-8 where present.
/// Returns the failing assertions ("scenario: what"), empty when all pass.
std::vector<std::string> report_assertions(const std::vector<lab::EffectiveRow>& rows);

}  // namespace homog::scenario
