#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coarse2fine/analysis.hpp"
#include "coarse2fine/em.hpp"
#include "coarse2fine/io.hpp"
#include "coarse2fine/simulation.hpp"

namespace c2f {

// Everything a run can configure; mirrors the JSON config file field for
// field. Command-line flags override individual entries after the file loads.
struct RunConfig {
  std::string method = "all";  // naive | mom | em | all
  FitConfig fit;
  std::optional<SimulationConfig> sim;
  SubsampleSpec se;
  int splits = 20;
  std::vector<std::string> eval_methods = {"null", "naive", "em", "oracle"};
  std::optional<double> cap_m;
  std::string output_dir = ".";
};

RunConfig load_run_config(const std::string& path);

/// Accepts "inf" (any case) or a number.
double parse_wh(const std::string& text);

struct SimulateCmd {
  SimulationConfig sim;
  std::string scenario;  // informational; recorded in sim_meta.json
  std::string out_dir = ".";
};

struct FitCmd {
  IngestSpec data;
  std::string method = "all";
  FitConfig fit;
  std::string out_dir = ".";
};

struct SeCmd {
  IngestSpec data;
  std::string method = "em";
  FitConfig fit;
  SubsampleSpec spec;
  std::string out_dir = ".";
};

struct EvalCmd {
  IngestSpec data;
  std::vector<std::string> methods = {"null", "naive", "em", "oracle"};
  int splits = 20;
  std::uint64_t seed = 0;
  FitConfig fit;
  std::string out_dir = ".";
};

struct ReportCmd {
  std::string rho_csv;
  std::optional<std::string> truth_csv;
  std::string out_svg = "report.svg";
};

// Writes groups.csv, items.csv (with true labels), truth.csv, truth_mu.csv,
// manifest.csv and sim_meta.json into out_dir.
void cmd_simulate(const SimulateCmd& cmd);

// Writes rho.csv; for the latent variables fit also mu.csv and trace.csv.
void cmd_fit(const FitCmd& cmd);

// Full-data point estimate plus half-sampling standard errors; writes rho.csv
// with the se column filled.
void cmd_se(const SeCmd& cmd);

/// Cross-validated per-item scores; writes eval.csv and eval_meta.json.
void cmd_eval(const EvalCmd& cmd);

/// Renders rho.csv (and optional truth.csv) to an SVG chart.
void cmd_report(const ReportCmd& cmd);

}  // namespace c2f
