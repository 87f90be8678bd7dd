#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coarse2fine/commands.hpp"

namespace {

using namespace c2f;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config_path;
  std::string groups_file;
  std::string items_file;
  std::string signal_kind = "logit";
  std::string features;  // comma separated
  std::string manifest_file;
  std::string wh_text;
  double cap_m = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir;
};

void add_data_flags(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--groups", flags.groups_file, "groups CSV (group_id,signal)")->required();
  sub->add_option("--items", flags.items_file,
                  "items CSV (group_id,bin[,weight][,label] or feature columns)")
      ->required();
  sub->add_option("--signal-kind", flags.signal_kind, "signal scale: logit or fraction")
      ->check(CLI::IsMember({"logit", "fraction"}));
  sub->add_option("--features", flags.features,
                  "comma-separated feature columns to cross into bins");
  sub->add_option("--manifest", flags.manifest_file, "bin manifest fixing K and labels");
  sub->add_option("--cap-m", flags.cap_m, "down-weight groups above this effective size");
}

IngestSpec make_ingest_spec(const CommonFlags& flags, const CLI::App* sub,
                            const RunConfig& cfg) {
  IngestSpec spec;
  spec.groups_file = flags.groups_file;
  spec.items_file = flags.items_file;
  spec.signal_kind =
      flags.signal_kind == "fraction" ? SignalKind::fraction : SignalKind::logit;
  if (!flags.features.empty()) {
    std::string token;
    std::istringstream ss(flags.features);
    while (std::getline(ss, token, ',')) {
      if (!token.empty()) spec.feature_columns.push_back(token);
    }
  }
  if (!flags.manifest_file.empty()) spec.manifest_file = flags.manifest_file;
  if (sub->count("--cap-m") > 0) {
    spec.cap_m = flags.cap_m;
  } else if (cfg.cap_m) {
    spec.cap_m = cfg.cap_m;
  }
  return spec;
}

int run(int argc, char** argv) {
  CLI::App app{"coarse2fine: learn per-bucket posteriors from coarse group-level signals"};
  app.require_subcommand(1);

  CommonFlags flags;
  app.add_option("--config", flags.config_path, "JSON config; flags override its fields");

  auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic dataset");
  std::string scenario;
  sim_cmd->add_option("--scenario", scenario, "canned design: j5 or j100 (items per group)");
  sim_cmd->add_option("--seed", flags.seed, "random seed");
  sim_cmd->add_option("--out", flags.out_dir, "output directory");

  auto* fit_cmd = app.add_subcommand("fit", "fit posterior estimates");
  add_data_flags(fit_cmd, flags);
  std::string method = "all";
  fit_cmd->add_option("--method", method, "naive, mom, em, or all")
      ->check(CLI::IsMember({"naive", "mom", "em", "all"}));
  fit_cmd->add_option("--wh", flags.wh_text, "weight on the coarse signal; accepts inf");
  fit_cmd->add_option("--out", flags.out_dir, "output directory");

  auto* se_cmd = app.add_subcommand("se", "half-sampling standard errors");
  add_data_flags(se_cmd, flags);
  std::string se_method = "em";
  int replicates = 0;
  se_cmd->add_option("--method", se_method, "naive, mom, em, or oracle")
      ->check(CLI::IsMember({"naive", "mom", "em", "oracle"}));
  se_cmd->add_option("--wh", flags.wh_text, "weight on the coarse signal; accepts inf");
  se_cmd->add_option("--replicates", replicates, "number of half-sample refits");
  se_cmd->add_option("--seed", flags.seed, "resampling seed");
  se_cmd->add_option("--out", flags.out_dir, "output directory");

  auto* eval_cmd = app.add_subcommand("eval", "cross-validated per-item scores");
  add_data_flags(eval_cmd, flags);
  std::string eval_methods;
  int splits = 0;
  eval_cmd->add_option("--methods", eval_methods,
                       "comma-separated subset of null,naive,mom,em,oracle");
  eval_cmd->add_option("--splits", splits, "number of half-splits");
  eval_cmd->add_option("--wh", flags.wh_text, "weight on the coarse signal; accepts inf");
  eval_cmd->add_option("--seed", flags.seed, "splitting seed");
  eval_cmd->add_option("--out", flags.out_dir, "output directory");

  auto* report_cmd = app.add_subcommand("report", "render an SVG chart from rho.csv");
  std::string rho_csv, truth_csv, out_svg = "report.svg";
  report_cmd->add_option("--rho", rho_csv, "rho.csv produced by fit or se")->required();
  report_cmd->add_option("--truth", truth_csv, "optional truth.csv with the true curve");
  report_cmd->add_option("--out", out_svg, "output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  RunConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = load_run_config(flags.config_path);
  }
  const std::string out_dir = !flags.out_dir.empty() ? flags.out_dir : cfg.output_dir;
  FitConfig fit = cfg.fit;
  if (!flags.wh_text.empty()) fit.wh = parse_wh(flags.wh_text);

  if (sim_cmd->parsed()) {
    SimulateCmd cmd;
    if (!scenario.empty()) {
      if (scenario == "j5") {
        cmd.sim = benchmark_scenario(5);
      } else if (scenario == "j100") {
        cmd.sim = benchmark_scenario(100);
      } else {
        throw CLI::ValidationError("--scenario", "expected j5 or j100");
      }
      cmd.scenario = scenario;
    } else if (cfg.sim) {
      cmd.sim = *cfg.sim;
    } else {
      throw CLI::ValidationError("simulate", "needs --scenario or a config with a sim block");
    }
    if (sim_cmd->count("--seed") > 0) cmd.sim.seed = flags.seed;
    cmd.out_dir = out_dir;
    cmd_simulate(cmd);
    return 0;
  }
  if (fit_cmd->parsed()) {
    FitCmd cmd;
    cmd.data = make_ingest_spec(flags, fit_cmd, cfg);
    cmd.method = fit_cmd->count("--method") > 0 ? method : cfg.method;
    cmd.fit = fit;
    cmd.out_dir = out_dir;
    cmd_fit(cmd);
    return 0;
  }
  if (se_cmd->parsed()) {
    SeCmd cmd;
    cmd.data = make_ingest_spec(flags, se_cmd, cfg);
    cmd.method = se_method;
    cmd.fit = fit;
    cmd.spec = cfg.se;
    if (se_cmd->count("--replicates") > 0) cmd.spec.n_replicates = replicates;
    if (se_cmd->count("--seed") > 0) cmd.spec.seed = flags.seed;
    cmd.out_dir = out_dir;
    cmd_se(cmd);
    return 0;
  }
  if (eval_cmd->parsed()) {
    EvalCmd cmd;
    cmd.data = make_ingest_spec(flags, eval_cmd, cfg);
    cmd.methods = cfg.eval_methods;
    if (!eval_methods.empty()) {
      cmd.methods.clear();
      std::string token;
      std::istringstream ss(eval_methods);
      while (std::getline(ss, token, ',')) {
        if (!token.empty()) cmd.methods.push_back(token);
      }
    }
    cmd.splits = eval_cmd->count("--splits") > 0 ? splits : cfg.splits;
    cmd.seed = flags.seed;
    cmd.fit = fit;
    cmd.out_dir = out_dir;
    cmd_eval(cmd);
    return 0;
  }
  if (report_cmd->parsed()) {
    ReportCmd cmd;
    cmd.rho_csv = rho_csv;
    if (!truth_csv.empty()) cmd.truth_csv = truth_csv;
    cmd.out_svg = out_svg;
    cmd_report(cmd);
    return 0;
  }
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const c2f::IngestError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
}
