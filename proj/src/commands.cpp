#include "coarse2fine/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>

#include "coarse2fine/estimators.hpp"
#include "coarse2fine/svg_report.hpp"

namespace c2f {

namespace {

using nlohmann::json;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw IngestError("cannot write " + path.string());
  }
  return out;
}

double wh_from_json(const json& j) {
  if (j.is_string()) return parse_wh(j.get<std::string>());
  return j.get<double>();
}

FitConfig fit_from_json(const json& j) {
  FitConfig fit;
  if (j.contains("wh")) fit.wh = wh_from_json(j.at("wh"));
  if (j.contains("max_iters")) fit.max_iters = j.at("max_iters").get<int>();
  if (j.contains("tol")) fit.tol = j.at("tol").get<double>();
  if (j.contains("mu_clamp")) fit.mu_clamp = j.at("mu_clamp").get<double>();
  if (j.contains("newton_tol")) fit.newton_tol = j.at("newton_tol").get<double>();
  if (j.contains("newton_max_iters")) fit.newton_max_iters = j.at("newton_max_iters").get<int>();
  if (j.contains("seed")) fit.seed = j.at("seed").get<std::uint64_t>();
  return fit;
}

SimulationConfig sim_from_json(const json& j) {
  SimulationConfig sim;
  sim.n_groups = j.at("n_groups").get<int>();
  const auto& jig = j.at("items_per_group");
  if (jig.is_array()) {
    sim.items_per_group = jig.get<std::vector<int>>();
  } else {
    sim.items_per_group = {jig.get<int>()};
  }
  const int k = j.at("k").get<int>();
  if (j.contains("labels")) {
    sim.binning.k = k;
    sim.binning.factor_levels = {k};
    sim.binning.labels = j.at("labels").get<std::vector<std::string>>();
  } else {
    sim.binning = BehaviorBinning::simple(k);
  }
  if (j.contains("mu_mean")) sim.mu_mean = j.at("mu_mean").get<double>();
  if (j.contains("mu_sd")) sim.mu_sd = j.at("mu_sd").get<double>();
  if (j.contains("sigma_h")) sim.sigma_h = j.at("sigma_h").get<double>();
  sim.true_rho = j.at("true_rho").get<std::vector<double>>();
  sim.marginal_q = j.at("marginal_q").get<std::vector<double>>();
  if (j.contains("seed")) sim.seed = j.at("seed").get<std::uint64_t>();
  return sim;
}

json sim_to_json(const SimulationConfig& sim) {
  json j;
  j["n_groups"] = sim.n_groups;
  if (sim.items_per_group.size() == 1) {
    j["items_per_group"] = sim.items_per_group[0];
  } else {
    j["items_per_group"] = sim.items_per_group;
  }
  j["k"] = sim.binning.k;
  j["labels"] = sim.binning.labels;
  j["mu_mean"] = sim.mu_mean;
  j["mu_sd"] = sim.mu_sd;
  j["sigma_h"] = sim.sigma_h;
  j["true_rho"] = sim.true_rho;
  j["marginal_q"] = sim.marginal_q;
  j["seed"] = sim.seed;
  return j;
}

void run_single_fit(const std::string& method, const Dataset& dataset, const FitConfig& fit,
                    std::vector<PosteriorEstimate>& estimates,
                    std::optional<EmResult>& em_result) {
  if (method == "naive") {
    estimates.push_back(naive_fit(dataset));
  } else if (method == "mom") {
    estimates.push_back(mom_fit(dataset));
  } else if (method == "em") {
    EmResult res = em_fit(dataset, fit);
    estimates.push_back(res.estimate);
    em_result = std::move(res);
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
}

void write_rho_csv(const std::filesystem::path& path, const Dataset& dataset,
                   const std::vector<PosteriorEstimate>& estimates) {
  std::ofstream out = open_output(path);
  out << "bin,label,method,rho,se,in_unit_interval\n";
  for (const PosteriorEstimate& est : estimates) {
    for (int b = 0; b < dataset.binning.k; ++b) {
      const double r = est.rho[static_cast<std::size_t>(b)];
      out << (b + 1) << "," << dataset.binning.labels[static_cast<std::size_t>(b)] << ","
          << method_name(est.method) << "," << format_double(r) << ",";
      if (est.se) out << format_double((*est.se)[static_cast<std::size_t>(b)]);
      out << "," << (r >= 0.0 && r <= 1.0 ? "true" : "false") << "\n";
    }
  }
}

Dataset ingest_and_validate(const IngestSpec& spec) {
  IngestResult result = ingest(spec);
  const std::vector<Violation> violations = validate_dataset(result.dataset);
  if (!violations.empty()) {
    std::string msg = "ingested dataset is invalid:";
    for (std::size_t i = 0; i < violations.size() && i < 5; ++i) {
      msg += " [" + violations[i].group_id + "/" + violations[i].field + "] " +
             violations[i].message + ";";
    }
    throw IngestError(msg);
  }
  return std::move(result.dataset);
}

}  // namespace

double parse_wh(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "inf" || lower == "+inf" || lower == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  std::size_t pos = 0;
  const double v = std::stod(text, &pos);
  if (pos != text.size()) {
    throw std::invalid_argument("cannot parse wh value '" + text + "'");
  }
  if (v < 0.0) {
    throw std::invalid_argument("wh must be nonnegative");
  }
  return v;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestError("cannot open config " + path);
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw IngestError(path + ": " + e.what());
  }
  RunConfig cfg;
  if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
  if (j.contains("fit")) cfg.fit = fit_from_json(j.at("fit"));
  if (j.contains("sim")) cfg.sim = sim_from_json(j.at("sim"));
  if (j.contains("se")) {
    const json& jse = j.at("se");
    if (jse.contains("n_replicates")) cfg.se.n_replicates = jse.at("n_replicates").get<int>();
    if (jse.contains("seed")) cfg.se.seed = jse.at("seed").get<std::uint64_t>();
  }
  if (j.contains("splits")) cfg.splits = j.at("splits").get<int>();
  if (j.contains("eval_methods")) {
    cfg.eval_methods = j.at("eval_methods").get<std::vector<std::string>>();
  }
  if (j.contains("cap_m")) cfg.cap_m = j.at("cap_m").get<double>();
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

void cmd_simulate(const SimulateCmd& cmd) {
  const SimulatedTruth truth = sample(cmd.sim);
  const std::filesystem::path dir(cmd.out_dir);
  std::filesystem::create_directories(dir);

  {
    std::ofstream out = open_output(dir / "groups.csv");
    out << "group_id,signal\n";
    for (const GroupObservations& g : truth.dataset.groups) {
      out << g.group_id << "," << format_double(g.he) << "\n";
    }
  }
  {
    std::ofstream out = open_output(dir / "items.csv");
    out << "group_id,bin,weight,label\n";
    for (std::size_t i = 0; i < truth.dataset.groups.size(); ++i) {
      const GroupObservations& g = truth.dataset.groups[i];
      for (std::size_t j = 0; j < g.items.size(); ++j) {
        out << g.group_id << "," << g.items[j].bin << "," << format_double(g.items[j].weight)
            << "," << truth.true_z[i][j] << "\n";
      }
    }
  }
  {
    std::ofstream out = open_output(dir / "truth.csv");
    out << "bin,true_rho\n";
    for (std::size_t b = 0; b < truth.true_rho.size(); ++b) {
      out << (b + 1) << "," << format_double(truth.true_rho[b]) << "\n";
    }
  }
  {
    std::ofstream out = open_output(dir / "truth_mu.csv");
    out << "group_id,true_mu\n";
    for (std::size_t i = 0; i < truth.dataset.groups.size(); ++i) {
      out << truth.dataset.groups[i].group_id << "," << format_double(truth.true_mu[i]) << "\n";
    }
  }
  {
    std::ofstream out = open_output(dir / "manifest.csv");
    out << "bin,label\n";
    for (int b = 0; b < truth.dataset.binning.k; ++b) {
      out << (b + 1) << "," << truth.dataset.binning.labels[static_cast<std::size_t>(b)] << "\n";
    }
  }
  {
    // written in the run-config shape so it can feed --config directly
    json meta;
    if (!cmd.scenario.empty()) meta["scenario"] = cmd.scenario;
    meta["sim"] = sim_to_json(cmd.sim);
    std::ofstream out = open_output(dir / "sim_meta.json");
    out << meta.dump(2) << "\n";
  }
}

void cmd_fit(const FitCmd& cmd) {
  const Dataset dataset = ingest_and_validate(cmd.data);
  const std::filesystem::path dir(cmd.out_dir);
  std::filesystem::create_directories(dir);

  std::vector<std::string> methods;
  if (cmd.method == "all") {
    methods = {"naive", "mom", "em"};
  } else {
    methods = {cmd.method};
  }

  std::vector<PosteriorEstimate> estimates;
  std::optional<EmResult> em_result;
  std::vector<std::string> failures;
  for (const std::string& m : methods) {
    try {
      run_single_fit(m, dataset, cmd.fit, estimates, em_result);
    } catch (const std::invalid_argument&) {
      throw;
    } catch (const std::exception& e) {
      // under --method all a single broken estimator is reported, not fatal
      if (methods.size() == 1) throw;
      failures.push_back(m);
      std::fprintf(stderr, "fit: method %s failed: %s\n", m.c_str(), e.what());
    }
  }
  if (estimates.empty()) {
    throw std::runtime_error("every requested method failed");
  }

  write_rho_csv(dir / "rho.csv", dataset, estimates);

  if (em_result) {
    {
      std::ofstream out = open_output(dir / "mu.csv");
      out << "group_id,he,mu_hat\n";
      for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
        out << dataset.groups[i].group_id << "," << format_double(dataset.groups[i].he) << ","
            << format_double(em_result->state.mu[i]) << "\n";
      }
    }
    {
      // the smoothed objective is the one the fit provably never decreases
      std::ofstream out = open_output(dir / "trace.csv");
      out << "iteration,objective\n";
      const auto& trace = em_result->state.smoothed_objective_trace;
      for (std::size_t t = 0; t < trace.size(); ++t) {
        out << t << "," << format_double(trace[t]) << "\n";
      }
    }
  }
}

void cmd_se(const SeCmd& cmd) {
  const Dataset dataset = ingest_and_validate(cmd.data);
  const std::filesystem::path dir(cmd.out_dir);
  std::filesystem::create_directories(dir);

  Fitter fitter;
  if (cmd.method == "naive") {
    fitter = [](const Dataset& d) { return naive_fit(d); };
  } else if (cmd.method == "mom") {
    fitter = [](const Dataset& d) { return mom_fit(d); };
  } else if (cmd.method == "em") {
    const FitConfig fit = cmd.fit;
    fitter = [fit](const Dataset& d) { return em_fit(d, fit).estimate; };
  } else if (cmd.method == "oracle") {
    fitter = [](const Dataset& d) { return oracle_fit(d); };
  } else {
    throw std::invalid_argument("unknown method: " + cmd.method);
  }

  std::vector<PosteriorEstimate> estimates;
  estimates.push_back(fitter(dataset));
  estimates.back().se = subsample_se(dataset, fitter, cmd.spec);

  write_rho_csv(dir / "rho.csv", dataset, estimates);
  std::fprintf(stderr,
               "se: %d half-sample refits; the se column is the raw standard deviation "
               "across half-samples, with no rescaling toward full-sample errors\n",
               cmd.spec.n_replicates);
}

void cmd_eval(const EvalCmd& cmd) {
  const Dataset dataset = ingest_and_validate(cmd.data);
  const std::filesystem::path dir(cmd.out_dir);
  std::filesystem::create_directories(dir);

  const EvalReport report = cross_validate(dataset, cmd.methods, cmd.splits, cmd.seed, cmd.fit);

  {
    std::ofstream out = open_output(dir / "eval.csv");
    out << "method,mean_classification_error,rmse,failed_splits\n";
    for (const EvalRow& row : report.rows) {
      out << row.method << "," << format_double(row.mean_classification_error) << ","
          << format_double(row.rmse) << "," << row.failed_splits << "\n";
    }
  }
  {
    json meta;
    meta["n_splits"] = report.n_splits;
    meta["seed"] = report.split_seed;
    std::ofstream out = open_output(dir / "eval_meta.json");
    out << meta.dump(2) << "\n";
  }
}

void cmd_report(const ReportCmd& cmd) {
  const CsvTable rho = read_csv(cmd.rho_csv);
  std::optional<CsvTable> truth;
  if (cmd.truth_csv) truth = read_csv(*cmd.truth_csv);
  const std::string svg = render_report_svg(rho, truth);
  std::ofstream out = open_output(cmd.out_svg);
  out << svg;
}

}  // namespace c2f
