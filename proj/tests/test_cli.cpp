#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "coarse2fine/commands.hpp"
#include "coarse2fine/io.hpp"
#include "coarse2fine/simulation.hpp"
#include "test_util.hpp"

using namespace c2f;
using test_util::TempDir;

TEST_CASE("ingest crosses feature columns into row-major bins") {
  TempDir dir;
  test_util::write_file(dir.file("groups.csv"),
                        "group_id,signal\n"
                        "s1,0.5\n"
                        "s2,0.25\n");
  std::string items = "group_id,income,union\n";
  const char* incomes[] = {"1", "2", "3", "4", "5"};
  const char* unions[] = {"member", "family", "none"};
  for (const char* inc : incomes) {
    for (const char* un : unions) {
      items += std::string("s1,") + inc + "," + un + "\n";
    }
  }
  items += "s2,1,member\n";
  test_util::write_file(dir.file("items.csv"), items);

  IngestSpec spec;
  spec.groups_file = dir.file("groups.csv");
  spec.items_file = dir.file("items.csv");
  spec.signal_kind = SignalKind::fraction;
  spec.feature_columns = {"income", "union"};
  const IngestResult result = ingest(spec);

  CHECK(result.dataset.binning.k == 15);  // 5 x 3 cross
  CHECK(result.manifest_rows.size() == 15);
  CHECK(result.manifest_columns ==
        std::vector<std::string>{"bin", "label", "income", "union"});
  REQUIRE(result.dataset.groups.size() == 2);
  CHECK(result.dataset.groups[0].items.size() == 15);
  // fraction 0.5 becomes HE = 0 on the logit scale
  CHECK(result.dataset.groups[0].he == 0.0);
  CHECK(result.dataset.groups[1].he < 0.0);
  // levels sort lexicographically, last column fastest: (1,family) is bin 1+1
  CHECK(result.dataset.groups[1].items[0].bin == 2);
  CHECK(validate_dataset(result.dataset).empty());
}

TEST_CASE("ingest reports the offending line") {
  TempDir dir;
  test_util::write_file(dir.file("groups.csv"), "group_id,signal\ns1,0.0\n");
  test_util::write_file(dir.file("items.csv"),
                        "group_id,bin\n"
                        "s1,1\n"
                        "ghost,2\n");
  IngestSpec spec;
  spec.groups_file = dir.file("groups.csv");
  spec.items_file = dir.file("items.csv");
  try {
    ingest(spec);
    FAIL("expected an ingest error");
  } catch (const IngestError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":3:") != std::string::npos);  // 1-based line of the bad row
    CHECK(msg.find("ghost") != std::string::npos);
  }
}

TEST_CASE("ingest rejects undeclared factor levels") {
  TempDir dir;
  test_util::write_file(dir.file("groups.csv"), "group_id,signal\ns1,0.0\n");
  test_util::write_file(dir.file("items.csv"),
                        "group_id,color\n"
                        "s1,red\n"
                        "s1,chartreuse\n");
  IngestSpec spec;
  spec.groups_file = dir.file("groups.csv");
  spec.items_file = dir.file("items.csv");
  spec.feature_columns = {"color"};
  spec.declared_levels["color"] = {"red", "blue"};
  CHECK_THROWS_AS(ingest(spec), IngestError);
}

TEST_CASE("ingest applies the down-weighting cap") {
  TempDir dir;
  test_util::write_file(dir.file("groups.csv"), "group_id,signal\ns1,0.0\n");
  std::string items = "group_id,bin\n";
  for (int j = 0; j < 10; ++j) items += "s1,1\n";
  test_util::write_file(dir.file("items.csv"), items);
  IngestSpec spec;
  spec.groups_file = dir.file("groups.csv");
  spec.items_file = dir.file("items.csv");
  spec.cap_m = 5.0;
  const IngestResult result = ingest(spec);
  for (const auto& it : result.dataset.groups[0].items) {
    CHECK(std::abs(it.weight - 0.5) < 1e-15);
  }
}

TEST_CASE("simulate then ingest reproduces the dataset exactly") {
  TempDir dir;
  SimulateCmd cmd;
  cmd.sim = benchmark_scenario(5);
  cmd.sim.seed = 3;
  cmd.scenario = "j5";
  cmd.out_dir = dir.path().string();
  cmd_simulate(cmd);

  IngestSpec spec;
  spec.groups_file = dir.file("groups.csv");
  spec.items_file = dir.file("items.csv");
  spec.manifest_file = dir.file("manifest.csv");
  const IngestResult result = ingest(spec);

  const SimulatedTruth truth = sample(cmd.sim);
  REQUIRE(result.dataset.groups.size() == truth.dataset.groups.size());
  CHECK(result.dataset.binning.k == truth.dataset.binning.k);
  CHECK(result.dataset.binning.labels == truth.dataset.binning.labels);
  for (std::size_t i = 0; i < truth.dataset.groups.size(); ++i) {
    const auto& a = result.dataset.groups[i];
    const auto& b = truth.dataset.groups[i];
    CHECK(a.group_id == b.group_id);
    CHECK(a.he == b.he);  // full printed precision survives the round trip
    REQUIRE(a.items.size() == b.items.size());
    for (std::size_t j = 0; j < a.items.size(); ++j) {
      CHECK(a.items[j].bin == b.items[j].bin);
      CHECK(a.items[j].weight == b.items[j].weight);
    }
  }
  REQUIRE(result.dataset.item_labels.has_value());
  CHECK(*result.dataset.item_labels == truth.true_z);
}

TEST_CASE("cli simulate writes the advertised row counts") {
  TempDir dir;
  const int rc = test_util::run_cli("simulate --scenario j5 --seed 4 --out " +
                                    dir.path().string());
  REQUIRE(rc == 0);
  const std::string items = test_util::read_file(dir.file("items.csv"));
  CHECK(test_util::count_lines(items) == 2501);  // header + 500 groups x 5 items
  const std::string groups = test_util::read_file(dir.file("groups.csv"));
  CHECK(test_util::count_lines(groups) == 501);
  const std::string truth = test_util::read_file(dir.file("truth.csv"));
  CHECK(test_util::count_lines(truth) == 16);
}

TEST_CASE("cli fit --method all writes one block per estimator plus em extras") {
  TempDir dir;
  REQUIRE(test_util::run_cli("simulate --scenario j100 --seed 5 --out " +
                             dir.path().string()) == 0);
  CHECK(test_util::count_lines(test_util::read_file(dir.file("items.csv"))) ==
        50001);  // header + 500 groups x 100 items
  const std::string data_flags = " --groups " + dir.file("groups.csv") + " --items " +
                                 dir.file("items.csv") + " --manifest " +
                                 dir.file("manifest.csv");
  REQUIRE(test_util::run_cli("fit --method all" + data_flags + " --out " +
                             dir.path().string()) == 0);

  const CsvTable rho = read_csv(dir.file("rho.csv"));
  CHECK(rho.rows.size() == 45);  // 3 methods x 15 bins
  const int method_col = rho.require_column("method");
  const int flag_col = rho.require_column("in_unit_interval");
  int naive_rows = 0, mom_rows = 0, em_rows = 0, mom_escapes = 0;
  for (const auto& row : rho.rows) {
    const std::string& m = row[static_cast<std::size_t>(method_col)];
    naive_rows += m == "naive";
    mom_rows += m == "mom";
    em_rows += m == "em";
    if (m == "mom" && row[static_cast<std::size_t>(flag_col)] == "false") ++mom_escapes;
    if (m != "mom") CHECK(row[static_cast<std::size_t>(flag_col)] == "true");
  }
  CHECK(naive_rows == 15);
  CHECK(mom_rows == 15);
  CHECK(em_rows == 15);
  CHECK(mom_escapes > 0);  // the many-items design pushes mom outside [0,1]

  const CsvTable trace = read_csv(dir.file("trace.csv"));
  const int obj_col = trace.require_column("objective");
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < trace.rows.size(); ++r) {
    const double v = parse_double(trace.rows[r][static_cast<std::size_t>(obj_col)],
                                  trace.path, trace.line_numbers[r]);
    CHECK(v >= prev - 1e-9 * (1.0 + std::abs(prev)));
    prev = v;
  }

  const CsvTable mu = read_csv(dir.file("mu.csv"));
  CHECK(mu.rows.size() == 500);
}

TEST_CASE("cli outputs are byte-identical across runs and thread counts") {
  TempDir a, b, c;
  const std::string common = "simulate --scenario j5 --seed 11 --out ";
  REQUIRE(test_util::run_cli(common + a.path().string(), "COARSE2FINE_THREADS=1 ") == 0);
  REQUIRE(test_util::run_cli(common + b.path().string(), "COARSE2FINE_THREADS=1 ") == 0);
  REQUIRE(test_util::run_cli(common + c.path().string(), "COARSE2FINE_THREADS=4 ") == 0);
  for (const char* name : {"groups.csv", "items.csv", "truth.csv", "truth_mu.csv"}) {
    const std::string ref = test_util::read_file(a.file(name));
    CHECK(ref == test_util::read_file(b.file(name)));
    CHECK(ref == test_util::read_file(c.file(name)));
  }

  const auto fit_and_read = [&](const TempDir& dir, const std::string& env) {
    REQUIRE(test_util::run_cli("fit --method all --groups " + dir.file("groups.csv") +
                                   " --items " + dir.file("items.csv") + " --manifest " +
                                   dir.file("manifest.csv") + " --out " + dir.path().string(),
                               env) == 0);
    return test_util::read_file(dir.file("rho.csv"));
  };
  const std::string rho_a = fit_and_read(a, "COARSE2FINE_THREADS=1 ");
  const std::string rho_c = fit_and_read(c, "COARSE2FINE_THREADS=4 ");
  CHECK(rho_a == rho_c);
}

TEST_CASE("cli report renders deterministic svg") {
  TempDir dir;
  REQUIRE(test_util::run_cli("simulate --scenario j5 --seed 6 --out " +
                             dir.path().string()) == 0);
  REQUIRE(test_util::run_cli("fit --method naive --groups " + dir.file("groups.csv") +
                             " --items " + dir.file("items.csv") + " --manifest " +
                             dir.file("manifest.csv") + " --out " + dir.path().string()) == 0);
  const std::string report_args = "report --rho " + dir.file("rho.csv") + " --truth " +
                                  dir.file("truth.csv") + " --out ";
  REQUIRE(test_util::run_cli(report_args + dir.file("a.svg")) == 0);
  REQUIRE(test_util::run_cli(report_args + dir.file("b.svg")) == 0);
  const std::string svg = test_util::read_file(dir.file("a.svg"));
  CHECK(svg == test_util::read_file(dir.file("b.svg")));
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("stroke-width=\"3\"") != std::string::npos);  // the truth line
  CHECK(svg.find("naive") != std::string::npos);

  // without the truth file only the series remains
  REQUIRE(test_util::run_cli("report --rho " + dir.file("rho.csv") + " --out " +
                             dir.file("c.svg")) == 0);
  CHECK(test_util::read_file(dir.file("c.svg")).find("truth") == std::string::npos);
}

TEST_CASE("cli exit codes distinguish usage from numerical failures") {
  TempDir dir;
  CHECK(test_util::run_cli("simulate --scenario bogus --out " + dir.path().string() +
                               " 2>/dev/null") == 2);
  CHECK(test_util::run_cli("fit --groups missing.csv --items missing.csv 2>/dev/null") == 2);
  CHECK(test_util::run_cli("frobnicate 2>/dev/null") == 2);

  // a rank-deficient design is a numerical failure, not a usage error
  test_util::write_file(dir.file("g.csv"),
                        "group_id,signal\na,0.1\nb,0.2\nc,0.3\n");
  test_util::write_file(dir.file("i.csv"),
                        "group_id,bin\na,1\na,2\nb,1\nb,2\nc,1\nc,2\n");
  CHECK(test_util::run_cli("fit --method mom --groups " + dir.file("g.csv") + " --items " +
                           dir.file("i.csv") + " --out " + dir.path().string() +
                           " 2>/dev/null") == 3);
}

TEST_CASE("cli se fills the standard error column") {
  TempDir dir;
  REQUIRE(test_util::run_cli("simulate --scenario j5 --seed 8 --out " +
                             dir.path().string()) == 0);
  REQUIRE(test_util::run_cli("se --method naive --replicates 30 --seed 2 --groups " +
                             dir.file("groups.csv") + " --items " + dir.file("items.csv") +
                             " --manifest " + dir.file("manifest.csv") + " --out " +
                             dir.path().string()) == 0);
  const CsvTable rho = read_csv(dir.file("rho.csv"));
  const int se_col = rho.require_column("se");
  REQUIRE(rho.rows.size() == 15);
  for (std::size_t r = 0; r < rho.rows.size(); ++r) {
    const double se = parse_double(rho.rows[r][static_cast<std::size_t>(se_col)], rho.path,
                                   rho.line_numbers[r]);
    CHECK(se > 0.0);
  }
}

TEST_CASE("cli eval writes one row per requested method") {
  TempDir dir;
  REQUIRE(test_util::run_cli("simulate --scenario j5 --seed 9 --out " +
                             dir.path().string()) == 0);
  REQUIRE(test_util::run_cli("eval --methods null,naive,em,oracle --splits 4 --seed 3"
                             " --wh 10 --groups " +
                             dir.file("groups.csv") + " --items " + dir.file("items.csv") +
                             " --manifest " + dir.file("manifest.csv") + " --out " +
                             dir.path().string()) == 0);
  const CsvTable eval = read_csv(dir.file("eval.csv"));
  REQUIRE(eval.rows.size() == 4);
  const int err_col = eval.require_column("mean_classification_error");
  for (std::size_t r = 0; r < eval.rows.size(); ++r) {
    const double err = parse_double(eval.rows[r][static_cast<std::size_t>(err_col)],
                                    eval.path, eval.line_numbers[r]);
    CHECK(err >= 0.0);
    CHECK(err <= 1.0);
  }
}

TEST_CASE("cli config file supplies defaults that flags override") {
  TempDir dir;
  test_util::write_file(dir.file("config.json"),
                        "{\n"
                        "  \"sim\": {\"n_groups\": 12, \"items_per_group\": 3, \"k\": 2,\n"
                        "            \"sigma_h\": 0.1, \"true_rho\": [0.3, 0.7],\n"
                        "            \"marginal_q\": [0.5, 0.5], \"seed\": 4},\n"
                        "  \"output_dir\": \"" + dir.path().string() + "\"\n"
                        "}\n");
  REQUIRE(test_util::run_cli("--config " + dir.file("config.json") + " simulate") == 0);
  const std::string items = test_util::read_file(dir.file("items.csv"));
  CHECK(test_util::count_lines(items) == 37);  // header + 12 x 3
}

TEST_CASE("cli sim_meta.json round-trips as a config") {
  TempDir first, second;
  REQUIRE(test_util::run_cli("simulate --scenario j5 --seed 13 --out " +
                             first.path().string()) == 0);
  REQUIRE(test_util::run_cli("--config " + first.file("sim_meta.json") + " simulate --out " +
                             second.path().string()) == 0);
  for (const char* name : {"groups.csv", "items.csv", "truth.csv"}) {
    CHECK(test_util::read_file(first.file(name)) == test_util::read_file(second.file(name)));
  }
}
