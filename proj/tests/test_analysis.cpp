#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "coarse2fine/analysis.hpp"
#include "coarse2fine/estimators.hpp"
#include "coarse2fine/rng.hpp"
#include "coarse2fine/simulation.hpp"

using namespace c2f;

namespace {

Dataset heavy_group_dataset(int n_items) {
  Dataset ds;
  ds.binning = BehaviorBinning::simple(2);
  GroupObservations g;
  g.group_id = "big";
  g.he = 0.4;
  for (int j = 0; j < n_items; ++j) g.items.push_back({1 + (j % 2), 1.0});
  ds.groups = {g};
  return ds;
}

Dataset labeled_sim(int n_groups, int items_per_group, std::uint64_t seed,
                    const std::vector<double>& rho) {
  SimulationConfig cfg;
  cfg.n_groups = n_groups;
  cfg.items_per_group = {items_per_group};
  cfg.binning = BehaviorBinning::simple(static_cast<int>(rho.size()));
  cfg.sigma_h = 0.3;
  cfg.true_rho = rho;
  cfg.marginal_q.assign(rho.size(), 1.0 / static_cast<double>(rho.size()));
  cfg.seed = seed;
  return sample(cfg).dataset;
}

}  // namespace

TEST_CASE("downweight caps only the heavy groups") {
  const Dataset small = heavy_group_dataset(100);
  const Dataset capped_small = downweight(small, kDefaultCapM);
  CHECK(capped_small.groups[0].items[0].weight == 1.0);

  const Dataset big = heavy_group_dataset(1000);
  const Dataset capped = downweight(big, kDefaultCapM);
  double total = 0.0;
  for (const auto& it : capped.groups[0].items) {
    CHECK(std::abs(it.weight - 0.5) < 1e-15);
    total += it.weight;
  }
  CHECK(std::abs(total - 500.0) < 1e-9);
}

TEST_CASE("downweight is idempotent") {
  const Dataset big = heavy_group_dataset(1000);
  const Dataset once = downweight(big, kDefaultCapM);
  const Dataset twice = downweight(once, kDefaultCapM);
  for (std::size_t j = 0; j < once.groups[0].items.size(); ++j) {
    CHECK(once.groups[0].items[j].weight == twice.groups[0].items[j].weight);
  }
}

TEST_CASE("downweight preserves every empirical bucket distribution") {
  SplitMix64 rng(7);
  Dataset ds;
  ds.binning = BehaviorBinning::simple(3);
  for (int i = 0; i < 5; ++i) {
    GroupObservations g;
    g.group_id = "g" + std::to_string(i);
    g.he = 0.1 * i;
    const int n = 200 + static_cast<int>(rng.next_below(1200));
    for (int j = 0; j < n; ++j) {
      g.items.push_back({1 + static_cast<int>(rng.next_below(3)), 1.0});
    }
    ds.groups.push_back(std::move(g));
  }
  const OmegaMatrix before = build_omega(ds);
  const OmegaMatrix after = build_omega(downweight(ds, 300.0));
  REQUIRE(before.rows.rows() == after.rows.rows());
  for (Eigen::Index r = 0; r < before.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < before.rows.cols(); ++c) {
      CHECK(std::abs(before.rows(r, c) - after.rows(r, c)) < 1e-12);
    }
  }
}

TEST_CASE("subsample_se of a constant fitter is zero") {
  const Dataset ds = labeled_sim(12, 5, 4, {0.3, 0.7});
  const Fitter constant = [](const Dataset&) {
    PosteriorEstimate est;
    est.rho = {0.4, 0.6};
    return est;
  };
  SubsampleSpec spec;
  spec.n_replicates = 25;
  spec.seed = 1;
  for (double se : subsample_se(ds, constant, spec)) CHECK(se == 0.0);
}

TEST_CASE("subsample_se shrinks when every group is duplicated") {
  int shrunk = 0;
  const int seeds = 20;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const Dataset ds = labeled_sim(16, 8, 100 + seed, {0.2, 0.5, 0.8});
    Dataset doubled = ds;
    for (const auto& g : ds.groups) {
      GroupObservations copy = g;
      copy.group_id += "_dup";
      doubled.groups.push_back(copy);
      if (doubled.item_labels && ds.item_labels) {
        doubled.item_labels->push_back(
            (*ds.item_labels)[static_cast<std::size_t>(&g - ds.groups.data())]);
      }
    }
    SubsampleSpec spec;
    spec.n_replicates = 40;
    spec.seed = seed;
    const Fitter fit = [](const Dataset& d) { return naive_fit(d); };
    const auto base = subsample_se(ds, fit, spec);
    const auto dup = subsample_se(doubled, fit, spec);
    double base_med = 0.0, dup_med = 0.0;
    for (std::size_t b = 0; b < base.size(); ++b) {
      base_med += base[b];
      dup_med += dup[b];
    }
    if (dup_med < base_med) ++shrunk;
  }
  CHECK(shrunk > seeds / 2);
}

TEST_CASE("subsample_se on the simulated design stays positive and finite") {
  SimulationConfig cfg = benchmark_scenario(5);
  cfg.seed = 5;
  const Dataset ds = sample(cfg).dataset;
  SubsampleSpec spec;
  spec.n_replicates = 50;
  spec.seed = 11;
  const auto se = subsample_se(ds, [](const Dataset& d) { return naive_fit(d); }, spec);
  REQUIRE(static_cast<int>(se.size()) == cfg.binning.k);
  for (double s : se) {
    CHECK(std::isfinite(s));
    CHECK(s > 0.0);
  }
}

TEST_CASE("subsample_se ignores the dataset's group order") {
  const Dataset ds = labeled_sim(14, 6, 77, {0.25, 0.75});
  Dataset reversed = ds;
  std::reverse(reversed.groups.begin(), reversed.groups.end());
  if (reversed.item_labels) {
    std::reverse(reversed.item_labels->begin(), reversed.item_labels->end());
  }
  SubsampleSpec spec;
  spec.n_replicates = 30;
  spec.seed = 2;
  const Fitter fit = [](const Dataset& d) { return naive_fit(d); };
  const auto a = subsample_se(ds, fit, spec);
  const auto b = subsample_se(reversed, fit, spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
  }
}

TEST_CASE("subsample_se tolerates some failures but not too many") {
  const Dataset ds = labeled_sim(12, 5, 9, {0.3, 0.7});
  SubsampleSpec spec;
  spec.n_replicates = 20;
  spec.seed = 3;

  int calls = 0;
  const Fitter flaky = [&calls](const Dataset& d) {
    if (++calls % 10 == 0) throw std::runtime_error("transient");
    return naive_fit(d);
  };
  CHECK_NOTHROW(subsample_se(ds, flaky, spec, 1));

  const Fitter broken = [](const Dataset&) -> PosteriorEstimate {
    throw std::runtime_error("always");
  };
  CHECK_THROWS_AS(subsample_se(ds, broken, spec, 1), std::runtime_error);
}

TEST_CASE("oracle_fit evaluations") {
  Dataset ds;
  ds.binning = BehaviorBinning::simple(3);
  GroupObservations g;
  g.group_id = "a";
  g.he = 0.0;
  g.items = {{1, 1.0}, {1, 1.0}, {2, 1.0}};
  ds.groups = {g};
  ds.item_labels = {{1, 1, 1}};
  const auto est = oracle_fit(ds);
  CHECK(est.method == Method::oracle);
  CHECK(std::abs(est.rho[0] - 3.0 / 4.0) < 1e-15);  // (1+2)/(2+2)
  CHECK(std::abs(est.rho[1] - 2.0 / 3.0) < 1e-15);  // (1+1)/(2+1)
  CHECK(est.rho[2] == 0.5);                         // empty bucket

  ds.item_labels.reset();
  CHECK_THROWS_AS(oracle_fit(ds), std::invalid_argument);
}

TEST_CASE("oracle_fit equals naive_fit on the singleton-group transform") {
  const Dataset ds = labeled_sim(10, 6, 13, {0.2, 0.5, 0.8});
  const auto oracle = oracle_fit(ds).rho;

  Dataset singleton;
  singleton.binning = ds.binning;
  const double inf = std::numeric_limits<double>::infinity();
  int counter = 0;
  for (std::size_t i = 0; i < ds.groups.size(); ++i) {
    for (std::size_t j = 0; j < ds.groups[i].items.size(); ++j) {
      GroupObservations g;
      g.group_id = "item" + std::to_string(counter++);
      g.he = (*ds.item_labels)[i][j] == 1 ? inf : -inf;  // sigmoid hits the label exactly
      g.items = {ds.groups[i].items[j]};
      singleton.groups.push_back(std::move(g));
    }
  }
  const auto naive = naive_fit(singleton).rho;
  REQUIRE(naive.size() == oracle.size());
  for (std::size_t b = 0; b < naive.size(); ++b) {
    CHECK(naive[b] == oracle[b]);
  }
}

TEST_CASE("predict_items looks up the bucket and clamps only mom") {
  Dataset ds;
  ds.binning = BehaviorBinning::simple(2);
  GroupObservations g;
  g.group_id = "a";
  g.he = 0.0;
  g.items = {{1, 1.0}, {2, 1.0}};
  ds.groups = {g};

  PosteriorEstimate flat;
  flat.method = Method::naive;
  flat.rho = {0.5, 0.5};
  for (const auto& gi : predict_items(flat, ds)) {
    for (double p : gi) CHECK(p == 0.5);
  }

  PosteriorEstimate wild;
  wild.method = Method::mom;
  wild.rho = {1.3, -0.2};
  const auto clamped = predict_items(wild, ds);
  CHECK(clamped[0][0] == 1.0);
  CHECK(clamped[0][1] == 0.0);

  wild.method = Method::em;
  wild.rho = {0.9, 0.1};
  const auto raw = predict_items(wild, ds);
  CHECK(raw[0][0] == 0.9);
}

TEST_CASE("cross_validate scores a separable problem near zero error") {
  const Dataset ds = labeled_sim(20, 40, 31, {0.02, 0.98});
  const EvalReport report = cross_validate(ds, {"oracle"}, 5, 7);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].failed_splits == 0);
  CHECK(report.rows[0].mean_classification_error < 0.05);
}

TEST_CASE("cross_validate null model on balanced labels is a coin flip") {
  const Dataset ds = labeled_sim(20, 50, 37, {0.5, 0.5});
  const EvalReport report = cross_validate(ds, {"null"}, 5, 7);
  CHECK(std::abs(report.rows[0].mean_classification_error - 0.5) < 0.08);
  CHECK(std::abs(report.rows[0].rmse - 0.5) < 0.02);
}

TEST_CASE("cross_validate keeps going when one method fails") {
  // two groups with identical compositions: mom is rank-deficient, others fine
  Dataset ds;
  ds.binning = BehaviorBinning::simple(3);
  ds.item_labels = std::vector<std::vector<int>>{};
  for (int i = 0; i < 6; ++i) {
    GroupObservations g;
    g.group_id = "g" + std::to_string(i);
    g.he = 0.2 * i - 0.5;
    g.items = {{1, 1.0}, {2, 1.0}, {3, 1.0}};
    ds.groups.push_back(std::move(g));
    ds.item_labels->push_back({1, 0, 1});
  }
  const EvalReport report = cross_validate(ds, {"mom", "naive"}, 4, 5);
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].failed_splits == 4);
  CHECK(report.rows[1].failed_splits == 0);
}

TEST_CASE("cv splits are disjoint, cover all groups, and ignore dataset order") {
  const Dataset ds = labeled_sim(15, 4, 19, {0.3, 0.7});
  for (int s = 0; s < 8; ++s) {
    const auto [train, test] = cv_split_positions(ds, s, 23);
    CHECK(train.size() == 8);  // ceil(15 / 2)
    CHECK(test.size() == 7);
    std::vector<bool> seen(ds.groups.size(), false);
    for (int p : train) {
      CHECK(!seen[static_cast<std::size_t>(p)]);
      seen[static_cast<std::size_t>(p)] = true;
    }
    for (int p : test) {
      CHECK(!seen[static_cast<std::size_t>(p)]);
      seen[static_cast<std::size_t>(p)] = true;
    }
    CHECK(std::count(seen.begin(), seen.end(), false) == 0);
  }

  Dataset reversed = ds;
  std::reverse(reversed.groups.begin(), reversed.groups.end());
  if (reversed.item_labels) {
    std::reverse(reversed.item_labels->begin(), reversed.item_labels->end());
  }
  const auto [train_a, test_a] = cv_split_positions(ds, 3, 23);
  const auto [train_b, test_b] = cv_split_positions(reversed, 3, 23);
  REQUIRE(train_a.size() == train_b.size());
  for (std::size_t i = 0; i < train_a.size(); ++i) {
    CHECK(ds.groups[static_cast<std::size_t>(train_a[i])].group_id ==
          reversed.groups[static_cast<std::size_t>(train_b[i])].group_id);
  }
}

TEST_CASE("cross_validate splits are deterministic across thread counts") {
  const Dataset ds = labeled_sim(16, 20, 41, {0.1, 0.5, 0.9});
  const auto a = cross_validate(ds, {"null", "naive", "em"}, 6, 11, FitConfig{}, 1);
  const auto b = cross_validate(ds, {"null", "naive", "em"}, 6, 11, FitConfig{}, 4);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].mean_classification_error == b.rows[i].mean_classification_error);
    CHECK(a.rows[i].rmse == b.rows[i].rmse);
  }
}
