#include "coarse2fine/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <thread>

#include "coarse2fine/estimators.hpp"
#include "coarse2fine/parallel.hpp"
#include "coarse2fine/rng.hpp"

namespace c2f {

int thread_budget(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("COARSE2FINE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

std::vector<int> sorted_group_order(const Dataset& dataset) {
  std::vector<int> order(dataset.groups.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dataset.groups[static_cast<std::size_t>(a)].group_id <
           dataset.groups[static_cast<std::size_t>(b)].group_id;
  });
  return order;
}

Dataset subset_groups(const Dataset& dataset, const std::vector<int>& positions) {
  Dataset out;
  out.binning = dataset.binning;
  out.groups.reserve(positions.size());
  for (int p : positions) out.groups.push_back(dataset.groups[static_cast<std::size_t>(p)]);
  if (dataset.item_labels) {
    std::vector<std::vector<int>> labels;
    labels.reserve(positions.size());
    for (int p : positions) labels.push_back((*dataset.item_labels)[static_cast<std::size_t>(p)]);
    out.item_labels = std::move(labels);
  }
  return out;
}

Dataset downweight(const Dataset& dataset, double cap_m) {
  if (!(cap_m > 0.0)) {
    throw std::invalid_argument("cap_m must be positive");
  }
  Dataset out = dataset;
  for (GroupObservations& g : out.groups) {
    double total = 0.0;
    for (const Item& it : g.items) total += it.weight;
    // small tolerance keeps a capped group stable under a second pass
    if (total <= cap_m * (1.0 + 1e-9)) continue;
    const double scale = cap_m / total;
    for (Item& it : g.items) it.weight *= scale;
  }
  return out;
}

std::vector<double> subsample_se(const Dataset& dataset, const Fitter& fitter,
                                 const SubsampleSpec& spec, int n_threads) {
  const int n = static_cast<int>(dataset.groups.size());
  if (n < 4) {
    throw std::invalid_argument("subsampling needs at least 4 groups");
  }
  if (spec.n_replicates < 2) {
    throw std::invalid_argument("subsampling needs at least 2 replicates");
  }
  const int half = static_cast<int>(std::floor(n * SubsampleSpec::fraction));
  const int k = dataset.binning.k;
  const std::vector<int> order = sorted_group_order(dataset);

  std::vector<std::optional<std::vector<double>>> results(
      static_cast<std::size_t>(spec.n_replicates));
  parallel_for_index(spec.n_replicates, thread_budget(n_threads), [&](int r) {
    SplitMix64 rng = SplitMix64::substream(spec.seed, static_cast<std::uint64_t>(r));
    std::vector<int> ranks(static_cast<std::size_t>(n));
    std::iota(ranks.begin(), ranks.end(), 0);
    for (int j = 0; j < half; ++j) {
      const int swap_at =
          j + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - j)));
      std::swap(ranks[static_cast<std::size_t>(j)], ranks[static_cast<std::size_t>(swap_at)]);
    }
    std::vector<int> take(ranks.begin(), ranks.begin() + half);
    std::sort(take.begin(), take.end());
    std::vector<int> positions;
    positions.reserve(take.size());
    for (int rank : take) positions.push_back(order[static_cast<std::size_t>(rank)]);
    try {
      PosteriorEstimate est = fitter(subset_groups(dataset, positions));
      if (static_cast<int>(est.rho.size()) != k) {
        throw std::runtime_error("fitter returned an estimate of the wrong length");
      }
      results[static_cast<std::size_t>(r)] = std::move(est.rho);
    } catch (...) {
      results[static_cast<std::size_t>(r)] = std::nullopt;
    }
  });

  std::vector<const std::vector<double>*> ok;
  for (const auto& r : results) {
    if (r) ok.push_back(&*r);
  }
  const int failed = spec.n_replicates - static_cast<int>(ok.size());
  if (failed > 0) {
    std::fprintf(stderr, "subsample_se: dropped %d of %d failed replicates\n", failed,
                 spec.n_replicates);
  }
  if (ok.size() < 2 ||
      static_cast<double>(ok.size()) < 0.8 * static_cast<double>(spec.n_replicates)) {
    throw std::runtime_error("too many subsample replicates failed (" +
                             std::to_string(failed) + " of " +
                             std::to_string(spec.n_replicates) + ")");
  }

  std::vector<double> se(static_cast<std::size_t>(k), 0.0);
  const double cnt = static_cast<double>(ok.size());
  for (int b = 0; b < k; ++b) {
    double lo = (*ok.front())[static_cast<std::size_t>(b)];
    double hi = lo;
    double mean = 0.0;
    for (const auto* rho : ok) {
      const double v = (*rho)[static_cast<std::size_t>(b)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v;
    }
    if (lo == hi) continue;  // identical replicates have zero spread
    mean /= cnt;
    double ss = 0.0;
    for (const auto* rho : ok) {
      const double d = (*rho)[static_cast<std::size_t>(b)] - mean;
      ss += d * d;
    }
    se[static_cast<std::size_t>(b)] = std::sqrt(ss / (cnt - 1.0));
  }
  return se;
}

PosteriorEstimate oracle_fit(const Dataset& dataset) {
  if (!dataset.item_labels) {
    throw std::invalid_argument("oracle fit needs item labels");
  }
  const auto& labels = *dataset.item_labels;
  std::vector<std::vector<double>> z(dataset.groups.size());
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    if (labels[i].size() != dataset.groups[i].items.size()) {
      throw std::invalid_argument("item labels do not match items of group " +
                                  dataset.groups[i].group_id);
    }
    z[i].resize(labels[i].size());
    for (std::size_t j = 0; j < labels[i].size(); ++j) {
      z[i][j] = static_cast<double>(labels[i][j]);
    }
  }
  return rho_from_responsibilities(dataset, z, Method::oracle);
}

std::vector<std::vector<double>> predict_items(const PosteriorEstimate& estimate,
                                               const Dataset& dataset) {
  if (static_cast<int>(estimate.rho.size()) != dataset.binning.k) {
    throw std::invalid_argument("estimate length does not match bucket count");
  }
  const bool clamp = estimate.method == Method::mom;
  std::vector<std::vector<double>> preds(dataset.groups.size());
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    const GroupObservations& g = dataset.groups[i];
    preds[i].resize(g.items.size());
    for (std::size_t j = 0; j < g.items.size(); ++j) {
      double p = estimate.rho[static_cast<std::size_t>(g.items[j].bin - 1)];
      if (clamp) p = std::clamp(p, 0.0, 1.0);
      preds[i][j] = p;
    }
  }
  return preds;
}

namespace {

struct SplitScore {
  bool ok = false;
  double err = 0.0;
  double rmse = 0.0;
};

PosteriorEstimate fit_method(const std::string& method, const Dataset& train,
                             const FitConfig& fit_config) {
  if (method == "naive") return naive_fit(train);
  if (method == "mom") return mom_fit(train);
  if (method == "em") return em_fit(train, fit_config).estimate;
  if (method == "oracle") return oracle_fit(train);
  throw std::invalid_argument("unknown method: " + method);
}

}  // namespace

std::pair<std::vector<int>, std::vector<int>> cv_split_positions(const Dataset& dataset,
                                                                 int split_index,
                                                                 std::uint64_t seed) {
  const int n = static_cast<int>(dataset.groups.size());
  const int train_size = (n + 1) / 2;
  const std::vector<int> order = sorted_group_order(dataset);
  SplitMix64 rng = SplitMix64::substream(seed, static_cast<std::uint64_t>(split_index));
  std::vector<int> ranks(static_cast<std::size_t>(n));
  std::iota(ranks.begin(), ranks.end(), 0);
  for (int j = 0; j < n - 1; ++j) {
    const int swap_at =
        j + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - j)));
    std::swap(ranks[static_cast<std::size_t>(j)], ranks[static_cast<std::size_t>(swap_at)]);
  }
  std::vector<int> train_ranks(ranks.begin(), ranks.begin() + train_size);
  std::vector<int> test_ranks(ranks.begin() + train_size, ranks.end());
  std::sort(train_ranks.begin(), train_ranks.end());
  std::sort(test_ranks.begin(), test_ranks.end());
  std::pair<std::vector<int>, std::vector<int>> out;
  for (int r : train_ranks) out.first.push_back(order[static_cast<std::size_t>(r)]);
  for (int r : test_ranks) out.second.push_back(order[static_cast<std::size_t>(r)]);
  return out;
}

EvalReport cross_validate(const Dataset& dataset, const std::vector<std::string>& methods,
                          int n_splits, std::uint64_t seed, const FitConfig& fit_config,
                          int n_threads) {
  if (!dataset.item_labels) {
    throw std::invalid_argument("cross-validation needs item labels");
  }
  if (dataset.groups.size() < 2) {
    throw std::invalid_argument("cross-validation needs at least 2 groups");
  }
  if (n_splits < 1) {
    throw std::invalid_argument("n_splits must be positive");
  }
  for (const auto& m : methods) {
    if (m != "null" && m != "naive" && m != "mom" && m != "em" && m != "oracle") {
      throw std::invalid_argument("unknown method: " + m);
    }
  }

  const std::size_t n_methods = methods.size();

  std::vector<std::vector<SplitScore>> scores(
      static_cast<std::size_t>(n_splits), std::vector<SplitScore>(n_methods));

  parallel_for_index(n_splits, thread_budget(n_threads), [&](int s) {
    const auto [train_pos, test_pos] = cv_split_positions(dataset, s, seed);
    const Dataset train = subset_groups(dataset, train_pos);
    const Dataset test = subset_groups(dataset, test_pos);

    double train_w = 0.0, train_pos_w = 0.0, test_w = 0.0;
    for (std::size_t i = 0; i < train.groups.size(); ++i) {
      for (std::size_t j = 0; j < train.groups[i].items.size(); ++j) {
        const double w = train.groups[i].items[j].weight;
        train_w += w;
        train_pos_w += w * (*train.item_labels)[i][j];
      }
    }
    for (const auto& g : test.groups) {
      for (const auto& it : g.items) test_w += it.weight;
    }
    if (train_w <= 0.0 || test_w <= 0.0) {
      return;  // nothing to score; every method stays failed for this split
    }
    const double null_rate = train_pos_w / train_w;

    for (std::size_t m = 0; m < n_methods; ++m) {
      try {
        std::vector<std::vector<double>> preds;
        if (methods[m] == "null") {
          preds.resize(test.groups.size());
          for (std::size_t i = 0; i < test.groups.size(); ++i) {
            preds[i].assign(test.groups[i].items.size(), null_rate);
          }
        } else {
          preds = predict_items(fit_method(methods[m], train, fit_config), test);
        }
        double err_w = 0.0, sq_w = 0.0;
        for (std::size_t i = 0; i < test.groups.size(); ++i) {
          for (std::size_t j = 0; j < test.groups[i].items.size(); ++j) {
            const double w = test.groups[i].items[j].weight;
            const int y = (*test.item_labels)[i][j];
            const double p = preds[i][j];
            const int yhat = p > 0.5 ? 1 : 0;
            err_w += w * (yhat != y ? 1.0 : 0.0);
            sq_w += w * (p - y) * (p - y);
          }
        }
        SplitScore& sc = scores[static_cast<std::size_t>(s)][m];
        sc.ok = true;
        sc.err = err_w / test_w;
        sc.rmse = std::sqrt(sq_w / test_w);
      } catch (...) {
        scores[static_cast<std::size_t>(s)][m].ok = false;
      }
    }
  });

  EvalReport report;
  report.n_splits = n_splits;
  report.split_seed = seed;
  for (std::size_t m = 0; m < n_methods; ++m) {
    EvalRow row;
    row.method = methods[m];
    int ok = 0;
    for (int s = 0; s < n_splits; ++s) {
      const SplitScore& sc = scores[static_cast<std::size_t>(s)][m];
      if (!sc.ok) {
        ++row.failed_splits;
        continue;
      }
      row.mean_classification_error += sc.err;
      row.rmse += sc.rmse;
      ++ok;
    }
    if (ok > 0) {
      row.mean_classification_error /= ok;
      row.rmse /= ok;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace c2f
