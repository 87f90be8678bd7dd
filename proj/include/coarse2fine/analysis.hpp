#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coarse2fine/em.hpp"
#include "coarse2fine/model.hpp"

namespace c2f {

constexpr double kDefaultCapM = 500.0;

// Half-sampling settings for standard errors. The fraction is fixed at 1/2:
// each replicate refits on floor(I/2) groups drawn without replacement.
struct SubsampleSpec {
  int n_replicates = 100;
  std::uint64_t seed = 0;
  static constexpr double fraction = 0.5;
};

struct EvalRow {
  std::string method;
  double mean_classification_error = 0.0;
  double rmse = 0.0;
  int failed_splits = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  int n_splits = 0;
  std::uint64_t split_seed = 0;
};

using Fitter = std::function<PosteriorEstimate(const Dataset&)>;

/// Group positions ordered by group_id; resampling is defined over this order.
std::vector<int> sorted_group_order(const Dataset& dataset);

// One cross-validation split: disjoint train/test group positions covering
// every group, the train half holding ceil(I/2). Deterministic in (seed,
// split_index) regardless of the dataset's group order.
std::pair<std::vector<int>, std::vector<int>> cv_split_positions(const Dataset& dataset,
                                                                 int split_index,
                                                                 std::uint64_t seed);

/// New dataset keeping only the given group positions (labels included).
Dataset subset_groups(const Dataset& dataset, const std::vector<int>& positions);

// Caps each group's effective size: groups whose total weight exceeds cap_m
// get every item weight scaled by cap_m / total. Bucket proportions are
// untouched.
Dataset downweight(const Dataset& dataset, double cap_m);

// Standard errors by grouped half-sampling: the raw standard deviation of the
// refitted estimates across replicates, with no rescaling toward full-sample
// bootstrap errors. Replicates that fail are dropped; more than 20% failures
// is an error.
std::vector<double> subsample_se(const Dataset& dataset, const Fitter& fitter,
                                 const SubsampleSpec& spec, int n_threads = 0);

// Upper-bound baseline: the pseudo-count posterior computed from the true
// item labels, equivalent to the hard-assignment fit with every item in its
// own group.
PosteriorEstimate oracle_fit(const Dataset& dataset);

// Per-item predictions rho(bin); clamped to [0,1] only for moment-matching
// estimates.
std::vector<std::vector<double>> predict_items(const PosteriorEstimate& estimate,
                                               const Dataset& dataset);

// Repeated half-splits over groups: fit each method on the train half, score
// per-item predictions on the test half (0/1 error at even odds, and RMSE
// against the binary labels). "null" predicts the train positive rate
// everywhere. A method failing on a split is reported, not fatal.
EvalReport cross_validate(const Dataset& dataset, const std::vector<std::string>& methods,
                          int n_splits, std::uint64_t seed,
                          const FitConfig& fit_config = {}, int n_threads = 0);

}  // namespace c2f
