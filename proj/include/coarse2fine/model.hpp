#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace c2f {

// Logistic function, stable for the full double range and exact at +/-inf.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_deriv(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

// Coarse signals given as fractions are clamped away from {0,1} before the
// logit transform.
constexpr double kFractionEps = 1e-6;
double logit_from_fraction(double p);

/// K behavior buckets formed by crossing categorical factors.
struct BehaviorBinning {
  int k = 0;
  std::vector<int> factor_levels;   // cardinalities whose product equals k
  std::vector<std::string> labels;  // one distinct name per bucket

  /// Single factor with k levels, labels "bin_01".."bin_K".
  static BehaviorBinning simple(int k);
  /// Cross product of named factors; the last factor varies fastest.
  static BehaviorBinning crossed(
      const std::vector<std::pair<std::string, std::vector<std::string>>>& factors);
};

struct Item {
  int bin = 1;          // 1..K
  double weight = 1.0;  // in (0, 1]
};

/// One group: a coarse logit-scale signal plus weighted item observations.
struct GroupObservations {
  std::string group_id;
  double he = 0.0;
  std::vector<Item> items;
};

struct Dataset {
  BehaviorBinning binning;
  std::vector<GroupObservations> groups;
  // Per-item true class in {0,1}; present only for oracle/evaluation data.
  std::optional<std::vector<std::vector<int>>> item_labels;

  std::size_t total_items() const;
};

/// Class-conditional bucket distributions plus the positive-class prior.
struct ModelParams {
  std::vector<double> w0;
  std::vector<double> w1;
  double pi = 0.5;
};

enum class Method { naive, mom, em, oracle };
const char* method_name(Method m);

/// The estimand: per-bucket posterior probability of the positive class.
struct PosteriorEstimate {
  std::vector<double> rho;
  std::optional<std::vector<double>> se;
  Method method = Method::naive;
};

/// Mutable fitting state for the latent variables model.
struct LatentState {
  std::vector<double> mu;              // per group
  std::vector<std::vector<double>> z;  // per item, shape matching the dataset
  std::vector<double> w0, w1;
  std::vector<double> objective_trace;           // penalized log-likelihood per sweep
  std::vector<double> smoothed_objective_trace;  // + Dirichlet(2) smoothing term
};

struct Violation {
  std::string group_id;  // empty for dataset-level problems
  std::string field;
  std::string message;
};

/// Posterior of the positive class given the bucket, by Bayes' rule.
PosteriorEstimate posterior_rho(const ModelParams& params);

// Weighted mixture log-likelihood penalized by wh/2 times the squared distance
// of mu from the coarse signal. wh = +inf means the penalty is zero (the
// caller pins mu to HE). Returns -inf if any mixture term underflows to zero.
double penalized_loglik(const Dataset& dataset, const LatentState& state, double wh);

// Pseudo-count posterior from per-item responsibilities:
//   rho(k) = (1 + sum of w*z over items in bucket k) / (2 + sum of w).
PosteriorEstimate rho_from_responsibilities(const Dataset& dataset,
                                            const std::vector<std::vector<double>>& z,
                                            Method method);

/// Checks every type invariant; returns one entry per violation, never throws.
std::vector<Violation> validate_dataset(const Dataset& dataset);

}  // namespace c2f
