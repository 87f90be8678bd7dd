#pragma once

#include <cstdint>
#include <vector>

#include "coarse2fine/model.hpp"

namespace c2f {

// Generative settings. Ground truth is parameterized in rho-space: the target
// posterior curve plus the overall bucket frequencies, inverted to (pi, w0, w1).
struct SimulationConfig {
  int n_groups = 0;
  std::vector<int> items_per_group;  // size 1 (shared) or n_groups
  BehaviorBinning binning;
  double mu_mean = 0.0;
  double mu_sd = 1.0;
  double sigma_h = 0.5;            // rater noise sd on the logit scale
  std::vector<double> true_rho;    // K entries in (0,1)
  std::vector<double> marginal_q;  // K-simplex of overall bucket frequencies
  std::uint64_t seed = 1;

  int items_for_group(int i) const {
    return items_per_group.size() == 1 ? items_per_group[0]
                                       : items_per_group[static_cast<std::size_t>(i)];
  }
};

struct SimulatedTruth {
  Dataset dataset;  // carries true_z as item_labels
  std::vector<double> true_mu;
  std::vector<std::vector<int>> true_z;
  ModelParams true_params;
  std::vector<double> true_rho;
};

// Inverts the posterior curve: pi = sum q*rho, w1 = q*rho/pi,
// w0 = q*(1-rho)/(1-pi), both renormalized to sum to 1 exactly. Throws if the
// implied prior is degenerate.
ModelParams params_from_rho(const std::vector<double>& true_rho,
                            const std::vector<double>& marginal_q);

// Draws mu ~ N(mu_mean, mu_sd^2), HE = mu + N(0, sigma_h^2), then per item a
// latent class and a bucket. Each group consumes its own substream of the
// seed, so output is identical however the work is scheduled.
SimulatedTruth sample(const SimulationConfig& config);

// Canned benchmark design: 500 groups, 15 buckets, mu ~ N(0,1),
// sigma_h = 0.5, uniform bucket frequencies, and a fixed monotone S-curve of
// true posteriors. items_per_group must be 5 or 100.
SimulationConfig benchmark_scenario(int items_per_group);

}  // namespace c2f
