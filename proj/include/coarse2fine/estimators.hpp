#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "coarse2fine/model.hpp"

namespace c2f {

/// Per-group empirical bucket distributions, one row per group with items.
struct OmegaMatrix {
  Eigen::MatrixXd rows;                        // n_kept x K, each row on the simplex
  std::vector<std::string> group_ids;          // kept groups, dataset order
  std::vector<int> group_index;                // kept groups' positions in the dataset
  std::vector<std::string> dropped_group_ids;  // zero-weight groups, excluded
  double condition_number = 0.0;               // of the normal equations
};

/// The moment-matching design is numerically rank deficient.
class MomRankError : public std::runtime_error {
 public:
  MomRankError(int rank_, double condition_number_);
  int rank;
  double condition_number;
};

// Hard-assignment baseline: every item counts sigma(HE) of one positive
// observation toward its bucket, with one pseudo-observation per bucket.
PosteriorEstimate naive_fit(const Dataset& dataset);

OmegaMatrix build_omega(const Dataset& dataset);

// Moment matching: least-squares fit of sigma(HE) ~ Omega * rho using a
// rank-revealing orthogonal factorization. Estimates are reported unclamped;
// entries outside [0,1] are this estimator's documented failure mode.
PosteriorEstimate mom_fit(const Dataset& dataset);

}  // namespace c2f
