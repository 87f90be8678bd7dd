#include "coarse2fine/estimators.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <limits>

namespace c2f {

MomRankError::MomRankError(int rank_, double condition_number_)
    : std::runtime_error("method of moments design is rank deficient: rank " +
                         std::to_string(rank_) + ", condition number " +
                         std::to_string(condition_number_)),
      rank(rank_),
      condition_number(condition_number_) {}

PosteriorEstimate naive_fit(const Dataset& dataset) {
  std::vector<std::vector<double>> z(dataset.groups.size());
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    z[i].assign(dataset.groups[i].items.size(), sigmoid(dataset.groups[i].he));
  }
  return rho_from_responsibilities(dataset, z, Method::naive);
}

OmegaMatrix build_omega(const Dataset& dataset) {
  const int k = dataset.binning.k;
  OmegaMatrix omega;

  std::vector<std::vector<double>> kept_rows;
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    const GroupObservations& g = dataset.groups[i];
    std::vector<double> row(static_cast<std::size_t>(k), 0.0);
    double total = 0.0;
    for (const Item& it : g.items) {
      row[static_cast<std::size_t>(it.bin - 1)] += it.weight;
      total += it.weight;
    }
    if (total <= 0.0) {
      omega.dropped_group_ids.push_back(g.group_id);
      continue;
    }
    for (double& v : row) v /= total;
    kept_rows.push_back(std::move(row));
    omega.group_ids.push_back(g.group_id);
    omega.group_index.push_back(static_cast<int>(i));
  }

  omega.rows.resize(static_cast<Eigen::Index>(kept_rows.size()), k);
  for (std::size_t r = 0; r < kept_rows.size(); ++r) {
    for (int c = 0; c < k; ++c) {
      omega.rows(static_cast<Eigen::Index>(r), c) = kept_rows[r][static_cast<std::size_t>(c)];
    }
  }

  if (omega.rows.rows() == 0) {
    omega.condition_number = std::numeric_limits<double>::infinity();
    return omega;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(omega.rows);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (smin <= 0.0) {
    omega.condition_number = std::numeric_limits<double>::infinity();
  } else {
    const double c = sv(0) / smin;
    omega.condition_number = c * c;
  }
  return omega;
}

PosteriorEstimate mom_fit(const Dataset& dataset) {
  const int k = dataset.binning.k;
  OmegaMatrix omega = build_omega(dataset);
  const Eigen::Index n = omega.rows.rows();

  if (n == 0) {
    throw MomRankError(0, omega.condition_number);
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(omega.rows);
  const auto& sv = svd.singularValues();
  int rank = 0;
  const double tol = 1e-10 * sv(0);
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  if (rank < k) {
    throw MomRankError(rank, omega.condition_number);
  }

  Eigen::VectorXd target(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    target(r) = sigmoid(dataset.groups[static_cast<std::size_t>(omega.group_index[r])].he);
  }

  Eigen::VectorXd sol = omega.rows.colPivHouseholderQr().solve(target);

  PosteriorEstimate est;
  est.method = Method::mom;
  est.rho.assign(sol.data(), sol.data() + sol.size());
  return est;
}

}  // namespace c2f
