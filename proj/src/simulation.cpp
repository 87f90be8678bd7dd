#include "coarse2fine/simulation.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "coarse2fine/rng.hpp"

namespace c2f {

namespace {

void check_config(const SimulationConfig& cfg) {
  if (cfg.n_groups < 1) {
    throw std::invalid_argument("n_groups must be positive");
  }
  if (cfg.items_per_group.size() != 1 &&
      cfg.items_per_group.size() != static_cast<std::size_t>(cfg.n_groups)) {
    throw std::invalid_argument("items_per_group must be a single value or one per group");
  }
  for (int j : cfg.items_per_group) {
    if (j < 0) throw std::invalid_argument("items_per_group entries must be nonnegative");
  }
  const std::size_t k = static_cast<std::size_t>(cfg.binning.k);
  if (cfg.true_rho.size() != k || cfg.marginal_q.size() != k) {
    throw std::invalid_argument("true_rho and marginal_q must have one entry per bucket");
  }
  for (double r : cfg.true_rho) {
    if (!(r > 0.0 && r < 1.0)) {
      throw std::invalid_argument("true_rho entries must lie strictly in (0,1)");
    }
  }
  double qsum = 0.0;
  for (double q : cfg.marginal_q) {
    if (!(q > 0.0)) throw std::invalid_argument("marginal_q entries must be positive");
    qsum += q;
  }
  if (std::abs(qsum - 1.0) > 1e-9) {
    throw std::invalid_argument("marginal_q must sum to 1");
  }
  if (cfg.mu_sd < 0.0 || cfg.sigma_h < 0.0) {
    throw std::invalid_argument("mu_sd and sigma_h must be nonnegative");
  }
}

std::string group_id_for(int index, int n_groups) {
  const std::size_t width = std::to_string(n_groups).size();
  std::string num = std::to_string(index + 1);
  return "g" + std::string(width - num.size(), '0') + num;
}

}  // namespace

ModelParams params_from_rho(const std::vector<double>& true_rho,
                            const std::vector<double>& marginal_q) {
  const std::size_t k = true_rho.size();
  if (marginal_q.size() != k) {
    throw std::invalid_argument("true_rho and marginal_q must have equal length");
  }
  double pi = 0.0;
  for (std::size_t b = 0; b < k; ++b) pi += marginal_q[b] * true_rho[b];
  if (pi <= 1e-9 || pi >= 1.0 - 1e-9) {
    throw std::invalid_argument("implied class prior is degenerate: " + std::to_string(pi));
  }
  ModelParams params;
  params.pi = pi;
  params.w0.resize(k);
  params.w1.resize(k);
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t b = 0; b < k; ++b) {
    params.w1[b] = marginal_q[b] * true_rho[b] / pi;
    params.w0[b] = marginal_q[b] * (1.0 - true_rho[b]) / (1.0 - pi);
    s0 += params.w0[b];
    s1 += params.w1[b];
  }
  for (std::size_t b = 0; b < k; ++b) {
    params.w0[b] /= s0;
    params.w1[b] /= s1;
  }
  return params;
}

SimulatedTruth sample(const SimulationConfig& config) {
  check_config(config);
  const std::size_t k = static_cast<std::size_t>(config.binning.k);

  SimulatedTruth out;
  out.true_params = params_from_rho(config.true_rho, config.marginal_q);
  out.true_rho = config.true_rho;

  std::vector<double> cdf0(k), cdf1(k);
  double acc0 = 0.0, acc1 = 0.0;
  for (std::size_t b = 0; b < k; ++b) {
    acc0 += out.true_params.w0[b];
    acc1 += out.true_params.w1[b];
    cdf0[b] = acc0;
    cdf1[b] = acc1;
  }
  cdf0.back() = 1.0;
  cdf1.back() = 1.0;

  out.dataset.binning = config.binning;
  out.dataset.groups.resize(static_cast<std::size_t>(config.n_groups));
  out.true_mu.resize(static_cast<std::size_t>(config.n_groups));
  out.true_z.resize(static_cast<std::size_t>(config.n_groups));

  for (int i = 0; i < config.n_groups; ++i) {
    SplitMix64 rng = SplitMix64::substream(config.seed, static_cast<std::uint64_t>(i));
    GroupObservations& g = out.dataset.groups[static_cast<std::size_t>(i)];
    g.group_id = group_id_for(i, config.n_groups);
    const double mu = config.mu_mean + config.mu_sd * rng.next_normal();
    g.he = mu + config.sigma_h * rng.next_normal();
    out.true_mu[static_cast<std::size_t>(i)] = mu;
    const double s = sigmoid(mu);
    const int j_i = config.items_for_group(i);
    g.items.resize(static_cast<std::size_t>(j_i));
    out.true_z[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(j_i));
    for (int j = 0; j < j_i; ++j) {
      const bool happy = rng.next_bernoulli(s);
      const int bin = rng.next_categorical(happy ? cdf1 : cdf0) + 1;
      g.items[static_cast<std::size_t>(j)] = Item{bin, 1.0};
      out.true_z[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = happy ? 1 : 0;
    }
  }
  out.dataset.item_labels = out.true_z;
  return out;
}

SimulationConfig benchmark_scenario(int items_per_group) {
  if (items_per_group != 5 && items_per_group != 100) {
    throw std::invalid_argument("items_per_group must be 5 or 100");
  }
  SimulationConfig cfg;
  cfg.n_groups = 500;
  cfg.items_per_group = {items_per_group};
  cfg.binning = BehaviorBinning::simple(15);
  cfg.mu_mean = 0.0;
  cfg.mu_sd = 1.0;
  cfg.sigma_h = 0.5;
  cfg.true_rho.resize(15);
  cfg.marginal_q.assign(15, 1.0 / 15.0);
  for (int b = 0; b < 15; ++b) {
    cfg.true_rho[static_cast<std::size_t>(b)] = sigmoid(-2.8 + 0.4 * b);
  }
  cfg.seed = 1;
  return cfg;
}

}  // namespace c2f
