#include "coarse2fine/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace c2f {

NewtonError::NewtonError(double residual_)
    : std::runtime_error("mu solve did not reach tolerance; final residual " +
                         std::to_string(residual_)),
      residual(residual_) {}

EmDivergenceError::EmDivergenceError(int iteration_)
    : std::runtime_error("mixture likelihood underflowed to zero at iteration " +
                         std::to_string(iteration_)),
      iteration(iteration_) {}

namespace {

void check_config(const FitConfig& cfg) {
  if (!(cfg.wh >= 0.0)) throw std::invalid_argument("wh must be nonnegative");
  if (cfg.max_iters < 1) throw std::invalid_argument("max_iters must be positive");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (!(cfg.mu_clamp >= 10.0)) throw std::invalid_argument("mu_clamp must be at least 10");
  if (!(cfg.newton_tol > 0.0)) throw std::invalid_argument("newton_tol must be positive");
  if (cfg.newton_max_iters < 1) {
    throw std::invalid_argument("newton_max_iters must be positive");
  }
}

// Root of g(mu) = wh*(mu - he) + sigmoid(mu)*sum_w - sum_wz on the clamped
// interval. g is strictly increasing, so a sign check at the interval ends
// settles whether the clamp binds; inside, Newton steps fall back to bisection
// whenever they leave the current bracket.
double solve_mu(double he, double sum_w, double sum_wz, const FitConfig& cfg,
                bool* clamped) {
  if (clamped) *clamped = false;
  if (std::isinf(cfg.wh)) return he;
  if (cfg.wh == 0.0 && sum_w == 0.0) return he;

  const auto g = [&](double m) {
    return cfg.wh * (m - he) + sigmoid(m) * sum_w - sum_wz;
  };

  double lo = -cfg.mu_clamp;
  double hi = cfg.mu_clamp;
  if (g(lo) >= 0.0) {
    if (clamped) *clamped = true;
    return lo;
  }
  if (g(hi) <= 0.0) {
    if (clamped) *clamped = true;
    return hi;
  }

  double x = std::clamp(he, lo, hi);
  for (int it = 0; it < cfg.newton_max_iters; ++it) {
    const double gx = g(x);
    if (std::abs(gx) <= cfg.newton_tol) return x;
    if (gx > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double dgx = cfg.wh + sigmoid_deriv(x) * sum_w;
    double next = x - gx / dgx;
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = 0.5 * (lo + hi);
    }
    if (next == x) {
      return x;  // bracket narrowed to adjacent doubles
    }
    x = next;
  }
  throw NewtonError(g(x));
}

// Items of one group collapsed to (bucket, total weight) cells; everything the
// sweep needs is linear in item weight within a cell, so the collapsed form
// gives identical updates at a fraction of the passes.
struct Cells {
  std::vector<int> begin;  // group i owns cells [begin[i], begin[i+1])
  std::vector<int> bin;    // 0-based
  std::vector<double> weight;
  std::vector<double> group_weight;
};

Cells build_cells(const Dataset& dataset) {
  const int k = dataset.binning.k;
  Cells cells;
  cells.begin.reserve(dataset.groups.size() + 1);
  cells.begin.push_back(0);
  std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
  std::vector<int> touched;
  for (const GroupObservations& g : dataset.groups) {
    touched.clear();
    for (const Item& it : g.items) {
      const int b = it.bin - 1;
      if (acc[static_cast<std::size_t>(b)] == 0.0) touched.push_back(b);
      acc[static_cast<std::size_t>(b)] += it.weight;
    }
    std::sort(touched.begin(), touched.end());
    double gw = 0.0;
    for (int b : touched) {
      cells.bin.push_back(b);
      cells.weight.push_back(acc[static_cast<std::size_t>(b)]);
      gw += acc[static_cast<std::size_t>(b)];
      acc[static_cast<std::size_t>(b)] = 0.0;
    }
    cells.group_weight.push_back(gw);
    cells.begin.push_back(static_cast<int>(cells.bin.size()));
  }
  return cells;
}

}  // namespace

LatentState initialize(const Dataset& dataset, const FitConfig& config) {
  (void)config;
  LatentState st;
  const std::size_t n = dataset.groups.size();
  st.mu.resize(n);
  st.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    st.mu[i] = dataset.groups[i].he;
    st.z[i].assign(dataset.groups[i].items.size(), sigmoid(st.mu[i]));
  }
  m_step_w(dataset, st.z, st.w0, st.w1);
  return st;
}

void e_step(const Dataset& dataset, LatentState& state) {
  const std::size_t n = dataset.groups.size();
  if (state.mu.size() != n || state.z.size() != n) {
    throw std::invalid_argument("latent state does not match dataset");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const GroupObservations& g = dataset.groups[i];
    if (state.z[i].size() != g.items.size()) {
      throw std::invalid_argument("latent state z does not match items of group " +
                                  g.group_id);
    }
    const double s = sigmoid(state.mu[i]);
    for (std::size_t j = 0; j < g.items.size(); ++j) {
      const std::size_t b = static_cast<std::size_t>(g.items[j].bin - 1);
      const double pos = s * state.w1[b];
      state.z[i][j] = pos / ((1.0 - s) * state.w0[b] + pos);
    }
  }
}

void m_step_w(const Dataset& dataset, const std::vector<std::vector<double>>& z,
              std::vector<double>& w0, std::vector<double>& w1) {
  const std::size_t k = static_cast<std::size_t>(dataset.binning.k);
  if (z.size() != dataset.groups.size()) {
    throw std::invalid_argument("responsibilities do not match dataset");
  }
  std::vector<double> c0(k, 0.0), c1(k, 0.0);
  double s0 = 0.0, s1 = 0.0;
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    const GroupObservations& g = dataset.groups[i];
    if (z[i].size() != g.items.size()) {
      throw std::invalid_argument("responsibilities do not match items of group " +
                                  g.group_id);
    }
    for (std::size_t j = 0; j < g.items.size(); ++j) {
      const std::size_t b = static_cast<std::size_t>(g.items[j].bin - 1);
      const double m1 = g.items[j].weight * z[i][j];
      const double m0 = g.items[j].weight * (1.0 - z[i][j]);
      c1[b] += m1;
      s1 += m1;
      c0[b] += m0;
      s0 += m0;
    }
  }
  w0.resize(k);
  w1.resize(k);
  for (std::size_t b = 0; b < k; ++b) {
    w0[b] = (1.0 + c0[b]) / (static_cast<double>(k) + s0);
    w1[b] = (1.0 + c1[b]) / (static_cast<double>(k) + s1);
  }
}

double m_step_mu(const GroupObservations& group, const std::vector<double>& z_i,
                 const FitConfig& config) {
  check_config(config);
  if (z_i.size() != group.items.size()) {
    throw std::invalid_argument("responsibilities do not match items of group " +
                                group.group_id);
  }
  double sum_w = 0.0, sum_wz = 0.0;
  for (std::size_t j = 0; j < group.items.size(); ++j) {
    sum_w += group.items[j].weight;
    sum_wz += group.items[j].weight * z_i[j];
  }
  return solve_mu(group.he, sum_w, sum_wz, config, nullptr);
}

EmResult em_fit(const Dataset& dataset, const FitConfig& config) {
  check_config(config);
  const int k = dataset.binning.k;
  const std::size_t n = dataset.groups.size();
  const Cells cells = build_cells(dataset);
  const std::size_t ncells = cells.bin.size();

  std::vector<double> he(n), mu(n);
  for (std::size_t i = 0; i < n; ++i) {
    he[i] = dataset.groups[i].he;
    mu[i] = he[i];
  }

  std::vector<double> z(ncells);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sigmoid(mu[i]);
    for (int c = cells.begin[i]; c < cells.begin[i + 1]; ++c) {
      z[static_cast<std::size_t>(c)] = s;
    }
  }

  std::vector<double> w0(static_cast<std::size_t>(k)), w1(static_cast<std::size_t>(k));
  const auto update_w = [&](const std::vector<double>& c0, const std::vector<double>& c1,
                            double s0, double s1) {
    for (int b = 0; b < k; ++b) {
      w0[static_cast<std::size_t>(b)] = (1.0 + c0[static_cast<std::size_t>(b)]) / (k + s0);
      w1[static_cast<std::size_t>(b)] = (1.0 + c1[static_cast<std::size_t>(b)]) / (k + s1);
    }
  };
  {
    std::vector<double> c0(static_cast<std::size_t>(k), 0.0), c1(static_cast<std::size_t>(k), 0.0);
    double s0 = 0.0, s1 = 0.0;
    for (std::size_t c = 0; c < ncells; ++c) {
      const double m1 = cells.weight[c] * z[c];
      const double m0 = cells.weight[c] * (1.0 - z[c]);
      c1[static_cast<std::size_t>(cells.bin[c])] += m1;
      s1 += m1;
      c0[static_cast<std::size_t>(cells.bin[c])] += m0;
      s0 += m0;
    }
    update_w(c0, c1, s0, s1);
  }

  const auto penalty_term = [&]() {
    if (std::isinf(config.wh)) return 0.0;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = mu[i] - he[i];
      p += config.wh * d * d / 2.0;
    }
    return p;
  };
  const auto dirichlet_term = [&]() {
    double t = 0.0;
    for (int b = 0; b < k; ++b) {
      t += std::log(w0[static_cast<std::size_t>(b)]) + std::log(w1[static_cast<std::size_t>(b)]);
    }
    return t;
  };
  const auto data_term_only = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double s = sigmoid(mu[i]);
      for (int c = cells.begin[i]; c < cells.begin[i + 1]; ++c) {
        const std::size_t b = static_cast<std::size_t>(cells.bin[static_cast<std::size_t>(c)]);
        const double mix = (1.0 - s) * w0[b] + s * w1[b];
        if (mix == 0.0) return -std::numeric_limits<double>::infinity();
        total += cells.weight[static_cast<std::size_t>(c)] * std::log(mix);
      }
    }
    return total;
  };

  std::vector<double> trace, smoothed;
  trace.reserve(static_cast<std::size_t>(config.max_iters) + 1);
  smoothed.reserve(static_cast<std::size_t>(config.max_iters) + 1);

  int iterations = 0;
  bool converged = false;
  int clamped_groups = 0;
  std::vector<double> c0(static_cast<std::size_t>(k)), c1(static_cast<std::size_t>(k));
  std::vector<double> sum_wz(n);

  for (int t = 1; t <= config.max_iters; ++t) {
    // One pass: objective of the pre-sweep state, fresh responsibilities, and
    // every sum the M-step needs.
    std::fill(c0.begin(), c0.end(), 0.0);
    std::fill(c1.begin(), c1.end(), 0.0);
    std::fill(sum_wz.begin(), sum_wz.end(), 0.0);
    double s0 = 0.0, s1 = 0.0;
    double data_term = 0.0;
    double max_dz = 0.0;
    bool underflow = false;
    for (std::size_t i = 0; i < n && !underflow; ++i) {
      const double s = sigmoid(mu[i]);
      for (int c = cells.begin[i]; c < cells.begin[i + 1]; ++c) {
        const std::size_t cc = static_cast<std::size_t>(c);
        const std::size_t b = static_cast<std::size_t>(cells.bin[cc]);
        const double pos = s * w1[b];
        const double mix = (1.0 - s) * w0[b] + pos;
        if (mix == 0.0) {
          underflow = true;
          break;
        }
        data_term += cells.weight[cc] * std::log(mix);
        const double znew = pos / mix;
        max_dz = std::max(max_dz, std::abs(znew - z[cc]));
        z[cc] = znew;
        const double m1 = cells.weight[cc] * znew;
        const double m0 = cells.weight[cc] * (1.0 - znew);
        c1[b] += m1;
        s1 += m1;
        c0[b] += m0;
        s0 += m0;
        sum_wz[i] += m1;
      }
    }
    if (underflow) throw EmDivergenceError(t);
    trace.push_back(data_term - penalty_term());
    smoothed.push_back(trace.back() + dirichlet_term());

    update_w(c0, c1, s0, s1);
    clamped_groups = 0;
    if (!std::isinf(config.wh)) {
      for (std::size_t i = 0; i < n; ++i) {
        bool cl = false;
        mu[i] = solve_mu(he[i], cells.group_weight[i], sum_wz[i], config, &cl);
        clamped_groups += cl ? 1 : 0;
      }
    }
    iterations = t;
    if (max_dz < config.tol) {
      converged = true;
      break;
    }
  }

  const double final_data = data_term_only();
  if (std::isinf(final_data) && final_data < 0) throw EmDivergenceError(iterations);
  trace.push_back(final_data - penalty_term());
  smoothed.push_back(trace.back() + dirichlet_term());

  LatentState st;
  st.mu = std::move(mu);
  st.w0 = w0;
  st.w1 = w1;
  st.objective_trace = std::move(trace);
  st.smoothed_objective_trace = std::move(smoothed);
  st.z.resize(n);
  std::vector<double> z_by_bin(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = cells.begin[i]; c < cells.begin[i + 1]; ++c) {
      z_by_bin[static_cast<std::size_t>(cells.bin[static_cast<std::size_t>(c)])] =
          z[static_cast<std::size_t>(c)];
    }
    const GroupObservations& g = dataset.groups[i];
    st.z[i].resize(g.items.size());
    for (std::size_t j = 0; j < g.items.size(); ++j) {
      st.z[i][j] = z_by_bin[static_cast<std::size_t>(g.items[j].bin - 1)];
    }
  }

  EmResult res;
  res.estimate = rho_from_responsibilities(dataset, st.z, Method::em);
  res.state = std::move(st);
  res.iterations = iterations;
  res.converged = converged;
  res.clamped_groups = clamped_groups;
  return res;
}

}  // namespace c2f
