#include "coarse2fine/model.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <stdexcept>

namespace c2f {

double logit_from_fraction(double p) {
  const double clamped = std::clamp(p, kFractionEps, 1.0 - kFractionEps);
  return logit(clamped);
}

BehaviorBinning BehaviorBinning::simple(int k) {
  BehaviorBinning b;
  b.k = k;
  b.factor_levels = {k};
  b.labels.reserve(static_cast<std::size_t>(k));
  const std::size_t width = std::to_string(k).size();
  for (int i = 1; i <= k; ++i) {
    std::string num = std::to_string(i);
    b.labels.push_back("bin_" + std::string(width - num.size(), '0') + num);
  }
  return b;
}

BehaviorBinning BehaviorBinning::crossed(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& factors) {
  BehaviorBinning b;
  b.k = 1;
  for (const auto& [name, levels] : factors) {
    if (levels.empty()) {
      throw std::invalid_argument("factor '" + name + "' has no levels");
    }
    b.factor_levels.push_back(static_cast<int>(levels.size()));
    b.k *= static_cast<int>(levels.size());
  }
  // row-major cross order: the last factor varies fastest
  b.labels.assign(static_cast<std::size_t>(b.k), "");
  for (int bin = 0; bin < b.k; ++bin) {
    int rest = bin;
    std::vector<int> idx(factors.size(), 0);
    for (int f = static_cast<int>(factors.size()) - 1; f >= 0; --f) {
      idx[f] = rest % b.factor_levels[f];
      rest /= b.factor_levels[f];
    }
    std::string label;
    for (std::size_t f = 0; f < factors.size(); ++f) {
      if (f > 0) label += '|';
      label += factors[f].second[static_cast<std::size_t>(idx[f])];
    }
    b.labels[static_cast<std::size_t>(bin)] = label;
  }
  return b;
}

std::size_t Dataset::total_items() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.items.size();
  return n;
}

const char* method_name(Method m) {
  switch (m) {
    case Method::naive: return "naive";
    case Method::mom: return "mom";
    case Method::em: return "em";
    case Method::oracle: return "oracle";
  }
  return "unknown";
}

PosteriorEstimate posterior_rho(const ModelParams& params) {
  const std::size_t k = params.w0.size();
  if (params.w1.size() != k) {
    throw std::invalid_argument("w0 and w1 must have equal length");
  }
  PosteriorEstimate est;
  est.method = Method::oracle;
  est.rho.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (params.w0[i] == params.w1[i]) {
      est.rho[i] = params.pi;  // uninformative bucket: posterior equals the prior
      continue;
    }
    const double pos = params.pi * params.w1[i];
    est.rho[i] = pos / ((1.0 - params.pi) * params.w0[i] + pos);
  }
  return est;
}

namespace {

void check_state_shapes(const Dataset& dataset, const LatentState& state) {
  const std::size_t n = dataset.groups.size();
  if (state.mu.size() != n || state.z.size() != n) {
    throw std::invalid_argument("latent state does not match dataset group count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (state.z[i].size() != dataset.groups[i].items.size()) {
      throw std::invalid_argument("latent state z does not match items of group " +
                                  dataset.groups[i].group_id);
    }
  }
  const std::size_t k = static_cast<std::size_t>(dataset.binning.k);
  if (state.w0.size() != k || state.w1.size() != k) {
    throw std::invalid_argument("latent state w vectors do not match bucket count");
  }
}

}  // namespace

double penalized_loglik(const Dataset& dataset, const LatentState& state, double wh) {
  check_state_shapes(dataset, state);
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.groups.size(); ++i) {
    const GroupObservations& g = dataset.groups[i];
    const double s = sigmoid(state.mu[i]);
    for (const Item& it : g.items) {
      const std::size_t b = static_cast<std::size_t>(it.bin - 1);
      const double mix = (1.0 - s) * state.w0[b] + s * state.w1[b];
      if (mix == 0.0) {
        return -std::numeric_limits<double>::infinity();
      }
      total += it.weight * std::log(mix);
    }
    if (!std::isinf(wh)) {
      const double d = state.mu[i] - g.he;
      total -= wh * d * d / 2.0;
    }
  }
  return total;
}

PosteriorEstimate rho_from_responsibilities(const Dataset& dataset,
                                            const std::vector<std::vector<double>>& z,
                                            Method method) {
  const std::size_t n = dataset.groups.size();
  if (z.size() != n) {
    throw std::invalid_argument("responsibilities do not match dataset group count");
  }
  const std::size_t k = static_cast<std::size_t>(dataset.binning.k);
  std::vector<double> num(k, 0.0);
  std::vector<double> den(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const GroupObservations& g = dataset.groups[i];
    if (z[i].size() != g.items.size()) {
      throw std::invalid_argument("responsibilities do not match items of group " +
                                  g.group_id);
    }
    for (std::size_t j = 0; j < g.items.size(); ++j) {
      const std::size_t b = static_cast<std::size_t>(g.items[j].bin - 1);
      num[b] += g.items[j].weight * z[i][j];
      den[b] += g.items[j].weight;
    }
  }
  PosteriorEstimate est;
  est.method = method;
  est.rho.resize(k);
  for (std::size_t b = 0; b < k; ++b) {
    est.rho[b] = (1.0 + num[b]) / (2.0 + den[b]);
  }
  return est;
}

std::vector<Violation> validate_dataset(const Dataset& dataset) {
  std::vector<Violation> out;
  const BehaviorBinning& bn = dataset.binning;

  if (bn.k < 2) {
    out.push_back({"", "binning.k", "number of buckets must be at least 2"});
  }
  long long prod = 1;
  for (int lv : bn.factor_levels) prod *= lv;
  if (bn.factor_levels.empty() || prod != bn.k) {
    out.push_back({"", "binning.factor_levels",
                   "product of factor levels does not equal k"});
  }
  if (static_cast<int>(bn.labels.size()) != bn.k) {
    out.push_back({"", "binning.labels", "expected one label per bucket"});
  } else {
    std::set<std::string> seen(bn.labels.begin(), bn.labels.end());
    if (static_cast<int>(seen.size()) != bn.k) {
      out.push_back({"", "binning.labels", "bucket labels are not distinct"});
    }
  }

  std::set<std::string> ids;
  for (const GroupObservations& g : dataset.groups) {
    if (!ids.insert(g.group_id).second) {
      out.push_back({g.group_id, "group_id", "duplicate group id"});
    }
    if (!std::isfinite(g.he)) {
      out.push_back({g.group_id, "he", "coarse signal must be finite"});
    }
    for (const Item& it : g.items) {
      if (it.bin < 1 || it.bin > bn.k) {
        out.push_back({g.group_id, "items.bin",
                       "bin index " + std::to_string(it.bin) + " outside 1.." +
                           std::to_string(bn.k)});
      }
      if (!(it.weight > 0.0) || it.weight > 1.0 || !std::isfinite(it.weight)) {
        out.push_back({g.group_id, "items.weight", "weight must lie in (0, 1]"});
      }
    }
  }

  if (dataset.item_labels) {
    const auto& labels = *dataset.item_labels;
    if (labels.size() != dataset.groups.size()) {
      out.push_back({"", "item_labels", "label rows do not match group count"});
    } else {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].size() != dataset.groups[i].items.size()) {
          out.push_back({dataset.groups[i].group_id, "item_labels",
                         "label count does not match item count"});
          continue;
        }
        for (int v : labels[i]) {
          if (v != 0 && v != 1) {
            out.push_back({dataset.groups[i].group_id, "item_labels",
                           "labels must be 0 or 1"});
            break;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace c2f
