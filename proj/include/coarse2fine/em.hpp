#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "coarse2fine/model.hpp"

namespace c2f {

// Tuning for the latent variables fit. wh is the weight given to the coarse
// signal (1 / sigma_H^2): +inf pins mu to HE, 0 uses HE for initialization
// only. The fit itself is deterministic; seed is reserved for callers that
// derive replicate seeds from the config.
struct FitConfig {
  double wh = 10.0;
  int max_iters = 500;
  double tol = 1e-8;  // convergence threshold on max |delta z|
  double mu_clamp = 30.0;
  double newton_tol = 1e-12;
  int newton_max_iters = 100;
  std::uint64_t seed = 0;
};

struct EmResult {
  PosteriorEstimate estimate;
  LatentState state;
  int iterations = 0;
  bool converged = false;
  int clamped_groups = 0;  // mu solves where the clamp bound in the last sweep
};

/// The scalar mu solve failed to reach tolerance (a bug signal, not a tuning issue).
class NewtonError : public std::runtime_error {
 public:
  explicit NewtonError(double residual_);
  double residual;
};

/// The mixture likelihood underflowed to zero mid-fit.
class EmDivergenceError : public std::runtime_error {
 public:
  explicit EmDivergenceError(int iteration_);
  int iteration;
};

// Forward-propagates the coarse signal: mu = HE, z = sigmoid(mu), and the
// pseudo-count class-conditional bucket distributions implied by z.
LatentState initialize(const Dataset& dataset, const FitConfig& config);

/// Posterior responsibilities of each item given the current mu and w.
void e_step(const Dataset& dataset, LatentState& state);

/// Pseudo-count update of both class-conditional bucket distributions.
void m_step_w(const Dataset& dataset, const std::vector<std::vector<double>>& z,
              std::vector<double>& w0, std::vector<double>& w1);

// Solves wh*(mu - HE) + sum_j weight_j*(sigmoid(mu) - z_j) = 0 by safeguarded
// Newton, clamped to [-mu_clamp, mu_clamp]. wh = +inf returns HE directly;
// wh = 0 with no items returns HE unchanged.
double m_step_mu(const GroupObservations& group, const std::vector<double>& z_i,
                 const FitConfig& config);

// Full fit: alternates the E-step, the w update, and the per-group mu solves
// until max |delta z| < tol or max_iters is reached, then reads off the
// pseudo-count posterior from the final responsibilities.
EmResult em_fit(const Dataset& dataset, const FitConfig& config);

}  // namespace c2f
