#pragma once

#include <random>
#include <span>
#include <vector>

#include "fedsel/common.hpp"

#include <json.hpp>

namespace fedsel {

// Categorical HMM parameter set: transition A (KxK), emission B (KxV),
// initial distribution pi. All rows are probability distributions.
struct HmmParams {
  int num_states = 0;      // K
  int num_categories = 0;  // V
  Mat transition;          // K x K
  Mat emission;            // K x V
  std::vector<double> initial;

  bool same_shape(const HmmParams& o) const {
    return num_states == o.num_states && num_categories == o.num_categories;
  }
};

// Throws std::invalid_argument when a stochastic-matrix invariant is broken
// (row sums within 1e-9 of 1, entries in [0,1], shapes consistent).
void validate_params(const HmmParams& p);

// Rows drawn from a flat Dirichlet (iid Exp(1) draws, normalized).
HmmParams random_params(int num_states, int num_categories, std::mt19937_64& rng);

// One client's categorical observation record as seen by one server.
// Observations cover rounds up to last_observed_round; the trailing gap
// d = current_round - last_observed_round has no observations.
struct SelectionHistory {
  int client_id = -1;
  std::vector<int> observations;
  long last_observed_round = 0;
  long current_round = 0;

  long gap() const { return current_round - last_observed_round; }
};

struct ForwardResult {
  Mat scaled_alpha;                   // T x K, each row sums to 1
  std::vector<double> scale_factors;  // length T
  double log_likelihood = 0.0;        // sum of log scale factors
};

struct BackwardResult {
  Mat scaled_beta;                    // T x K, each row sums to 1
  std::vector<double> scale_factors;  // length T
};

// Scaled forward pass. Unscaled alpha_t(i) = scaled_alpha(t,i) * prod_{s<=t} scale_factors[s].
ForwardResult forward(const HmmParams& params, std::span<const int> obs);

// Scaled backward pass. Unscaled beta_t(i) = scaled_beta(t,i) * prod_{s>=t} scale_factors[s];
// the unscaled final row is all ones.
BackwardResult backward(const HmmParams& params, std::span<const int> obs);

// gamma_at(i) = alpha_at(i) / sum_j alpha_at(j); equals the scaled_alpha row.
std::vector<double> posterior_state(const ForwardResult& fwd, int at);

// Conflict probability at history.current_round: posterior at the last
// observation, propagated through A for the gap, dotted with B[:,1].
// Requires gap >= 1 and a non-empty observation sequence.
double predict_conflict(const HmmParams& params, const SelectionHistory& history);

// Prior conflict probability with no observations: pi * A^t * B[:,1].
double prior_conflict(const HmmParams& params, long t);

// Single batch Baum-Welch re-estimation over one sequence (length >= 2).
// Every re-estimated row gets an additive floor and is renormalized, keeping
// parameters strictly positive.
HmmParams baum_welch_step(const HmmParams& params, std::span<const int> obs,
                          double smoothing = 1e-6);

// EMA blend of old parameters toward a batch estimate, rows renormalized.
HmmParams incremental_update(const HmmParams& old_params, const HmmParams& batch_estimate,
                             double rho);

nlohmann::json hmm_to_json(const HmmParams& p);
HmmParams hmm_from_json(const nlohmann::json& j);

}  // namespace fedsel
