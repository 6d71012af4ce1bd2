// Test-only reference implementations, kept independent of the library's
// computation paths: brute-force HMM path enumeration and central finite
// differences over network parameters.
#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fedsel/hmm.hpp"
#include "fedsel/nn.hpp"

namespace oracle {

// P(obs) as an explicit sum over all K^T hidden paths.
inline double path_likelihood(const fedsel::HmmParams& p, std::span<const int> obs) {
  const int k = p.num_states;
  const int t_len = static_cast<int>(obs.size());
  std::vector<int> path(t_len, 0);
  double total = 0.0;
  while (true) {
    double prob = p.initial[path[0]] * p.emission(path[0], obs[0]);
    for (int t = 1; t < t_len; ++t)
      prob *= p.transition(path[t - 1], path[t]) * p.emission(path[t], obs[t]);
    total += prob;
    int pos = t_len - 1;
    while (pos >= 0 && path[pos] == k - 1) path[pos--] = 0;
    if (pos < 0) break;
    ++path[pos];
  }
  return total;
}

// P(h_at = state, obs), same enumeration restricted to matching paths.
inline double path_joint_state(const fedsel::HmmParams& p, std::span<const int> obs, int at,
                               int state) {
  const int k = p.num_states;
  const int t_len = static_cast<int>(obs.size());
  std::vector<int> path(t_len, 0);
  double total = 0.0;
  while (true) {
    if (path[at] == state) {
      double prob = p.initial[path[0]] * p.emission(path[0], obs[0]);
      for (int t = 1; t < t_len; ++t)
        prob *= p.transition(path[t - 1], path[t]) * p.emission(path[t], obs[t]);
      total += prob;
    }
    int pos = t_len - 1;
    while (pos >= 0 && path[pos] == k - 1) path[pos--] = 0;
    if (pos < 0) break;
    ++path[pos];
  }
  return total;
}

// P(o_{T+gap} = category | obs): paths extended `gap` unobserved steps, the
// emission applied only at the final step.
inline double path_predict(const fedsel::HmmParams& p, std::span<const int> obs, int gap,
                           int category) {
  const int k = p.num_states;
  const int t_len = static_cast<int>(obs.size());
  const int full = t_len + gap;
  std::vector<int> path(full, 0);
  double joint = 0.0;
  while (true) {
    double prob = p.initial[path[0]] * p.emission(path[0], obs[0]);
    for (int t = 1; t < t_len; ++t)
      prob *= p.transition(path[t - 1], path[t]) * p.emission(path[t], obs[t]);
    for (int t = t_len; t < full; ++t) prob *= p.transition(path[t - 1], path[t]);
    prob *= p.emission(path[full - 1], category);
    joint += prob;
    int pos = full - 1;
    while (pos >= 0 && path[pos] == k - 1) path[pos--] = 0;
    if (pos < 0) break;
    ++path[pos];
  }
  return joint / path_likelihood(p, obs);
}

// Central finite differences of `loss` with respect to every parameter of
// `net`; returns the largest relative error against `analytic`.
inline double max_grad_rel_error(fedsel::Mlp& net, const fedsel::GradientSet& analytic,
                                 const std::function<double()>& loss, double h = 1e-5) {
  double worst = 0.0;
  auto probe = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = loss();
    param = saved - h;
    const double down = loss();
    param = saved;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad), 1e-6});
    worst = std::max(worst, std::abs(fd - grad) / scale);
  };
  for (size_t l = 0; l < net.weights.size(); ++l) {
    for (size_t i = 0; i < net.weights[l].a.size(); ++i)
      probe(net.weights[l].a[i], analytic.weights[l].a[i]);
    for (size_t i = 0; i < net.biases[l].size(); ++i)
      probe(net.biases[l][i], analytic.biases[l][i]);
  }
  return worst;
}

}  // namespace oracle
