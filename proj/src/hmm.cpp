#include "fedsel/hmm.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace fedsel {

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

constexpr double kRowSumTol = 1e-9;

void check_row(std::span<const double> row, const char* what) {
  double sum = 0.0;
  for (double v : row) {
    if (!(v >= 0.0 && v <= 1.0 + kRowSumTol))
      throw std::invalid_argument(std::string(what) + ": entry outside [0,1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTol)
    throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
}

void check_obs(const HmmParams& p, std::span<const int> obs) {
  if (obs.empty()) throw std::invalid_argument("empty observation sequence");
  for (int o : obs)
    if (o < 0 || o >= p.num_categories) throw std::invalid_argument("category out of range");
}

std::vector<double> dirichlet_flat(int n, std::mt19937_64& rng) {
  std::exponential_distribution<double> exp1(1.0);
  std::vector<double> v(n);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    v[i] = exp1(rng);
    sum += v[i];
  }
  for (int i = 0; i < n; ++i) v[i] /= sum;
  return v;
}

// Adds the floor to every entry and renormalizes. With floor > 0 the result
// is strictly positive; floor == 0 leaves an already-normalized row as is.
void smooth_row(double* row, int n, double floor_value) {
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    row[i] += floor_value;
    sum += row[i];
  }
  if (sum <= 0.0) {
    for (int i = 0; i < n; ++i) row[i] = 1.0 / n;
    return;
  }
  for (int i = 0; i < n; ++i) row[i] /= sum;
}

}  // namespace

void validate_params(const HmmParams& p) {
  const int k = p.num_states, v = p.num_categories;
  if (k <= 0) throw std::invalid_argument("HmmParams: num_states must be positive");
  if (v <= 0) throw std::invalid_argument("HmmParams: num_categories must be positive");
  if (p.transition.rows != k || p.transition.cols != k)
    throw std::invalid_argument("HmmParams: transition shape mismatch");
  if (p.emission.rows != k || p.emission.cols != v)
    throw std::invalid_argument("HmmParams: emission shape mismatch");
  if (static_cast<int>(p.initial.size()) != k)
    throw std::invalid_argument("HmmParams: initial shape mismatch");
  for (int i = 0; i < k; ++i) {
    check_row(std::span(p.transition.a).subspan(static_cast<size_t>(i) * k, k), "transition");
    check_row(std::span(p.emission.a).subspan(static_cast<size_t>(i) * v, v), "emission");
  }
  check_row(p.initial, "initial");
}

HmmParams random_params(int num_states, int num_categories, std::mt19937_64& rng) {
  HmmParams p;
  p.num_states = num_states;
  p.num_categories = num_categories;
  p.transition = Mat(num_states, num_states);
  p.emission = Mat(num_states, num_categories);
  for (int i = 0; i < num_states; ++i) {
    auto row = dirichlet_flat(num_states, rng);
    for (int j = 0; j < num_states; ++j) p.transition(i, j) = row[j];
    auto erow = dirichlet_flat(num_categories, rng);
    for (int j = 0; j < num_categories; ++j) p.emission(i, j) = erow[j];
  }
  p.initial = dirichlet_flat(num_states, rng);
  return p;
}

ForwardResult forward(const HmmParams& params, std::span<const int> obs) {
  check_obs(params, obs);
  const int k = params.num_states;
  const int t_len = static_cast<int>(obs.size());

  ForwardResult r;
  r.scaled_alpha = Mat(t_len, k);
  r.scale_factors.resize(t_len);
  r.log_likelihood = 0.0;

  std::vector<double> cur(k);
  for (int i = 0; i < k; ++i) cur[i] = params.initial[i] * params.emission(i, obs[0]);

  for (int t = 0; t < t_len; ++t) {
    if (t > 0) {
      std::vector<double> next(k, 0.0);
      for (int j = 0; j < k; ++j) {
        double s = 0.0;
        for (int i = 0; i < k; ++i) s += r.scaled_alpha(t - 1, i) * params.transition(i, j);
        next[j] = s * params.emission(j, obs[t]);
      }
      cur = next;
    }
    double c = 0.0;
    for (int i = 0; i < k; ++i) c += cur[i];
    r.scale_factors[t] = c;
    if (c > 0.0) {
      for (int i = 0; i < k; ++i) r.scaled_alpha(t, i) = cur[i] / c;
      r.log_likelihood += std::log(c);
    } else {
      // Zero-likelihood prefix under hard-zero parameters; keep rows valid.
      for (int i = 0; i < k; ++i) r.scaled_alpha(t, i) = 1.0 / k;
      r.log_likelihood = -std::numeric_limits<double>::infinity();
    }
  }
  return r;
}

BackwardResult backward(const HmmParams& params, std::span<const int> obs) {
  check_obs(params, obs);
  const int k = params.num_states;
  const int t_len = static_cast<int>(obs.size());

  BackwardResult r;
  r.scaled_beta = Mat(t_len, k);
  r.scale_factors.resize(t_len);

  std::vector<double> raw(k, 1.0);
  for (int t = t_len - 1; t >= 0; --t) {
    if (t < t_len - 1) {
      std::vector<double> next(k, 0.0);
      for (int i = 0; i < k; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j)
          s += params.transition(i, j) * params.emission(j, obs[t + 1]) * r.scaled_beta(t + 1, j);
        next[i] = s;
      }
      raw = next;
    }
    double d = 0.0;
    for (int i = 0; i < k; ++i) d += raw[i];
    r.scale_factors[t] = d;
    if (d > 0.0) {
      for (int i = 0; i < k; ++i) r.scaled_beta(t, i) = raw[i] / d;
    } else {
      for (int i = 0; i < k; ++i) r.scaled_beta(t, i) = 1.0 / k;
    }
  }
  return r;
}

std::vector<double> posterior_state(const ForwardResult& fwd, int at) {
  if (at < 0 || at >= fwd.scaled_alpha.rows)
    throw std::invalid_argument("posterior_state: time index out of range");
  std::vector<double> g(fwd.scaled_alpha.cols);
  for (int i = 0; i < fwd.scaled_alpha.cols; ++i) g[i] = fwd.scaled_alpha(at, i);
  return g;
}

double predict_conflict(const HmmParams& params, const SelectionHistory& history) {
  if (history.current_round < history.last_observed_round)
    throw std::invalid_argument("SelectionHistory: current round precedes last observation");
  const long d = history.gap();
  if (d == 0)
    throw std::invalid_argument("prediction target coincides with last observation");
  if (params.num_categories < 2)
    throw std::invalid_argument("predict_conflict: needs a conflict category (V >= 2)");

  ForwardResult fwd = forward(params, history.observations);
  std::vector<double> gamma = posterior_state(fwd, fwd.scaled_alpha.rows - 1);

  // gamma * A^d; short gaps propagate step by step, long gaps use mat_pow.
  if (d <= 16) {
    for (long s = 0; s < d; ++s) gamma = vec_mat(gamma, params.transition);
  } else {
    gamma = vec_mat(gamma, mat_pow(params.transition, d));
  }

  double p = 0.0;
  for (int i = 0; i < params.num_states; ++i) p += gamma[i] * params.emission(i, 1);
  if (p < 0.0) p = 0.0;
  if (p > 1.0) p = 1.0;
  return p;
}

double prior_conflict(const HmmParams& params, long t) {
  if (t < 0) throw std::invalid_argument("prior_conflict: negative round");
  if (params.num_categories < 2)
    throw std::invalid_argument("prior_conflict: needs a conflict category (V >= 2)");
  std::vector<double> v = params.initial;
  if (t <= 16) {
    for (long s = 0; s < t; ++s) v = vec_mat(v, params.transition);
  } else {
    v = vec_mat(v, mat_pow(params.transition, t));
  }
  double p = 0.0;
  for (int i = 0; i < params.num_states; ++i) p += v[i] * params.emission(i, 1);
  if (p < 0.0) p = 0.0;
  if (p > 1.0) p = 1.0;
  return p;
}

HmmParams baum_welch_step(const HmmParams& params, std::span<const int> obs, double smoothing) {
  check_obs(params, obs);
  const int t_len = static_cast<int>(obs.size());
  if (t_len < 2) throw std::invalid_argument("insufficient data for transition estimation");
  const int k = params.num_states;
  const int v = params.num_categories;

  ForwardResult fwd = forward(params, obs);
  BackwardResult bwd = backward(params, obs);

  // Scaled alpha/beta share per-step constants across states, so per-step
  // normalization recovers the exact posteriors gamma_t and xi_t.
  Mat gamma(t_len, k);
  for (int t = 0; t < t_len; ++t) {
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      gamma(t, i) = fwd.scaled_alpha(t, i) * bwd.scaled_beta(t, i);
      sum += gamma(t, i);
    }
    for (int i = 0; i < k; ++i) gamma(t, i) = sum > 0.0 ? gamma(t, i) / sum : 1.0 / k;
  }

  Mat xi_sum(k, k, 0.0);  // sum over t of xi_t(i,j)
  for (int t = 0; t + 1 < t_len; ++t) {
    Mat xi(k, k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        xi(i, j) = fwd.scaled_alpha(t, i) * params.transition(i, j) *
                   params.emission(j, obs[t + 1]) * bwd.scaled_beta(t + 1, j);
        sum += xi(i, j);
      }
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        xi_sum(i, j) += sum > 0.0 ? xi(i, j) / sum : 1.0 / (k * k);
  }

  HmmParams out;
  out.num_states = k;
  out.num_categories = v;
  out.transition = Mat(k, k);
  out.emission = Mat(k, v);
  out.initial.resize(k);

  for (int i = 0; i < k; ++i) {
    double denom = 0.0;
    for (int t = 0; t + 1 < t_len; ++t) denom += gamma(t, i);
    for (int j = 0; j < k; ++j)
      out.transition(i, j) = denom > 0.0 ? xi_sum(i, j) / denom : 0.0;
    smooth_row(&out.transition.a[static_cast<size_t>(i) * k], k, smoothing);
  }

  for (int j = 0; j < k; ++j) {
    double denom = 0.0;
    std::vector<double> num(v, 0.0);
    for (int t = 0; t < t_len; ++t) {
      denom += gamma(t, j);
      num[obs[t]] += gamma(t, j);
    }
    for (int c = 0; c < v; ++c) out.emission(j, c) = denom > 0.0 ? num[c] / denom : 0.0;
    smooth_row(&out.emission.a[static_cast<size_t>(j) * v], v, smoothing);
  }

  for (int i = 0; i < k; ++i) out.initial[i] = gamma(0, i);
  smooth_row(out.initial.data(), k, smoothing);

  validate_params(out);
  return out;
}

HmmParams incremental_update(const HmmParams& old_params, const HmmParams& batch_estimate,
                             double rho) {
  if (!old_params.same_shape(batch_estimate))
    throw std::invalid_argument("incremental_update: shape mismatch");
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("incremental_update: rho outside (0,1]");
  const int k = old_params.num_states;
  const int v = old_params.num_categories;

  HmmParams out = old_params;
  auto blend_row = [rho](double* dst, const double* oldr, const double* newr, int n) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      dst[i] = (1.0 - rho) * oldr[i] + rho * newr[i];
      sum += dst[i];
    }
    for (int i = 0; i < n; ++i) dst[i] = sum > 0.0 ? dst[i] / sum : 1.0 / n;
  };
  for (int i = 0; i < k; ++i) {
    blend_row(&out.transition.a[static_cast<size_t>(i) * k],
              &old_params.transition.a[static_cast<size_t>(i) * k],
              &batch_estimate.transition.a[static_cast<size_t>(i) * k], k);
    blend_row(&out.emission.a[static_cast<size_t>(i) * v],
              &old_params.emission.a[static_cast<size_t>(i) * v],
              &batch_estimate.emission.a[static_cast<size_t>(i) * v], v);
  }
  blend_row(out.initial.data(), old_params.initial.data(), batch_estimate.initial.data(), k);
  validate_params(out);
  return out;
}

nlohmann::json hmm_to_json(const HmmParams& p) {
  nlohmann::json j;
  j["K"] = p.num_states;
  j["V"] = p.num_categories;
  j["A"] = p.transition.a;
  j["B"] = p.emission.a;
  j["pi"] = p.initial;
  return j;
}

HmmParams hmm_from_json(const nlohmann::json& j) {
  HmmParams p;
  p.num_states = j.at("K").get<int>();
  p.num_categories = j.at("V").get<int>();
  p.transition = Mat(p.num_states, p.num_states);
  p.transition.a = j.at("A").get<std::vector<double>>();
  p.emission = Mat(p.num_states, p.num_categories);
  p.emission.a = j.at("B").get<std::vector<double>>();
  p.initial = j.at("pi").get<std::vector<double>>();
  if (p.transition.a.size() != static_cast<size_t>(p.num_states) * p.num_states ||
      p.emission.a.size() != static_cast<size_t>(p.num_states) * p.num_categories)
    throw std::invalid_argument("hmm_from_json: array length mismatch");
  validate_params(p);
  return p;
}

}  // namespace fedsel
