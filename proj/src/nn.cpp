#include "fedsel/nn.hpp"

#include <cmath>

namespace fedsel {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

void check_finite(const GradientSet& g) {
  for (const Mat& w : g.weights)
    for (double v : w.a)
      if (!std::isfinite(v)) throw std::runtime_error("non-finite gradient");
  for (const auto& b : g.biases)
    for (double v : b)
      if (!std::isfinite(v)) throw std::runtime_error("non-finite gradient");
}

void check_finite_params(const Mlp& net) {
  for (const Mat& w : net.weights)
    for (double v : w.a)
      if (!std::isfinite(v)) throw std::runtime_error("non-finite network parameter");
  for (const auto& b : net.biases)
    for (double v : b)
      if (!std::isfinite(v)) throw std::runtime_error("non-finite network parameter");
}

}  // namespace

Mlp make_mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least two layers");
  for (int s : layer_sizes)
    if (s <= 0) throw std::invalid_argument("make_mlp: layer sizes must be positive");
  Mlp net;
  net.layer_sizes = layer_sizes;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int in = layer_sizes[l], out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat w(out, in);
    for (double& v : w.a) v = u(rng);
    std::vector<double> b(out);
    for (double& v : b) v = u(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

GradientSet zero_gradients(const Mlp& net) {
  GradientSet g;
  for (const Mat& w : net.weights) g.weights.emplace_back(w.rows, w.cols, 0.0);
  for (const auto& b : net.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

AdamState make_adam_state(const Mlp& net) {
  AdamState s;
  for (const Mat& w : net.weights) {
    s.m_w.emplace_back(w.rows, w.cols, 0.0);
    s.v_w.emplace_back(w.rows, w.cols, 0.0);
  }
  for (const auto& b : net.biases) {
    s.m_b.emplace_back(b.size(), 0.0);
    s.v_b.emplace_back(b.size(), 0.0);
  }
  return s;
}

void accumulate(GradientSet& acc, const GradientSet& g, double scale) {
  for (size_t l = 0; l < acc.weights.size(); ++l) {
    for (size_t i = 0; i < acc.weights[l].a.size(); ++i)
      acc.weights[l].a[i] += scale * g.weights[l].a[i];
    for (size_t i = 0; i < acc.biases[l].size(); ++i)
      acc.biases[l][i] += scale * g.biases[l][i];
  }
}

void scale_gradients(GradientSet& g, double scale) {
  for (Mat& w : g.weights)
    for (double& v : w.a) v *= scale;
  for (auto& b : g.biases)
    for (double& v : b) v *= scale;
}

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input) {
  if (static_cast<int>(input.size()) != net.input_size())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  std::vector<double> h(input.begin(), input.end());
  const size_t n_layers = net.weights.size();
  for (size_t l = 0; l < n_layers; ++l) {
    const Mat& w = net.weights[l];
    std::vector<double> z(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      double s = net.biases[l][r];
      const double* wr = &w.a[static_cast<size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) s += wr[c] * h[c];
      z[r] = s;
    }
    if (l + 1 < n_layers)
      for (double& v : z) v = std::tanh(v);
    h = std::move(z);
  }
  return h;
}

GradientSet mlp_backward(const Mlp& net, std::span<const double> input,
                         std::span<const double> output_grad,
                         std::vector<double>* input_grad) {
  if (static_cast<int>(input.size()) != net.input_size())
    throw std::invalid_argument("mlp_backward: input dimension mismatch");
  if (static_cast<int>(output_grad.size()) != net.output_size())
    throw std::invalid_argument("mlp_backward: output gradient dimension mismatch");

  const size_t n_layers = net.weights.size();

  // forward pass, keeping post-activation values per layer
  std::vector<std::vector<double>> acts(n_layers + 1);
  acts[0].assign(input.begin(), input.end());
  for (size_t l = 0; l < n_layers; ++l) {
    const Mat& w = net.weights[l];
    std::vector<double> z(w.rows);
    for (int r = 0; r < w.rows; ++r) {
      double s = net.biases[l][r];
      const double* wr = &w.a[static_cast<size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) s += wr[c] * acts[l][c];
      z[r] = s;
    }
    if (l + 1 < n_layers)
      for (double& v : z) v = std::tanh(v);
    acts[l + 1] = std::move(z);
  }

  GradientSet g = zero_gradients(net);
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (size_t l = n_layers; l-- > 0;) {
    if (l + 1 < n_layers) {
      // delta currently holds the gradient at the post-tanh activation
      for (size_t i = 0; i < delta.size(); ++i) {
        const double a = acts[l + 1][i];
        delta[i] *= (1.0 - a * a);
      }
    }
    const Mat& w = net.weights[l];
    Mat& gw = g.weights[l];
    for (int r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      g.biases[l][r] = d;
      double* gwr = &gw.a[static_cast<size_t>(r) * w.cols];
      const std::vector<double>& in = acts[l];
      for (int c = 0; c < w.cols; ++c) gwr[c] = d * in[c];
    }
    std::vector<double> prev(w.cols, 0.0);
    for (int r = 0; r < w.rows; ++r) {
      const double d = delta[r];
      const double* wr = &w.a[static_cast<size_t>(r) * w.cols];
      for (int c = 0; c < w.cols; ++c) prev[c] += d * wr[c];
    }
    delta = std::move(prev);
  }
  if (input_grad) *input_grad = std::move(delta);
  return g;
}

void adam_step(Mlp& net, const GradientSet& grads, AdamState& state, double lr,
               double grad_clip) {
  if (lr <= 0.0) throw std::invalid_argument("adam_step: lr must be positive");
  check_finite(grads);

  double clip_scale = 1.0;
  if (grad_clip > 0.0) {
    double norm_sq = 0.0;
    for (const Mat& w : grads.weights)
      for (double v : w.a) norm_sq += v * v;
    for (const auto& b : grads.biases)
      for (double v : b) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    if (norm > grad_clip) clip_scale = grad_clip / norm;
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));

  auto update = [&](double& p, double g, double& m, double& v) {
    g *= clip_scale;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    v = kBeta2 * v + (1.0 - kBeta2) * g * g;
    p -= lr * (m / bc1) / (std::sqrt(v / bc2) + kEps);
  };

  for (size_t l = 0; l < net.weights.size(); ++l) {
    for (size_t i = 0; i < net.weights[l].a.size(); ++i)
      update(net.weights[l].a[i], grads.weights[l].a[i], state.m_w[l].a[i], state.v_w[l].a[i]);
    for (size_t i = 0; i < net.biases[l].size(); ++i)
      update(net.biases[l][i], grads.biases[l][i], state.m_b[l][i], state.v_b[l][i]);
  }
  check_finite_params(net);
}

void sgd_step(Mlp& net, const GradientSet& grads, double lr) {
  check_finite(grads);
  for (size_t l = 0; l < net.weights.size(); ++l) {
    for (size_t i = 0; i < net.weights[l].a.size(); ++i)
      net.weights[l].a[i] -= lr * grads.weights[l].a[i];
    for (size_t i = 0; i < net.biases[l].size(); ++i)
      net.biases[l][i] -= lr * grads.biases[l][i];
  }
  check_finite_params(net);
}

void polyak_update(Mlp& target, const Mlp& online, double tau) {
  if (!target.same_architecture(online))
    throw std::invalid_argument("polyak_update: architecture mismatch");
  if (!(tau > 0.0 && tau <= 1.0))
    throw std::invalid_argument("polyak_update: tau outside (0,1]");
  for (size_t l = 0; l < target.weights.size(); ++l) {
    for (size_t i = 0; i < target.weights[l].a.size(); ++i)
      target.weights[l].a[i] =
          (1.0 - tau) * target.weights[l].a[i] + tau * online.weights[l].a[i];
    for (size_t i = 0; i < target.biases[l].size(); ++i)
      target.biases[l][i] = (1.0 - tau) * target.biases[l][i] + tau * online.biases[l][i];
  }
}

nlohmann::json mlp_to_json(const Mlp& net) {
  nlohmann::json j;
  j["layer_sizes"] = net.layer_sizes;
  nlohmann::json ws = nlohmann::json::array();
  for (const Mat& w : net.weights) ws.push_back(w.a);
  j["weights"] = std::move(ws);
  j["biases"] = net.biases;
  return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
  Mlp net;
  net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  const auto ws = j.at("weights");
  const auto bs = j.at("biases").get<std::vector<std::vector<double>>>();
  if (ws.size() + 1 != net.layer_sizes.size() || bs.size() + 1 != net.layer_sizes.size())
    throw std::invalid_argument("mlp_from_json: layer count mismatch");
  for (size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    Mat w(net.layer_sizes[l + 1], net.layer_sizes[l]);
    w.a = ws[l].get<std::vector<double>>();
    if (w.a.size() != static_cast<size_t>(w.rows) * w.cols)
      throw std::invalid_argument("mlp_from_json: weight length mismatch");
    if (bs[l].size() != static_cast<size_t>(net.layer_sizes[l + 1]))
      throw std::invalid_argument("mlp_from_json: bias length mismatch");
    net.weights.push_back(std::move(w));
    net.biases.push_back(bs[l]);
  }
  return net;
}

nlohmann::json adam_to_json(const AdamState& s) {
  nlohmann::json j;
  j["step"] = s.step;
  nlohmann::json mw = nlohmann::json::array(), vw = nlohmann::json::array();
  for (const Mat& m : s.m_w) mw.push_back(m.a);
  for (const Mat& v : s.v_w) vw.push_back(v.a);
  j["m_w"] = std::move(mw);
  j["v_w"] = std::move(vw);
  j["m_b"] = s.m_b;
  j["v_b"] = s.v_b;
  return j;
}

AdamState adam_from_json(const nlohmann::json& j, const Mlp& net) {
  AdamState s = make_adam_state(net);
  s.step = j.at("step").get<long>();
  const auto mw = j.at("m_w");
  const auto vw = j.at("v_w");
  for (size_t l = 0; l < s.m_w.size(); ++l) {
    s.m_w[l].a = mw[l].get<std::vector<double>>();
    s.v_w[l].a = vw[l].get<std::vector<double>>();
  }
  s.m_b = j.at("m_b").get<std::vector<std::vector<double>>>();
  s.v_b = j.at("v_b").get<std::vector<std::vector<double>>>();
  return s;
}

}  // namespace fedsel
