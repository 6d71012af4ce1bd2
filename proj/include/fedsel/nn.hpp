#pragma once

#include <random>
#include <span>
#include <vector>

#include "fedsel/common.hpp"

#include <json.hpp>

namespace fedsel {

// Plain MLP: tanh hidden layers, identity output. Weights are out x in.
struct Mlp {
  std::vector<int> layer_sizes;
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  bool same_architecture(const Mlp& o) const { return layer_sizes == o.layer_sizes; }
};

struct GradientSet {
  std::vector<Mat> weights;
  std::vector<std::vector<double>> biases;
};

struct AdamState {
  std::vector<Mat> m_w, v_w;
  std::vector<std::vector<double>> m_b, v_b;
  long step = 0;
};

// Parameters uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Mlp make_mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng);

GradientSet zero_gradients(const Mlp& net);
AdamState make_adam_state(const Mlp& net);

void accumulate(GradientSet& acc, const GradientSet& g, double scale = 1.0);
void scale_gradients(GradientSet& g, double scale);

std::vector<double> mlp_forward(const Mlp& net, std::span<const double> input);

// Gradients of (output . output_grad) with respect to all parameters.
// input_grad, when non-null, receives the gradient with respect to the input.
GradientSet mlp_backward(const Mlp& net, std::span<const double> input,
                         std::span<const double> output_grad,
                         std::vector<double>* input_grad = nullptr);

// Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8). Throws on non-finite
// gradients; grad_clip > 0 rescales by global norm before the step.
void adam_step(Mlp& net, const GradientSet& grads, AdamState& state, double lr,
               double grad_clip = 0.0);

// Plain SGD step (used by local FL training).
void sgd_step(Mlp& net, const GradientSet& grads, double lr);

// target <- (1 - tau) * target + tau * online
void polyak_update(Mlp& target, const Mlp& online, double tau);

nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json adam_to_json(const AdamState& s);
AdamState adam_from_json(const nlohmann::json& j, const Mlp& net);

}  // namespace fedsel
