#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedsel/nn.hpp"

namespace fedsel {

struct Dataset {
  Mat features;             // n x dim
  std::vector<int> labels;  // values in [0, num_classes)
  int num_classes = 0;

  int size() const { return features.rows; }
  int dim() const { return features.cols; }
};

struct ClientDataset {
  int client_id = -1;
  Mat features;
  std::vector<int> labels;
  int num_classes = 0;

  int size() const { return features.rows; }
};

struct TrainConfig {
  int batch_size = 16;
  int local_epochs = 5;
  double learning_rate = 0.005;
};

// Gaussian blobs: seeded class centers (scaled standard normals), unit-free
// spread around them; labels cycle through the classes.
Dataset make_blobs(int classes, int dim, int samples, double spread, uint64_t seed);

enum class PartitionScheme { kIid, kDirichlet };

// Disjoint split of the dataset across clients. IID deals shuffled samples
// round-robin; Dirichlet draws per-class client proportions from
// Dirichlet(eta) and is resampled until every client holds >= 1 sample.
std::vector<ClientDataset> partition_data(const Dataset& data, int num_clients,
                                          PartitionScheme scheme, double eta, uint64_t seed);

// Mini-batch SGD on softmax cross-entropy, local_epochs passes with seeded
// shuffles. Returns the trained copy.
Mlp local_train(const Mlp& model, const ClientDataset& data, const TrainConfig& cfg,
                uint64_t seed);

// Elementwise average weighted by sample counts.
Mlp aggregate(const std::vector<Mlp>& models, const std::vector<int>& sample_counts);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

// Top-1 accuracy (argmax ties resolved to the lowest class index) and mean
// cross-entropy.
EvalResult evaluate(const Mlp& model, const Dataset& test);

// Mean cross-entropy of the model on one client's data (f_k).
double client_loss(const Mlp& model, const ClientDataset& data);

// F_m = sum_k (n_k / N_m) f_k(w_m); global objective = sum_m (N_m / N) F_m.
double global_objective(const std::vector<Mlp>& server_models,
                        const std::vector<std::vector<const ClientDataset*>>& server_clients);

// One row per sample: client_id, label, features...
void export_partitions_csv(const std::vector<ClientDataset>& parts, const std::string& path);

}  // namespace fedsel
