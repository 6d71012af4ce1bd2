#include "fedsel/fl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fedsel {

namespace {

// log-softmax cross-entropy; returns loss and fills dlogits = softmax - onehot
double ce_loss_grad(std::span<const double> logits, int label, std::vector<double>* dlogits) {
  const int k = static_cast<int>(logits.size());
  double zmax = logits[0];
  for (double v : logits) zmax = std::max(zmax, v);
  double total = 0.0;
  for (double v : logits) total += std::exp(v - zmax);
  const double log_total = std::log(total) + zmax;
  if (dlogits) {
    dlogits->resize(k);
    for (int i = 0; i < k; ++i) (*dlogits)[i] = std::exp(logits[i] - log_total);
    (*dlogits)[label] -= 1.0;
  }
  return log_total - logits[label];
}

}  // namespace

Dataset make_blobs(int classes, int dim, int samples, double spread, uint64_t seed) {
  if (classes < 2 || dim < 1 || samples < classes)
    throw std::invalid_argument("make_blobs: bad shape");
  Dataset d;
  d.num_classes = classes;
  d.features = Mat(samples, dim);
  d.labels.resize(samples);

  auto rng = make_engine(seed, {0x626c6f62ull});
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat centers(classes, dim);
  for (double& v : centers.a) v = 3.0 * gauss(rng);

  for (int i = 0; i < samples; ++i) {
    const int label = i % classes;
    d.labels[i] = label;
    for (int j = 0; j < dim; ++j)
      d.features(i, j) = centers(label, j) + spread * gauss(rng);
  }
  return d;
}

std::vector<ClientDataset> partition_data(const Dataset& data, int num_clients,
                                          PartitionScheme scheme, double eta, uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("partition_data: need at least one client");
  if (data.size() < num_clients)
    throw std::invalid_argument("partition_data: dataset smaller than client count");
  if (scheme == PartitionScheme::kDirichlet && eta <= 0.0)
    throw std::invalid_argument("partition_data: eta must be positive");

  auto rng = make_engine(seed, {0x70617274ull});
  std::vector<std::vector<int>> assignment(num_clients);  // sample indices per client

  if (scheme == PartitionScheme::kIid) {
    std::vector<int> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t i = 0; i < idx.size(); ++i)
      assignment[i % num_clients].push_back(idx[i]);
  } else {
    std::vector<std::vector<int>> by_class(data.num_classes);
    for (int i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);

    std::gamma_distribution<double> gam(eta, 1.0);
    const int max_attempts = 10000;
    bool ok = false;
    for (int attempt = 0; attempt < max_attempts && !ok; ++attempt) {
      for (auto& a : assignment) a.clear();
      for (int c = 0; c < data.num_classes; ++c) {
        std::vector<int> idx = by_class[c];
        std::shuffle(idx.begin(), idx.end(), rng);
        std::vector<double> prop(num_clients);
        double total = 0.0;
        for (int k = 0; k < num_clients; ++k) {
          prop[k] = gam(rng);
          total += prop[k];
        }
        if (total <= 0.0) {
          std::fill(prop.begin(), prop.end(), 1.0);
          total = num_clients;
        }
        // cumulative split of this class's samples by the drawn proportions
        size_t start = 0;
        double acc = 0.0;
        for (int k = 0; k < num_clients; ++k) {
          acc += prop[k] / total;
          size_t end = (k + 1 == num_clients)
                           ? idx.size()
                           : static_cast<size_t>(std::lround(acc * idx.size()));
          end = std::min(end, idx.size());
          for (size_t i = start; i < end; ++i) assignment[k].push_back(idx[i]);
          start = std::max(start, end);
        }
      }
      ok = std::all_of(assignment.begin(), assignment.end(),
                       [](const std::vector<int>& a) { return !a.empty(); });
    }
    if (!ok) throw std::runtime_error("partition_data: dirichlet resampling did not converge");
  }

  std::vector<ClientDataset> out;
  out.reserve(num_clients);
  for (int k = 0; k < num_clients; ++k) {
    std::sort(assignment[k].begin(), assignment[k].end());
    ClientDataset cd;
    cd.client_id = k;
    cd.num_classes = data.num_classes;
    cd.features = Mat(static_cast<int>(assignment[k].size()), data.dim());
    cd.labels.resize(assignment[k].size());
    for (size_t i = 0; i < assignment[k].size(); ++i) {
      const int src = assignment[k][i];
      for (int j = 0; j < data.dim(); ++j) cd.features(static_cast<int>(i), j) = data.features(src, j);
      cd.labels[i] = data.labels[src];
    }
    out.push_back(std::move(cd));
  }
  return out;
}

Mlp local_train(const Mlp& model, const ClientDataset& data, const TrainConfig& cfg,
                uint64_t seed) {
  if (cfg.batch_size < 1 || cfg.local_epochs < 0 || cfg.learning_rate < 0.0)
    throw std::invalid_argument("local_train: bad config");
  Mlp net = model;
  auto rng = make_engine(seed, {0x7472ull});
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<double> x(data.features.cols);
  std::vector<double> dlogits;

  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t start = 0; start < idx.size(); start += cfg.batch_size) {
      const size_t end = std::min(idx.size(), start + cfg.batch_size);
      GradientSet acc = zero_gradients(net);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (size_t i = start; i < end; ++i) {
        const int s = idx[i];
        for (int j = 0; j < data.features.cols; ++j) x[j] = data.features(s, j);
        const std::vector<double> logits = mlp_forward(net, x);
        const double loss = ce_loss_grad(logits, data.labels[s], &dlogits);
        if (!std::isfinite(loss)) throw std::runtime_error("non-finite training loss");
        for (double& g : dlogits) g *= inv;
        accumulate(acc, mlp_backward(net, x, dlogits));
      }
      sgd_step(net, acc, cfg.learning_rate);
    }
  }
  return net;
}

Mlp aggregate(const std::vector<Mlp>& models, const std::vector<int>& sample_counts) {
  if (models.empty()) throw std::invalid_argument("aggregate: empty model list");
  if (models.size() != sample_counts.size())
    throw std::invalid_argument("aggregate: count list size mismatch");
  double total = 0.0;
  for (int c : sample_counts) {
    if (c < 0) throw std::invalid_argument("aggregate: negative sample count");
    total += c;
  }
  if (total <= 0.0) throw std::invalid_argument("aggregate: zero total weight");

  Mlp out = models[0];
  for (Mat& w : out.weights) std::fill(w.a.begin(), w.a.end(), 0.0);
  for (auto& b : out.biases) std::fill(b.begin(), b.end(), 0.0);

  for (size_t k = 0; k < models.size(); ++k) {
    if (!models[k].same_architecture(out))
      throw std::invalid_argument("aggregate: architecture mismatch");
    const double w = sample_counts[k] / total;
    for (size_t l = 0; l < out.weights.size(); ++l) {
      for (size_t i = 0; i < out.weights[l].a.size(); ++i)
        out.weights[l].a[i] += w * models[k].weights[l].a[i];
      for (size_t i = 0; i < out.biases[l].size(); ++i)
        out.biases[l][i] += w * models[k].biases[l][i];
    }
  }
  return out;
}

EvalResult evaluate(const Mlp& model, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate: empty test set");
  std::vector<double> x(test.features.cols);
  long correct = 0;
  double loss = 0.0;
  for (int i = 0; i < test.size(); ++i) {
    for (int j = 0; j < test.features.cols; ++j) x[j] = test.features(i, j);
    const std::vector<double> logits = mlp_forward(model, x);
    int arg = 0;  // ties go to the lowest class index
    for (int c = 1; c < static_cast<int>(logits.size()); ++c)
      if (logits[c] > logits[arg]) arg = c;
    if (arg == test.labels[i]) ++correct;
    loss += ce_loss_grad(logits, test.labels[i], nullptr);
  }
  return {static_cast<double>(correct) / test.size(), loss / test.size()};
}

double client_loss(const Mlp& model, const ClientDataset& data) {
  std::vector<double> x(data.features.cols);
  double loss = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.features.cols; ++j) x[j] = data.features(i, j);
    loss += ce_loss_grad(mlp_forward(model, x), data.labels[i], nullptr);
  }
  return data.size() > 0 ? loss / data.size() : 0.0;
}

double global_objective(const std::vector<Mlp>& server_models,
                        const std::vector<std::vector<const ClientDataset*>>& server_clients) {
  if (server_models.size() != server_clients.size())
    throw std::invalid_argument("global_objective: size mismatch");
  double grand_total = 0.0;
  std::vector<double> server_totals(server_models.size(), 0.0);
  for (size_t m = 0; m < server_clients.size(); ++m) {
    for (const ClientDataset* cd : server_clients[m]) server_totals[m] += cd->size();
    grand_total += server_totals[m];
  }
  if (grand_total <= 0.0) return 0.0;

  double objective = 0.0;
  for (size_t m = 0; m < server_clients.size(); ++m) {
    if (server_totals[m] <= 0.0) continue;
    double fm = 0.0;
    for (const ClientDataset* cd : server_clients[m])
      fm += (cd->size() / server_totals[m]) * client_loss(server_models[m], *cd);
    objective += (server_totals[m] / grand_total) * fm;
  }
  return objective;
}

void export_partitions_csv(const std::vector<ClientDataset>& parts, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_partitions_csv: cannot open " + path);
  out << "client_id,label";
  const int dim = parts.empty() ? 0 : parts[0].features.cols;
  for (int j = 0; j < dim; ++j) out << ",x" << j;
  out << "\n";
  for (const ClientDataset& cd : parts)
    for (int i = 0; i < cd.size(); ++i) {
      out << cd.client_id << "," << cd.labels[i];
      for (int j = 0; j < cd.features.cols; ++j) out << "," << format_g17(cd.features(i, j));
      out << "\n";
    }
}

}  // namespace fedsel
