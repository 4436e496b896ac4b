#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairkd/common.hpp"
#include "fairkd/dataio.hpp"
#include "fairkd/distill.hpp"
#include "fairkd/nn.hpp"

namespace fairkd {

struct CatNNConfig {
  int embedding_dim = 8;
  std::vector<int> hidden = {64, 32};
  std::uint64_t seed = 0;
};

/// Factorization machine plus a deep network over the same categorical
/// embeddings. The FM term is
///   bias + sum_j w_j[x_j] + 0.5 * sum_f ((sum_j v_jf)^2 - sum_j v_jf^2).
class CatNN {
 public:
  CatNN() = default;
  CatNN(std::vector<int> cardinalities, const CatNNConfig& config);

  int columns() const { return static_cast<int>(cardinalities_.size()); }
  const std::vector<int>& cardinalities() const { return cardinalities_; }
  const CatNNConfig& config() const { return config_; }

  /// FM output (N x 1) for a batch of integer codes.
  nn::Var<double> fm_forward(nn::Tape<double>& tape, const IndexMatrix& codes);

  /// FM + deep output (N x 1).
  nn::Var<double> forward(nn::Tape<double>& tape, const IndexMatrix& codes);

  Vector fm_predict(const IndexMatrix& codes) const;
  Vector predict(const IndexMatrix& codes) const;

  nn::ParameterList<double> parameters();

  std::vector<nn::EmbeddingTable<double>> embeddings;  // V_j, shared by FM and deep
  std::vector<nn::Parameter<double>> first_order;       // w_j, c_j x 1
  nn::Parameter<double> bias;                           // 1 x 1
  nn::Mlp<double> deep;                                 // [S * d, hidden..., 1]

 private:
  void check_codes(const IndexMatrix& codes) const;

  std::vector<int> cardinalities_;
  CatNNConfig config_;
};

struct TrainConfig {
  double alpha = 0.0;     // fairness weight of the end-to-end step
  double alpha_kg = 0.0;  // fairness weight of the distillation step
  int epochs = 10;
  double lr = 0.001;
  int batch_size = 256;
  double weight_decay = 0.01;
  int distill_epochs = 10;
  double distill_lr = 0.001;
  int embedding_epochs = 10;
  double embedding_lr = 0.001;
  int n_groups = 5;
  int d_leaf = 20;
  int cat_embedding_dim = 8;
  std::vector<int> hidden = {64, 32};
  std::string sensitive;
  bool freeze_dense = false;
  bool standardize = true;
  bool squash_step1 = false;
  bool raw_leaf_targets = false;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// yhat = sigmoid(w1 * y_KD + w2 * y_CatNN).
class FusionModel {
 public:
  FusionModel() = default;
  FusionModel(CatNN catnn, DistilledNet dense);

  nn::Var<double> forward_logit(nn::Tape<double>& tape, const Matrix& prepared_dense, const IndexMatrix& codes);

  Vector predict_logit(const FeatureViews& views) const;
  Vector predict(const FeatureViews& views) const;

  /// All trainable parameters; NN_dense is left out
  /// when `include_dense` is false.
  nn::ParameterList<double> parameters(bool include_dense = true);

  CatNN catnn;
  DistilledNet dense;
  nn::Parameter<double> w1;
  nn::Parameter<double> w2;
};

/// sigmoid(w1 * y_kd + w2 * y_cat), elementwise.
Vector fuse_predict(const Vector& y_kd, const Vector& y_cat, double w1, double w2);

struct EndToEndEpochLog {
  int epoch = 0;
  double cross_entropy = 0.0;  // mean over batches
  double fairness = 0.0;       // mean over batches (0 for skipped batches)
  double total = 0.0;          // mean over batches of CE + alpha * fairness
  int skipped_batches = 0;
};

/// Trains the fused model with AdamW on CE(yhat, y) + alpha * fairness(yhat).
/// Batches without a majority member drop the fairness term.
void train_end_to_end(FusionModel& model, const FeatureViews& views, std::span<const int> labels,
                      std::span<const int> sensitive_groups, int majority, const TrainConfig& config,
                      std::vector<EndToEndEpochLog>* log = nullptr);

}  // namespace fairkd
