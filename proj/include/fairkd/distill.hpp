#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fairkd/common.hpp"
#include "fairkd/dataio.hpp"
#include "fairkd/nn.hpp"
#include "fairkd/trees.hpp"

namespace fairkd {

/// A contiguous block of boosted trees distilled by one network.
struct TreeGroup {
  std::vector<int> members;        // tree indices in boosting order
  std::vector<int> used_features;  // union of the members' split features, ascending
  std::vector<int> leaf_offsets;   // start of each member's leaves in the multi-hot vector
  int leaf_dim = 0;                // sum of member leaf counts
  std::vector<double> leaf_values; // member leaf values, concatenated in multi-hot order
};

/// Contiguous equal-size groups by boosting order; the remainder goes to the
/// earliest groups.
std::vector<TreeGroup> group_trees(const GbdtModel& model, int n_groups);

/// N x |members| matrix of active multi-hot positions (offset + leaf id).
IndexMatrix group_leaf_codes(const GbdtModel& model, const TreeGroup& group, const Matrix& x);

/// The group's share of the teacher margin: learning_rate * sum of member leaf values.
Vector group_margins(const GbdtModel& model, const TreeGroup& group, const IndexMatrix& codes);

struct TrainSchedule {
  int epochs = 10;
  double lr = 0.001;
  int batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Maps a group's multi-hot leaf vector to a d-dimensional embedding
/// (projection rows summed over active leaves) and the embedding to a margin
/// contribution through w_out, b_out.
class LeafEmbedding {
 public:
  LeafEmbedding() = default;
  LeafEmbedding(int leaf_dim, int dim, std::uint64_t seed);

  /// Untrained identity projection whose output map is learning_rate * q,
  /// so the distillation target is the raw leaf one-hot and the group
  /// output is NN(x) . q. Debug path for single-tree studies.
  static LeafEmbedding raw(const TreeGroup& group, double learning_rate);

  int dim() const { return static_cast<int>(projection.value.cols()); }
  int leaf_dim() const { return static_cast<int>(projection.value.rows()); }

  /// N x dim embeddings: the distillation targets c_i.
  Matrix embed(const IndexMatrix& codes) const;

  /// embedding . w_out + b_out
  Vector output(const Matrix& embedding) const;

  nn::Parameter<double> projection;  // leaf_dim x dim
  nn::Parameter<double> w_out;       // dim x 1
  nn::Parameter<double> b_out;       // 1 x 1
};

/// Trains the embedding to reproduce `margins` by mean squared error with
/// Adam. Throws kConfiguration when d >= leaf_dim (for groups wider than one
/// slot).
LeafEmbedding fit_leaf_embedding(const TreeGroup& group, const IndexMatrix& leaf_codes, const Vector& margins,
                                 int dim, const TrainSchedule& schedule, std::vector<double>* epoch_loss = nullptr);

struct DistillOptions {
  std::vector<int> hidden = {64, 32};
  TrainSchedule schedule;
  double alpha_kg = 0.0;
  bool squash = false;          // apply sigmoid to y_KD before the fairness term
  bool skip_fairness = false;   // drop the fairness term regardless of alpha_kg
};

struct DistillEpochLog {
  int epoch = 0;
  double mse = 0.0;       // summed over groups, mean over batches
  double fairness = 0.0;  // mean over batches (0 for skipped batches)
  double total = 0.0;     // mean over batches of mse + alpha_kg * fairness
  int skipped_batches = 0;
};

/// Student network for the dense path. Each group owns an MLP reading the
/// standardized dense columns in its used-feature set and the output map of
/// its leaf embedding.
class DistilledNet {
 public:
  struct Group {
    TreeGroup layout;
    nn::Mlp<double> net;
    LeafEmbedding embedding;
  };

  std::vector<Group> groups;
  Standardizer standardizer;
  double base_score = 0.0;
  std::string teacher_hash;

  int input_width() const { return static_cast<int>(standardizer.mean.size()); }

  /// Standardized copy of raw dense features.
  Matrix prepare(const Matrix& dense) const;

  /// y_KD for a batch of standardized rows, recorded on the tape (N x 1).
  nn::Var<double> forward(nn::Tape<double>& tape, const Matrix& prepared);

  /// Per-group contributions w_out . NN_g(x[I_g]) + b_out for raw dense rows (N x groups).
  Matrix group_contributions(const Matrix& dense) const;

  /// Dense-path margin: sum of group contributions plus the teacher base score.
  Vector y_kd(const Matrix& dense) const;

  /// NN_dense weights only. The output maps stand in for the teacher's leaf
  /// values and stay fixed once the embedding is fitted.
  nn::ParameterList<double> parameters();
};

/// Distills every group's network onto its leaf-embedding targets in one
/// joint loop, adding alpha_kg * fairness_loss(y_KD, majority) per batch.
/// The fairness gradient reaches the networks only; output maps stay fixed.
DistilledNet distill_dense_net(const Matrix& dense, const Standardizer& standardizer, const GbdtModel& teacher,
                               const std::vector<TreeGroup>& groups, const std::vector<LeafEmbedding>& embeddings,
                               std::span<const int> sensitive_groups, int majority, const DistillOptions& options,
                               std::vector<DistillEpochLog>* log = nullptr);

/// y_KD(x) for raw dense rows.
inline Vector y_kd(const DistilledNet& net, const Matrix& dense) { return net.y_kd(dense); }

}  // namespace fairkd
