#include "fairkd/distill.hpp"

#include <algorithm>
#include <set>

#include "fairkd/rng.hpp"

namespace fairkd {

std::vector<TreeGroup> group_trees(const GbdtModel& model, int n_groups) {
  const int n_trees = static_cast<int>(model.trees.size());
  if (n_groups < 1) fail(ErrorCode::kConfiguration, "need at least one tree group");
  if (n_groups > n_trees) {
    fail(ErrorCode::kConfiguration,
         "cannot split " + std::to_string(n_trees) + " trees into " + std::to_string(n_groups) + " groups");
  }
  const int base = n_trees / n_groups, extra = n_trees % n_groups;
  std::vector<TreeGroup> groups(static_cast<std::size_t>(n_groups));
  int next = 0;
  for (int g = 0; g < n_groups; ++g) {
    TreeGroup& group = groups[g];
    const int size = base + (g < extra ? 1 : 0);
    std::set<int> features;
    for (int k = 0; k < size; ++k, ++next) {
      const Tree& tree = model.trees[next];
      group.members.push_back(next);
      group.leaf_offsets.push_back(group.leaf_dim);
      group.leaf_dim += tree.leaf_count();
      const auto values = tree.leaf_values();
      group.leaf_values.insert(group.leaf_values.end(), values.begin(), values.end());
      features.insert(tree.used_features().begin(), tree.used_features().end());
    }
    group.used_features.assign(features.begin(), features.end());
  }
  return groups;
}

IndexMatrix group_leaf_codes(const GbdtModel& model, const TreeGroup& group, const Matrix& x) {
  if (x.cols() != model.input_width) fail(ErrorCode::kShape, "GBDT input width mismatch");
  IndexMatrix codes(x.rows(), static_cast<Eigen::Index>(group.members.size()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (std::size_t k = 0; k < group.members.size(); ++k) {
      const Tree& tree = model.trees.at(static_cast<std::size_t>(group.members[k]));
      codes(i, static_cast<Eigen::Index>(k)) = group.leaf_offsets[k] + tree.leaf_index(x.row(i));
    }
  }
  return codes;
}

Vector group_margins(const GbdtModel& model, const TreeGroup& group, const IndexMatrix& codes) {
  Vector out = Vector::Zero(codes.rows());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k < codes.cols(); ++k) sum += group.leaf_values.at(static_cast<std::size_t>(codes(i, k)));
    out(i) = model.learning_rate * sum;
  }
  return out;
}

void TrainSchedule::validate() const {
  if (epochs < 0) fail(ErrorCode::kConfiguration, "epochs must be non-negative");
  if (!(lr > 0.0)) fail(ErrorCode::kConfiguration, "learning rate must be positive");
  if (batch_size <= 0) fail(ErrorCode::kConfiguration, "batch size must be positive");
}

LeafEmbedding::LeafEmbedding(int leaf_dim, int dim, std::uint64_t seed) {
  if (leaf_dim <= 0 || dim <= 0) fail(ErrorCode::kConfiguration, "leaf embedding needs positive shape");
  Rng rng(seed);
  Matrix p(leaf_dim, dim);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, j) = rng.normal(0.0, 0.01);
  }
  projection = nn::Parameter<double>("leaf.projection", std::move(p));
  w_out = nn::Parameter<double>("leaf.w_out", nn::glorot_uniform<double>(dim, 1, rng));
  b_out = nn::Parameter<double>("leaf.b_out", Matrix::Zero(1, 1));
}

LeafEmbedding LeafEmbedding::raw(const TreeGroup& group, double learning_rate) {
  LeafEmbedding e;
  e.projection = nn::Parameter<double>("leaf.projection", Matrix::Identity(group.leaf_dim, group.leaf_dim));
  Matrix w(group.leaf_dim, 1);
  for (int k = 0; k < group.leaf_dim; ++k) w(k, 0) = learning_rate * group.leaf_values[static_cast<std::size_t>(k)];
  e.w_out = nn::Parameter<double>("leaf.w_out", std::move(w));
  e.b_out = nn::Parameter<double>("leaf.b_out", Matrix::Zero(1, 1));
  return e;
}

Matrix LeafEmbedding::embed(const IndexMatrix& codes) const {
  Matrix out = Matrix::Zero(codes.rows(), dim());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    for (Eigen::Index k = 0; k < codes.cols(); ++k) {
      const int c = codes(i, k);
      if (c < 0 || c >= leaf_dim()) fail(ErrorCode::kIndex, "leaf code out of range");
      out.row(i) += projection.value.row(c);
    }
  }
  return out;
}

Vector LeafEmbedding::output(const Matrix& embedding) const {
  if (embedding.cols() != dim()) fail(ErrorCode::kShape, "embedding width mismatch");
  return (embedding * w_out.value).col(0).array() + b_out.value(0, 0);
}

LeafEmbedding fit_leaf_embedding(const TreeGroup& group, const IndexMatrix& leaf_codes, const Vector& margins,
                                 int dim, const TrainSchedule& schedule, std::vector<double>* epoch_loss) {
  schedule.validate();
  if (dim <= 0) fail(ErrorCode::kConfiguration, "embedding dimension must be positive");
  if (group.leaf_dim > 1 && dim >= group.leaf_dim) {
    fail(ErrorCode::kConfiguration, "embedding dimension " + std::to_string(dim) +
                                        " must be below the group's leaf count " + std::to_string(group.leaf_dim));
  }
  if (leaf_codes.rows() != margins.size()) fail(ErrorCode::kShape, "leaf codes and margins differ in length");
  if (leaf_codes.cols() != static_cast<Eigen::Index>(group.members.size())) {
    fail(ErrorCode::kShape, "leaf codes need one column per group member");
  }
  LeafEmbedding e(group.leaf_dim, dim, derive_seed(schedule.seed, "leaf_embedding/init"));
  nn::ParameterList<double> params{&e.projection, &e.w_out, &e.b_out};
  nn::Adam<double> opt(params, nn::AdamConfig{.lr = schedule.lr});
  Rng rng(derive_seed(schedule.seed, "leaf_embedding/shuffle"));
  const auto n = static_cast<std::size_t>(margins.size());
  const auto members = leaf_codes.cols();
  for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
    double total = 0.0;
    int batches = 0;
    for (const auto& batch : nn::minibatches(n, schedule.batch_size, rng)) {
      nn::Tape<double> tape;
      auto table = tape.parameter(e.projection);
      std::vector<nn::Var<double>> parts;
      std::vector<int> column(batch.size());
      for (Eigen::Index k = 0; k < members; ++k) {
        for (std::size_t i = 0; i < batch.size(); ++i) column[i] = leaf_codes(batch[i], k);
        parts.push_back(nn::gather_rows(table, std::span<const int>(column)));
      }
      auto emb = nn::sum_all(std::span<const nn::Var<double>>(parts));
      auto out = nn::add(nn::matmul(emb, tape.parameter(e.w_out)), tape.parameter(e.b_out));
      Matrix target(static_cast<Eigen::Index>(batch.size()), 1);
      for (std::size_t i = 0; i < batch.size(); ++i) target(static_cast<Eigen::Index>(i), 0) = margins(batch[i]);
      auto loss = nn::mse(out, target);
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      total += loss.value()(0, 0);
      ++batches;
    }
    if (epoch_loss != nullptr) epoch_loss->push_back(batches > 0 ? total / batches : 0.0);
  }
  return e;
}

Matrix DistilledNet::prepare(const Matrix& dense) const {
  if (dense.cols() != input_width()) fail(ErrorCode::kShape, "dense input width mismatch");
  return standardizer.apply(dense);
}

nn::Var<double> DistilledNet::forward(nn::Tape<double>& tape, const Matrix& prepared) {
  if (prepared.cols() != input_width()) fail(ErrorCode::kShape, "dense input width mismatch");
  std::vector<nn::Var<double>> parts;
  for (auto& g : groups) {
    auto x = tape.constant(prepared(Eigen::all, g.layout.used_features));
    auto h = g.net.forward(tape, x);
    parts.push_back(
        nn::add(nn::matmul(h, tape.constant(g.embedding.w_out.value)), tape.constant(g.embedding.b_out.value)));
  }
  auto sum = nn::sum_all(std::span<const nn::Var<double>>(parts));
  return nn::add(sum, tape.constant(Matrix::Constant(1, 1, base_score)));
}

Matrix DistilledNet::group_contributions(const Matrix& dense) const {
  const Matrix x = prepare(dense);
  Matrix out(x.rows(), static_cast<Eigen::Index>(groups.size()));
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto& g = groups[k];
    const Matrix h = g.net.predict(x(Eigen::all, g.layout.used_features));
    out.col(static_cast<Eigen::Index>(k)) = g.embedding.output(h);
  }
  return out;
}

Vector DistilledNet::y_kd(const Matrix& dense) const {
  return group_contributions(dense).rowwise().sum().array() + base_score;
}

nn::ParameterList<double> DistilledNet::parameters() {
  nn::ParameterList<double> out;
  for (auto& g : groups) {
    for (auto* p : g.net.parameters()) out.push_back(p);
  }
  return out;
}

DistilledNet distill_dense_net(const Matrix& dense, const Standardizer& standardizer, const GbdtModel& teacher,
                               const std::vector<TreeGroup>& groups, const std::vector<LeafEmbedding>& embeddings,
                               std::span<const int> sensitive_groups, int majority, const DistillOptions& options,
                               std::vector<DistillEpochLog>* log) {
  options.schedule.validate();
  if (groups.size() != embeddings.size()) fail(ErrorCode::kShape, "need one leaf embedding per tree group");
  if (dense.cols() != teacher.input_width) fail(ErrorCode::kShape, "dense input width mismatch");
  if (static_cast<Eigen::Index>(sensitive_groups.size()) != dense.rows()) {
    fail(ErrorCode::kShape, "sensitive groups and dense rows differ in length");
  }
  if (options.alpha_kg < 0.0) fail(ErrorCode::kConfiguration, "alpha_kg must be non-negative");
  const bool use_fairness = options.alpha_kg > 0.0 && !options.skip_fairness;

  DistilledNet net;
  net.standardizer = standardizer;
  net.base_score = teacher.base_score;
  const Matrix x = net.prepare(dense);
  const auto n = static_cast<std::size_t>(dense.rows());
  const std::uint64_t seed = options.schedule.seed;

  net.groups.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const TreeGroup& layout = groups[g];
    const LeafEmbedding& emb = embeddings[g];
    if (emb.leaf_dim() != layout.leaf_dim) fail(ErrorCode::kShape, "leaf embedding does not match its group");
    std::vector<int> widths{static_cast<int>(layout.used_features.size())};
    widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
    widths.push_back(emb.dim());
    net.groups.push_back({layout,
                          nn::Mlp<double>(nn::MlpSpec::relu_stack(widths, derive_seed(seed, "distill/net", g)),
                                          "dense" + std::to_string(g)),
                          emb});
  }

  // All groups train together: the fairness term sees the summed output y_KD.
  std::vector<Matrix> inputs, targets;
  std::vector<nn::Parameter<double>*> params;
  for (auto& group : net.groups) {
    inputs.push_back(x(Eigen::all, group.layout.used_features));
    targets.push_back(group.embedding.embed(group_leaf_codes(teacher, group.layout, dense)));
    for (auto* p : group.net.parameters()) params.push_back(p);
  }
  nn::Adam<double> opt(params, nn::AdamConfig{.lr = options.schedule.lr});
  Rng rng(derive_seed(seed, "distill/shuffle"));
  for (int epoch = 0; epoch < options.schedule.epochs; ++epoch) {
    DistillEpochLog entry{epoch, 0.0, 0.0, 0.0, 0};
    int batches = 0;
    for (const auto& batch : nn::minibatches(n, options.schedule.batch_size, rng)) {
      nn::Tape<double> tape;
      std::vector<nn::Var<double>> mse_terms, outputs;
      for (std::size_t g = 0; g < net.groups.size(); ++g) {
        auto& group = net.groups[g];
        auto h = group.net.forward(tape, tape.constant(inputs[g](batch, Eigen::all)));
        mse_terms.push_back(nn::mse(h, Matrix(targets[g](batch, Eigen::all))));
        if (use_fairness) {
          outputs.push_back(nn::add(nn::matmul(h, tape.constant(group.embedding.w_out.value)),
                                    tape.constant(group.embedding.b_out.value)));
        }
      }
      auto loss = nn::sum_all<double>(mse_terms);
      const double mse_part = loss.value()(0, 0);
      double fair_part = 0.0;
      if (use_fairness) {
        std::vector<std::uint8_t> mask(batch.size());
        bool any = false;
        for (std::size_t i = 0; i < batch.size(); ++i) {
          mask[i] = sensitive_groups[static_cast<std::size_t>(batch[i])] == majority ? 1 : 0;
          any = any || mask[i];
        }
        if (any) {
          // base_score shifts every row equally, so the penalty ignores it
          // unless the output is squashed.
          auto y = nn::add(nn::sum_all<double>(outputs), tape.constant(Matrix::Constant(1, 1, net.base_score)));
          if (options.squash) y = nn::sigmoid(y);
          auto fair = nn::fairness_loss(y, std::span<const std::uint8_t>(mask));
          fair_part = fair.value()(0, 0);
          loss = nn::add(loss, nn::scale(fair, options.alpha_kg));
        } else {
          ++entry.skipped_batches;
        }
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      entry.mse += mse_part;
      entry.fairness += fair_part;
      entry.total += mse_part + options.alpha_kg * fair_part;
      ++batches;
    }
    if (batches > 0) {
      entry.mse /= batches;
      entry.fairness /= batches;
      entry.total /= batches;
    }
    if (log != nullptr) log->push_back(entry);
  }
  return net;
}

}  // namespace fairkd
