#include "fairkd/fusion.hpp"

#include "fairkd/rng.hpp"

namespace fairkd {

CatNN::CatNN(std::vector<int> cardinalities, const CatNNConfig& config)
    : cardinalities_(std::move(cardinalities)), config_(config) {
  if (config_.embedding_dim <= 0) fail(ErrorCode::kConfiguration, "categorical embedding dimension must be positive");
  Rng rng(derive_seed(config_.seed, "catnn/embeddings"));
  for (std::size_t j = 0; j < cardinalities_.size(); ++j) {
    const int c = cardinalities_[j];
    if (c <= 0) fail(ErrorCode::kConfiguration, "categorical cardinality must be positive");
    embeddings.emplace_back(c, config_.embedding_dim, rng, "cat.v" + std::to_string(j));
    first_order.emplace_back("cat.w" + std::to_string(j), Matrix::Zero(c, 1));
  }
  bias = nn::Parameter<double>("cat.bias", Matrix::Zero(1, 1));
  std::vector<int> widths{columns() * config_.embedding_dim};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(1);
  deep = nn::Mlp<double>(nn::MlpSpec::relu_stack(widths, derive_seed(config_.seed, "catnn/deep")), "cat.deep");
}

void CatNN::check_codes(const IndexMatrix& codes) const {
  if (codes.cols() != columns()) fail(ErrorCode::kShape, "categorical code width mismatch");
  for (Eigen::Index j = 0; j < codes.cols(); ++j) {
    for (Eigen::Index i = 0; i < codes.rows(); ++i) {
      const int c = codes(i, j);
      if (c < 0 || c >= cardinalities_[static_cast<std::size_t>(j)]) {
        fail(ErrorCode::kIndex, "categorical code " + std::to_string(c) + " out of range in column " +
                                    std::to_string(j));
      }
    }
  }
}

namespace {

struct CatParts {
  std::vector<nn::Var<double>> vectors;  // N x d per column
  nn::Var<double> fm;                    // N x 1
};

CatParts cat_parts(nn::Tape<double>& tape, CatNN& model, const IndexMatrix& codes) {
  CatParts parts;
  const Eigen::Index n = codes.rows();
  std::vector<nn::Var<double>> linear;
  std::vector<int> column(static_cast<std::size_t>(n));
  for (int j = 0; j < model.columns(); ++j) {
    for (Eigen::Index i = 0; i < n; ++i) column[static_cast<std::size_t>(i)] = codes(i, j);
    const std::span<const int> idx(column);
    parts.vectors.push_back(model.embeddings[static_cast<std::size_t>(j)].lookup(tape, idx));
    linear.push_back(nn::gather_rows(tape.parameter(model.first_order[static_cast<std::size_t>(j)]), idx));
  }
  auto out = nn::add(tape.constant(Matrix::Zero(n, 1)), tape.parameter(model.bias));
  if (model.columns() > 0) {
    auto first = nn::sum_all(std::span<const nn::Var<double>>(linear));
    auto summed = nn::sum_all(std::span<const nn::Var<double>>(parts.vectors));
    std::vector<nn::Var<double>> squares;
    for (const auto& v : parts.vectors) squares.push_back(nn::row_sum(nn::square(v)));
    auto pair = nn::scale(nn::sub(nn::row_sum(nn::square(summed)), nn::sum_all(std::span<const nn::Var<double>>(squares))),
                          0.5);
    out = nn::add(nn::add(out, first), pair);
  }
  parts.fm = out;
  return parts;
}

}  // namespace

nn::Var<double> CatNN::fm_forward(nn::Tape<double>& tape, const IndexMatrix& codes) {
  check_codes(codes);
  return cat_parts(tape, *this, codes).fm;
}

nn::Var<double> CatNN::forward(nn::Tape<double>& tape, const IndexMatrix& codes) {
  check_codes(codes);
  CatParts parts = cat_parts(tape, *this, codes);
  nn::Var<double> deep_in = columns() > 0 ? nn::concat_cols(std::span<const nn::Var<double>>(parts.vectors))
                                          : tape.constant(Matrix::Zero(codes.rows(), 0));
  return nn::add(parts.fm, deep.forward(tape, deep_in));
}

Vector CatNN::fm_predict(const IndexMatrix& codes) const {
  check_codes(codes);
  const Eigen::Index n = codes.rows();
  const int d = config_.embedding_dim;
  Vector out = Vector::Constant(n, bias.value(0, 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(d);
    double sq = 0.0;
    for (int j = 0; j < columns(); ++j) {
      const int c = codes(i, j);
      out(i) += first_order[static_cast<std::size_t>(j)].value(c, 0);
      const auto v = embeddings[static_cast<std::size_t>(j)].parameter().value.row(c);
      sum += v;
      sq += v.squaredNorm();
    }
    out(i) += 0.5 * (sum.squaredNorm() - sq);
  }
  return out;
}

Vector CatNN::predict(const IndexMatrix& codes) const {
  Vector fm = fm_predict(codes);
  const int d = config_.embedding_dim;
  Matrix deep_in(codes.rows(), columns() * d);
  for (int j = 0; j < columns(); ++j) {
    const auto& table = embeddings[static_cast<std::size_t>(j)].parameter().value;
    for (Eigen::Index i = 0; i < codes.rows(); ++i) deep_in.block(i, j * d, 1, d) = table.row(codes(i, j));
  }
  return fm + deep.predict(deep_in).col(0);
}

nn::ParameterList<double> CatNN::parameters() {
  nn::ParameterList<double> out;
  for (auto& e : embeddings) out.push_back(&e.parameter());
  for (auto& w : first_order) out.push_back(&w);
  out.push_back(&bias);
  for (auto* p : deep.parameters()) out.push_back(p);
  return out;
}

void TrainConfig::validate() const {
  if (alpha < 0.0 || alpha_kg < 0.0) fail(ErrorCode::kConfiguration, "fairness weights must be non-negative");
  if (epochs < 0 || distill_epochs < 0 || embedding_epochs < 0) {
    fail(ErrorCode::kConfiguration, "epoch counts must be non-negative");
  }
  if (!(lr > 0.0) || !(distill_lr > 0.0) || !(embedding_lr > 0.0)) {
    fail(ErrorCode::kConfiguration, "learning rates must be positive");
  }
  if (batch_size <= 0) fail(ErrorCode::kConfiguration, "batch size must be positive");
  if (weight_decay < 0.0) fail(ErrorCode::kConfiguration, "weight decay must be non-negative");
  if (n_groups < 1) fail(ErrorCode::kConfiguration, "need at least one tree group");
  if (d_leaf < 1) fail(ErrorCode::kConfiguration, "leaf embedding dimension must be positive");
  if (cat_embedding_dim < 1) fail(ErrorCode::kConfiguration, "categorical embedding dimension must be positive");
  for (int h : hidden) {
    if (h < 1) fail(ErrorCode::kConfiguration, "hidden widths must be positive");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail(ErrorCode::kConfiguration, "threshold must lie in [0, 1]");
}

FusionModel::FusionModel(CatNN c, DistilledNet d)
    : catnn(std::move(c)),
      dense(std::move(d)),
      w1("fusion.w1", Matrix::Ones(1, 1)),
      w2("fusion.w2", Matrix::Ones(1, 1)) {}

nn::Var<double> FusionModel::forward_logit(nn::Tape<double>& tape, const Matrix& prepared_dense,
                                           const IndexMatrix& codes) {
  auto ykd = dense.forward(tape, prepared_dense);
  auto ycat = catnn.forward(tape, codes);
  return nn::add(nn::scale(ykd, tape.parameter(w1)), nn::scale(ycat, tape.parameter(w2)));
}

Vector FusionModel::predict_logit(const FeatureViews& views) const {
  const Vector ykd = dense.y_kd(views.dense);
  const Vector ycat = catnn.predict(views.sparse);
  return w1.value(0, 0) * ykd + w2.value(0, 0) * ycat;
}

Vector FusionModel::predict(const FeatureViews& views) const {
  return predict_logit(views).unaryExpr([](double z) { return sigmoid(z); });
}

nn::ParameterList<double> FusionModel::parameters(bool include_dense) {
  nn::ParameterList<double> out = catnn.parameters();
  if (include_dense) {
    for (auto* p : dense.parameters()) out.push_back(p);
  }
  out.push_back(&w1);
  out.push_back(&w2);
  return out;
}

Vector fuse_predict(const Vector& y_kd, const Vector& y_cat, double w1, double w2) {
  if (y_kd.size() != y_cat.size()) fail(ErrorCode::kShape, "fusion inputs differ in length");
  return (w1 * y_kd + w2 * y_cat).unaryExpr([](double z) { return sigmoid(z); });
}

void train_end_to_end(FusionModel& model, const FeatureViews& views, std::span<const int> labels,
                      std::span<const int> sensitive_groups, int majority, const TrainConfig& config,
                      std::vector<EndToEndEpochLog>* log) {
  config.validate();
  const auto n = views.rows();
  if (labels.size() != n || sensitive_groups.size() != n) {
    fail(ErrorCode::kShape, "labels, sensitive groups and features differ in length");
  }
  const Matrix x = model.dense.prepare(views.dense);
  // Frozen dense parameters stay on the tape as constants.
  const auto dense_params = model.dense.parameters();
  if (config.freeze_dense) {
    for (auto* p : dense_params) p->trainable = false;
  }
  nn::Adam<double> opt(model.parameters(!config.freeze_dense),
                       nn::AdamConfig{.lr = config.lr, .weight_decay = config.weight_decay},
                       nn::AdamVariant::kAdamW);
  Rng rng(derive_seed(config.seed, "end_to_end/shuffle"));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EndToEndEpochLog entry{epoch, 0.0, 0.0, 0.0, 0};
    int batches = 0;
    for (const auto& batch : nn::minibatches(n, config.batch_size, rng)) {
      nn::Tape<double> tape;
      const Matrix xb = x(batch, Eigen::all);
      const IndexMatrix cb = views.sparse(batch, Eigen::all);
      auto p = nn::sigmoid(model.forward_logit(tape, xb, cb));
      Matrix y(static_cast<Eigen::Index>(batch.size()), 1);
      std::vector<std::uint8_t> mask(batch.size());
      bool any = false;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<std::size_t>(batch[i]);
        y(static_cast<Eigen::Index>(i), 0) = labels[r];
        mask[i] = sensitive_groups[r] == majority ? 1 : 0;
        any = any || mask[i];
      }
      auto loss = nn::cross_entropy(p, y);
      const double ce = loss.value()(0, 0);
      double fair = 0.0;
      if (config.alpha > 0.0) {
        if (any) {
          auto f = nn::fairness_loss(p, std::span<const std::uint8_t>(mask));
          fair = f.value()(0, 0);
          loss = nn::add(loss, nn::scale(f, config.alpha));
        } else {
          ++entry.skipped_batches;
        }
      }
      opt.zero_grad();
      tape.backward(loss);
      opt.step();
      entry.cross_entropy += ce;
      entry.fairness += fair;
      entry.total += ce + config.alpha * fair;
      ++batches;
    }
    if (batches > 0) {
      entry.cross_entropy /= batches;
      entry.fairness /= batches;
      entry.total /= batches;
    }
    if (log != nullptr) log->push_back(entry);
  }
  for (auto* p : dense_params) p->trainable = true;
}

}  // namespace fairkd
