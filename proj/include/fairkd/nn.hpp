#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every operation of one forward pass together with a closure
// that pushes the output gradient back to its inputs. Parameters live outside
// the tape and receive accumulated gradients on backward(). The kernel is
// templated on the scalar type; training code uses double throughout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fairkd/common.hpp"
#include "fairkd/rng.hpp"

namespace fairkd::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Mat<Scalar> v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat<Scalar>::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
using ParameterList = std::vector<Parameter<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParameterList<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat<Scalar>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = Mat<Scalar>;
  using Backward = std::function<void(const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Matrix value) { return push(std::move(value), false, nullptr); }

  Var<Scalar> parameter(Parameter<Scalar>& p) {
    const int id = static_cast<int>(nodes_.size());
    Node node;
    node.value = p.value;
    node.requires_grad = p.trainable;
    node.param = &p;
    nodes_.push_back(std::move(node));
    return {this, id};
  }

  /// Records an operation result. `backward` receives d(loss)/d(result) and
  /// must route it into the inputs through accumulate().
  Var<Scalar> record(Matrix value, std::initializer_list<Var<Scalar>> inputs, Backward backward) {
    return record(std::move(value), std::span<const Var<Scalar>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var<Scalar> record(Matrix value, std::span<const Var<Scalar>> inputs, Backward backward) {
    bool needs_grad = false;
    for (const auto& in : inputs) {
      check_owned(in);
      needs_grad = needs_grad || nodes_[in.id].requires_grad;
    }
    if (!value.allFinite()) fail(ErrorCode::kNumeric, "non-finite value in forward pass");
    auto v = push(std::move(value), needs_grad, nullptr);
    if (needs_grad) nodes_[v.id].backward = std::move(backward);
    return v;
  }

  bool requires_grad(Var<Scalar> v) const { return nodes_.at(v.id).requires_grad; }

  const Matrix& value(Var<Scalar> v) const {
    check_owned(v);
    return nodes_[v.id].value;
  }

  void accumulate(Var<Scalar> v, const Matrix& g) {
    Node& node = nodes_[v.id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  /// Back-propagates from a 1x1 loss node; parameter gradients are added to
  /// Parameter::grad. A tape supports a single backward pass.
  void backward(Var<Scalar> loss) {
    if (!loss.valid() || loss.tape != this || loss.id >= static_cast<int>(nodes_.size())) {
      fail(ErrorCode::kState, "backward called without a recorded forward pass");
    }
    if (consumed_) fail(ErrorCode::kState, "tape already consumed by a previous backward pass");
    const Matrix& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) fail(ErrorCode::kShape, "backward expects a scalar loss");
    consumed_ = true;
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Matrix::Ones(1, 1);
    for (int id = loss.id; id >= 0; --id) {
      Node& node = nodes_[id];
      if (!node.requires_grad || node.grad.size() == 0) continue;
      if (node.param != nullptr) {
        node.param->grad += node.grad;
      } else if (node.backward) {
        node.backward(node.grad);
      }
      node.grad.resize(0, 0);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Parameter<Scalar>* param = nullptr;
    bool requires_grad = false;
  };

  Var<Scalar> push(Matrix value, bool needs_grad, Parameter<Scalar>* param) {
    const int id = static_cast<int>(nodes_.size());
    Node node;
    node.value = std::move(value);
    node.requires_grad = needs_grad;
    node.param = param;
    nodes_.push_back(std::move(node));
    return {this, id};
  }

  void check_owned(Var<Scalar> v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
      fail(ErrorCode::kState, "variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

template <typename Scalar>
const Mat<Scalar>& Var<Scalar>::value() const {
  return tape->value(*this);
}

// ---------------------------------------------------------------------------
// Operations

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  if (a.cols() != b.rows()) fail(ErrorCode::kShape, "matmul inner dimensions differ");
  Mat<Scalar> out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [&t, a, b](const Mat<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

/// Elementwise sum. `b` may match `a`, be a 1 x cols row (broadcast over
/// rows) or a 1 x 1 scalar.
template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  const auto& av = a.value();
  const auto& bv = b.value();
  Mat<Scalar> out;
  enum { kSame, kRow, kScalar } mode;
  if (av.rows() == bv.rows() && av.cols() == bv.cols()) {
    mode = kSame;
    out = av + bv;
  } else if (bv.rows() == 1 && bv.cols() == av.cols()) {
    mode = kRow;
    out = av.rowwise() + bv.row(0);
  } else if (bv.size() == 1) {
    mode = kScalar;
    out = av.array() + bv(0, 0);
  } else {
    fail(ErrorCode::kShape, "add: incompatible shapes");
  }
  return t.record(std::move(out), {a, b}, [&t, a, b, mode](const Mat<Scalar>& g) {
    t.accumulate(a, g);
    if (!t.requires_grad(b)) return;
    if (mode == kSame) {
      t.accumulate(b, g);
    } else if (mode == kRow) {
      t.accumulate(b, g.colwise().sum());
    } else {
      t.accumulate(b, Mat<Scalar>::Constant(1, 1, g.sum()));
    }
  });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorCode::kShape, "sub: shapes differ");
  Mat<Scalar> out = a.value() - b.value();
  return t.record(std::move(out), {a, b}, [&t, a, b](const Mat<Scalar>& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  });
}

/// Elementwise product of equal shapes.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  Tape<Scalar>& t = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorCode::kShape, "mul: shapes differ");
  Mat<Scalar> out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [&t, a, b](const Mat<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

/// Multiplies every entry of `a` by the 1x1 variable `s`.
template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Var<Scalar> s) {
  Tape<Scalar>& t = *a.tape;
  if (s.value().size() != 1) fail(ErrorCode::kShape, "scale expects a 1x1 factor");
  Mat<Scalar> out = a.value() * s.value()(0, 0);
  return t.record(std::move(out), {a, s}, [&t, a, s](const Mat<Scalar>& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(s)(0, 0));
    if (t.requires_grad(s)) {
      t.accumulate(s, Mat<Scalar>::Constant(1, 1, g.cwiseProduct(t.value(a)).sum()));
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  Mat<Scalar> out = a.value() * c;
  return t.record(std::move(out), {a}, [&t, a, c](const Mat<Scalar>& g) { t.accumulate(a, g * c); });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Mat<Scalar> out = a.value().cwiseMax(Scalar(0));
  return t.record(std::move(out), {a}, [&t, a](const Mat<Scalar>& g) {
    t.accumulate(a, (t.value(a).array() > Scalar(0)).select(g, Scalar(0)).matrix());
  });
}

template <typename Scalar>
Scalar sigmoid_scalar(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Mat<Scalar> out = a.value().unaryExpr([](Scalar z) { return sigmoid_scalar(z); });
  Mat<Scalar> s = out;
  return t.record(std::move(out), {a}, [&t, a, s = std::move(s)](const Mat<Scalar>& g) {
    t.accumulate(a, (g.array() * s.array() * (Scalar(1) - s.array())).matrix());
  });
}

template <typename Scalar>
Var<Scalar> square(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Mat<Scalar> out = a.value().array().square().matrix();
  return t.record(std::move(out), {a}, [&t, a](const Mat<Scalar>& g) {
    t.accumulate(a, (Scalar(2) * g.array() * t.value(a).array()).matrix());
  });
}

/// rows x k -> rows x 1
template <typename Scalar>
Var<Scalar> row_sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Mat<Scalar> out = a.value().rowwise().sum();
  const Eigen::Index cols = a.cols();
  return t.record(std::move(out), {a}, [&t, a, cols](const Mat<Scalar>& g) {
    t.accumulate(a, g.replicate(1, cols));
  });
}

/// Mean over every entry -> 1x1.
template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Eigen::Index n = a.value().size();
  if (n == 0) fail(ErrorCode::kShape, "mean of empty matrix");
  Mat<Scalar> out = Mat<Scalar>::Constant(1, 1, a.value().mean());
  const Eigen::Index r = a.rows(), c = a.cols();
  return t.record(std::move(out), {a}, [&t, a, n, r, c](const Mat<Scalar>& g) {
    t.accumulate(a, Mat<Scalar>::Constant(r, c, g(0, 0) / Scalar(n)));
  });
}

/// Mean of the rows of a column vector selected by `mask` -> 1x1.
template <typename Scalar>
Var<Scalar> masked_mean(Var<Scalar> a, std::span<const std::uint8_t> mask) {
  Tape<Scalar>& t = *a.tape;
  if (a.cols() != 1 || static_cast<std::size_t>(a.rows()) != mask.size()) {
    fail(ErrorCode::kShape, "masked_mean expects a column matching the mask");
  }
  const auto& v = a.value();
  Scalar total = 0;
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    if (mask[i]) {
      total += v(i, 0);
      ++count;
    }
  }
  if (count == 0) fail(ErrorCode::kData, "masked_mean over an empty selection");
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return t.record(Mat<Scalar>::Constant(1, 1, total / Scalar(count)), {a},
                  [&t, a, m = std::move(m), count](const Mat<Scalar>& g) {
                    Mat<Scalar> ga = Mat<Scalar>::Zero(static_cast<Eigen::Index>(m.size()), 1);
                    const Scalar w = g(0, 0) / Scalar(count);
                    for (std::size_t i = 0; i < m.size(); ++i) {
                      if (m[i]) ga(static_cast<Eigen::Index>(i), 0) = w;
                    }
                    t.accumulate(a, ga);
                  });
}

/// Row gather from an embedding table; repeated indices accumulate on backward.
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> table, std::span<const int> indices) {
  Tape<Scalar>& t = *table.tape;
  const auto& tv = table.value();
  Mat<Scalar> out(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= tv.rows()) fail(ErrorCode::kIndex, "embedding index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(idx);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  const Eigen::Index rows = tv.rows(), cols = tv.cols();
  return t.record(std::move(out), {table}, [&t, table, idx = std::move(idx), rows, cols](const Mat<Scalar>& g) {
    Mat<Scalar> gt = Mat<Scalar>::Zero(rows, cols);
    for (std::size_t i = 0; i < idx.size(); ++i) gt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(table, gt);
  });
}

template <typename Scalar>
Var<Scalar> concat_cols(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) fail(ErrorCode::kShape, "concat of zero parts");
  Tape<Scalar>& t = *parts[0].tape;
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) fail(ErrorCode::kShape, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat<Scalar> out(rows, cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Eigen::Index> widths;
  for (const auto& p : parts) widths.push_back(p.cols());
  std::vector<Var<Scalar>> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, inputs, widths](const Mat<Scalar>& g) {
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (t.requires_grad(inputs[k])) t.accumulate(inputs[k], g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

/// Elementwise sum of equally shaped variables.
template <typename Scalar>
Var<Scalar> sum_all(std::span<const Var<Scalar>> parts) {
  if (parts.empty()) fail(ErrorCode::kShape, "sum of zero parts");
  Tape<Scalar>& t = *parts[0].tape;
  Mat<Scalar> out = parts[0].value();
  for (std::size_t k = 1; k < parts.size(); ++k) {
    if (parts[k].rows() != out.rows() || parts[k].cols() != out.cols()) {
      fail(ErrorCode::kShape, "sum_all: shapes differ");
    }
    out += parts[k].value();
  }
  std::vector<Var<Scalar>> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [&t, inputs](const Mat<Scalar>& g) {
    for (const auto& in : inputs) t.accumulate(in, g);
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) { return add(a, b); }
template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) { return sub(a, b); }
template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> a, Scalar c) { return scale(a, c); }

// ---------------------------------------------------------------------------
// Losses

inline constexpr double kProbabilityClip = 1e-7;

/// Mean binary cross-entropy of probabilities `p` (column) against 0/1
/// labels. Probabilities are clipped to [1e-7, 1 - 1e-7]; clipped entries
/// pass no gradient.
template <typename Scalar>
Var<Scalar> cross_entropy(Var<Scalar> p, const Mat<Scalar>& labels) {
  Tape<Scalar>& t = *p.tape;
  const auto& pv = p.value();
  if (pv.rows() != labels.rows() || pv.cols() != labels.cols() || pv.size() == 0) {
    fail(ErrorCode::kShape, "cross_entropy: prediction/label shapes differ");
  }
  const Scalar lo = Scalar(kProbabilityClip), hi = Scalar(1) - Scalar(kProbabilityClip);
  const Eigen::Index n = pv.size();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar q = std::clamp(pv(i), lo, hi);
    total -= labels(i) * std::log(q) + (Scalar(1) - labels(i)) * std::log(Scalar(1) - q);
  }
  return t.record(Mat<Scalar>::Constant(1, 1, total / Scalar(n)), {p},
                  [&t, p, labels, lo, hi, n](const Mat<Scalar>& g) {
                    const auto& pv = t.value(p);
                    Mat<Scalar> gp(pv.rows(), pv.cols());
                    for (Eigen::Index i = 0; i < n; ++i) {
                      const Scalar q = pv(i);
                      if (q < lo || q > hi) {
                        gp(i) = 0;
                      } else {
                        gp(i) = (-labels(i) / q + (Scalar(1) - labels(i)) / (Scalar(1) - q)) / Scalar(n);
                      }
                    }
                    t.accumulate(p, gp * g(0, 0));
                  });
}

/// Mean squared componentwise difference against a constant target.
template <typename Scalar>
Var<Scalar> mse(Var<Scalar> a, const Mat<Scalar>& target) {
  Tape<Scalar>& t = *a.tape;
  if (a.rows() != target.rows() || a.cols() != target.cols() || target.size() == 0) {
    fail(ErrorCode::kShape, "mse: shapes differ");
  }
  const Eigen::Index n = target.size();
  Mat<Scalar> diff = a.value() - target;
  const Scalar value = diff.squaredNorm() / Scalar(n);
  return t.record(Mat<Scalar>::Constant(1, 1, value), {a},
                  [&t, a, diff = std::move(diff), n](const Mat<Scalar>& g) {
                    t.accumulate(a, diff * (Scalar(2) * g(0, 0) / Scalar(n)));
                  });
}

/// (E[scores] - E[scores | majority])^2 over a batch column of scores.
/// Callers must skip the term when the batch holds no majority member.
template <typename Scalar>
Var<Scalar> fairness_loss(Var<Scalar> scores, std::span<const std::uint8_t> majority) {
  return square(sub(mean(scores), masked_mean(scores, majority)));
}

template <typename Scalar>
Scalar cross_entropy_value(Scalar p, Scalar y) {
  const Scalar q = std::clamp(p, Scalar(kProbabilityClip), Scalar(1) - Scalar(kProbabilityClip));
  return -(y * std::log(q) + (Scalar(1) - y) * std::log(Scalar(1) - q));
}

template <typename Scalar>
Scalar mse_value(const Mat<Scalar>& a, const Mat<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) {
    fail(ErrorCode::kShape, "mse: shapes differ");
  }
  return (a - b).squaredNorm() / Scalar(a.size());
}

// ---------------------------------------------------------------------------
// Layers

enum class Activation { kRelu, kSigmoid, kIdentity };

/// widths = [input, hidden..., output]; one activation per layer.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;
  std::uint64_t seed = 0;

  static MlpSpec relu_stack(std::vector<int> widths, std::uint64_t seed) {
    MlpSpec spec;
    spec.widths = std::move(widths);
    spec.activations.assign(spec.widths.size() - 1, Activation::kRelu);
    spec.activations.back() = Activation::kIdentity;
    spec.seed = seed;
    return spec;
  }

  void validate() const {
    if (widths.size() < 2) fail(ErrorCode::kConfiguration, "MLP needs at least one layer");
    if (activations.size() + 1 != widths.size()) {
      fail(ErrorCode::kConfiguration, "MLP needs one activation per layer");
    }
    for (std::size_t i = 1; i < widths.size(); ++i) {
      if (widths[i] <= 0) fail(ErrorCode::kConfiguration, "MLP layer widths must be positive");
    }
    if (widths[0] < 0) fail(ErrorCode::kConfiguration, "MLP input width must be non-negative");
  }
};

template <typename Scalar>
Var<Scalar> activate(Var<Scalar> z, Activation a) {
  switch (a) {
    case Activation::kRelu: return relu(z);
    case Activation::kSigmoid: return sigmoid(z);
    case Activation::kIdentity: return z;
  }
  return z;
}

template <typename Scalar>
Mat<Scalar> glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(std::max(1, fan_in + fan_out)));
  Mat<Scalar> w(fan_in, fan_out);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(rng.uniform(-limit, limit));
  }
  return w;
}

template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpSpec spec, std::string name = "mlp") : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(spec_.seed);
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
      const int in = spec_.widths[l], out = spec_.widths[l + 1];
      weights_.emplace_back(name + ".w" + std::to_string(l), glorot_uniform<Scalar>(in, out, rng));
      biases_.emplace_back(name + ".b" + std::to_string(l), Mat<Scalar>::Zero(1, out));
    }
  }

  const MlpSpec& spec() const { return spec_; }
  int input_width() const { return spec_.widths.front(); }
  int output_width() const { return spec_.widths.back(); }

  Var<Scalar> forward(Tape<Scalar>& tape, Var<Scalar> x) {
    if (x.cols() != input_width()) fail(ErrorCode::kShape, "MLP input width mismatch");
    Var<Scalar> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Var<Scalar> z = add(matmul(h, tape.parameter(weights_[l])), tape.parameter(biases_[l]));
      h = activate(z, spec_.activations[l]);
    }
    return h;
  }

  /// Inference without recording a tape.
  Mat<Scalar> predict(const Mat<Scalar>& x) const {
    if (x.cols() != input_width()) fail(ErrorCode::kShape, "MLP input width mismatch");
    Mat<Scalar> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Mat<Scalar> z = (h * weights_[l].value).rowwise() + biases_[l].value.row(0);
      switch (spec_.activations[l]) {
        case Activation::kRelu: h = z.cwiseMax(Scalar(0)); break;
        case Activation::kSigmoid: h = z.unaryExpr([](Scalar v) { return sigmoid_scalar(v); }); break;
        case Activation::kIdentity: h = std::move(z); break;
      }
    }
    if (!h.allFinite()) fail(ErrorCode::kNumeric, "non-finite MLP output");
    return h;
  }

  ParameterList<Scalar> parameters() {
    ParameterList<Scalar> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  std::vector<Parameter<Scalar>>& weights() { return weights_; }
  std::vector<Parameter<Scalar>>& biases() { return biases_; }
  const std::vector<Parameter<Scalar>>& weights() const { return weights_; }
  const std::vector<Parameter<Scalar>>& biases() const { return biases_; }

 private:
  MlpSpec spec_;
  std::vector<Parameter<Scalar>> weights_;
  std::vector<Parameter<Scalar>> biases_;
};

/// One c x d table of trainable vectors for a single categorical column.
template <typename Scalar>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  EmbeddingTable(int cardinality, int dim, Rng& rng, std::string name = "embedding", double stddev = 0.01) {
    if (cardinality <= 0 || dim <= 0) fail(ErrorCode::kConfiguration, "embedding table needs positive shape");
    Mat<Scalar> v(cardinality, dim);
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) = Scalar(rng.normal(0.0, stddev));
    }
    table_ = Parameter<Scalar>(std::move(name), std::move(v));
  }

  int cardinality() const { return static_cast<int>(table_.value.rows()); }
  int dim() const { return static_cast<int>(table_.value.cols()); }

  Var<Scalar> lookup(Tape<Scalar>& tape, std::span<const int> indices) {
    return gather_rows(tape.parameter(table_), indices);
  }

  Parameter<Scalar>& parameter() { return table_; }
  const Parameter<Scalar>& parameter() const { return table_; }

 private:
  Parameter<Scalar> table_;
};

// ---------------------------------------------------------------------------
// Optimizers

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // only used by the decoupled (AdamW) variant
};

enum class AdamVariant { kAdam, kAdamW };

/// Adam with bias correction. The AdamW variant multiplies parameters by
/// (1 - lr * weight_decay) before the Adam update.
template <typename Scalar>
class Adam {
 public:
  Adam(ParameterList<Scalar> params, AdamConfig config, AdamVariant variant = AdamVariant::kAdam)
      : params_(std::move(params)), config_(config), variant_(variant) {
    for (auto* p : params_) {
      m_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    for (auto* p : params_) {
      if (p->trainable && !p->grad.allFinite()) {
        fail(ErrorCode::kNumeric, "non-finite gradient for parameter " + p->name);
      }
    }
    ++steps_;
    const Scalar b1 = Scalar(config_.beta1), b2 = Scalar(config_.beta2);
    const Scalar lr = Scalar(config_.lr), eps = Scalar(config_.eps);
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<Scalar>& p = *params_[k];
      if (!p.trainable) continue;
      if (variant_ == AdamVariant::kAdamW && config_.weight_decay != 0.0) {
        p.value *= Scalar(1) - lr * Scalar(config_.weight_decay);
      }
      m_[k] = b1 * m_[k] + (Scalar(1) - b1) * p.grad;
      v_[k] = b2 * v_[k] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps);
    }
  }

  void zero_grad() { zero_grads(params_); }

  std::int64_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const Mat<Scalar>& first_moment(std::size_t k) const { return m_.at(k); }
  const Mat<Scalar>& second_moment(std::size_t k) const { return v_.at(k); }

 private:
  ParameterList<Scalar> params_;
  AdamConfig config_;
  AdamVariant variant_;
  std::vector<Mat<Scalar>> m_;
  std::vector<Mat<Scalar>> v_;
  std::int64_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Mini-batches

/// Shuffled row indices cut into consecutive batches; the last may be short.
inline std::vector<std::vector<int>> minibatches(std::size_t n, int batch_size, Rng& rng) {
  if (batch_size <= 0) fail(ErrorCode::kConfiguration, "batch size must be positive");
  std::vector<int> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
  rng.shuffle(std::span<int>(order));
  std::vector<std::vector<int>> out;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(t + eps) - f(t - eps)) / 2 eps for every entry of every
/// trainable parameter. Relative error is |a - n| / max(|a|, |n|), falling
/// back to the absolute error when both magnitudes are below `abs_floor`.
template <typename Scalar>
GradCheckResult grad_check(const std::function<Var<Scalar>(Tape<Scalar>&)>& fn,
                           const ParameterList<Scalar>& params, Scalar eps = Scalar(1e-5),
                           Scalar abs_floor = Scalar(1e-7)) {
  zero_grads(params);
  {
    Tape<Scalar> tape;
    Var<Scalar> loss = fn(tape);
    tape.backward(loss);
  }
  auto eval = [&fn]() {
    Tape<Scalar> tape;
    return fn(tape).value()(0, 0);
  };
  GradCheckResult result;
  for (auto* p : params) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const Scalar saved = p->value(i);
      p->value(i) = saved + eps;
      const Scalar up = eval();
      p->value(i) = saved - eps;
      const Scalar down = eval();
      p->value(i) = saved;
      const Scalar numeric = p->trainable ? (up - down) / (Scalar(2) * eps) : Scalar(0);
      const Scalar analytic = p->grad(i);
      const Scalar scale = std::max(std::abs(analytic), std::abs(numeric));
      const Scalar err = scale < abs_floor ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
      if (static_cast<double>(err) > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = static_cast<double>(err);
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.analytic = static_cast<double>(analytic);
        result.numeric = static_cast<double>(numeric);
      }
    }
  }
  return result;
}

}  // namespace fairkd::nn
