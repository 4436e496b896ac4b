#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fairkd/common.hpp"

namespace fairkd {

enum class FeatureKind { kNumeric, kCategorical };
enum class ColumnRole { kRecipient, kOrgan, kSensitive, kLabel, kScore };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(ColumnRole role);

struct ColumnSpec {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  ColumnRole role = ColumnRole::kRecipient;
};

using Schema = std::vector<ColumnSpec>;

/// Parses `name,kind,role` lines. Blank lines and lines starting with '#' are
/// ignored.
Schema parse_schema(std::string_view text);
Schema load_schema(const std::string& path);
std::string format_schema(const Schema& schema);

inline constexpr std::string_view kMissingToken = "<NA>";

inline bool is_missing(double v) { return std::isnan(v); }

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::kNumeric;
  ColumnRole role = ColumnRole::kRecipient;
  std::vector<double> numeric;                     // NaN marks a missing cell
  std::vector<std::optional<std::string>> tokens;  // nullopt marks a missing cell

  std::size_t size() const { return kind == FeatureKind::kNumeric ? numeric.size() : tokens.size(); }
};

struct SensitiveColumn {
  std::string name;
  std::vector<std::string> values;

  /// Distinct values in first-appearance order.
  std::vector<std::string> groups() const;
};

/// Recipient and organ features, sensitive attributes and binary outcomes
/// for N individuals.
struct Cohort {
  std::vector<FeatureColumn> features;
  std::vector<SensitiveColumn> sensitive;
  std::vector<int> labels;
  std::string label_name = "label";
  std::string score_name;     // empty when the cohort carries no score column
  std::vector<double> score;  // NaN marks a missing cell

  std::size_t rows() const { return labels.size(); }
  std::size_t recipient_count() const;
  std::size_t organ_count() const;
  std::vector<FeatureKind> feature_kinds() const;
  bool has_score() const { return !score_name.empty(); }

  const SensitiveColumn& sensitive_column(std::string_view name) const;

  /// Throws kData on any broken invariant.
  void validate() const;
};

Cohort subset(const Cohort& cohort, std::span<const std::size_t> rows);

/// Reconstructs the schema a cohort was loaded with (features, sensitive,
/// score, label in that order).
Schema schema_of(const Cohort& cohort);

Cohort parse_cohort(std::istream& in, const Schema& schema);
Cohort load_cohort(const std::string& path, const Schema& schema);
void write_cohort_csv(const Cohort& cohort, std::ostream& out);

/// Missing numeric cells become 0.0, missing categorical cells the reserved
/// "<NA>" token.
Cohort impute_missing(Cohort cohort);

using Vocabulary = std::vector<std::string>;

/// First-appearance order over the (training) values; "<NA>" is always
/// present, appended last when it was not observed.
Vocabulary fit_vocabulary(std::span<const std::optional<std::string>> column);

/// Index of `token`, or of "<NA>" when unseen. Throws when neither exists.
int vocabulary_index(const Vocabulary& vocab, std::string_view token);

std::vector<int> encode_integer(std::span<const std::string> column, const Vocabulary& vocab);

/// rows x |vocab| indicator matrix with exactly one 1 per row.
Matrix encode_onehot(std::span<const std::string> column, const Vocabulary& vocab);

struct FeatureViews {
  IndexMatrix sparse;  // N x S integer codes of the categorical columns
  Matrix dense;        // N x D = [integer codes | numeric columns]
  std::vector<Vocabulary> vocabularies;
  std::vector<std::string> dense_names;
  int onehot_dim = 0;

  std::size_t rows() const { return static_cast<std::size_t>(dense.rows()); }
  int sparse_columns() const { return static_cast<int>(sparse.cols()); }
  std::vector<int> cardinalities() const;

  /// Materializes the one-hot expansion of the sparse codes.
  Matrix onehot() const;
};

/// Fits one vocabulary per categorical feature column (in cohort order).
std::vector<Vocabulary> fit_vocabularies(const Cohort& train);

/// Expects an imputed cohort; `vocabs` must hold one vocabulary per
/// categorical column.
FeatureViews build_feature_views(const Cohort& cohort, const std::vector<Vocabulary>& vocabs);

/// Column-wise affine map to zero mean, unit variance. Constant columns keep
/// scale 1.
struct Standardizer {
  RowVector mean;
  RowVector scale;

  static Standardizer fit(const Matrix& x);
  static Standardizer identity(Eigen::Index cols);
  Matrix apply(const Matrix& x) const;
};

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;
  std::uint64_t seed = 0;

  std::vector<std::size_t> train_rows(int fold) const;
  std::vector<std::size_t> test_rows(int fold) const;
};

FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed);

struct GroupSpec {
  std::string label;
  double proportion = 0.0;
  double base_rate_shift = 0.0;
  double feature_shift = 0.0;  // mean shift of the proxy numeric features
  double category_bias = 0.0;  // chance a proxy categorical cell takes the group's own code
};

struct SensitiveSpec {
  std::string name;
  std::vector<GroupSpec> groups;
};

/// Synthetic cohort generator settings. Labels follow
///   y ~ Bernoulli(sigmoid(intercept + w . f + sum_a shift_a(group)))
/// flipped with probability label_noise, where numeric features are
/// standard normal (plus the group's feature_shift on the first
/// `proxy_features` columns) and categorical column j contributes its code
/// mapped evenly onto [-1, 1]. On the first `proxy_categoricals` categorical
/// columns a row of group k takes code k mod cardinality with probability
/// category_bias, otherwise a uniform code.
struct SynthConfig {
  std::size_t n_rows = 1000;
  int n_numeric = 6;
  int n_categorical = 2;
  int category_cardinality = 4;
  std::vector<SensitiveSpec> attributes;
  double label_noise = 0.0;
  std::vector<double> signal_weights;  // n_numeric + n_categorical, or empty
  double signal_scale = 1.0;           // range of generated weights when empty
  double intercept = 0.0;
  int proxy_features = 0;
  int proxy_categoricals = 0;
  double missing_rate = 0.0;
  double score_signal = 0.0;  // correlation knob of the "meld" score column
  std::uint64_t seed = 0;

  void validate() const;
  /// Explicit weights, or the seed-derived defaults.
  std::vector<double> resolved_weights() const;
};

Cohort synth_generate(const SynthConfig& config);

}  // namespace fairkd
