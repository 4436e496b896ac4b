#include "fairkd/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "fairkd/rng.hpp"

namespace fairkd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

// RFC 4180 style: fields may be quoted, "" inside quotes is a literal quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  const std::string t = trim(s);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

FeatureKind parse_kind(const std::string& s) {
  if (s == "numeric") return FeatureKind::kNumeric;
  if (s == "categorical") return FeatureKind::kCategorical;
  fail(ErrorCode::kSchema, "unknown column kind '" + s + "'");
}

ColumnRole parse_role(const std::string& s) {
  if (s == "recipient") return ColumnRole::kRecipient;
  if (s == "organ") return ColumnRole::kOrgan;
  if (s == "sensitive") return ColumnRole::kSensitive;
  if (s == "label") return ColumnRole::kLabel;
  if (s == "score") return ColumnRole::kScore;
  fail(ErrorCode::kSchema, "unknown column role '" + s + "'");
}

}  // namespace

std::string_view to_string(FeatureKind kind) {
  return kind == FeatureKind::kNumeric ? "numeric" : "categorical";
}

std::string_view to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::kRecipient: return "recipient";
    case ColumnRole::kOrgan: return "organ";
    case ColumnRole::kSensitive: return "sensitive";
    case ColumnRole::kLabel: return "label";
    case ColumnRole::kScore: return "score";
  }
  return "recipient";
}

Schema parse_schema(std::string_view text) {
  Schema schema;
  std::istringstream in{std::string(text)};
  std::string line;
  int label_count = 0, score_count = 0;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = split_csv_line(t);
    if (fields.size() != 3) fail(ErrorCode::kSchema, "schema line needs name,kind,role: '" + t + "'");
    ColumnSpec spec{trim(fields[0]), parse_kind(trim(fields[1])), parse_role(trim(fields[2]))};
    if (spec.name.empty()) fail(ErrorCode::kSchema, "empty column name in schema");
    for (const auto& other : schema) {
      if (other.name == spec.name) fail(ErrorCode::kSchema, "duplicate schema column '" + spec.name + "'");
    }
    label_count += spec.role == ColumnRole::kLabel;
    score_count += spec.role == ColumnRole::kScore;
    schema.push_back(std::move(spec));
  }
  if (label_count != 1) fail(ErrorCode::kSchema, "schema needs exactly one label column");
  if (score_count > 1) fail(ErrorCode::kSchema, "schema allows at most one score column");
  return schema;
}

Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open schema file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_schema(ss.str());
}

std::string format_schema(const Schema& schema) {
  std::string out;
  for (const auto& c : schema) {
    out += c.name + "," + std::string(to_string(c.kind)) + "," + std::string(to_string(c.role)) + "\n";
  }
  return out;
}

std::vector<std::string> SensitiveColumn::groups() const {
  std::vector<std::string> out;
  for (const auto& v : values) {
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

std::size_t Cohort::recipient_count() const {
  return static_cast<std::size_t>(std::count_if(features.begin(), features.end(),
                                                [](const auto& f) { return f.role == ColumnRole::kRecipient; }));
}

std::size_t Cohort::organ_count() const { return features.size() - recipient_count(); }

std::vector<FeatureKind> Cohort::feature_kinds() const {
  std::vector<FeatureKind> kinds;
  for (const auto& f : features) kinds.push_back(f.kind);
  return kinds;
}

const SensitiveColumn& Cohort::sensitive_column(std::string_view name) const {
  for (const auto& s : sensitive) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kConfiguration, "unknown sensitive attribute '" + std::string(name) + "'");
}

void Cohort::validate() const {
  const std::size_t n = labels.size();
  require(n > 0, ErrorCode::kData, "cohort has no rows");
  for (int y : labels) require(y == 0 || y == 1, ErrorCode::kData, "labels must be 0 or 1");
  for (const auto& f : features) {
    require(f.size() == n, ErrorCode::kData, "feature column '" + f.name + "' has wrong length");
    require(f.role == ColumnRole::kRecipient || f.role == ColumnRole::kOrgan, ErrorCode::kData,
            "feature column '" + f.name + "' must be a recipient or organ feature");
  }
  for (const auto& s : sensitive) {
    require(s.values.size() == n, ErrorCode::kData, "sensitive column '" + s.name + "' has wrong length");
    require(s.groups().size() >= 2, ErrorCode::kData,
            "sensitive column '" + s.name + "' needs at least two distinct groups");
  }
  if (has_score()) require(score.size() == n, ErrorCode::kData, "score column has wrong length");
}

Cohort subset(const Cohort& cohort, std::span<const std::size_t> rows) {
  Cohort out;
  out.label_name = cohort.label_name;
  out.score_name = cohort.score_name;
  const std::size_t n = cohort.rows();
  for (std::size_t r : rows) require(r < n, ErrorCode::kIndex, "row index out of range");
  for (const auto& f : cohort.features) {
    FeatureColumn c{f.name, f.kind, f.role, {}, {}};
    if (f.kind == FeatureKind::kNumeric) {
      c.numeric.reserve(rows.size());
      for (std::size_t r : rows) c.numeric.push_back(f.numeric[r]);
    } else {
      c.tokens.reserve(rows.size());
      for (std::size_t r : rows) c.tokens.push_back(f.tokens[r]);
    }
    out.features.push_back(std::move(c));
  }
  for (const auto& s : cohort.sensitive) {
    SensitiveColumn c{s.name, {}};
    c.values.reserve(rows.size());
    for (std::size_t r : rows) c.values.push_back(s.values[r]);
    out.sensitive.push_back(std::move(c));
  }
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(cohort.labels[r]);
  if (cohort.has_score()) {
    for (std::size_t r : rows) out.score.push_back(cohort.score[r]);
  }
  return out;
}

Schema schema_of(const Cohort& cohort) {
  Schema schema;
  for (const auto& f : cohort.features) schema.push_back({f.name, f.kind, f.role});
  for (const auto& s : cohort.sensitive) schema.push_back({s.name, FeatureKind::kCategorical, ColumnRole::kSensitive});
  if (cohort.has_score()) schema.push_back({cohort.score_name, FeatureKind::kNumeric, ColumnRole::kScore});
  schema.push_back({cohort.label_name, FeatureKind::kCategorical, ColumnRole::kLabel});
  return schema;
}

Cohort parse_cohort(std::istream& in, const Schema& schema) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::kData, "cohort file is empty");
  auto header = split_csv_line(line);
  for (auto& h : header) h = trim(h);
  // Strip a UTF-8 byte-order mark if present.
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

  std::vector<int> spec_of_column(header.size(), -1);
  for (std::size_t c = 0; c < header.size(); ++c) {
    for (std::size_t s = 0; s < schema.size(); ++s) {
      if (schema[s].name == header[c]) spec_of_column[c] = static_cast<int>(s);
    }
    if (spec_of_column[c] < 0) fail(ErrorCode::kSchema, "unknown column '" + header[c] + "'");
  }
  for (std::size_t s = 0; s < schema.size(); ++s) {
    const auto hits = std::count(spec_of_column.begin(), spec_of_column.end(), static_cast<int>(s));
    if (hits != 1) fail(ErrorCode::kSchema, "column '" + schema[s].name + "' missing or repeated in header");
  }

  Cohort cohort;
  std::vector<int> slot(schema.size(), -1);
  for (std::size_t s = 0; s < schema.size(); ++s) {
    const auto& spec = schema[s];
    switch (spec.role) {
      case ColumnRole::kRecipient:
      case ColumnRole::kOrgan:
        slot[s] = static_cast<int>(cohort.features.size());
        cohort.features.push_back({spec.name, spec.kind, spec.role, {}, {}});
        break;
      case ColumnRole::kSensitive:
        slot[s] = static_cast<int>(cohort.sensitive.size());
        cohort.sensitive.push_back({spec.name, {}});
        break;
      case ColumnRole::kLabel: cohort.label_name = spec.name; break;
      case ColumnRole::kScore: cohort.score_name = spec.name; break;
    }
  }

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kData, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                 " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const int s = spec_of_column[c];
      const auto& spec = schema[s];
      const std::string cell = trim(fields[c]);
      switch (spec.role) {
        case ColumnRole::kRecipient:
        case ColumnRole::kOrgan: {
          auto& col = cohort.features[slot[s]];
          if (spec.kind == FeatureKind::kNumeric) {
            col.numeric.push_back(parse_double(cell).value_or(kNaN));
          } else if (cell.empty()) {
            col.tokens.push_back(std::nullopt);
          } else {
            col.tokens.push_back(cell);
          }
          break;
        }
        case ColumnRole::kSensitive:
          cohort.sensitive[slot[s]].values.push_back(cell.empty() ? std::string(kMissingToken) : cell);
          break;
        case ColumnRole::kLabel: {
          auto v = parse_double(cell);
          if (!v || (*v != 0.0 && *v != 1.0)) {
            fail(ErrorCode::kData, "line " + std::to_string(line_no) + ": label '" + cell + "' is not 0 or 1");
          }
          cohort.labels.push_back(static_cast<int>(*v));
          break;
        }
        case ColumnRole::kScore: cohort.score.push_back(parse_double(cell).value_or(kNaN)); break;
      }
    }
  }
  cohort.validate();
  return cohort;
}

Cohort load_cohort(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open cohort file " + path);
  return parse_cohort(in, schema);
}

void write_cohort_csv(const Cohort& cohort, std::ostream& out) {
  const Schema schema = schema_of(cohort);
  for (std::size_t c = 0; c < schema.size(); ++c) out << (c ? "," : "") << csv_escape(schema[c].name);
  out << "\n";
  for (std::size_t r = 0; r < cohort.rows(); ++r) {
    bool first = true;
    auto sep = [&]() -> std::ostream& {
      if (!first) out << ",";
      first = false;
      return out;
    };
    for (const auto& f : cohort.features) {
      if (f.kind == FeatureKind::kNumeric) {
        sep() << (is_missing(f.numeric[r]) ? std::string() : format_double(f.numeric[r]));
      } else {
        sep() << (f.tokens[r] ? csv_escape(*f.tokens[r]) : std::string());
      }
    }
    for (const auto& s : cohort.sensitive) sep() << csv_escape(s.values[r]);
    if (cohort.has_score()) sep() << (is_missing(cohort.score[r]) ? std::string() : format_double(cohort.score[r]));
    sep() << cohort.labels[r];
    out << "\n";
  }
}

Cohort impute_missing(Cohort cohort) {
  for (auto& f : cohort.features) {
    if (f.kind == FeatureKind::kNumeric) {
      for (double& v : f.numeric) {
        if (is_missing(v)) v = 0.0;
      }
    } else {
      for (auto& t : f.tokens) {
        if (!t) t = std::string(kMissingToken);
      }
    }
  }
  return cohort;
}

Vocabulary fit_vocabulary(std::span<const std::optional<std::string>> column) {
  Vocabulary vocab;
  std::unordered_map<std::string, int> seen;
  for (const auto& t : column) {
    const std::string token = t ? *t : std::string(kMissingToken);
    if (seen.emplace(token, static_cast<int>(vocab.size())).second) vocab.push_back(token);
  }
  if (!seen.contains(std::string(kMissingToken))) vocab.emplace_back(kMissingToken);
  return vocab;
}

int vocabulary_index(const Vocabulary& vocab, std::string_view token) {
  if (vocab.empty()) fail(ErrorCode::kConfiguration, "empty vocabulary");
  int na = -1;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i] == token) return static_cast<int>(i);
    if (vocab[i] == kMissingToken) na = static_cast<int>(i);
  }
  if (na < 0) fail(ErrorCode::kData, "token '" + std::string(token) + "' unseen and vocabulary has no <NA> slot");
  return na;
}

std::vector<int> encode_integer(std::span<const std::string> column, const Vocabulary& vocab) {
  if (vocab.empty()) fail(ErrorCode::kConfiguration, "empty vocabulary");
  std::unordered_map<std::string_view, int> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], static_cast<int>(i));
  std::vector<int> codes;
  codes.reserve(column.size());
  for (const auto& v : column) {
    auto it = index.find(v);
    codes.push_back(it != index.end() ? it->second : vocabulary_index(vocab, v));
  }
  return codes;
}

Matrix encode_onehot(std::span<const std::string> column, const Vocabulary& vocab) {
  const auto codes = encode_integer(column, vocab);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(column.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) out(static_cast<Eigen::Index>(i), codes[i]) = 1.0;
  return out;
}

std::vector<int> FeatureViews::cardinalities() const {
  std::vector<int> out;
  for (const auto& v : vocabularies) out.push_back(static_cast<int>(v.size()));
  return out;
}

Matrix FeatureViews::onehot() const {
  Matrix out = Matrix::Zero(sparse.rows(), onehot_dim);
  int offset = 0;
  for (Eigen::Index j = 0; j < sparse.cols(); ++j) {
    for (Eigen::Index i = 0; i < sparse.rows(); ++i) out(i, offset + sparse(i, j)) = 1.0;
    offset += static_cast<int>(vocabularies[j].size());
  }
  return out;
}

std::vector<Vocabulary> fit_vocabularies(const Cohort& train) {
  std::vector<Vocabulary> out;
  for (const auto& f : train.features) {
    if (f.kind == FeatureKind::kCategorical) out.push_back(fit_vocabulary(f.tokens));
  }
  return out;
}

FeatureViews build_feature_views(const Cohort& cohort, const std::vector<Vocabulary>& vocabs) {
  std::vector<const FeatureColumn*> numeric, categorical;
  for (const auto& f : cohort.features) {
    (f.kind == FeatureKind::kNumeric ? numeric : categorical).push_back(&f);
  }
  if (categorical.size() != vocabs.size()) {
    fail(ErrorCode::kSchema, "expected " + std::to_string(categorical.size()) + " vocabularies, got " +
                                 std::to_string(vocabs.size()));
  }
  const auto n = static_cast<Eigen::Index>(cohort.rows());
  const auto s = static_cast<Eigen::Index>(categorical.size());
  FeatureViews views;
  views.vocabularies = vocabs;
  views.sparse.resize(n, s);
  views.dense.resize(n, s + static_cast<Eigen::Index>(numeric.size()));
  std::vector<std::string> tokens(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < s; ++j) {
    const auto& col = *categorical[j];
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = col.tokens[i];
      if (!t) fail(ErrorCode::kData, "column '" + col.name + "' has missing cells; impute first");
      tokens[i] = *t;
    }
    const auto codes = encode_integer(tokens, vocabs[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      views.sparse(i, j) = codes[i];
      views.dense(i, j) = codes[i];
    }
    views.dense_names.push_back(col.name);
    views.onehot_dim += static_cast<int>(vocabs[j].size());
  }
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    const auto& col = *numeric[k];
    const Eigen::Index j = s + static_cast<Eigen::Index>(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v = col.numeric[i];
      if (is_missing(v)) fail(ErrorCode::kData, "column '" + col.name + "' has missing cells; impute first");
      views.dense(i, j) = v;
    }
    views.dense_names.push_back(col.name);
  }
  return views;
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const Eigen::Index n = x.rows();
  s.mean = n > 0 ? RowVector(x.colwise().mean()) : RowVector::Zero(x.cols());
  s.scale = RowVector::Ones(x.cols());
  if (n > 1) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double var = (x.col(j).array() - s.mean(j)).square().sum() / static_cast<double>(n);
      if (var > 1e-24) s.scale(j) = std::sqrt(var);
    }
  }
  return s;
}

Standardizer Standardizer::identity(Eigen::Index cols) {
  return {RowVector::Zero(cols), RowVector::Ones(cols)};
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) fail(ErrorCode::kShape, "standardizer width mismatch");
  return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
}

std::vector<std::size_t> FoldPlan::train_rows(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::test_rows(int fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::kConfiguration, "fold count must be at least 2");
  if (static_cast<std::size_t>(k) > n) fail(ErrorCode::kConfiguration, "more folds than rows");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "kfold"));
  rng.shuffle(std::span<std::size_t>(order));
  FoldPlan plan{k, std::vector<int>(n, 0), seed};
  for (std::size_t pos = 0; pos < n; ++pos) plan.assignments[order[pos]] = static_cast<int>(pos % k);
  return plan;
}

void SynthConfig::validate() const {
  require(n_rows >= 10, ErrorCode::kConfiguration, "n_rows must be at least 10");
  require(n_numeric >= 0 && n_categorical >= 0, ErrorCode::kConfiguration, "feature counts must be non-negative");
  require(n_numeric + n_categorical >= 1, ErrorCode::kConfiguration, "need at least one feature");
  require(category_cardinality >= 2, ErrorCode::kConfiguration, "category_cardinality must be at least 2");
  require(label_noise >= 0.0 && label_noise <= 0.5, ErrorCode::kConfiguration, "label_noise must be in [0, 0.5]");
  require(missing_rate >= 0.0 && missing_rate < 1.0, ErrorCode::kConfiguration, "missing_rate must be in [0, 1)");
  require(proxy_features >= 0 && proxy_features <= n_numeric, ErrorCode::kConfiguration,
          "proxy_features must be within [0, n_numeric]");
  require(proxy_categoricals >= 0 && proxy_categoricals <= n_categorical, ErrorCode::kConfiguration,
          "proxy_categoricals must be within [0, n_categorical]");
  require(score_signal >= -1.0 && score_signal <= 1.0, ErrorCode::kConfiguration, "score_signal must be in [-1, 1]");
  require(signal_weights.empty() || signal_weights.size() == static_cast<std::size_t>(n_numeric + n_categorical),
          ErrorCode::kConfiguration, "signal_weights must have one entry per feature");
  for (const auto& a : attributes) {
    require(!a.name.empty(), ErrorCode::kConfiguration, "sensitive attribute needs a name");
    require(a.groups.size() >= 2, ErrorCode::kConfiguration, "attribute '" + a.name + "' needs at least two groups");
    double total = 0.0;
    for (const auto& g : a.groups) {
      require(g.proportion >= 0.0, ErrorCode::kConfiguration, "group proportions must be non-negative");
      require(g.category_bias >= 0.0 && g.category_bias <= 1.0, ErrorCode::kConfiguration,
              "category_bias must be in [0, 1]");
      total += g.proportion;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorCode::kConfiguration,
            "group proportions of '" + a.name + "' must sum to 1");
  }
}

std::vector<double> SynthConfig::resolved_weights() const {
  if (!signal_weights.empty()) return signal_weights;
  Rng rng(derive_seed(seed, "signal_weights"));
  std::vector<double> w(static_cast<std::size_t>(n_numeric + n_categorical));
  for (double& v : w) v = rng.uniform(-signal_scale, signal_scale);
  return w;
}

namespace {

// Exact group counts by largest remainder, then shuffled.
std::vector<int> allocate_groups(std::size_t n, const SensitiveSpec& spec, Rng& rng) {
  const std::size_t g = spec.groups.size();
  std::vector<std::size_t> counts(g);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < g; ++k) {
    const double exact = spec.groups[k].proportion * static_cast<double>(n);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) counts[remainders[k % g].second] += 1;
  std::vector<int> out;
  out.reserve(n);
  for (std::size_t k = 0; k < g; ++k) out.insert(out.end(), counts[k], static_cast<int>(k));
  rng.shuffle(std::span<int>(out));
  return out;
}

}  // namespace

Cohort synth_generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.n_rows;
  const auto weights = config.resolved_weights();

  std::vector<std::vector<int>> group_of;
  for (const auto& a : config.attributes) {
    Rng rng(derive_seed(config.seed, "group/" + a.name));
    group_of.push_back(allocate_groups(n, a, rng));
  }

  Rng feature_rng(derive_seed(config.seed, "features"));
  const int n_num = config.n_numeric, n_cat = config.n_categorical, card = config.category_cardinality;
  Matrix numeric(static_cast<Eigen::Index>(n), n_num);
  IndexMatrix codes(static_cast<Eigen::Index>(n), n_cat);
  for (std::size_t i = 0; i < n; ++i) {
    double proxy_shift = 0.0;
    for (std::size_t a = 0; a < config.attributes.size(); ++a) {
      proxy_shift += config.attributes[a].groups[group_of[a][i]].feature_shift;
    }
    for (int j = 0; j < n_num; ++j) {
      numeric(i, j) = feature_rng.normal() + (j < config.proxy_features ? proxy_shift : 0.0);
    }
    for (int j = 0; j < n_cat; ++j) codes(i, j) = static_cast<int>(feature_rng.below(card));
  }
  if (config.proxy_categoricals > 0) {
    Rng proxy_rng(derive_seed(config.seed, "category_proxy"));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t a = 0; a < config.attributes.size(); ++a) {
        const int g = group_of[a][i];
        const double bias = config.attributes[a].groups[g].category_bias;
        for (int j = 0; j < config.proxy_categoricals; ++j) {
          if (proxy_rng.bernoulli(bias)) codes(i, j) = g % card;
        }
      }
    }
  }

  std::vector<double> logits(n, config.intercept);
  for (std::size_t i = 0; i < n; ++i) {
    double z = config.intercept;
    for (int j = 0; j < n_num; ++j) z += weights[j] * numeric(i, j);
    for (int j = 0; j < n_cat; ++j) {
      z += weights[n_num + j] * (2.0 * codes(i, j) / static_cast<double>(card - 1) - 1.0);
    }
    for (std::size_t a = 0; a < config.attributes.size(); ++a) {
      z += config.attributes[a].groups[group_of[a][i]].base_rate_shift;
    }
    logits[i] = z;
  }

  Cohort cohort;
  cohort.label_name = "graft_failed";
  Rng label_rng(derive_seed(config.seed, "labels"));
  Rng noise_rng(derive_seed(config.seed, "label_noise"));
  cohort.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int y = label_rng.bernoulli(sigmoid(logits[i])) ? 1 : 0;
    if (noise_rng.bernoulli(config.label_noise)) y = 1 - y;
    cohort.labels[i] = y;
  }

  // Recipient columns take the first half (rounded up) of each kind.
  const int r_num = (n_num + 1) / 2, r_cat = (n_cat + 1) / 2;
  Rng missing_rng(derive_seed(config.seed, "missing"));
  auto add_numeric = [&](int j, ColumnRole role, const std::string& name) {
    FeatureColumn col{name, FeatureKind::kNumeric, role, {}, {}};
    col.numeric.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      col.numeric[i] = missing_rng.bernoulli(config.missing_rate) ? kNaN : numeric(i, j);
    }
    cohort.features.push_back(std::move(col));
  };
  auto add_categorical = [&](int j, ColumnRole role, const std::string& name) {
    FeatureColumn col{name, FeatureKind::kCategorical, role, {}, {}};
    col.tokens.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!missing_rng.bernoulli(config.missing_rate)) col.tokens[i] = "c" + std::to_string(codes(i, j));
    }
    cohort.features.push_back(std::move(col));
  };
  for (int j = 0; j < r_num; ++j) add_numeric(j, ColumnRole::kRecipient, "r_num_" + std::to_string(j));
  for (int j = 0; j < r_cat; ++j) add_categorical(j, ColumnRole::kRecipient, "r_cat_" + std::to_string(j));
  for (int j = r_num; j < n_num; ++j) add_numeric(j, ColumnRole::kOrgan, "o_num_" + std::to_string(j - r_num));
  for (int j = r_cat; j < n_cat; ++j) add_categorical(j, ColumnRole::kOrgan, "o_cat_" + std::to_string(j - r_cat));

  for (std::size_t a = 0; a < config.attributes.size(); ++a) {
    SensitiveColumn col{config.attributes[a].name, {}};
    col.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) col.values.push_back(config.attributes[a].groups[group_of[a][i]].label);
    cohort.sensitive.push_back(std::move(col));
  }

  // Score column: a standardized mix of the true logit and independent noise.
  const double mean = std::accumulate(logits.begin(), logits.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double z : logits) var += (z - mean) * (z - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  Rng score_rng(derive_seed(config.seed, "score"));
  const double rho = config.score_signal;
  cohort.score_name = "meld";
  cohort.score.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = sd > 0 ? (logits[i] - mean) / sd : 0.0;
    cohort.score[i] = 20.0 + 6.0 * (rho * z + std::sqrt(1.0 - rho * rho) * score_rng.normal());
  }

  cohort.validate();
  return cohort;
}

}  // namespace fairkd
