#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "fairkd/dataio.hpp"
#include "test_util.hpp"

using namespace fairkd;

namespace {

const char* kSchema =
    "# toy cohort\n"
    "age,numeric,recipient\n"
    "blood,categorical,recipient\n"
    "donor_age,numeric,organ\n"
    "sex,categorical,sensitive\n"
    "meld,numeric,score\n"
    "failed,categorical,label\n";

const char* kCsv =
    "age,blood,donor_age,sex,meld,failed\n"
    "50,A,30,F,20,1\n"
    "61,,45,M,,0\n"
    ",B,52,F,31,1\n"
    "40,A,,M,12,0\n";

SynthConfig two_group_synth() {
  SynthConfig c;
  c.n_rows = 4000;
  c.n_numeric = 4;
  c.n_categorical = 2;
  c.proxy_features = 2;
  c.proxy_categoricals = 1;
  c.seed = 17;
  c.attributes = {{"race",
                   {{"A", 0.7, 0.8, 1.0, 0.6}, {"B", 0.3, -0.8, -1.0, 0.6}}}};
  return c;
}

double group_mean(const Cohort& c, const std::vector<double>& v, const std::string& group) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    if (c.sensitive[0].values[i] != group) continue;
    s += v[i];
    ++n;
  }
  return s / n;
}

}  // namespace

TEST_CASE("schema parsing and formatting") {
  const Schema s = parse_schema(kSchema);
  REQUIRE(s.size() == 6);
  CHECK(s[1].kind == FeatureKind::kCategorical);
  CHECK(s[2].role == ColumnRole::kOrgan);
  CHECK(parse_schema(format_schema(s)).size() == 6);
  CHECK_ERROR_CODE(parse_schema("a,numeric\n"), ErrorCode::kSchema);
  CHECK_ERROR_CODE(parse_schema("a,text,recipient\ny,categorical,label\n"), ErrorCode::kSchema);
  CHECK_ERROR_CODE(parse_schema("a,numeric,recipient\n"), ErrorCode::kSchema);
  CHECK_ERROR_CODE(parse_schema("a,numeric,recipient\na,numeric,organ\ny,categorical,label\n"), ErrorCode::kSchema);
}

TEST_CASE("cohort parsing keeps missing cells and roles") {
  std::istringstream in(kCsv);
  const Cohort c = parse_cohort(in, parse_schema(kSchema));
  CHECK(c.rows() == 4);
  CHECK(c.recipient_count() == 2);
  CHECK(c.organ_count() == 1);
  CHECK(c.labels == std::vector<int>{1, 0, 1, 0});
  CHECK(std::isnan(c.features[0].numeric[2]));
  CHECK_FALSE(c.features[1].tokens[1].has_value());
  CHECK(std::isnan(c.score[1]));
  CHECK(c.sensitive_column("sex").groups() == std::vector<std::string>{"F", "M"});
  CHECK_ERROR_CODE(c.sensitive_column("race"), ErrorCode::kConfiguration);

  std::ostringstream out;
  write_cohort_csv(c, out);
  std::istringstream back(out.str());
  const Cohort again = parse_cohort(back, schema_of(c));
  std::ostringstream out2;
  write_cohort_csv(again, out2);
  CHECK(out.str() == out2.str());
}

TEST_CASE("malformed cohort files") {
  const Schema s = parse_schema(kSchema);
  auto parse = [&](const std::string& text) {
    std::istringstream in(text);
    return parse_cohort(in, s);
  };
  CHECK_ERROR_CODE(parse(""), ErrorCode::kData);
  CHECK_ERROR_CODE(parse("age,blood,donor_age,sex,meld\n"), ErrorCode::kSchema);
  CHECK_ERROR_CODE(parse("age,blood,donor_age,sex,meld,failed\n1,A,2,F,3\n"), ErrorCode::kData);
  CHECK_ERROR_CODE(parse("age,blood,donor_age,sex,meld,failed\n1,A,2,F,3,2\n"), ErrorCode::kData);
  CHECK_ERROR_CODE(load_cohort("/nonexistent/cohort.csv", s), ErrorCode::kIo);
}

TEST_CASE("imputation, vocabularies and feature views") {
  std::istringstream in(kCsv);
  const Cohort c = impute_missing(parse_cohort(in, parse_schema(kSchema)));
  CHECK(c.features[0].numeric[2] == 0.0);
  CHECK(*c.features[1].tokens[1] == kMissingToken);

  const auto vocabs = fit_vocabularies(c);
  REQUIRE(vocabs.size() == 1);
  CHECK(vocabs[0] == Vocabulary{"A", "<NA>", "B"});
  CHECK(vocabulary_index(vocabs[0], "Z") == 1);
  CHECK_ERROR_CODE(vocabulary_index(Vocabulary{"A"}, "Z"), ErrorCode::kData);

  const FeatureViews v = build_feature_views(c, vocabs);
  CHECK(v.dense.cols() == 3);
  CHECK(v.sparse.cols() == 1);
  CHECK(v.dense_names == std::vector<std::string>{"blood", "age", "donor_age"});
  CHECK(v.dense(2, 0) == 2.0);
  CHECK(v.dense(3, 2) == 0.0);
  const Matrix onehot = v.onehot();
  CHECK(onehot.cols() == 3);
  for (Eigen::Index i = 0; i < onehot.rows(); ++i) CHECK(onehot.row(i).sum() == 1.0);

  std::istringstream raw(kCsv);
  CHECK_ERROR_CODE(build_feature_views(parse_cohort(raw, parse_schema(kSchema)), vocabs), ErrorCode::kData);
}

TEST_CASE("standardizer") {
  Matrix x(4, 2);
  x << 1, 5, 2, 5, 3, 5, 4, 5;
  const Standardizer s = Standardizer::fit(x);
  const Matrix z = s.apply(x);
  CHECK(std::abs(z.col(0).mean()) < 1e-15);
  CHECK(z.col(0).squaredNorm() / 4 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.scale(1) == 1.0);
  CHECK(z.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK_ERROR_CODE(s.apply(Matrix::Zero(1, 3)), ErrorCode::kShape);
}

TEST_CASE("k-fold plans partition the rows") {
  const FoldPlan plan = kfold_split(103, 5, 7);
  std::vector<int> seen(103, 0);
  for (int f = 0; f < 5; ++f) {
    const auto test = plan.test_rows(f), train = plan.train_rows(f);
    CHECK(test.size() + train.size() == 103);
    CHECK((test.size() == 20 || test.size() == 21));
    for (auto i : test) ++seen[i];
    std::set<std::size_t> both(test.begin(), test.end());
    for (auto i : train) CHECK(both.count(i) == 0);
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  CHECK(kfold_split(103, 5, 7).assignments == plan.assignments);
  CHECK(kfold_split(103, 5, 8).assignments != plan.assignments);
  CHECK_ERROR_CODE(kfold_split(10, 1, 0), ErrorCode::kConfiguration);
  CHECK_ERROR_CODE(kfold_split(3, 5, 0), ErrorCode::kConfiguration);
}

TEST_CASE("subset picks rows in order") {
  std::istringstream in(kCsv);
  const Cohort c = parse_cohort(in, parse_schema(kSchema));
  const std::vector<std::size_t> rows{3, 0};
  const Cohort s = subset(c, rows);
  CHECK(s.labels == std::vector<int>{0, 1});
  CHECK(s.sensitive[0].values == std::vector<std::string>{"M", "F"});
}

TEST_CASE("synthetic cohorts carry the configured biases") {
  const SynthConfig config = two_group_synth();
  const Cohort c = synth_generate(config);
  CHECK(c.rows() == 4000);
  CHECK_NOTHROW(c.validate());
  std::ostringstream a, b;
  write_cohort_csv(c, a);
  write_cohort_csv(synth_generate(config), b);
  CHECK(a.str() == b.str());

  int in_a = 0;
  for (const auto& v : c.sensitive[0].values) in_a += v == "A";
  CHECK(in_a / 4000.0 == doctest::Approx(0.7).epsilon(0.05));

  std::vector<double> labels(c.labels.begin(), c.labels.end());
  CHECK(group_mean(c, labels, "A") > group_mean(c, labels, "B") + 0.1);

  // Proxy numeric columns shift with the group; the rest do not.
  const auto& proxy = c.features[0].numeric;
  CHECK(group_mean(c, proxy, "A") - group_mean(c, proxy, "B") == doctest::Approx(2.0).epsilon(0.1));
  const auto& plain = c.features[3].kind == FeatureKind::kNumeric ? c.features[3].numeric : c.features[2].numeric;
  CHECK(std::abs(group_mean(c, plain, "A") - group_mean(c, plain, "B")) < 0.15);

  // The first categorical column leans towards the group's own code.
  const FeatureColumn* cat = nullptr;
  for (const auto& f : c.features) {
    if (f.kind == FeatureKind::kCategorical && !cat) cat = &f;
  }
  REQUIRE(cat);
  std::map<std::string, int> counts_b;
  int n_b = 0;
  for (std::size_t i = 0; i < c.rows(); ++i) {
    if (c.sensitive[0].values[i] != "B") continue;
    ++counts_b[*cat->tokens[i]];
    ++n_b;
  }
  CHECK(counts_b["c1"] / static_cast<double>(n_b) == doctest::Approx(0.6 + 0.4 / 4).epsilon(0.08));
}

TEST_CASE("synthetic configuration checks") {
  SynthConfig c = two_group_synth();
  c.attributes[0].groups[0].proportion = 0.5;
  CHECK_ERROR_CODE(c.validate(), ErrorCode::kConfiguration);
  c = two_group_synth();
  c.proxy_categoricals = 3;
  CHECK_ERROR_CODE(c.validate(), ErrorCode::kConfiguration);
  c = two_group_synth();
  c.attributes[0].groups[1].category_bias = 1.5;
  CHECK_ERROR_CODE(c.validate(), ErrorCode::kConfiguration);
  c = two_group_synth();
  c.signal_weights = {1.0};
  CHECK_ERROR_CODE(c.validate(), ErrorCode::kConfiguration);
  c = two_group_synth();
  c.missing_rate = 0.2;
  const Cohort m = synth_generate(c);
  int missing = 0;
  for (double v : m.features[0].numeric) missing += std::isnan(v) ? 1 : 0;
  CHECK(missing / 4000.0 == doctest::Approx(0.2).epsilon(0.15));
}
