#include "fairkd/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <thread>

#include "fairkd/hashing.hpp"
#include "fairkd/rng.hpp"
#include "fairkd/serialize.hpp"

namespace fairkd {

Preprocessor Preprocessor::fit(const Cohort& train) { return {fit_vocabularies(impute_missing(train))}; }

FeatureViews Preprocessor::transform(const Cohort& cohort) const {
  return build_feature_views(impute_missing(cohort), vocabularies);
}

GroupIndex index_groups(const SensitiveColumn& column) {
  GroupIndex out;
  std::map<std::string, int> ids;
  for (const auto& v : column.values) ids.emplace(v, 0);
  int next = 0;
  for (auto& [label, id] : ids) {
    id = next++;
    out.labels.push_back(label);
  }
  out.counts.assign(out.labels.size(), 0);
  out.ids.reserve(column.values.size());
  for (const auto& v : column.values) {
    const int id = ids.at(v);
    out.ids.push_back(id);
    ++out.counts[static_cast<std::size_t>(id)];
  }
  return out;
}

int majority_group(const GroupIndex& groups) {
  if (groups.counts.empty()) fail(ErrorCode::kData, "sensitive column is empty");
  return static_cast<int>(std::max_element(groups.counts.begin(), groups.counts.end()) - groups.counts.begin());
}

std::vector<double> score_column(const Cohort& cohort) {
  if (!cohort.has_score()) fail(ErrorCode::kConfiguration, "cohort has no score column");
  std::vector<double> out(cohort.score);
  for (double& v : out) {
    if (is_missing(v)) v = 0.0;
  }
  return out;
}

namespace {

Vector sigmoid_all(const Vector& z) {
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

const SensitiveColumn& training_attribute(const Cohort& cohort, const std::string& name) {
  if (cohort.sensitive.empty()) fail(ErrorCode::kConfiguration, "the fair model needs a sensitive attribute");
  return name.empty() ? cohort.sensitive.front() : cohort.sensitive_column(name);
}

}  // namespace

Vector GbdtScorer::score(const Cohort& cohort) const {
  return sigmoid_all(predict_margin(model_, prep_.transform(cohort).dense));
}

Vector RfScorer::score(const Cohort& cohort) const { return predict_proba(model_, prep_.transform(cohort).dense); }

Matrix LogisticScorer::design(const FeatureViews& views, const Standardizer& standardizer) {
  const Matrix dense = standardizer.apply(views.dense);
  const Matrix onehot = views.onehot();
  Matrix x(dense.rows(), dense.cols() + onehot.cols());
  x << dense, onehot;
  return x;
}

Vector LogisticScorer::score(const Cohort& cohort) const {
  return model_.predict_proba(design(prep_.transform(cohort), standardizer_));
}

Vector MeldScorer::score(const Cohort& cohort) const {
  const auto s = score_column(cohort);
  const Matrix x = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return model_.predict_proba(x);
}

Vector FairScorer::score(const Cohort& cohort) const { return model_->predict(prep_.transform(cohort)); }

FairStage prepare_fair_stage(const Cohort& train, const TrainConfig& config, const GbdtParams& gbdt,
                             std::uint64_t seed, const GbdtModel* teacher) {
  config.validate();
  FairStage stage;
  stage.prep = Preprocessor::fit(train);
  stage.views = stage.prep.transform(train);
  stage.labels = train.labels;
  stage.groups = index_groups(training_attribute(train, config.sensitive));
  stage.majority = majority_group(stage.groups);
  if (teacher != nullptr) {
    if (teacher->input_width != stage.views.dense.cols()) fail(ErrorCode::kShape, "cached teacher width mismatch");
    stage.teacher = *teacher;
  } else {
    GbdtParams params = gbdt;
    params.seed = derive_seed(seed, "teacher");
    stage.teacher = fit_gbdt(stage.views.dense, stage.labels, params);
  }
  stage.tree_groups = group_trees(stage.teacher, std::min<int>(config.n_groups, static_cast<int>(stage.teacher.trees.size())));
  stage.standardizer = config.standardize ? Standardizer::fit(stage.views.dense)
                                          : Standardizer::identity(stage.views.dense.cols());
  for (std::size_t g = 0; g < stage.tree_groups.size(); ++g) {
    const TreeGroup& group = stage.tree_groups[g];
    if (config.raw_leaf_targets) {
      stage.embeddings.push_back(LeafEmbedding::raw(group, stage.teacher.learning_rate));
      continue;
    }
    const IndexMatrix codes = group_leaf_codes(stage.teacher, group, stage.views.dense);
    const Vector margins = group_margins(stage.teacher, group, codes);
    // Narrow groups cannot host a d_leaf-wide embedding below their leaf count.
    const int dim = std::min(config.d_leaf, std::max(1, group.leaf_dim - 1));
    TrainSchedule schedule{config.embedding_epochs, config.embedding_lr, config.batch_size,
                           derive_seed(seed, "leaf_embedding", g)};
    stage.embeddings.push_back(fit_leaf_embedding(group, codes, margins, dim, schedule));
  }
  return stage;
}

DistilledNet run_step_one(const FairStage& stage, const TrainConfig& config, std::uint64_t seed,
                          std::vector<DistillEpochLog>* log) {
  DistillOptions options;
  options.hidden = config.hidden;
  options.schedule = {config.distill_epochs, config.distill_lr, config.batch_size, derive_seed(seed, "distill")};
  options.alpha_kg = config.alpha_kg;
  options.squash = config.squash_step1;
  DistilledNet net = distill_dense_net(stage.views.dense, stage.standardizer, stage.teacher, stage.tree_groups,
                                       stage.embeddings, stage.groups.ids, stage.majority, options, log);
  net.teacher_hash = git_blob_hash(dump(gbdt_to_json(stage.teacher)));
  return net;
}

std::unique_ptr<FusionModel> run_step_two(const FairStage& stage, DistilledNet dense, const TrainConfig& config,
                                          std::uint64_t seed, std::vector<EndToEndEpochLog>* log) {
  CatNNConfig cat;
  cat.embedding_dim = config.cat_embedding_dim;
  cat.hidden = config.hidden;
  cat.seed = derive_seed(seed, "catnn");
  auto model = std::make_unique<FusionModel>(CatNN(stage.views.cardinalities(), cat), std::move(dense));
  TrainConfig e2e = config;
  e2e.seed = derive_seed(seed, "end_to_end");
  train_end_to_end(*model, stage.views, stage.labels, stage.groups.ids, stage.majority, e2e, log);
  return model;
}

std::unique_ptr<FairScorer> two_step_train(const Cohort& train, const TrainConfig& config, const GbdtParams& gbdt,
                                           std::uint64_t seed, TwoStepLogs* logs) {
  FairStage stage = prepare_fair_stage(train, config, gbdt, seed);
  DistilledNet dense = run_step_one(stage, config, seed, logs != nullptr ? &logs->step_one : nullptr);
  auto model = run_step_two(stage, std::move(dense), config, seed, logs != nullptr ? &logs->step_two : nullptr);
  return std::make_unique<FairScorer>(stage.prep, std::move(model));
}

ModelFactory make_factory(std::string_view model, const ModelSettings& settings) {
  if (model == "gbdt") {
    return [settings](const Cohort& train, std::uint64_t seed) -> std::unique_ptr<Scorer> {
      Preprocessor prep = Preprocessor::fit(train);
      GbdtParams params = settings.gbdt;
      params.seed = derive_seed(seed, "teacher");
      auto fitted = fit_gbdt(prep.transform(train).dense, train.labels, params);
      return std::make_unique<GbdtScorer>(std::move(prep), std::move(fitted));
    };
  }
  if (model == "rf") {
    return [settings](const Cohort& train, std::uint64_t seed) -> std::unique_ptr<Scorer> {
      Preprocessor prep = Preprocessor::fit(train);
      RfParams params = settings.rf;
      params.seed = derive_seed(seed, "rf");
      auto fitted = fit_random_forest(prep.transform(train).dense, train.labels, params);
      return std::make_unique<RfScorer>(std::move(prep), std::move(fitted));
    };
  }
  if (model == "logistic") {
    return [settings](const Cohort& train, std::uint64_t) -> std::unique_ptr<Scorer> {
      Preprocessor prep = Preprocessor::fit(train);
      const FeatureViews views = prep.transform(train);
      Standardizer standardizer = Standardizer::fit(views.dense);
      auto fitted = fit_logistic(LogisticScorer::design(views, standardizer), train.labels, settings.logistic);
      return std::make_unique<LogisticScorer>(std::move(prep), std::move(standardizer), std::move(fitted));
    };
  }
  if (model == "meld") {
    return [settings](const Cohort& train, std::uint64_t) -> std::unique_ptr<Scorer> {
      return std::make_unique<MeldScorer>(fit_meld_classifier(score_column(train), train.labels, settings.logistic));
    };
  }
  if (model == "fair") {
    return [settings](const Cohort& train, std::uint64_t seed) -> std::unique_ptr<Scorer> {
      return two_step_train(train, settings.train, settings.gbdt, seed);
    };
  }
  fail(ErrorCode::kUsage, "unknown model '" + std::string(model) + "' (expected meld, logistic, rf, gbdt or fair)");
}

const AttributeSummary& FairnessReport::attribute(std::string_view name) const {
  for (const auto& a : attributes) {
    if (a.attribute == name) return a;
  }
  fail(ErrorCode::kConfiguration, "report has no attribute '" + std::string(name) + "'");
}

FoldResult evaluate_scores(const Cohort& test, const Vector& scores, double threshold, int fold) {
  if (static_cast<std::size_t>(scores.size()) != test.rows()) fail(ErrorCode::kShape, "one score per row required");
  FoldResult result;
  result.fold = fold;
  const std::span<const double> s(scores.data(), static_cast<std::size_t>(scores.size()));
  result.auc = roc_auc(s, test.labels);
  const auto predictions = binarize(s, threshold);
  for (const auto& column : test.sensitive) {
    const GroupIndex groups = index_groups(column);
    AttributeMetrics m;
    m.attribute = column.name;
    m.group_labels = groups.labels;
    m.positive_rates = positive_rates(predictions, groups.ids);
    m.dpd = dpd(predictions, groups.ids);
    EodResult e = eod_detail(predictions, test.labels, groups.ids);
    m.eod = e.value;
    // Group ids in warnings index group_labels.
    m.warnings = std::move(e.warnings);
    result.attributes.push_back(std::move(m));
  }
  return result;
}

FairnessReport summarize(std::string model, std::string sensitive, double threshold, std::vector<FoldResult> folds) {
  FairnessReport report;
  report.model = std::move(model);
  report.sensitive = std::move(sensitive);
  report.threshold = threshold;
  report.folds = std::move(folds);
  std::vector<double> aucs;
  for (const auto& f : report.folds) aucs.push_back(f.auc);
  report.auc = mean_std(aucs);
  if (!report.folds.empty()) {
    for (std::size_t a = 0; a < report.folds.front().attributes.size(); ++a) {
      std::vector<double> dpds, eods;
      for (const auto& f : report.folds) {
        dpds.push_back(f.attributes.at(a).dpd);
        eods.push_back(f.attributes.at(a).eod);
      }
      report.attributes.push_back({report.folds.front().attributes[a].attribute, mean_std(dpds), mean_std(eods)});
    }
  }
  return report;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& work) {
  if (n <= 0) return;
  jobs = std::clamp(jobs, 1, n);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto run = [&](int i) {
    try {
      work(i);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  };
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) {
      threads.emplace_back([&] {
        for (int i = next++; i < n; i = next++) run(i);
      });
    }
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

FairnessReport evaluate_folds(const ModelFactory& factory, const Cohort& cohort, const FoldPlan& plan,
                              std::string_view sensitive, double threshold, std::uint64_t seed,
                              std::string model_name, int jobs) {
  if (plan.assignments.size() != cohort.rows()) fail(ErrorCode::kShape, "fold plan does not match the cohort");
  std::vector<FoldResult> results(static_cast<std::size_t>(plan.k));
  parallel_for(plan.k, jobs, [&](int f) {
    const auto train_rows = plan.train_rows(f);
    const auto test_rows = plan.test_rows(f);
    const Cohort train = subset(cohort, train_rows);
    const Cohort test = subset(cohort, test_rows);
    auto model = factory(train, derive_seed(seed, "fold", static_cast<std::uint64_t>(f)));
    results[static_cast<std::size_t>(f)] = evaluate_scores(test, model->score(test), threshold, f);
  });
  return summarize(std::move(model_name), std::string(sensitive), threshold, std::move(results));
}

std::vector<FairnessReport> run_ablation(const Cohort& cohort, const FoldPlan& plan, const ModelSettings& settings,
                                         std::uint64_t seed, int jobs, const TeacherHooks& hooks) {
  if (plan.assignments.size() != cohort.rows()) fail(ErrorCode::kShape, "fold plan does not match the cohort");
  constexpr std::size_t kRows = std::size(kAblationRows);
  std::vector<std::vector<FoldResult>> results(kRows, std::vector<FoldResult>(static_cast<std::size_t>(plan.k)));
  parallel_for(plan.k, jobs, [&](int f) {
    const Cohort train = subset(cohort, plan.train_rows(f));
    const Cohort test = subset(cohort, plan.test_rows(f));
    const std::uint64_t fold_seed = derive_seed(seed, "fold", static_cast<std::uint64_t>(f));
    std::optional<GbdtModel> cached;
    if (hooks.load) cached = hooks.load(f);
    const FairStage stage =
        prepare_fair_stage(train, settings.train, settings.gbdt, fold_seed, cached ? &*cached : nullptr);
    if (hooks.store) hooks.store(f, stage.teacher);
    const FeatureViews test_views = stage.prep.transform(test);

    TrainConfig with_kg = settings.train;
    TrainConfig without_kg = settings.train;
    without_kg.alpha_kg = 0.0;
    const DistilledNet debiased = run_step_one(stage, with_kg, fold_seed);
    const DistilledNet plain = settings.train.alpha_kg == 0.0 ? debiased : run_step_one(stage, without_kg, fold_seed);

    const double alphas[kRows] = {settings.train.alpha, settings.train.alpha, 0.0, 0.0};
    const DistilledNet* nets[kRows] = {&debiased, &plain, &debiased, &plain};
    for (std::size_t r = 0; r < kRows; ++r) {
      TrainConfig config = settings.train;
      config.alpha = alphas[r];
      auto model = run_step_two(stage, *nets[r], config, fold_seed);
      results[r][static_cast<std::size_t>(f)] =
          evaluate_scores(test, model->predict(test_views), settings.train.threshold, f);
    }
  });
  std::vector<FairnessReport> reports;
  const std::string sensitive =
      settings.train.sensitive.empty() && !cohort.sensitive.empty() ? cohort.sensitive.front().name
                                                                    : settings.train.sensitive;
  for (std::size_t r = 0; r < kRows; ++r) {
    reports.push_back(summarize(std::string(kAblationRows[r]), sensitive, settings.train.threshold, std::move(results[r])));
  }
  return reports;
}

}  // namespace fairkd
