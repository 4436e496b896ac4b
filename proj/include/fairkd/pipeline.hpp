#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fairkd/baselines.hpp"
#include "fairkd/dataio.hpp"
#include "fairkd/distill.hpp"
#include "fairkd/fusion.hpp"
#include "fairkd/metrics.hpp"
#include "fairkd/trees.hpp"

namespace fairkd {

/// Training-split vocabularies plus the impute-and-encode transform.
struct Preprocessor {
  std::vector<Vocabulary> vocabularies;

  static Preprocessor fit(const Cohort& train);
  FeatureViews transform(const Cohort& cohort) const;
};

/// Dense group ids for one sensitive column; labels sorted, so ids do not
/// depend on row order.
struct GroupIndex {
  std::vector<std::string> labels;
  std::vector<int> ids;
  std::vector<std::size_t> counts;
};

GroupIndex index_groups(const SensitiveColumn& column);

/// Id of the largest group; ties go to the lower id.
int majority_group(const GroupIndex& groups);

// ---------------------------------------------------------------------------
// Models behind a common scoring interface

class Scorer {
 public:
  virtual ~Scorer() = default;
  /// Probability-like scores in [0, 1] for every row.
  virtual Vector score(const Cohort& cohort) const = 0;
};

using ModelFactory = std::function<std::unique_ptr<Scorer>(const Cohort& train, std::uint64_t seed)>;

struct ModelSettings {
  TrainConfig train;
  GbdtParams gbdt;
  RfParams rf;
  LogisticParams logistic;
};

inline constexpr std::string_view kModelNames[] = {"meld", "logistic", "rf", "gbdt", "fair"};

/// Throws kUsage for an unknown model name.
ModelFactory make_factory(std::string_view model, const ModelSettings& settings);

class GbdtScorer : public Scorer {
 public:
  GbdtScorer(Preprocessor prep, GbdtModel model) : prep_(std::move(prep)), model_(std::move(model)) {}
  Vector score(const Cohort& cohort) const override;
  const GbdtModel& model() const { return model_; }
  const Preprocessor& preprocessor() const { return prep_; }

 private:
  Preprocessor prep_;
  GbdtModel model_;
};

class RfScorer : public Scorer {
 public:
  RfScorer(Preprocessor prep, RfModel model) : prep_(std::move(prep)), model_(std::move(model)) {}
  Vector score(const Cohort& cohort) const override;
  const RfModel& model() const { return model_; }
  const Preprocessor& preprocessor() const { return prep_; }

 private:
  Preprocessor prep_;
  RfModel model_;
};

/// Logistic regression on [standardized dense | one-hot].
class LogisticScorer : public Scorer {
 public:
  LogisticScorer(Preprocessor prep, Standardizer standardizer, LogisticModel model)
      : prep_(std::move(prep)), standardizer_(std::move(standardizer)), model_(std::move(model)) {}
  Vector score(const Cohort& cohort) const override;
  const LogisticModel& model() const { return model_; }
  const Preprocessor& preprocessor() const { return prep_; }
  const Standardizer& standardizer() const { return standardizer_; }

  static Matrix design(const FeatureViews& views, const Standardizer& standardizer);

 private:
  Preprocessor prep_;
  Standardizer standardizer_;
  LogisticModel model_;
};

/// Logistic regression on the cohort's score column (missing cells read as 0).
class MeldScorer : public Scorer {
 public:
  explicit MeldScorer(LogisticModel model) : model_(std::move(model)) {}
  Vector score(const Cohort& cohort) const override;
  const LogisticModel& model() const { return model_; }

 private:
  LogisticModel model_;
};

class FairScorer : public Scorer {
 public:
  FairScorer(Preprocessor prep, std::unique_ptr<FusionModel> model)
      : prep_(std::move(prep)), model_(std::move(model)) {}
  Vector score(const Cohort& cohort) const override;
  const FusionModel& model() const { return *model_; }
  const Preprocessor& preprocessor() const { return prep_; }

 private:
  Preprocessor prep_;
  std::unique_ptr<FusionModel> model_;
};

std::vector<double> score_column(const Cohort& cohort);

// ---------------------------------------------------------------------------
// Two-step training

/// Everything the debiasing variants of one training split share: encoded
/// features, the teacher, its tree groups and leaf embeddings.
struct FairStage {
  Preprocessor prep;
  FeatureViews views;
  std::vector<int> labels;
  GroupIndex groups;
  int majority = 0;
  GbdtModel teacher;
  std::vector<TreeGroup> tree_groups;
  std::vector<LeafEmbedding> embeddings;
  Standardizer standardizer;
};

/// Fits the teacher unless `teacher` is given (it must match the encoded width).
FairStage prepare_fair_stage(const Cohort& train, const TrainConfig& config, const GbdtParams& gbdt,
                             std::uint64_t seed, const GbdtModel* teacher = nullptr);

/// Step one: distillation with weight config.alpha_kg.
DistilledNet run_step_one(const FairStage& stage, const TrainConfig& config, std::uint64_t seed,
                          std::vector<DistillEpochLog>* log = nullptr);

/// Step two: end-to-end fusion training with weight config.alpha.
std::unique_ptr<FusionModel> run_step_two(const FairStage& stage, DistilledNet dense, const TrainConfig& config,
                                          std::uint64_t seed, std::vector<EndToEndEpochLog>* log = nullptr);

struct TwoStepLogs {
  std::vector<DistillEpochLog> step_one;
  std::vector<EndToEndEpochLog> step_two;
};

std::unique_ptr<FairScorer> two_step_train(const Cohort& train, const TrainConfig& config, const GbdtParams& gbdt,
                                           std::uint64_t seed, TwoStepLogs* logs = nullptr);

// ---------------------------------------------------------------------------
// Evaluation

struct AttributeMetrics {
  std::string attribute;
  double dpd = 0.0;
  double eod = 0.0;
  std::vector<std::string> group_labels;
  std::vector<double> positive_rates;
  std::vector<std::string> warnings;
};

struct FoldResult {
  int fold = 0;
  double auc = 0.0;
  std::vector<AttributeMetrics> attributes;
};

struct AttributeSummary {
  std::string attribute;
  MeanStd dpd;
  MeanStd eod;
};

struct FairnessReport {
  std::string model;
  std::string sensitive;  // attribute the model was debiased for
  double threshold = 0.5;
  std::vector<FoldResult> folds;
  MeanStd auc;
  std::vector<AttributeSummary> attributes;

  const AttributeSummary& attribute(std::string_view name) const;
};

/// AUC plus DPD/EOD for every sensitive attribute of `test`.
FoldResult evaluate_scores(const Cohort& test, const Vector& scores, double threshold, int fold = 0);

FairnessReport summarize(std::string model, std::string sensitive, double threshold, std::vector<FoldResult> folds);

/// Trains on k-1 folds and scores the held-out fold, for every fold. Fold f
/// trains with seed derive_seed(seed, "fold", f). Folds run on up to `jobs`
/// threads; results do not depend on `jobs`.
FairnessReport evaluate_folds(const ModelFactory& factory, const Cohort& cohort, const FoldPlan& plan,
                              std::string_view sensitive, double threshold, std::uint64_t seed,
                              std::string model_name, int jobs = 1);

inline constexpr std::string_view kAblationRows[] = {"full", "w/o first-step", "w/o second-step", "undebiased"};

/// Optional per-fold teacher cache. `load` may return a stored teacher;
/// `store` receives every teacher used.
struct TeacherHooks {
  std::function<std::optional<GbdtModel>(int fold)> load;
  std::function<void(int fold, const GbdtModel&)> store;
};

/// The four two-step variants per fold, sharing preprocessing, teacher and
/// leaf embeddings: full (alpha, alpha_kg), w/o first-step (alpha, 0),
/// w/o second-step (0, alpha_kg) and undebiased (0, 0). Reports follow
/// kAblationRows order.
std::vector<FairnessReport> run_ablation(const Cohort& cohort, const FoldPlan& plan, const ModelSettings& settings,
                                         std::uint64_t seed, int jobs = 1, const TeacherHooks& hooks = {});

/// Runs `work(i)` for i in [0, n) on up to `jobs` threads. The first
/// exception (by index) is rethrown after all workers finish.
void parallel_for(int n, int jobs, const std::function<void(int)>& work);

}  // namespace fairkd
