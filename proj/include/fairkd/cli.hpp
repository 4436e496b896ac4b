#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fairkd/dataio.hpp"
#include "fairkd/metrics.hpp"
#include "fairkd/pipeline.hpp"
#include "fairkd/serialize.hpp"

namespace fairkd {

/// Everything a train/ablate run depends on. `jobs` and `out` do not enter
/// the config hash since they cannot change results.
struct ExperimentConfig {
  std::string data;    // cohort CSV
  std::string schema;  // schema file for `data`
  std::optional<SynthConfig> synth;
  std::string model = "fair";
  ModelSettings settings;
  int folds = 5;
  std::uint64_t seed = 0;

  int jobs = 1;
  std::string out;

  Json to_json() const;
  void update(const Json& j);
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

/// Subgroup row of a waiting-list counts file:
/// `subgroup,n_w,n_r,n_f[,mean_score]`.
struct CountsRow {
  SubgroupCounts counts;
  std::optional<double> mean_score;
};

std::vector<CountsRow> parse_counts(const std::string& text);
std::vector<CountsRow> load_counts(const std::string& path);

struct SubgroupAudit {
  std::string name;
  double mean_score = 0.0;
  long long size = 0;  // n_w
  CohortRates rates;
};

struct CohortAudit {
  std::vector<SubgroupAudit> subgroups;
  std::optional<double> score_vs_orr, score_vs_gfr, size_vs_orr, size_vs_gfr;
  std::vector<std::string> errors;  // undefined correlations, one line each
};

/// Subgroup key of row i: sensitive values joined by '/'.
std::string subgroup_key(const Cohort& cohort, std::size_t row);

/// Per-subgroup rate rows and score/size correlations. Mean scores come from
/// the counts file when present, else from `cohort` rows of that subgroup.
CohortAudit audit_cohort(const std::vector<CountsRow>& counts, const Cohort* cohort);

/// Entry point of the `fairkd` executable. Returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace fairkd
