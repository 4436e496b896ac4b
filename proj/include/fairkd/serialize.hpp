#pragma once

#include <string>

#include <json.hpp>

#include "fairkd/baselines.hpp"
#include "fairkd/dataio.hpp"
#include "fairkd/distill.hpp"
#include "fairkd/fusion.hpp"
#include "fairkd/pipeline.hpp"
#include "fairkd/trees.hpp"

// Versioned JSON documents. Every model document carries "format" and
// "version"; readers reject anything else with kSchema.

namespace fairkd {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

Json tree_to_json(const Tree& tree);
Tree tree_from_json(const Json& j);

Json gbdt_to_json(const GbdtModel& model);
GbdtModel gbdt_from_json(const Json& j);

Json rf_to_json(const RfModel& model);
RfModel rf_from_json(const Json& j);

Json logistic_to_json(const LogisticModel& model);
LogisticModel logistic_from_json(const Json& j);

Json mlp_to_json(const nn::Mlp<double>& mlp);
nn::Mlp<double> mlp_from_json(const Json& j, const std::string& name);

Json distilled_to_json(const DistilledNet& net);
DistilledNet distilled_from_json(const Json& j);

Json catnn_to_json(const CatNN& catnn);
CatNN catnn_from_json(const Json& j);

/// `config_hash` identifies the training configuration that produced the model.
Json fusion_to_json(const FusionModel& model, const std::string& config_hash);
FusionModel fusion_from_json(const Json& j);

Json preprocessor_to_json(const Preprocessor& prep);
Preprocessor preprocessor_from_json(const Json& j);

/// Any fitted scorer, tagged by model kind.
Json scorer_to_json(const Scorer& scorer, const std::string& config_hash = {});

// Configuration documents. Missing keys keep their defaults; unknown keys
// are rejected with kConfiguration.

Json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& config);
void train_config_update(TrainConfig& config, const Json& j);

Json gbdt_params_to_json(const GbdtParams& params);
void gbdt_params_update(GbdtParams& params, const Json& j);

Json rf_params_to_json(const RfParams& params);
void rf_params_update(RfParams& params, const Json& j);

Json logistic_params_to_json(const LogisticParams& params);
void logistic_params_update(LogisticParams& params, const Json& j);

Json report_to_json(const FairnessReport& report);

Json distill_log_to_json(const std::vector<DistillEpochLog>& log);
Json end_to_end_log_to_json(const std::vector<EndToEndEpochLog>& log);

/// Canonical text of a JSON document (two-space indent, trailing newline).
std::string dump(const Json& j);

}  // namespace fairkd
