#include "fairkd/serialize.hpp"

#include <functional>
#include <map>

#include "fairkd/hashing.hpp"

namespace fairkd {

namespace {

Json header(const char* format) { return Json{{"format", format}, {"version", kFormatVersion}}; }

void check_header(const Json& j, const char* format) {
  if (!j.is_object() || !j.contains("format") || j.at("format") != format) {
    fail(ErrorCode::kSchema, std::string("expected a '") + format + "' document");
  }
  if (j.value("version", -1) != kFormatVersion) {
    fail(ErrorCode::kSchema, std::string("unsupported '") + format + "' version");
  }
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kSchema, std::string("malformed ") + what + ": " + e.what());
  }
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    rows.push_back(std::move(row));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

Matrix matrix_from_json(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const Json& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows)) {
    fail(ErrorCode::kSchema, "matrix shape does not match its data");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = data.at(static_cast<std::size_t>(i));
    if (row.size() != static_cast<std::size_t>(cols)) fail(ErrorCode::kSchema, "ragged matrix row");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return m;
}

Json vector_to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json parameter_to_json(const nn::Parameter<double>& p) { return Json{{"name", p.name}, {"value", matrix_to_json(p.value)}}; }

nn::Parameter<double> parameter_from_json(const Json& j) {
  return nn::Parameter<double>(j.at("name").get<std::string>(), matrix_from_json(j.at("value")));
}

void assign(nn::Parameter<double>& p, const Json& j) {
  Matrix value = matrix_from_json(j.at("value"));
  if (value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
    fail(ErrorCode::kSchema, "parameter " + p.name + " has the wrong shape");
  }
  p.value = std::move(value);
}

const char* activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::kRelu: return "relu";
    case nn::Activation::kSigmoid: return "sigmoid";
    case nn::Activation::kIdentity: return "identity";
  }
  return "identity";
}

nn::Activation activation_from(const std::string& s) {
  if (s == "relu") return nn::Activation::kRelu;
  if (s == "sigmoid") return nn::Activation::kSigmoid;
  if (s == "identity") return nn::Activation::kIdentity;
  fail(ErrorCode::kSchema, "unknown activation '" + s + "'");
}

Json tree_group_to_json(const TreeGroup& g) {
  return Json{{"members", g.members},
              {"used_features", g.used_features},
              {"leaf_offsets", g.leaf_offsets},
              {"leaf_dim", g.leaf_dim},
              {"leaf_values", g.leaf_values}};
}

TreeGroup tree_group_from_json(const Json& j) {
  TreeGroup g;
  g.members = j.at("members").get<std::vector<int>>();
  g.used_features = j.at("used_features").get<std::vector<int>>();
  g.leaf_offsets = j.at("leaf_offsets").get<std::vector<int>>();
  g.leaf_dim = j.at("leaf_dim").get<int>();
  g.leaf_values = j.at("leaf_values").get<std::vector<double>>();
  return g;
}

using Setter = std::function<void(const Json&)>;

// Applies `j` through per-key setters, rejecting unknown keys.
void apply_fields(const Json& j, const std::map<std::string, Setter>& setters, const char* what) {
  if (!j.is_object()) fail(ErrorCode::kConfiguration, std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto s = setters.find(it.key());
    if (s == setters.end()) fail(ErrorCode::kConfiguration, std::string("unknown ") + what + " key '" + it.key() + "'");
    try {
      s->second(it.value());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfiguration, std::string("bad value for ") + what + " key '" + it.key() + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const Json& v) { field = v.get<T>(); };
}

Json group_spec_to_json(const GroupSpec& g) {
  return Json{{"label", g.label},
              {"proportion", g.proportion},
              {"base_rate_shift", g.base_rate_shift},
              {"feature_shift", g.feature_shift},
              {"category_bias", g.category_bias}};
}

GroupSpec group_spec_from_json(const Json& j) {
  GroupSpec g;
  apply_fields(j,
               {{"label", set(g.label)},
                {"proportion", set(g.proportion)},
                {"base_rate_shift", set(g.base_rate_shift)},
                {"feature_shift", set(g.feature_shift)},
                {"category_bias", set(g.category_bias)}},
               "group");
  return g;
}

std::vector<GroupSpec> groups_from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorCode::kConfiguration, "group list must be an array");
  std::vector<GroupSpec> out;
  for (const auto& g : j) out.push_back(group_spec_from_json(g));
  return out;
}

Json mean_std_to_json(const MeanStd& m) { return Json{{"mean", m.mean}, {"std", m.std}}; }

std::vector<double> to_vector(const RowVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

Json tree_to_json(const Tree& tree) {
  Json nodes = Json::array();
  for (const auto& n : tree.nodes()) {
    if (n.is_leaf()) {
      nodes.push_back(Json{{"leaf", n.leaf_id}, {"value", n.leaf_value}});
    } else {
      nodes.push_back(Json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
    }
  }
  return Json{{"input_width", tree.input_width()}, {"nodes", std::move(nodes)}};
}

Tree tree_from_json(const Json& j) {
  return guarded("tree", [&] {
    std::vector<TreeNode> nodes;
    for (const auto& n : j.at("nodes")) {
      TreeNode node;
      if (n.contains("leaf")) {
        node.leaf_id = n.at("leaf").get<int>();
        node.leaf_value = n.at("value").get<double>();
      } else {
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
      }
      nodes.push_back(node);
    }
    return Tree(std::move(nodes), j.at("input_width").get<int>());
  });
}

Json gbdt_to_json(const GbdtModel& model) {
  Json j = header("fairkd.gbdt");
  j["input_width"] = model.input_width;
  j["learning_rate"] = model.learning_rate;
  j["base_score"] = model.base_score;
  Json trees = Json::array();
  for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
  j["trees"] = std::move(trees);
  return j;
}

GbdtModel gbdt_from_json(const Json& j) {
  check_header(j, "fairkd.gbdt");
  return guarded("GBDT model", [&] {
    GbdtModel m;
    m.input_width = j.at("input_width").get<int>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.base_score = j.at("base_score").get<double>();
    for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
    return m;
  });
}

Json rf_to_json(const RfModel& model) {
  Json j = header("fairkd.rf");
  j["input_width"] = model.input_width;
  Json trees = Json::array();
  for (const auto& t : model.trees) trees.push_back(tree_to_json(t));
  j["trees"] = std::move(trees);
  return j;
}

RfModel rf_from_json(const Json& j) {
  check_header(j, "fairkd.rf");
  return guarded("random forest", [&] {
    RfModel m;
    m.input_width = j.at("input_width").get<int>();
    for (const auto& t : j.at("trees")) m.trees.push_back(tree_from_json(t));
    return m;
  });
}

Json logistic_to_json(const LogisticModel& model) {
  Json j = header("fairkd.logistic");
  j["weights"] = vector_to_json(model.weights);
  j["bias"] = model.bias;
  j["warnings"] = model.warnings;
  return j;
}

LogisticModel logistic_from_json(const Json& j) {
  check_header(j, "fairkd.logistic");
  return guarded("logistic model", [&] {
    LogisticModel m;
    m.weights = vector_from_json(j.at("weights"));
    m.bias = j.at("bias").get<double>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
    return m;
  });
}

Json mlp_to_json(const nn::Mlp<double>& mlp) {
  Json activations = Json::array();
  for (auto a : mlp.spec().activations) activations.push_back(activation_name(a));
  Json weights = Json::array(), biases = Json::array();
  for (const auto& w : mlp.weights()) weights.push_back(matrix_to_json(w.value));
  for (const auto& b : mlp.biases()) biases.push_back(matrix_to_json(b.value));
  return Json{{"widths", mlp.spec().widths},
              {"activations", std::move(activations)},
              {"seed", mlp.spec().seed},
              {"weights", std::move(weights)},
              {"biases", std::move(biases)}};
}

nn::Mlp<double> mlp_from_json(const Json& j, const std::string& name) {
  return guarded("MLP", [&] {
    nn::MlpSpec spec;
    spec.widths = j.at("widths").get<std::vector<int>>();
    for (const auto& a : j.at("activations")) spec.activations.push_back(activation_from(a.get<std::string>()));
    spec.seed = j.at("seed").get<std::uint64_t>();
    nn::Mlp<double> mlp(spec, name);
    const Json& weights = j.at("weights");
    const Json& biases = j.at("biases");
    if (weights.size() != mlp.weights().size() || biases.size() != mlp.biases().size()) {
      fail(ErrorCode::kSchema, "MLP layer count mismatch");
    }
    for (std::size_t l = 0; l < mlp.weights().size(); ++l) {
      assign(mlp.weights()[l], Json{{"value", weights[l]}});
      assign(mlp.biases()[l], Json{{"value", biases[l]}});
    }
    return mlp;
  });
}

Json distilled_to_json(const DistilledNet& net) {
  Json j = header("fairkd.distilled");
  j["teacher_hash"] = net.teacher_hash;
  j["base_score"] = net.base_score;
  j["standardizer"] = Json{{"mean", to_vector(net.standardizer.mean)}, {"scale", to_vector(net.standardizer.scale)}};
  Json groups = Json::array();
  for (const auto& g : net.groups) {
    groups.push_back(Json{{"layout", tree_group_to_json(g.layout)},
                          {"net", mlp_to_json(g.net)},
                          {"projection", parameter_to_json(g.embedding.projection)},
                          {"w_out", parameter_to_json(g.embedding.w_out)},
                          {"b_out", parameter_to_json(g.embedding.b_out)}});
  }
  j["groups"] = std::move(groups);
  return j;
}

DistilledNet distilled_from_json(const Json& j) {
  check_header(j, "fairkd.distilled");
  return guarded("distilled net", [&] {
    DistilledNet net;
    net.teacher_hash = j.at("teacher_hash").get<std::string>();
    net.base_score = j.at("base_score").get<double>();
    const auto mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    const auto scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    if (mean.size() != scale.size()) fail(ErrorCode::kSchema, "standardizer mean/scale length mismatch");
    net.standardizer.mean = Eigen::Map<const RowVector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    net.standardizer.scale = Eigen::Map<const RowVector>(scale.data(), static_cast<Eigen::Index>(scale.size()));
    int k = 0;
    for (const auto& g : j.at("groups")) {
      LeafEmbedding e;
      e.projection = parameter_from_json(g.at("projection"));
      e.w_out = parameter_from_json(g.at("w_out"));
      e.b_out = parameter_from_json(g.at("b_out"));
      net.groups.push_back({tree_group_from_json(g.at("layout")),
                            mlp_from_json(g.at("net"), "dense" + std::to_string(k++)), std::move(e)});
    }
    return net;
  });
}

Json catnn_to_json(const CatNN& catnn) {
  Json j = header("fairkd.catnn");
  j["cardinalities"] = catnn.cardinalities();
  j["embedding_dim"] = catnn.config().embedding_dim;
  j["hidden"] = catnn.config().hidden;
  j["seed"] = catnn.config().seed;
  Json tables = Json::array(), first = Json::array();
  for (const auto& t : catnn.embeddings) tables.push_back(matrix_to_json(t.parameter().value));
  for (const auto& w : catnn.first_order) first.push_back(matrix_to_json(w.value));
  j["embeddings"] = std::move(tables);
  j["first_order"] = std::move(first);
  j["bias"] = catnn.bias.value(0, 0);
  j["deep"] = mlp_to_json(catnn.deep);
  return j;
}

CatNN catnn_from_json(const Json& j) {
  check_header(j, "fairkd.catnn");
  return guarded("CatNN", [&] {
    CatNNConfig config;
    config.embedding_dim = j.at("embedding_dim").get<int>();
    config.hidden = j.at("hidden").get<std::vector<int>>();
    config.seed = j.at("seed").get<std::uint64_t>();
    CatNN catnn(j.at("cardinalities").get<std::vector<int>>(), config);
    const Json& tables = j.at("embeddings");
    const Json& first = j.at("first_order");
    if (tables.size() != catnn.embeddings.size() || first.size() != catnn.first_order.size()) {
      fail(ErrorCode::kSchema, "CatNN column count mismatch");
    }
    for (std::size_t c = 0; c < catnn.embeddings.size(); ++c) {
      assign(catnn.embeddings[c].parameter(), Json{{"value", tables[c]}});
      assign(catnn.first_order[c], Json{{"value", first[c]}});
    }
    catnn.bias.value(0, 0) = j.at("bias").get<double>();
    catnn.deep = mlp_from_json(j.at("deep"), "cat.deep");
    return catnn;
  });
}

Json fusion_to_json(const FusionModel& model, const std::string& config_hash) {
  Json j = header("fairkd.fusion");
  j["config_hash"] = config_hash;
  j["w1"] = model.w1.value(0, 0);
  j["w2"] = model.w2.value(0, 0);
  j["catnn"] = catnn_to_json(model.catnn);
  j["distilled"] = distilled_to_json(model.dense);
  return j;
}

FusionModel fusion_from_json(const Json& j) {
  check_header(j, "fairkd.fusion");
  return guarded("fusion model", [&] {
    FusionModel model(catnn_from_json(j.at("catnn")), distilled_from_json(j.at("distilled")));
    model.w1.value(0, 0) = j.at("w1").get<double>();
    model.w2.value(0, 0) = j.at("w2").get<double>();
    return model;
  });
}

Json preprocessor_to_json(const Preprocessor& prep) { return Json{{"vocabularies", prep.vocabularies}}; }

Preprocessor preprocessor_from_json(const Json& j) {
  return guarded("preprocessor", [&] { return Preprocessor{j.at("vocabularies").get<std::vector<Vocabulary>>()}; });
}

Json scorer_to_json(const Scorer& scorer, const std::string& config_hash) {
  Json j = header("fairkd.scorer");
  if (const auto* s = dynamic_cast<const GbdtScorer*>(&scorer)) {
    j["model"] = "gbdt";
    j["fitted"] = gbdt_to_json(s->model());
    j["preprocessor"] = preprocessor_to_json(s->preprocessor());
  } else if (const auto* s = dynamic_cast<const RfScorer*>(&scorer)) {
    j["model"] = "rf";
    j["fitted"] = rf_to_json(s->model());
    j["preprocessor"] = preprocessor_to_json(s->preprocessor());
  } else if (const auto* s = dynamic_cast<const LogisticScorer*>(&scorer)) {
    j["model"] = "logistic";
    j["fitted"] = logistic_to_json(s->model());
    j["preprocessor"] = preprocessor_to_json(s->preprocessor());
    j["standardizer"] = Json{{"mean", to_vector(s->standardizer().mean)}, {"scale", to_vector(s->standardizer().scale)}};
  } else if (const auto* s = dynamic_cast<const MeldScorer*>(&scorer)) {
    j["model"] = "meld";
    j["fitted"] = logistic_to_json(s->model());
  } else if (const auto* s = dynamic_cast<const FairScorer*>(&scorer)) {
    j["model"] = "fair";
    j["fitted"] = fusion_to_json(s->model(), config_hash);
    j["preprocessor"] = preprocessor_to_json(s->preprocessor());
  } else {
    fail(ErrorCode::kState, "unknown scorer type");
  }
  j["config_hash"] = config_hash;
  return j;
}

Json synth_config_to_json(const SynthConfig& c) {
  Json attributes = Json::array();
  for (const auto& a : c.attributes) {
    Json groups = Json::array();
    for (const auto& g : a.groups) groups.push_back(group_spec_to_json(g));
    attributes.push_back(Json{{"name", a.name}, {"groups", std::move(groups)}});
  }
  return Json{{"n_rows", c.n_rows},
              {"n_numeric", c.n_numeric},
              {"n_categorical", c.n_categorical},
              {"category_cardinality", c.category_cardinality},
              {"attributes", std::move(attributes)},
              {"label_noise", c.label_noise},
              {"signal_weights", c.signal_weights},
              {"signal_scale", c.signal_scale},
              {"intercept", c.intercept},
              {"proxy_features", c.proxy_features},
              {"proxy_categoricals", c.proxy_categoricals},
              {"missing_rate", c.missing_rate},
              {"score_signal", c.score_signal},
              {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const Json& j) {
  SynthConfig c;
  apply_fields(j,
               {{"n_rows", set(c.n_rows)},
                {"n_numeric", set(c.n_numeric)},
                {"n_categorical", set(c.n_categorical)},
                {"category_cardinality", set(c.category_cardinality)},
                {"label_noise", set(c.label_noise)},
                {"signal_weights", set(c.signal_weights)},
                {"signal_scale", set(c.signal_scale)},
                {"intercept", set(c.intercept)},
                {"proxy_features", set(c.proxy_features)},
                {"proxy_categoricals", set(c.proxy_categoricals)},
                {"missing_rate", set(c.missing_rate)},
                {"score_signal", set(c.score_signal)},
                {"seed", set(c.seed)},
                {"group_spec",
                 [&c](const Json& v) { c.attributes.push_back({"group", groups_from_json(v)}); }},
                {"attributes",
                 [&c](const Json& v) {
                   if (!v.is_array()) fail(ErrorCode::kConfiguration, "attributes must be an array");
                   for (const auto& a : v) {
                     SensitiveSpec spec;
                     apply_fields(a,
                                  {{"name", set(spec.name)},
                                   {"groups", [&spec](const Json& g) { spec.groups = groups_from_json(g); }}},
                                  "attribute");
                     c.attributes.push_back(std::move(spec));
                   }
                 }}},
               "synth config");
  c.validate();
  return c;
}

Json train_config_to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},
              {"alpha_kg", c.alpha_kg},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"batch_size", c.batch_size},
              {"weight_decay", c.weight_decay},
              {"distill_epochs", c.distill_epochs},
              {"distill_lr", c.distill_lr},
              {"embedding_epochs", c.embedding_epochs},
              {"embedding_lr", c.embedding_lr},
              {"n_groups", c.n_groups},
              {"d_leaf", c.d_leaf},
              {"cat_embedding_dim", c.cat_embedding_dim},
              {"hidden", c.hidden},
              {"sensitive", c.sensitive},
              {"freeze_dense", c.freeze_dense},
              {"standardize", c.standardize},
              {"squash_step1", c.squash_step1},
              {"raw_leaf_targets", c.raw_leaf_targets},
              {"threshold", c.threshold}};
}

void train_config_update(TrainConfig& c, const Json& j) {
  apply_fields(j,
               {{"alpha", set(c.alpha)},
                {"alpha_kg", set(c.alpha_kg)},
                {"epochs", set(c.epochs)},
                {"lr", set(c.lr)},
                {"batch_size", set(c.batch_size)},
                {"weight_decay", set(c.weight_decay)},
                {"distill_epochs", set(c.distill_epochs)},
                {"distill_lr", set(c.distill_lr)},
                {"embedding_epochs", set(c.embedding_epochs)},
                {"embedding_lr", set(c.embedding_lr)},
                {"n_groups", set(c.n_groups)},
                {"d_leaf", set(c.d_leaf)},
                {"cat_embedding_dim", set(c.cat_embedding_dim)},
                {"hidden", set(c.hidden)},
                {"sensitive", set(c.sensitive)},
                {"freeze_dense", set(c.freeze_dense)},
                {"standardize", set(c.standardize)},
                {"squash_step1", set(c.squash_step1)},
                {"raw_leaf_targets", set(c.raw_leaf_targets)},
                {"threshold", set(c.threshold)}},
               "train config");
}

Json gbdt_params_to_json(const GbdtParams& p) {
  return Json{{"n_trees", p.n_trees},
              {"max_depth", p.max_depth},
              {"min_samples_leaf", p.min_samples_leaf},
              {"learning_rate", p.learning_rate},
              {"feature_fraction", p.feature_fraction},
              {"lambda", p.lambda}};
}

void gbdt_params_update(GbdtParams& p, const Json& j) {
  apply_fields(j,
               {{"n_trees", set(p.n_trees)},
                {"max_depth", set(p.max_depth)},
                {"min_samples_leaf", set(p.min_samples_leaf)},
                {"learning_rate", set(p.learning_rate)},
                {"feature_fraction", set(p.feature_fraction)},
                {"lambda", set(p.lambda)}},
               "gbdt params");
}

Json rf_params_to_json(const RfParams& p) {
  return Json{{"n_trees", p.n_trees},
              {"max_depth", p.max_depth},
              {"min_samples_leaf", p.min_samples_leaf},
              {"max_features", p.max_features},
              {"bootstrap", p.bootstrap}};
}

void rf_params_update(RfParams& p, const Json& j) {
  apply_fields(j,
               {{"n_trees", set(p.n_trees)},
                {"max_depth", set(p.max_depth)},
                {"min_samples_leaf", set(p.min_samples_leaf)},
                {"max_features", set(p.max_features)},
                {"bootstrap", set(p.bootstrap)}},
               "rf params");
}

Json logistic_params_to_json(const LogisticParams& p) {
  return Json{{"epochs", p.epochs}, {"lr", p.lr}, {"l2", p.l2}};
}

void logistic_params_update(LogisticParams& p, const Json& j) {
  apply_fields(j, {{"epochs", set(p.epochs)}, {"lr", set(p.lr)}, {"l2", set(p.l2)}}, "logistic params");
}

Json report_to_json(const FairnessReport& r) {
  Json folds = Json::array();
  for (const auto& f : r.folds) {
    Json attributes = Json::array();
    for (const auto& a : f.attributes) {
      Json rates = Json::object();
      for (std::size_t g = 0; g < a.group_labels.size(); ++g) rates[a.group_labels[g]] = a.positive_rates[g];
      attributes.push_back(Json{{"attribute", a.attribute},
                                {"dpd", a.dpd},
                                {"eod", a.eod},
                                {"positive_rates", std::move(rates)},
                                {"warnings", a.warnings}});
    }
    folds.push_back(Json{{"fold", f.fold}, {"auc", f.auc}, {"attributes", std::move(attributes)}});
  }
  Json summary = Json::array();
  for (const auto& a : r.attributes) {
    summary.push_back(Json{{"attribute", a.attribute}, {"dpd", mean_std_to_json(a.dpd)}, {"eod", mean_std_to_json(a.eod)}});
  }
  Json j = header("fairkd.report");
  j["model"] = r.model;
  j["sensitive"] = r.sensitive;
  j["threshold"] = r.threshold;
  j["auc"] = mean_std_to_json(r.auc);
  j["attributes"] = std::move(summary);
  j["folds"] = std::move(folds);
  return j;
}

Json distill_log_to_json(const std::vector<DistillEpochLog>& log) {
  Json out = Json::array();
  for (const auto& e : log) {
    out.push_back(Json{{"epoch", e.epoch},
                       {"mse", e.mse},
                       {"fairness", e.fairness},
                       {"total", e.total},
                       {"skipped_batches", e.skipped_batches}});
  }
  return out;
}

Json end_to_end_log_to_json(const std::vector<EndToEndEpochLog>& log) {
  Json out = Json::array();
  for (const auto& e : log) {
    out.push_back(Json{{"epoch", e.epoch},
                       {"cross_entropy", e.cross_entropy},
                       {"fairness", e.fairness},
                       {"total", e.total},
                       {"skipped_batches", e.skipped_batches}});
  }
  return out;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace fairkd
