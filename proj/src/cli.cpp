#include "fairkd/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "fairkd/hashing.hpp"
#include "fairkd/rng.hpp"

namespace fs = std::filesystem;

namespace fairkd {

// ---------------------------------------------------------------------------
// Experiment configuration

Json ExperimentConfig::to_json() const {
  Json j;
  j["data"] = data;
  j["schema"] = schema;
  j["synth"] = synth ? synth_config_to_json(*synth) : Json();
  j["model"] = model;
  j["folds"] = folds;
  j["seed"] = seed;
  j["train"] = train_config_to_json(settings.train);
  j["gbdt"] = gbdt_params_to_json(settings.gbdt);
  j["rf"] = rf_params_to_json(settings.rf);
  j["logistic"] = logistic_params_to_json(settings.logistic);
  return j;
}

void ExperimentConfig::update(const Json& j) {
  if (!j.is_object()) fail(ErrorCode::kConfiguration, "experiment config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const Json& v = it.value();
    try {
      if (key == "data") {
        data = v.get<std::string>();
      } else if (key == "schema") {
        schema = v.get<std::string>();
      } else if (key == "synth") {
        if (v.is_null()) {
          synth.reset();
        } else {
          synth = synth_config_from_json(v);
        }
      } else if (key == "model") {
        model = v.get<std::string>();
      } else if (key == "folds") {
        folds = v.get<int>();
      } else if (key == "seed") {
        seed = v.get<std::uint64_t>();
      } else if (key == "sensitive") {
        settings.train.sensitive = v.get<std::string>();
      } else if (key == "threshold") {
        settings.train.threshold = v.get<double>();
      } else if (key == "train") {
        train_config_update(settings.train, v);
      } else if (key == "gbdt") {
        gbdt_params_update(settings.gbdt, v);
      } else if (key == "rf") {
        rf_params_update(settings.rf, v);
      } else if (key == "logistic") {
        logistic_params_update(settings.logistic, v);
      } else {
        fail(ErrorCode::kConfiguration, "unknown experiment config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfiguration, "bad value for key '" + key + "': " + e.what());
    }
  }
}

void ExperimentConfig::validate() const {
  if (std::find(std::begin(kModelNames), std::end(kModelNames), model) == std::end(kModelNames)) {
    fail(ErrorCode::kUsage, "unknown model '" + model + "' (expected meld, logistic, rf, gbdt or fair)");
  }
  if (synth.has_value() == !data.empty()) {
    fail(ErrorCode::kConfiguration, "give exactly one of a data file or a synth config");
  }
  if (!data.empty() && schema.empty()) fail(ErrorCode::kConfiguration, "a data file needs a schema file");
  if (folds < 2) fail(ErrorCode::kConfiguration, "folds must be at least 2");
  if (jobs < 1) fail(ErrorCode::kConfiguration, "jobs must be at least 1");
  settings.train.validate();
  settings.gbdt.validate();
  settings.rf.validate();
  settings.logistic.validate();
}

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, "cannot parse " + what + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  ExperimentConfig config;
  config.update(parse_json(read_text(path), path));
  return config;
}

// ---------------------------------------------------------------------------
// Cohort audit

std::vector<CountsRow> parse_counts(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<CountsRow> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream cells(s);
    while (std::getline(cells, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      out.push_back(cell);
    }
    if (!s.empty() && s.back() == ',') out.emplace_back();  // getline drops a trailing empty cell
    return out;
  };
  auto to_count = [](const std::string& s, const std::string& what) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorCode::kData, "bad " + what + " count '" + s + "'");
    }
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (header.empty()) {
      header = cells;
      const std::vector<std::string> expected{"subgroup", "n_w", "n_r", "n_f"};
      if (header.size() < 4 || !std::equal(expected.begin(), expected.end(), header.begin()) ||
          (header.size() == 5 && header[4] != "mean_score") || header.size() > 5) {
        fail(ErrorCode::kSchema, "counts header must be subgroup,n_w,n_r,n_f[,mean_score]");
      }
      continue;
    }
    if (cells.size() != header.size()) fail(ErrorCode::kData, "counts row has the wrong number of cells: " + line);
    CountsRow row;
    row.counts = {cells[0], to_count(cells[1], "n_w"), to_count(cells[2], "n_r"), to_count(cells[3], "n_f")};
    if (header.size() == 5 && !cells[4].empty()) {
      try {
        row.mean_score = std::stod(cells[4]);
      } catch (const std::exception&) {
        fail(ErrorCode::kData, "bad mean_score '" + cells[4] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) fail(ErrorCode::kSchema, "counts file is empty");
  return rows;
}

std::vector<CountsRow> load_counts(const std::string& path) { return parse_counts(read_text(path)); }

std::string subgroup_key(const Cohort& cohort, std::size_t row) {
  std::string key;
  for (std::size_t a = 0; a < cohort.sensitive.size(); ++a) {
    if (a > 0) key += '/';
    key += cohort.sensitive[a].values.at(row);
  }
  return key;
}

CohortAudit audit_cohort(const std::vector<CountsRow>& counts, const Cohort* cohort) {
  std::map<std::string, std::pair<double, std::size_t>> score_sums;
  if (cohort != nullptr && cohort->has_score()) {
    for (std::size_t i = 0; i < cohort->rows(); ++i) {
      const double s = cohort->score[i];
      if (is_missing(s)) continue;
      auto& acc = score_sums[subgroup_key(*cohort, i)];
      acc.first += s;
      ++acc.second;
    }
  }
  CohortAudit audit;
  std::set<std::string> seen;
  for (const auto& row : counts) {
    if (!seen.insert(row.counts.name).second) fail(ErrorCode::kData, "subgroup '" + row.counts.name + "' repeats");
    SubgroupAudit s;
    s.name = row.counts.name;
    s.rates = cohort_rates(row.counts);
    s.size = row.counts.waiting;
    if (row.mean_score) {
      s.mean_score = *row.mean_score;
    } else {
      auto it = score_sums.find(s.name);
      if (it == score_sums.end() || it->second.second == 0) {
        fail(ErrorCode::kData, "no score available for subgroup '" + s.name + "'");
      }
      s.mean_score = it->second.first / static_cast<double>(it->second.second);
    }
    audit.subgroups.push_back(std::move(s));
  }
  std::vector<double> score, size, orr, score_g, size_g, gfr;
  for (const auto& s : audit.subgroups) {
    score.push_back(s.mean_score);
    size.push_back(static_cast<double>(s.size));
    orr.push_back(s.rates.orr);
    if (s.rates.gfr) {
      score_g.push_back(s.mean_score);
      size_g.push_back(static_cast<double>(s.size));
      gfr.push_back(*s.rates.gfr);
    }
  }
  auto corr = [&audit](const char* name, const std::vector<double>& x, const std::vector<double>& y) {
    try {
      return std::optional<double>(pearson(x, y));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefinedMetric) throw;
      audit.errors.push_back(std::string(name) + ": " + e.what());
      return std::optional<double>();
    }
  };
  audit.score_vs_orr = corr("score_vs_orr", score, orr);
  audit.score_vs_gfr = corr("score_vs_gfr", score_g, gfr);
  audit.size_vs_orr = corr("size_vs_orr", size, orr);
  audit.size_vs_gfr = corr("size_vs_gfr", size_g, gfr);
  return audit;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Writes files below one output directory and remembers their hashes.
class OutputDir {
 public:
  explicit OutputDir(std::string root) : root_(std::move(root)) {
    if (root_.empty()) fail(ErrorCode::kUsage, "--out is required");
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + root_ + ": " + ec.message());
  }

  std::string path(const std::string& name) const { return (fs::path(root_) / name).string(); }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = fs::path(root_) / name;
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + p.string());
    out << content;
    if (!out) fail(ErrorCode::kIo, "write failed for " + p.string());
    outputs_[name] = git_blob_hash(content);
  }

  /// manifest.json: command, effective config, its hash, and input/output hashes.
  void manifest(const std::string& command, const Json& config, const std::map<std::string, std::string>& inputs) {
    Json j;
    j["command"] = command;
    j["config"] = config;
    j["config_hash"] = git_blob_hash(dump(config));
    j["inputs"] = inputs;
    j["outputs"] = outputs_;
    write("manifest.json", dump(j));
  }

 private:
  std::string root_;
  std::map<std::string, std::string> outputs_;
};

struct LoadedCohort {
  Cohort cohort;
  std::map<std::string, std::string> inputs;  // path or "synth" -> content hash
};

LoadedCohort load_experiment_cohort(const ExperimentConfig& config) {
  LoadedCohort out;
  if (config.synth) {
    out.cohort = synth_generate(*config.synth);
    out.inputs["synth"] = git_blob_hash(dump(synth_config_to_json(*config.synth)));
  } else {
    out.cohort = load_cohort(config.data, load_schema(config.schema));
    out.inputs[config.data] = file_hash(config.data);
    out.inputs[config.schema] = file_hash(config.schema);
  }
  out.cohort.validate();
  if (!config.settings.train.sensitive.empty()) out.cohort.sensitive_column(config.settings.train.sensitive);
  return out;
}

std::string training_sensitive(const ExperimentConfig& config, const Cohort& cohort) {
  if (!config.settings.train.sensitive.empty()) return config.settings.train.sensitive;
  return cohort.sensitive.empty() ? std::string() : cohort.sensitive.front().name;
}

std::vector<std::string> attribute_names(const std::vector<FairnessReport>& reports) {
  std::vector<std::string> names;
  for (const auto& r : reports) {
    for (const auto& a : r.attributes) {
      if (std::find(names.begin(), names.end(), a.attribute) == names.end()) names.push_back(a.attribute);
    }
  }
  return names;
}

/// Numeric CSV, one row per report: model, AUC, then DPD/EOD per attribute.
std::string reports_csv(const std::vector<FairnessReport>& reports, const std::string& lead = {},
                        const std::vector<std::string>& lead_values = {}) {
  const auto names = attribute_names(reports);
  std::ostringstream out;
  if (!lead.empty()) out << lead << ',';
  out << "model,auc_mean,auc_std";
  for (const auto& n : names) out << ',' << n << "_dpd_mean," << n << "_dpd_std," << n << "_eod_mean," << n << "_eod_std";
  out << '\n';
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    if (!lead.empty()) out << csv_cell(lead_values.at(r)) << ',';
    out << csv_cell(rep.model) << ',' << fixed(rep.auc.mean) << ',' << fixed(rep.auc.std);
    for (const auto& n : names) {
      auto it = std::find_if(rep.attributes.begin(), rep.attributes.end(),
                             [&](const AttributeSummary& a) { return a.attribute == n; });
      if (it == rep.attributes.end()) {
        out << ",,,,";
      } else {
        out << ',' << fixed(it->dpd.mean) << ',' << fixed(it->dpd.std) << ',' << fixed(it->eod.mean) << ','
            << fixed(it->eod.std);
      }
    }
    out << '\n';
  }
  return out.str();
}

/// Aligned markdown table with mean±std cells.
std::string reports_markdown(const std::vector<FairnessReport>& reports, const std::string& lead = {},
                             const std::vector<std::string>& lead_values = {}) {
  const auto names = attribute_names(reports);
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head;
  if (!lead.empty()) head.push_back(lead);
  head.push_back("model");
  head.push_back("AUC");
  for (const auto& n : names) {
    head.push_back(n + " DPD");
    head.push_back(n + " EOD");
  }
  table.push_back(head);
  auto pm = [](const MeanStd& m) { return fixed(m.mean, 3) + " ± " + fixed(m.std, 3); };
  for (std::size_t r = 0; r < reports.size(); ++r) {
    std::vector<std::string> row;
    if (!lead.empty()) row.push_back(lead_values.at(r));
    row.push_back(reports[r].model);
    row.push_back(pm(reports[r].auc));
    for (const auto& n : names) {
      auto it = std::find_if(reports[r].attributes.begin(), reports[r].attributes.end(),
                             [&](const AttributeSummary& a) { return a.attribute == n; });
      row.push_back(it == reports[r].attributes.end() ? "-" : pm(it->dpd));
      row.push_back(it == reports[r].attributes.end() ? "-" : pm(it->eod));
    }
    table.push_back(std::move(row));
  }
  // Width in code points so the ± sign counts once.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> widths(head.size(), 3);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));
  }
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    out << '|';
    for (std::size_t c = 0; c < row.size(); ++c) out << ' ' << row[c] << std::string(widths[c] - width(row[c]), ' ') << " |";
    out << '\n';
  };
  emit(table[0]);
  out << '|';
  for (auto w : widths) out << std::string(w + 2, '-') << '|';
  out << '\n';
  for (std::size_t r = 1; r < table.size(); ++r) emit(table[r]);
  return out.str();
}

/// Per-group positive rates averaged over folds: group,rate.
std::string group_rates_csv(const FairnessReport& report, const std::string& attribute) {
  std::map<std::string, std::pair<double, int>> acc;
  std::vector<std::string> order;
  for (const auto& f : report.folds) {
    for (const auto& a : f.attributes) {
      if (a.attribute != attribute) continue;
      for (std::size_t g = 0; g < a.group_labels.size(); ++g) {
        auto [it, inserted] = acc.try_emplace(a.group_labels[g], 0.0, 0);
        if (inserted) order.push_back(a.group_labels[g]);
        it->second.first += a.positive_rates[g];
        ++it->second.second;
      }
    }
  }
  std::sort(order.begin(), order.end());
  std::ostringstream out;
  out << "group,rate\n";
  for (const auto& g : order) out << csv_cell(g) << ',' << fixed(acc[g].first / acc[g].second) << '\n';
  return out.str();
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model, sensitive, data, schema, synth;
  std::optional<double> alpha, alpha_kg, threshold;
  std::optional<int> folds, jobs;
  std::string out;
  bool freeze_dense = false, no_standardize = false, squash_step1 = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "experiment config JSON");
  cmd->add_option("--data", o.data, "cohort CSV");
  cmd->add_option("--schema", o.schema, "schema file for --data");
  cmd->add_option("--synth", o.synth, "synth config JSON to generate the cohort in memory");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--model", o.model, "meld, logistic, rf, gbdt or fair");
  cmd->add_option("--alpha", o.alpha, "end-to-end fairness weight");
  cmd->add_option("--alpha-kg", o.alpha_kg, "distillation fairness weight");
  cmd->add_option("--sensitive", o.sensitive, "sensitive attribute used for debiasing");
  cmd->add_option("--folds", o.folds, "cross-validation folds");
  cmd->add_option("--threshold", o.threshold, "binarization threshold for DPD/EOD");
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--jobs", o.jobs, "parallel folds");
  cmd->add_flag("--freeze-dense", o.freeze_dense, "keep distilled parameters fixed in step two");
  cmd->add_flag("--no-standardize", o.no_standardize, "feed raw dense features to the distilled net");
  cmd->add_flag("--squash-step1", o.squash_step1, "apply sigmoid before the step-one fairness term");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config.empty()) c = load_experiment_config(o.config);
  if (o.data) {
    c.data = *o.data;
    c.synth.reset();
  }
  if (o.schema) c.schema = *o.schema;
  if (o.synth) {
    c.synth = synth_config_from_json(parse_json(read_text(*o.synth), *o.synth));
    c.data.clear();
    c.schema.clear();
  }
  if (o.seed) c.seed = *o.seed;
  if (o.model) c.model = *o.model;
  if (o.alpha) c.settings.train.alpha = *o.alpha;
  if (o.alpha_kg) c.settings.train.alpha_kg = *o.alpha_kg;
  if (o.sensitive) c.settings.train.sensitive = *o.sensitive;
  if (o.folds) c.folds = *o.folds;
  if (o.threshold) c.settings.train.threshold = *o.threshold;
  if (o.jobs) c.jobs = *o.jobs;
  if (o.freeze_dense) c.settings.train.freeze_dense = true;
  if (o.no_standardize) c.settings.train.standardize = false;
  if (o.squash_step1) c.settings.train.squash_step1 = true;
  c.out = o.out;
  c.validate();
  return c;
}

void cmd_synth(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::size_t> rows,
               const std::string& out_dir) {
  SynthConfig config = synth_config_from_json(parse_json(read_text(config_path), config_path));
  if (seed) config.seed = *seed;
  if (rows) config.n_rows = *rows;
  config.validate();
  const Cohort cohort = synth_generate(config);
  OutputDir out(out_dir);
  std::ostringstream csv;
  write_cohort_csv(cohort, csv);
  out.write("cohort.csv", csv.str());
  out.write("schema.txt", format_schema(schema_of(cohort)));

  Json bias;
  bias["label"] = cohort.label_name;
  bias["score"] = cohort.score_name;
  bias["intercept"] = config.intercept;
  bias["signal_weights"] = config.resolved_weights();
  bias["proxy_features"] = config.proxy_features;
  bias["proxy_categoricals"] = config.proxy_categoricals;
  bias["label_noise"] = config.label_noise;
  Json attributes = Json::array();
  for (const auto& spec : config.attributes) {
    const auto& column = cohort.sensitive_column(spec.name);
    Json groups = Json::array();
    for (const auto& g : spec.groups) {
      std::size_t n = 0, pos = 0;
      for (std::size_t i = 0; i < cohort.rows(); ++i) {
        if (column.values[i] != g.label) continue;
        ++n;
        pos += static_cast<std::size_t>(cohort.labels[i]);
      }
      groups.push_back(Json{{"label", g.label},
                            {"proportion", g.proportion},
                            {"base_rate_shift", g.base_rate_shift},
                            {"feature_shift", g.feature_shift},
                            {"category_bias", g.category_bias},
                            {"rows", n},
                            {"positive_rate", n > 0 ? static_cast<double>(pos) / static_cast<double>(n) : 0.0}});
    }
    attributes.push_back(Json{{"name", spec.name}, {"groups", std::move(groups)}});
  }
  bias["attributes"] = std::move(attributes);
  out.write("bias_manifest.json", dump(bias));
  out.manifest("synth", synth_config_to_json(config), {{config_path, file_hash(config_path)}});
  std::cout << "wrote " << cohort.rows() << " rows to " << out.path("cohort.csv") << '\n';
}

void cmd_analyze(const std::string& counts_path, const std::optional<std::string>& data,
                 const std::optional<std::string>& schema, const std::string& out_dir) {
  std::map<std::string, std::string> inputs{{counts_path, file_hash(counts_path)}};
  std::optional<Cohort> cohort;
  if (data) {
    if (!schema) fail(ErrorCode::kUsage, "--data needs --schema");
    cohort = load_cohort(*data, load_schema(*schema));
    inputs[*data] = file_hash(*data);
    inputs[*schema] = file_hash(*schema);
  }
  const CohortAudit audit = audit_cohort(load_counts(counts_path), cohort ? &*cohort : nullptr);

  std::ostringstream table;
  table << "subgroup,mean_score,size,orr,gfr\n";
  Json subgroups = Json::array();
  for (const auto& s : audit.subgroups) {
    table << csv_cell(s.name) << ',' << fixed(s.mean_score, 5) << ',' << s.size << ',' << fixed(s.rates.orr, 5) << ','
          << (s.rates.gfr ? fixed(*s.rates.gfr, 5) : std::string()) << '\n';
    subgroups.push_back(Json{{"subgroup", s.name},
                             {"mean_score", s.mean_score},
                             {"size", s.size},
                             {"n_r", s.rates.received},
                             {"n_f", s.rates.failed},
                             {"orr", s.rates.orr},
                             {"gfr", s.rates.gfr ? Json(*s.rates.gfr) : Json()}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(); };
  Json j;
  j["subgroups"] = std::move(subgroups);
  j["pearson"] = Json{{"score_vs_orr", opt(audit.score_vs_orr)},
                      {"score_vs_gfr", opt(audit.score_vs_gfr)},
                      {"size_vs_orr", opt(audit.size_vs_orr)},
                      {"size_vs_gfr", opt(audit.size_vs_gfr)}};
  j["errors"] = audit.errors;

  std::ostringstream pearson;
  pearson << "pair,pearson\n";
  for (const auto& [name, v] : {std::pair{"score_vs_orr", audit.score_vs_orr}, std::pair{"score_vs_gfr", audit.score_vs_gfr},
                                std::pair{"size_vs_orr", audit.size_vs_orr}, std::pair{"size_vs_gfr", audit.size_vs_gfr}}) {
    pearson << name << ',' << (v ? fixed(*v, 5) : std::string()) << '\n';
  }
  OutputDir out(out_dir);
  out.write("subgroups.csv", table.str());
  out.write("pearson.csv", pearson.str());
  out.write("analysis.json", dump(j));
  out.manifest("analyze", Json{{"counts", counts_path}, {"data", data.value_or("")}, {"schema", schema.value_or("")}},
               inputs);
  std::cout << table.str() << pearson.str();
  // An audit with undefined correlations is still reported, but it is an error.
  if (!audit.errors.empty()) fail(ErrorCode::kUndefinedMetric, audit.errors.front());
}

void cmd_train(const ExperimentConfig& config) {
  LoadedCohort loaded = load_experiment_cohort(config);
  const Cohort& cohort = loaded.cohort;
  const std::string sensitive = training_sensitive(config, cohort);
  const FoldPlan plan = kfold_split(cohort.rows(), config.folds, derive_seed(config.seed, "folds"));
  const ModelFactory factory = make_factory(config.model, config.settings);
  const FairnessReport report = evaluate_folds(factory, cohort, plan, sensitive, config.settings.train.threshold,
                                               config.seed, config.model, config.jobs);
  const Json config_json = config.to_json();
  const std::string config_hash = git_blob_hash(dump(config_json));

  OutputDir out(config.out);
  out.write("report.json", dump(report_to_json(report)));
  out.write("report.csv", reports_csv({report}));
  out.write("report.md", reports_markdown({report}));
  for (const auto& a : report.attributes) {
    out.write("plot_rates_" + sanitize(a.attribute) + ".csv", group_rates_csv(report, a.attribute));
  }

  // The saved model is fit on the whole cohort.
  const std::uint64_t final_seed = derive_seed(config.seed, "final");
  if (config.model == "fair") {
    TwoStepLogs logs;
    auto model = two_step_train(cohort, config.settings.train, config.settings.gbdt, final_seed, &logs);
    out.write("model.json", dump(scorer_to_json(*model, config_hash)));
    out.write("training_log.json", dump(Json{{"step_one", distill_log_to_json(logs.step_one)},
                                             {"step_two", end_to_end_log_to_json(logs.step_two)}}));
  } else {
    auto model = factory(cohort, final_seed);
    out.write("model.json", dump(scorer_to_json(*model, config_hash)));
  }
  out.manifest("train", config_json, loaded.inputs);
  std::cout << reports_markdown({report});
}

void cmd_ablate(const ExperimentConfig& config) {
  LoadedCohort loaded = load_experiment_cohort(config);
  const Cohort& cohort = loaded.cohort;
  const FoldPlan plan = kfold_split(cohort.rows(), config.folds, derive_seed(config.seed, "folds"));
  OutputDir out(config.out);

  // Teachers are cached per fold, keyed by data, tree settings, seed and fold.
  Json key_base{{"inputs", loaded.inputs}, {"gbdt", gbdt_params_to_json(config.settings.gbdt)},
                {"seed", config.seed}, {"folds", config.folds}};
  auto key_for = [&](int fold) {
    Json k = key_base;
    k["fold"] = fold;
    return git_blob_hash(dump(k));
  };
  auto teacher_name = [](int fold) { return "teachers/fold_" + std::to_string(fold) + ".json"; };
  std::mutex write_lock;
  std::vector<std::string> teacher_docs(static_cast<std::size_t>(config.folds));
  TeacherHooks hooks;
  hooks.load = [&](int fold) -> std::optional<GbdtModel> {
    const std::string path = out.path(teacher_name(fold));
    if (!fs::exists(path)) return std::nullopt;
    Json j = parse_json(read_text(path), path);
    if (j.value("key", std::string()) != key_for(fold)) return std::nullopt;
    return gbdt_from_json(j.at("model"));
  };
  hooks.store = [&](int fold, const GbdtModel& teacher) {
    const std::string doc = dump(Json{{"key", key_for(fold)}, {"model", gbdt_to_json(teacher)}});
    std::lock_guard<std::mutex> lock(write_lock);
    teacher_docs[static_cast<std::size_t>(fold)] = doc;
  };
  const auto reports = run_ablation(cohort, plan, config.settings, config.seed, config.jobs, hooks);
  for (int f = 0; f < config.folds; ++f) out.write(teacher_name(f), teacher_docs[static_cast<std::size_t>(f)]);

  Json rows = Json::array();
  for (const auto& r : reports) rows.push_back(report_to_json(r));
  out.write("ablation.json", dump(Json{{"rows", std::move(rows)}}));
  out.write("ablation.csv", reports_csv(reports));
  out.write("ablation.md", reports_markdown(reports));
  out.manifest("ablate", config.to_json(), loaded.inputs);
  std::cout << reports_markdown(reports);
}

void cmd_report(const std::string& runs_dir, const std::optional<std::string>& out_opt) {
  if (!fs::is_directory(runs_dir)) fail(ErrorCode::kIo, runs_dir + " is not a directory");
  std::vector<fs::path> candidates{fs::path(runs_dir)};
  std::vector<fs::path> children;
  for (const auto& entry : fs::directory_iterator(runs_dir)) {
    if (entry.is_directory()) children.push_back(entry.path());
  }
  std::sort(children.begin(), children.end());
  candidates.insert(candidates.end(), children.begin(), children.end());

  std::vector<FairnessReport> reports;
  std::vector<std::string> run_names;
  std::vector<std::string> absent;
  std::vector<std::pair<std::string, std::string>> plots;
  auto load_report = [](const Json& j) {
    FairnessReport r;
    r.model = j.at("model").get<std::string>();
    r.sensitive = j.value("sensitive", std::string());
    r.threshold = j.value("threshold", 0.5);
    r.auc = {j.at("auc").at("mean").get<double>(), j.at("auc").at("std").get<double>()};
    for (const auto& a : j.at("attributes")) {
      r.attributes.push_back({a.at("attribute").get<std::string>(),
                              {a.at("dpd").at("mean").get<double>(), a.at("dpd").at("std").get<double>()},
                              {a.at("eod").at("mean").get<double>(), a.at("eod").at("std").get<double>()}});
    }
    for (const auto& f : j.at("folds")) {
      FoldResult fr;
      fr.fold = f.at("fold").get<int>();
      fr.auc = f.at("auc").get<double>();
      for (const auto& a : f.at("attributes")) {
        AttributeMetrics m;
        m.attribute = a.at("attribute").get<std::string>();
        m.dpd = a.at("dpd").get<double>();
        m.eod = a.at("eod").get<double>();
        for (auto it = a.at("positive_rates").begin(); it != a.at("positive_rates").end(); ++it) {
          m.group_labels.push_back(it.key());
          m.positive_rates.push_back(it.value().get<double>());
        }
        fr.attributes.push_back(std::move(m));
      }
      r.folds.push_back(std::move(fr));
    }
    return r;
  };
  for (const auto& dir : candidates) {
    const std::string name = dir == fs::path(runs_dir) ? "." : dir.filename().string();
    const fs::path single = dir / "report.json", ablation = dir / "ablation.json";
    std::vector<FairnessReport> found;
    try {
      if (fs::exists(single)) found.push_back(load_report(parse_json(read_text(single.string()), single.string())));
      if (fs::exists(ablation)) {
        for (const auto& row : parse_json(read_text(ablation.string()), ablation.string()).at("rows")) {
          found.push_back(load_report(row));
        }
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kSchema, "malformed report in " + dir.string() + ": " + e.what());
    }
    if (found.empty()) {
      if (fs::exists(dir / "manifest.json")) absent.push_back(name);
      continue;
    }
    for (auto& r : found) {
      for (const auto& a : r.attributes) {
        plots.emplace_back("plot_" + sanitize(name) + "_" + sanitize(r.model) + "_" + sanitize(a.attribute) + ".csv",
                           group_rates_csv(r, a.attribute));
      }
      run_names.push_back(name);
      reports.push_back(std::move(r));
    }
  }
  OutputDir out(out_opt.value_or(runs_dir));
  out.write("summary.csv", reports_csv(reports, "run", run_names));
  std::string md = reports_markdown(reports, "run", run_names);
  if (!absent.empty()) {
    md += "\nabsent runs:";
    for (const auto& a : absent) md += " " + a;
    md += "\n";
  }
  out.write("summary.md", md);
  for (const auto& [name, content] : plots) out.write(name, content);
  std::cout << md;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Fair tabular learning: GBDT distillation with two-step debiasing"};
  app.require_subcommand(1);

  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_rows;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort and its bias manifest");
  synth->add_option("--config", synth_config, "synth config JSON")->required();
  synth->add_option("--seed", synth_seed, "override the config seed");
  synth->add_option("--rows", synth_rows, "override n_rows");
  synth->add_option("--out", synth_out, "output directory")->required();

  std::string counts, analyze_out;
  std::optional<std::string> analyze_data, analyze_schema;
  auto* analyze = app.add_subcommand("analyze", "subgroup table and Pearson correlations of a cohort");
  analyze->add_option("--counts", counts, "subgroup,n_w,n_r,n_f[,mean_score] CSV")->required();
  analyze->add_option("--data", analyze_data, "cohort CSV supplying mean scores");
  analyze->add_option("--schema", analyze_schema, "schema file for --data");
  analyze->add_option("--out", analyze_out, "output directory")->required();

  CommonOptions train_opts, ablate_opts;
  auto* train = app.add_subcommand("train", "cross-validate one model and fit it on the full cohort");
  add_common(train, train_opts);
  auto* ablate = app.add_subcommand("ablate", "compare the four debiasing variants on shared teachers");
  add_common(ablate, ablate_opts);

  std::string runs_dir;
  std::optional<std::string> report_out;
  auto* report = app.add_subcommand("report", "summarize run directories");
  report->add_option("runs", runs_dir, "directory holding runs")->required();
  report->add_option("--out", report_out, "output directory (default: the runs directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage_error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*synth) {
      cmd_synth(synth_config, synth_seed, synth_rows, synth_out);
    } else if (*analyze) {
      cmd_analyze(counts, analyze_data, analyze_schema, analyze_out);
    } else if (*train) {
      cmd_train(resolve(train_opts));
    } else if (*ablate) {
      cmd_ablate(resolve(ablate_opts));
    } else if (*report) {
      cmd_report(runs_dir, report_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::kUsage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal_error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace fairkd
