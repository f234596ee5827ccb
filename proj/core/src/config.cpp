#include "sslab/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include "sslab/error.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!known) throw ConfigError(where + "." + item.key() + ": unknown field");
  }
}

// Runs `fn`, rewrapping precondition failures as a field-level ConfigError.
template <typename Fn>
void field(const std::string& where, Fn fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

int floor_count(int n, double fraction) { return static_cast<int>(std::floor(n * fraction + 1e-9)); }

}  // namespace

void DatasetSpec::validate() const {
  ratios.validate();
  if (source == "synthetic") {
    if (size < 32) throw InvalidArgument("size must be at least 32");
    if (class_count < 2) throw InvalidArgument("class_count must be at least 2");
    if (n_per_class < 3) throw InvalidArgument("n_per_class must be at least 3");
    if (floor_count(n_per_class, ratios.train) < 1 || floor_count(n_per_class, ratios.val) < 1 ||
        n_per_class - floor_count(n_per_class, ratios.train) - floor_count(n_per_class, ratios.val) < 1) {
      throw InvalidArgument("n_per_class " + std::to_string(n_per_class) + " leaves an empty split per class");
    }
  } else if (source == "directory") {
    if (path.empty()) throw InvalidArgument("path is required for a directory dataset");
  } else {
    throw InvalidArgument("source must be 'synthetic' or 'directory', got '" + source + "'");
  }
}

void to_json(nlohmann::json& j, const DatasetSpec& s) {
  j = nlohmann::json{{"source", s.source},
                     {"seed", s.seed},
                     {"ratios", {{"train", s.ratios.train}, {"val", s.ratios.val}, {"test", s.ratios.test}}}};
  if (s.source == "synthetic") {
    j["kind"] = std::string(to_string(s.kind));
    j["n_per_class"] = s.n_per_class;
    j["class_count"] = s.class_count;
    j["size"] = s.size;
  } else {
    j["path"] = s.path;
    j["size"] = s.size;
  }
}

void from_json(const nlohmann::json& j, DatasetSpec& s) {
  const DatasetSpec d;
  s.source = j.value("source", d.source);
  s.kind = synthetic_kind_from_string(j.value("kind", std::string(to_string(d.kind))));
  s.n_per_class = j.value("n_per_class", d.n_per_class);
  s.class_count = j.value("class_count", d.class_count);
  s.size = j.value("size", d.size);
  s.seed = j.value("seed", d.seed);
  s.path = j.value("path", d.path);
  if (j.contains("ratios")) {
    const auto& r = j.at("ratios");
    s.ratios.train = r.value("train", d.ratios.train);
    s.ratios.val = r.value("val", d.ratios.val);
    s.ratios.test = r.value("test", d.ratios.test);
  }
}

std::string_view to_string(Diagnostic d) {
  switch (d) {
    case Diagnostic::kGeneralization: return "GENERALIZATION";
    case Diagnostic::kRandomLabels: return "RANDOM_LABELS";
    case Diagnostic::kPca: return "PCA";
    case Diagnostic::kKnn: return "KNN";
    case Diagnostic::kIdLoss: return "ID_LOSS";
  }
  return "UNKNOWN";
}

Diagnostic diagnostic_from_string(std::string_view text) {
  for (const auto d : all_diagnostics()) {
    if (text == to_string(d)) return d;
  }
  throw InvalidArgument("unknown diagnostic '" + std::string(text) +
                        "' (expected GENERALIZATION, RANDOM_LABELS, PCA, KNN or ID_LOSS)");
}

std::set<Diagnostic> all_diagnostics() {
  return {Diagnostic::kGeneralization, Diagnostic::kRandomLabels, Diagnostic::kPca, Diagnostic::kKnn,
          Diagnostic::kIdLoss};
}

int ExperimentConfig::effective_pooled_dim() const {
  return pooled_dim > 0 ? pooled_dim : backbone.feature_channels();
}

void ExperimentConfig::validate() const {
  if (datasets.empty()) throw ConfigError("datasets: at least one dataset is required");
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    field("datasets[" + std::to_string(i) + "]", [&] { datasets[i].validate(); });
  }
  if (pretexts.empty() && !supervised_baseline) throw ConfigError("pretexts: nothing to train");
  for (const auto kind : pretexts) {
    if (kind == PretextKind::kSupervised) {
      throw ConfigError("pretexts: supervised training is requested with supervised_baseline");
    }
  }
  field("backbone", [&] { backbone.validate(); });
  field("optim", [&] { optim.validate(); });
  field("augment", [&] { augment.validate(); });
  if (augment.resize_to != backbone.input_side) {
    throw ConfigError("augment.resize_to: must equal backbone.input_side (" + std::to_string(backbone.input_side) + ")");
  }
  if (std::find(pretexts.begin(), pretexts.end(), PretextKind::kJigsaw) != pretexts.end()) {
    field("augment.resize_to", [&] { jigsaw_patch_side(augment.resize_to); });
  }
  field("pretext", [&] { pretext.validate(); });
  field("probe", [&] { probe.validate(); });
  if (!(early_stop.threshold > 0.0 && early_stop.threshold <= 1.0)) {
    throw ConfigError("early_stop.threshold: must be in (0, 1]");
  }
  field("pooled_dim", [&] {
    pool_grid_for_dim(backbone.feature_channels(), backbone.feature_side(), effective_pooled_dim());
  });
  if (label_fractions.empty()) throw ConfigError("label_fractions: at least one fraction is required");
  for (std::size_t i = 0; i < label_fractions.size(); ++i) {
    const double f = label_fractions[i];
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("label_fractions[" + std::to_string(i) + "]: must be in (0, 1]");
    if (std::count(label_fractions.begin(), label_fractions.end(), f) > 1) {
      throw ConfigError("label_fractions[" + std::to_string(i) + "]: duplicate fraction");
    }
  }
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  if (knn_k < 1) throw ConfigError("knn_k: must be positive");
  if (knn_queries < 1) throw ConfigError("knn_queries: must be positive");
  if (threads < 1) throw ConfigError("threads: must be positive");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> pretexts;
  for (const auto k : c.pretexts) pretexts.emplace_back(to_string(k));
  std::vector<std::string> diagnostics;
  for (const auto d : c.diagnostics) diagnostics.emplace_back(to_string(d));
  j = nlohmann::json{{"datasets", c.datasets},
                     {"pretexts", pretexts},
                     {"supervised_baseline", c.supervised_baseline},
                     {"backbone", c.backbone},
                     {"optim", c.optim},
                     {"augment", c.augment},
                     {"pretext", c.pretext},
                     {"early_stop", {{"threshold", c.early_stop.threshold}, {"enabled", c.early_stop.enabled}}},
                     {"probe", c.probe},
                     {"pooled_dim", c.pooled_dim},
                     {"label_fractions", c.label_fractions},
                     {"seeds", c.seeds},
                     {"output_dir", c.output_dir},
                     {"diagnostics", diagnostics},
                     {"knn_k", c.knn_k},
                     {"knn_queries", c.knn_queries},
                     {"threads", c.threads}};
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  check_keys(j,
             {"datasets", "pretexts", "supervised_baseline", "backbone", "optim", "augment", "pretext", "early_stop",
              "probe", "pooled_dim", "label_fractions", "seeds", "output_dir", "diagnostics", "knn_k", "knn_queries",
              "threads"},
             "config");
  ExperimentConfig c;
  field("datasets", [&] {
    c.datasets.clear();
    const auto& list = j.at("datasets");
    if (!list.is_array()) throw InvalidArgument("expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const auto where = "datasets[" + std::to_string(i) + "]";
      check_keys(list[i], {"source", "kind", "n_per_class", "class_count", "size", "seed", "path", "ratios"}, where);
      if (list[i].contains("ratios")) check_keys(list[i]["ratios"], {"train", "val", "test"}, where + ".ratios");
      field(where, [&] { c.datasets.push_back(list[i].get<DatasetSpec>()); });
    }
  });
  if (j.contains("pretexts")) {
    field("pretexts", [&] {
      c.pretexts.clear();
      for (const auto& p : j.at("pretexts")) c.pretexts.push_back(pretext_kind_from_string(p.get<std::string>()));
    });
  }
  if (j.contains("backbone")) {
    check_keys(j["backbone"], {"stage_channels", "blocks_per_stage", "input_side", "width_multiplier"}, "config.backbone");
    field("backbone", [&] { c.backbone = j.at("backbone").get<BackboneConfig>(); });
  }
  if (j.contains("optim")) {
    check_keys(j["optim"], {"base_lr", "momentum", "epochs", "decay_epochs", "decay_factor", "weight_decay", "batch_size"},
               "config.optim");
    field("optim", [&] { c.optim = j.at("optim").get<OptimConfig>(); });
  }
  if (j.contains("augment")) {
    check_keys(j["augment"], {"resize_to", "random_crop", "crop_padding", "horizontal_flip"}, "config.augment");
    field("augment", [&] { c.augment = j.at("augment").get<AugmentPolicy>(); });
    if (!j["augment"].contains("resize_to")) c.augment.resize_to = c.backbone.input_side;
  } else {
    c.augment.resize_to = c.backbone.input_side;
  }
  if (j.contains("pretext")) {
    check_keys(j["pretext"],
               {"permutation_count", "permutation_pool", "jigsaw_projection", "id_temperature", "id_momentum",
                "id_embedding_dim"},
               "config.pretext");
    field("pretext", [&] { c.pretext = j.at("pretext").get<PretextOptions>(); });
  }
  if (j.contains("early_stop")) {
    check_keys(j["early_stop"], {"threshold", "enabled"}, "config.early_stop");
    field("early_stop", [&] {
      c.early_stop.threshold = j["early_stop"].value("threshold", c.early_stop.threshold);
      c.early_stop.enabled = j["early_stop"].value("enabled", c.early_stop.enabled);
    });
  }
  if (j.contains("probe")) {
    check_keys(j["probe"], {"optim", "standardize"}, "config.probe");
    field("probe", [&] { c.probe = j.at("probe").get<ProbeConfig>(); });
  }
  field("supervised_baseline", [&] { c.supervised_baseline = j.value("supervised_baseline", c.supervised_baseline); });
  field("pooled_dim", [&] { c.pooled_dim = j.value("pooled_dim", c.pooled_dim); });
  field("label_fractions", [&] { c.label_fractions = j.value("label_fractions", c.label_fractions); });
  field("seeds", [&] { c.seeds = j.value("seeds", c.seeds); });
  field("output_dir", [&] { c.output_dir = j.value("output_dir", c.output_dir); });
  if (j.contains("diagnostics")) {
    field("diagnostics", [&] {
      c.diagnostics.clear();
      for (const auto& d : j.at("diagnostics")) c.diagnostics.insert(diagnostic_from_string(d.get<std::string>()));
    });
  }
  field("knn_k", [&] { c.knn_k = j.value("knn_k", c.knn_k); });
  field("knn_queries", [&] { c.knn_queries = j.value("knn_queries", c.knn_queries); });
  field("threads", [&] { c.threads = j.value("threads", c.threads); });
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

fs::path resolve_output_root(const std::optional<std::string>& flag, const ExperimentConfig* config) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutputEnvVar); env != nullptr && *env != '\0') return env;
  if (config != nullptr) return config->output_dir;
  return ExperimentConfig{}.output_dir;
}

}  // namespace sslab
