#include "sslab/registry.hpp"

#include <algorithm>
#include <fstream>

#include "sslab/error.hpp"
#include "sslab/hashing.hpp"
#include "sslab/rng.hpp"

namespace fs = std::filesystem;

namespace sslab {

nlohmann::json RunSpec::canonical() const {
  nlohmann::json j = *this;
  return j;
}

std::string RunSpec::id() const { return sha256_hex(canonical().dump()).substr(0, 16); }

std::uint64_t RunSpec::training_seed() const {
  std::string tag = "train/" + std::string(to_string(pretext)) + "/" + variant;
  if (label_fraction) tag += "/" + nlohmann::json(*label_fraction).dump();
  return derive_seed(seed, tag);
}

RunSpec RunSpec::half() const {
  RunSpec h = *this;
  h.variant = "half";
  return h;
}

void to_json(nlohmann::json& j, const RunSpec& s) {
  j = nlohmann::json{{"dataset", s.dataset},
                     {"pretext", std::string(to_string(s.pretext))},
                     {"variant", s.variant},
                     {"backbone", s.backbone},
                     {"optim", s.optim},
                     {"augment", s.augment},
                     {"pretext_options", s.options},
                     {"early_stop", {{"threshold", s.early_stop.threshold}, {"enabled", s.early_stop.enabled}}},
                     {"seed", s.seed}};
  if (s.label_fraction) j["label_fraction"] = *s.label_fraction;
}

void from_json(const nlohmann::json& j, RunSpec& s) {
  s.dataset = j.at("dataset").get<DatasetSpec>();
  s.pretext = pretext_kind_from_string(j.at("pretext").get<std::string>());
  s.variant = j.at("variant").get<std::string>();
  s.backbone = j.at("backbone").get<BackboneConfig>();
  s.optim = j.at("optim").get<OptimConfig>();
  s.augment = j.at("augment").get<AugmentPolicy>();
  s.options = j.at("pretext_options").get<PretextOptions>();
  s.early_stop.threshold = j.at("early_stop").at("threshold").get<double>();
  s.early_stop.enabled = j.at("early_stop").at("enabled").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("label_fraction")) s.label_fraction = j.at("label_fraction").get<double>();
}

RunSpec make_run_spec(const ExperimentConfig& config, const DatasetSpec& dataset, PretextKind kind,
                      std::uint64_t seed, std::optional<double> label_fraction) {
  RunSpec s;
  s.dataset = dataset;
  s.pretext = kind;
  s.backbone = config.backbone;
  s.optim = config.optim;
  s.augment = config.augment;
  s.options = config.pretext;
  s.early_stop = config.early_stop;
  s.seed = seed;
  if (kind == PretextKind::kSupervised) s.label_fraction = label_fraction.value_or(1.0);
  // Fields a pretext never reads stay at their defaults so they do not split the cache.
  if (kind != PretextKind::kJigsaw) {
    s.options.permutation_count = PretextOptions{}.permutation_count;
    s.options.permutation_pool = PretextOptions{}.permutation_pool;
    s.options.jigsaw_projection = PretextOptions{}.jigsaw_projection;
  }
  if (kind != PretextKind::kInstanceDiscrimination) {
    s.options.id_temperature = PretextOptions{}.id_temperature;
    s.options.id_momentum = PretextOptions{}.id_momentum;
    s.options.id_embedding_dim = PretextOptions{}.id_embedding_dim;
  }
  if (!s.early_stop.applies_to(kind)) s.early_stop = EarlierStopRule{};
  return s;
}

void to_json(nlohmann::json& j, const RunRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"spec", r.spec},
                     {"status", r.status},
                     {"dataset_name", r.dataset_name},
                     {"train_size", r.train_size},
                     {"epochs_run", r.epochs_run},
                     {"halted_early", r.halted_early},
                     {"wallclock_s", r.wallclock_s},
                     {"checkpoint", r.checkpoint},
                     {"curve", r.curve},
                     {"notes", r.notes}};
}

void from_json(const nlohmann::json& j, RunRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.spec = j.at("spec").get<RunSpec>();
  r.status = j.at("status").get<std::string>();
  r.dataset_name = j.value("dataset_name", std::string{});
  r.train_size = j.value("train_size", std::size_t{0});
  r.epochs_run = j.value("epochs_run", 0);
  r.halted_early = j.value("halted_early", false);
  r.wallclock_s = j.value("wallclock_s", 0.0);
  r.checkpoint = j.value("checkpoint", std::string{"model"});
  r.curve = j.value("curve", std::string{"curve.csv"});
  r.notes = j.value("notes", std::string{});
}

RunRegistry::RunRegistry(fs::path root) : root_(std::move(root)) {}

fs::path RunRegistry::run_dir(const std::string& id) const { return root_ / "runs" / id; }

fs::path RunRegistry::checkpoint_stem(const RunRecord& record) const { return run_dir(record.id) / record.checkpoint; }

fs::path RunRegistry::features_stem(const std::string& id, Split split, int pooled_dim) const {
  return root_ / "features" / id / (std::string(to_string(split)) + "_" + std::to_string(pooled_dim));
}

fs::path RunRegistry::diagnostics_dir(const std::string& id) const { return root_ / "diagnostics" / id; }

fs::path RunRegistry::ledger_path() const { return root_ / "ledger.csv"; }

fs::path RunRegistry::report_dir() const { return root_ / "report"; }

std::optional<RunRecord> RunRegistry::find(const std::string& id) const {
  const auto path = run_dir(id) / "run.json";
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    auto record = nlohmann::json::parse(in).get<RunRecord>();
    if (record.id != id) throw RuntimeFailure("run record " + path.string() + " carries id " + record.id);
    return record;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed run record " + path.string() + ": " + e.what());
  }
}

RunRecord RunRegistry::require_complete(const std::string& id) const {
  const auto record = find(id);
  if (!record) throw MissingDependency("run " + id + " not found under " + (root_ / "runs").string());
  if (!record->complete()) throw MissingDependency("run " + id + " has not completed");
  return *record;
}

std::vector<RunRecord> RunRegistry::completed() const {
  std::vector<RunRecord> out;
  const auto runs = root_ / "runs";
  if (!fs::exists(runs)) return out;
  for (const auto& entry : fs::directory_iterator(runs)) {
    if (!entry.is_directory()) continue;
    if (auto r = find(entry.path().filename().string()); r && r->complete()) out.push_back(*r);
  }
  std::sort(out.begin(), out.end(), [](const RunRecord& a, const RunRecord& b) { return a.id < b.id; });
  return out;
}

void RunRegistry::write(const RunRecord& record) const {
  if (const auto existing = find(record.id); existing && existing->complete()) {
    throw RuntimeFailure("run " + record.id + " is complete and immutable");
  }
  const auto dir = run_dir(record.id);
  fs::create_directories(dir);
  const auto tmp = dir / "run.json.tmp";
  {
    std::ofstream out(tmp);
    out << nlohmann::json(record).dump(2) << '\n';
    if (!out) throw RuntimeFailure("cannot write run record in " + dir.string());
  }
  fs::rename(tmp, dir / "run.json");
}

void RunRegistry::discard_incomplete(const std::string& id) const {
  if (const auto existing = find(id); existing && existing->complete()) {
    throw RuntimeFailure("run " + id + " is complete and immutable");
  }
  fs::remove_all(run_dir(id));
}

}  // namespace sslab
