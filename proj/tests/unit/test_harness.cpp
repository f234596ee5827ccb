#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "sslab/commands.hpp"
#include "sslab/config.hpp"
#include "sslab/diagnostics.hpp"
#include "sslab/error.hpp"
#include "sslab/ledger.hpp"
#include "sslab/plots.hpp"
#include "sslab/registry.hpp"
#include "test_util.hpp"
#include "doctest.h"

using namespace sslab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_config_json() {
  return json::parse(R"({
    "datasets": [{"kind": "oriented_shapes", "n_per_class": 30, "class_count": 2, "size": 32, "seed": 3}],
    "pretexts": ["rotation"],
    "backbone": {"width_multiplier": 0.25, "input_side": 32},
    "augment": {"resize_to": 32},
    "optim": {"epochs": 2, "decay_epochs": [1], "batch_size": 16},
    "label_fractions": [1.0, 0.1],
    "diagnostics": ["RANDOM_LABELS", "PCA", "KNN"],
    "knn_k": 10,
    "knn_queries": 2
  })");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

fs::path write_config(const fs::path& dir, const json& j) {
  fs::create_directories(dir);
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

// One trained output root shared by the integration cases.
struct Trained {
  fs::path root;
  ExperimentConfig config;
  std::vector<TrainOutcome> first;
  std::string train_log;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.root = test_util::fresh_dir("harness_trained");
    out.config = parse_config(tiny_config_json());
    std::ostringstream log;
    out.first = cmd_train(out.config, out.root, log);
    out.train_log = log.str();
    return out;
  }();
  return t;
}

std::string run_id_of(const Trained& t, PretextKind kind, std::optional<double> fraction = std::nullopt) {
  for (const auto& o : t.first) {
    if (o.record.spec.pretext == kind && o.record.spec.variant == "full" && o.record.spec.label_fraction == fraction) {
      return o.record.id;
    }
  }
  FAIL("run not planned");
  return {};
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "sslab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST_CASE("config: unknown keys and invalid values name the field") {
  auto j = tiny_config_json();
  j["optim"]["decay_epochs"] = {100, 80};
  j["optim"]["epochs"] = 120;
  try {
    parse_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("optim") != std::string::npos);
    CHECK(std::string(e.what()).find("increasing") != std::string::npos);
  }
  j = tiny_config_json();
  j["backbone"]["depth"] = 3;
  try {
    parse_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("depth") != std::string::npos);
  }
  j = tiny_config_json();
  j["pretexts"] = {"colorization"};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = tiny_config_json();
  j["label_fractions"] = {0.0};
  CHECK_THROWS_AS(parse_config(j), ConfigError);
  j = tiny_config_json();
  j["optim"]["weight_decay"] = 0.0005;
  CHECK_THROWS_AS(parse_config(j), ConfigError);
}

TEST_CASE("config: run ids survive re-serialization") {
  const auto a = parse_config(tiny_config_json());
  const auto b = parse_config(json::parse(json(a).dump()));
  const auto ra = planned_runs(a);
  const auto rb = planned_runs(b);
  REQUIRE(ra.size() == rb.size());
  std::set<std::string> ids;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].id() == rb[i].id());
    ids.insert(ra[i].id());
  }
  CHECK(ids.size() == ra.size());
  auto changed = tiny_config_json();
  changed["optim"]["base_lr"] = 0.05;
  CHECK(planned_runs(parse_config(changed)).back().id() != ra.back().id());
}

TEST_CASE("config: output root precedence is flag, then environment, then config") {
  ExperimentConfig config;
  config.output_dir = "from_config";
  ::unsetenv(kOutputEnvVar);
  CHECK(resolve_output_root(std::nullopt, &config) == fs::path("from_config"));
  ::setenv(kOutputEnvVar, "from_env", 1);
  CHECK(resolve_output_root(std::nullopt, &config) == fs::path("from_env"));
  CHECK(resolve_output_root(std::string("from_flag"), &config) == fs::path("from_flag"));
  ::unsetenv(kOutputEnvVar);
}

// ---------------------------------------------------------------------------
// Train / probe

TEST_CASE("train: second invocation is a cache hit and leaves records untouched") {
  const auto& t = trained();
  CHECK(t.first.size() == 3);  // supervised at 1.0 and 0.1, then rotation
  for (const auto& o : t.first) CHECK_FALSE(o.cache_hit);
  const RunRegistry registry(t.root);
  std::map<std::string, std::string> before;
  for (const auto& o : t.first) before[o.record.id] = read_file(registry.run_dir(o.record.id) / "run.json");
  std::ostringstream log;
  const auto second = cmd_train(t.config, t.root, log);
  for (const auto& o : second) {
    CHECK(o.cache_hit);
    CHECK(read_file(registry.run_dir(o.record.id) / "run.json") == before[o.record.id]);
  }
  CHECK(log.str().find("cache hit") != std::string::npos);
  auto record = registry.require_complete(t.first.front().record.id);
  record.notes = "mutated";
  CHECK_THROWS_AS(registry.write(record), RuntimeFailure);
}

TEST_CASE("probe: fractions 1.0 and 0.1 give two rows that replay exactly") {
  const auto& t = trained();
  const auto rot = run_id_of(t, PretextKind::kRotation);
  const int dim = t.config.effective_pooled_dim();
  std::ostringstream log;
  const auto full = cmd_probe(t.root, rot, 1.0, dim, t.config.probe, log);
  const auto tenth = cmd_probe(t.root, rot, 0.1, dim, t.config.probe, log);
  CHECK(full.label_fraction == 1.0);
  CHECK(tenth.label_fraction == 0.1);
  CHECK(full.train_count > tenth.train_count);
  CHECK(tenth.train_count == 2);

  const RunRegistry registry(t.root);
  const Ledger ledger(registry.ledger_path());
  const auto lines_before = ledger.read().size();
  CHECK(cmd_probe(t.root, rot, 1.0, dim, t.config.probe, log) == full);
  CHECK(ledger.read().size() == lines_before);

  // Replay oracle: recompute the probe from the checkpoint with the same seed.
  auto replay = compute_probe_row(registry, registry.require_complete(rot), 0.1, dim, t.config.probe);
  replay.normalized_acc = tenth.normalized_acc;
  CHECK(format_ledger_row(replay) == format_ledger_row(tenth));
}

TEST_CASE("probe: normalized accuracy appears once the supervised baseline row exists") {
  const auto& t = trained();
  const int dim = t.config.effective_pooled_dim();
  std::ostringstream log;
  const auto sup = cmd_probe(t.root, run_id_of(t, PretextKind::kSupervised, 1.0), 1.0, dim, t.config.probe, log);
  CHECK(sup.normalized_acc == 1.0);
  CHECK_THROWS_AS(cmd_probe(t.root, run_id_of(t, PretextKind::kSupervised, 1.0), 0.1, dim, t.config.probe, log),
                  ConfigError);

  // Ledger rule in isolation.
  const auto path = test_util::fresh_dir("ledger_rule") / "ledger.csv";
  const Ledger ledger(path);
  LedgerRow rot;
  rot.run_id = "r";
  rot.dataset = "d";
  rot.pretext = "rotation";
  rot.test_acc = 0.3;
  CHECK_FALSE(ledger.append(rot).normalized_acc.has_value());
  LedgerRow base = rot;
  base.run_id = "s";
  base.pretext = "supervised";
  base.test_acc = 0.6;
  CHECK(ledger.append(base).normalized_acc == 1.0);
  rot.run_id = "r2";
  const auto filled = ledger.append(rot);
  REQUIRE(filled.normalized_acc.has_value());
  CHECK(*filled.normalized_acc == doctest::Approx(0.5));
  rot.run_id = "r3";
  rot.dataset = "other";
  CHECK_FALSE(ledger.append(rot).normalized_acc.has_value());
  const auto rows = ledger.read();
  CHECK(rows.size() == 4);
  CHECK(read_file(path).rfind("# sslab results ledger v1\n", 0) == 0);
}

TEST_CASE("probe: missing runs are reported as missing dependencies") {
  const auto& t = trained();
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_probe(t.root, "0123456789abcdef", 1.0, 64, t.config.probe, log), MissingDependency);
}

// ---------------------------------------------------------------------------
// Diagnose

TEST_CASE("diagnose: GENERALIZATION without the half-class run names the missing id") {
  const auto& t = trained();
  const auto rot = run_id_of(t, PretextKind::kRotation);
  const auto half_id = RunRegistry(t.root).require_complete(rot).spec.half().id();
  std::ostringstream log;
  try {
    cmd_diagnose(t.root, rot, {Diagnostic::kGeneralization}, DiagnoseOptions{}, log);
    FAIL("expected MissingDependency");
  } catch (const MissingDependency& e) {
    CHECK(std::string(e.what()).find(half_id) != std::string::npos);
  }
}

TEST_CASE("diagnose: PCA reruns are byte-identical and KNN lists ten neighbours") {
  const auto& t = trained();
  const auto rot = run_id_of(t, PretextKind::kRotation);
  DiagnoseOptions options;
  options.knn_k = 10;
  options.knn_queries = 2;
  std::ostringstream log;
  const auto report = cmd_diagnose(t.root, rot, {Diagnostic::kPca, Diagnostic::kKnn, Diagnostic::kRandomLabels},
                                   options, log);
  const auto dir = RunRegistry(t.root).diagnostics_dir(rot);
  const auto pca_first = read_file(dir / "pca.csv");
  cmd_diagnose(t.root, rot, {Diagnostic::kPca}, options, log);
  CHECK(read_file(dir / "pca.csv") == pca_first);
  CHECK(pca_first.rfind("n,train,val\n", 0) == 0);

  REQUIRE(report.contains("knn"));
  CHECK(report["knn"]["k"] == 10);
  CHECK(report["knn"]["queries"].size() == 2);
  for (const auto& q : report["knn"]["queries"]) {
    CHECK(q["neighbors"].size() == 10);
    for (const auto& n : q["neighbors"]) CHECK(n["image_id"] != q["query_id"]);
  }
  const auto on_disk = json::parse(read_file(dir / "report.json"));
  CHECK(on_disk.contains("pca"));
  CHECK(on_disk.contains("knn"));
  CHECK(on_disk.contains("random_labels"));
  CHECK(on_disk["random_labels"].contains("shuffled_train_acc"));
}

// ---------------------------------------------------------------------------
// Report

TEST_CASE("report: a single-dataset ledger yields all four artifact kinds") {
  const auto& t = trained();
  std::ostringstream log;
  const auto rot = run_id_of(t, PretextKind::kRotation);
  const int dim = t.config.effective_pooled_dim();
  cmd_probe(t.root, run_id_of(t, PretextKind::kSupervised, 1.0), 1.0, dim, t.config.probe, log);
  cmd_probe(t.root, rot, 1.0, dim, t.config.probe, log);
  cmd_diagnose(t.root, rot, {Diagnostic::kPca, Diagnostic::kRandomLabels}, DiagnoseOptions{}, log);
  const auto summary = cmd_report(t.root, log);
  for (const auto& f : summary.files) CHECK_MESSAGE(fs::exists(f), f.string());
  const auto dir = RunRegistry(t.root).report_dir();
  for (const char* stem : {"fig3_downstream_accuracy", "fig2_supervised_vs_pretext", "fig8_explained_variance",
                           "fig7_random_label_gap"}) {
    CHECK_MESSAGE(fs::exists(dir / (std::string(stem) + ".svg")), stem);
    CHECK_MESSAGE(fs::exists(dir / (std::string(stem) + ".csv")), stem);
  }
  const auto scatter = read_csv(dir / "fig2_supervised_vs_pretext.csv");
  CHECK(scatter.size() == 2);  // header plus one point

  // The curve x-axis is the default PCA grid cut at the feature dim, plus full rank.
  std::set<int> xs;
  for (const auto& row : read_csv(dir / "fig8_explained_variance.csv")) {
    if (row[0] != "series") xs.insert(std::stoi(row[1]));
  }
  std::set<int> expected;
  for (const int n : default_pca_grid()) {
    if (n <= dim) expected.insert(n);
  }
  expected.insert(dim);
  CHECK(xs == expected);
  CHECK(fs::exists(dir / "summary.md"));
}

TEST_CASE("report: an empty ledger is a missing dependency") {
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_report(test_util::fresh_dir("empty_report"), log), MissingDependency);
}

TEST_CASE("scatter marker area is proportional to dataset size") {
  const auto stem = test_util::fresh_dir("scatter") / "sizes";
  write_scatter(stem, {"t", "x", "y"}, {{"rotation", "small", 0.1, 0.2, 100.0}, {"rotation", "large", 0.3, 0.4, 400.0}});
  const auto rows = read_csv(fs::path(stem.string() + ".csv"));
  REQUIRE(rows.size() == 3);
  CHECK((rows[0] == std::vector<std::string>{"series", "label", "x", "y", "size", "marker_area"}));
  const double small = std::stod(rows[1][5]);
  const double large = std::stod(rows[2][5]);
  CHECK(large / small == doctest::Approx(4.0));
  CHECK(large == doctest::Approx(kMaxMarkerArea));
  CHECK(fs::exists(fs::path(stem.string() + ".svg")));
}

// ---------------------------------------------------------------------------
// CLI

TEST_CASE("cli: exit codes follow the scripting contract") {
  const auto dir = test_util::fresh_dir("cli");
  std::string err;
  CHECK(cli({}, nullptr, &err) == kExitConfig);
  CHECK(cli({"--help"}) == kExitOk);
  CHECK(cli({"frobnicate"}) == kExitConfig);
  CHECK(cli({"train"}, nullptr, &err) == kExitConfig);
  CHECK(err.find("--config") != std::string::npos);
  CHECK(cli({"--config", (dir / "absent.json").string(), "train"}) == kExitConfig);

  auto bad = tiny_config_json();
  bad["optim"]["decay_epochs"] = {2, 1};
  bad["optim"]["epochs"] = 3;
  const auto bad_path = write_config(dir / "bad", bad);
  CHECK(cli({"--config", bad_path.string(), "train"}, nullptr, &err) == kExitConfig);
  CHECK(err.find("optim") != std::string::npos);

  CHECK(cli({"--out", (dir / "nothing").string(), "probe", "--run", "0123456789abcdef"}, nullptr, &err) ==
        kExitMissing);
  CHECK(cli({"--out", (dir / "nothing").string(), "report"}) == kExitMissing);
  CHECK(cli({"--out", (dir / "nothing").string(), "diagnose", "--run", "x", "--which", "PCA,BOGUS"}) == kExitConfig);
}

TEST_CASE("cli: SSLAB_OUT redirects output and corrupted artifacts exit 4") {
  const auto& t = trained();
  const auto dir = test_util::fresh_dir("cli_env");
  const auto config_path = write_config(dir, tiny_config_json());
  const auto target = dir / "env_root";
  ::setenv(kOutputEnvVar, target.string().c_str(), 1);
  std::string out;
  std::string err;
  const int code = cli({"--config", config_path.string(), "make-dataset"}, &out, &err);
  ::unsetenv(kOutputEnvVar);
  CHECK_MESSAGE(code == kExitOk, err);
  CHECK(fs::exists(target / "datasets"));

  // Export once, then corrupt the cached payload.
  const auto rot = run_id_of(t, PretextKind::kRotation);
  CHECK(cli({"--out", t.root.string(), "export-features", "--run", rot, "--split", "val", "--dest",
             (dir / "val").string()},
            &out, &err) == kExitOk);
  const auto cached = RunRegistry(t.root).features_stem(rot, Split::kVal, t.config.effective_pooled_dim());
  {
    std::fstream f(fs::path(cached.string() + ".f32"), std::ios::in | std::ios::out | std::ios::binary);
    const float evil = 123.0f;
    f.write(reinterpret_cast<const char*>(&evil), sizeof evil);
  }
  CHECK(cli({"--out", t.root.string(), "export-features", "--run", rot, "--split", "val"}, &out, &err) ==
        kExitRuntime);
  fs::remove(fs::path(cached.string() + ".f32"));
  fs::remove(fs::path(cached.string() + ".json"));
  CHECK(cli({"--out", t.root.string(), "export-features", "--run", rot, "--split", "nope"}) == kExitConfig);
}
