#include "sslab/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>

#include "sslab/error.hpp"
#include "sslab/plots.hpp"
#include "sslab/rng.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

std::string fraction_tag(double f) { return nlohmann::json(f).dump(); }

int resolve_pooled_dim(const RunSpec& spec, int pooled_dim) {
  return pooled_dim > 0 ? pooled_dim : spec.backbone.feature_channels();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << text;
  if (!out) throw RuntimeFailure("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependency("missing " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::mutex g_dataset_mutex;
std::map<std::string, DatasetTable> g_dataset_cache;

}  // namespace

DatasetTable materialize_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto key = nlohmann::json(spec).dump();
  {
    const std::lock_guard lock(g_dataset_mutex);
    if (const auto it = g_dataset_cache.find(key); it != g_dataset_cache.end()) return it->second;
  }
  DatasetTable table;
  if (spec.source == "synthetic") {
    table = make_synthetic_dataset(spec.kind, spec.n_per_class, spec.class_count, spec.size, spec.seed);
  } else {
    if (!fs::is_directory(spec.path)) throw MissingDependency("dataset directory " + spec.path + " not found");
    table = load_directory_dataset(spec.path, spec.size).table;
  }
  if (!table.has_split()) table = assign_stratified_split(table, spec.ratios, derive_seed(spec.seed, "split"));
  const std::lock_guard lock(g_dataset_mutex);
  g_dataset_cache.emplace(key, table);
  return table;
}

HalvedDataset halved_dataset(const RunSpec& spec) {
  return halve_classes(materialize_dataset(spec.dataset), derive_seed(spec.seed, "halve"));
}

DatasetTable run_dataset(const RunSpec& spec) {
  if (spec.variant == "full") return materialize_dataset(spec.dataset);
  if (spec.variant == "half") return halved_dataset(spec).reduced;
  throw InvalidArgument("unknown run variant '" + spec.variant + "'");
}

TrainingSetup training_setup(const RunSpec& spec, std::ostream* log) {
  TrainingSetup setup;
  setup.backbone = spec.backbone;
  setup.optim = spec.optim;
  setup.augment = spec.augment;
  setup.pretext = spec.options;
  setup.early_stop = spec.early_stop;
  setup.seed = spec.training_seed();
  if (log != nullptr) {
    setup.on_epoch = [log](const EpochRecord& e) {
      *log << "  epoch " << e.epoch << " lr " << e.lr << " train " << e.train_metric() << " val " << e.val_metric
           << '\n';
    };
  }
  return setup;
}

std::vector<RunSpec> planned_runs(const ExperimentConfig& config) {
  std::vector<RunSpec> out;
  const bool generalization = config.diagnostics.count(Diagnostic::kGeneralization) > 0;
  for (const auto seed : config.seeds) {
    for (const auto& dataset : config.datasets) {
      if (config.supervised_baseline) {
        for (const double f : config.label_fractions) {
          out.push_back(make_run_spec(config, dataset, PretextKind::kSupervised, seed, f));
        }
      }
      for (const auto kind : config.pretexts) out.push_back(make_run_spec(config, dataset, kind, seed));
      if (generalization) {
        for (const auto kind : config.pretexts) {
          if (has_pretext_accuracy(kind)) out.push_back(make_run_spec(config, dataset, kind, seed).half());
        }
      }
    }
  }
  return out;
}

TrainOutcome train_run(const RunRegistry& registry, const RunSpec& spec, std::ostream& log) {
  const auto id = spec.id();
  if (const auto existing = registry.find(id)) {
    if (existing->complete()) {
      log << "cache hit: run " << id << " (" << to_string(spec.pretext) << ", " << existing->dataset_name
          << ") already complete, skipping\n";
      return {*existing, true};
    }
    log << "discarding unfinished run " << id << '\n';
    registry.discard_incomplete(id);
  }

  const auto dataset = run_dataset(spec);
  RunRecord record;
  record.id = id;
  record.spec = spec;
  record.dataset_name = dataset.name();
  registry.write(record);
  log << "training run " << id << ": " << to_string(spec.pretext) << " on " << dataset.name();
  if (spec.label_fraction) log << " at label fraction " << *spec.label_fraction;
  log << '\n';

  const auto start = std::chrono::steady_clock::now();
  const auto setup = training_setup(spec, &log);
  TrainResult result = spec.pretext == PretextKind::kSupervised
                           ? train_supervised(dataset, setup, spec.label_fraction.value_or(1.0))
                           : train_pretext(spec.pretext, dataset, setup);

  CheckpointManifest manifest;
  manifest.backbone = spec.backbone;
  manifest.pretext = spec.pretext;
  manifest.out_dim = result.model->head() ? result.model->head()->out_dim() : 0;
  manifest.id_embedding_dim = spec.options.id_embedding_dim;
  manifest.jigsaw_projection = spec.options.jigsaw_projection;
  manifest.epoch = static_cast<int>(result.curve.epochs.size());
  manifest.seed = setup.seed;
  manifest.notes = "final-epoch weights";
  save_checkpoint(registry.run_dir(id) / record.checkpoint, result.model, manifest);
  save_curve_csv(result.curve, registry.run_dir(id) / record.curve);

  record.train_size = result.train_size;
  record.epochs_run = static_cast<int>(result.curve.epochs.size());
  record.halted_early = result.curve.halted_early;
  record.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  record.notes = "checkpoint is the final epoch; no validation-based selection";
  record.status = "complete";
  registry.write(record);
  return {record, false};
}

std::vector<TrainOutcome> cmd_train(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  config.validate();
  const RunRegistry registry(out);
  std::vector<TrainOutcome> outcomes;
  for (const auto& spec : planned_runs(config)) outcomes.push_back(train_run(registry, spec, log));
  return outcomes;
}

FeatureMatrix ensure_features(const RunRegistry& registry, const RunRecord& record, Split split, int pooled_dim) {
  const auto stem = registry.features_stem(record.id, split, pooled_dim);
  fs::path sidecar = stem;
  sidecar += ".json";
  if (fs::exists(sidecar)) return FeatureMatrix::load(stem);
  auto model = load_checkpoint(registry.checkpoint_stem(record));
  FeatureSource source;
  source.pretext = std::string(to_string(record.spec.pretext));
  source.checkpoint = record.id;
  auto features = extract_feature_matrix(model->encoder(), materialize_dataset(record.spec.dataset), split, pooled_dim,
                                         source);
  features.save(stem);
  return features;
}

LedgerRow compute_probe_row(const RunRegistry& registry, const RunRecord& record, double label_fraction,
                            int pooled_dim, const ProbeConfig& probe) {
  const auto& spec = record.spec;
  if (spec.variant != "full") throw InvalidArgument("run " + record.id + " is a half-class run and is not probed");
  if (spec.pretext == PretextKind::kSupervised && fraction_tag(label_fraction) != fraction_tag(*spec.label_fraction)) {
    throw ConfigError("supervised run " + record.id + " was trained at label fraction " +
                      fraction_tag(*spec.label_fraction) + " and is probed only at that fraction");
  }
  const int dim = resolve_pooled_dim(spec, pooled_dim);
  const auto dataset = materialize_dataset(spec.dataset);
  const auto train = ensure_features(registry, record, Split::kTrain, dim);
  const auto val = ensure_features(registry, record, Split::kVal, dim);
  const auto test = ensure_features(registry, record, Split::kTest, dim);
  const auto train_labels = labels_for(train, dataset);
  const auto val_labels = labels_for(val, dataset);
  const auto test_labels = labels_for(test, dataset);

  const auto seed = derive_seed(spec.seed, "probe/" + fraction_tag(label_fraction) + "/" + std::to_string(dim));
  const auto result = train_linear_probe({train, train_labels}, {val, val_labels}, {test, test_labels},
                                         dataset.class_count(), label_fraction, seed, probe);
  LedgerRow row;
  row.run_id = record.id;
  row.dataset = dataset.name();
  row.pretext = std::string(to_string(spec.pretext));
  row.seed = spec.seed;
  row.label_fraction = label_fraction;
  row.pooled_dim = dim;
  row.train_acc = result.train_acc;
  row.val_acc = result.val_acc;
  row.test_acc = result.test_acc;
  row.train_count = result.train_count;
  row.train_size = static_cast<std::size_t>(train.rows());
  row.standardized = result.standardized;
  row.probe_seed = seed;
  row.feature_checksum = train.checksum();
  return row;
}

LedgerRow cmd_probe(const fs::path& out, const std::string& run_id, double label_fraction, int pooled_dim,
                    const ProbeConfig& probe, std::ostream& log) {
  const RunRegistry registry(out);
  const auto record = registry.require_complete(run_id);
  const Ledger ledger(registry.ledger_path());
  const int dim = resolve_pooled_dim(record.spec, pooled_dim);
  if (const auto existing = ledger.find(run_id, label_fraction, dim)) {
    log << "ledger already holds run " << run_id << " at fraction " << label_fraction << ", dim " << dim << '\n';
    return *existing;
  }
  auto row = ledger.append(compute_probe_row(registry, record, label_fraction, dim, probe));
  log << "probe " << run_id << " (" << row.pretext << ", " << row.dataset << ") fraction " << label_fraction
      << " dim " << dim << ": train " << row.train_acc << " val " << row.val_acc << " test " << row.test_acc << '\n';
  return row;
}

namespace {

nlohmann::json knn_section(const FeatureMatrix& features, const RunSpec& spec, const DiagnoseOptions& options,
                           const std::string& mode) {
  const int k = std::min<int>(options.knn_k, static_cast<int>(features.rows()) - 1);
  if (k < 1) throw InvalidArgument("KNN needs at least two images in the VAL split");
  std::vector<std::int64_t> ids = features.image_ids();
  Rng rng(derive_seed(spec.seed, "diagnose/knn"));
  rng.shuffle(std::span<std::int64_t>(ids));
  ids.resize(std::min<std::size_t>(ids.size(), static_cast<std::size_t>(options.knn_queries)));
  std::sort(ids.begin(), ids.end());
  nlohmann::json queries = nlohmann::json::array();
  for (const auto q : ids) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& n : nearest_neighbors(features, q, k)) list.push_back({{"image_id", n.image_id}, {"distance", n.distance}});
    queries.push_back({{"query_id", q}, {"neighbors", list}});
  }
  return {{"mode", mode}, {"k", k}, {"split", "val"}, {"queries", queries}};
}

}  // namespace

nlohmann::json cmd_diagnose(const fs::path& out, const std::string& run_id, const std::set<Diagnostic>& which,
                            const DiagnoseOptions& options, std::ostream& log) {
  const RunRegistry registry(out);
  const auto record = registry.require_complete(run_id);
  const auto& spec = record.spec;
  if (spec.variant != "full") throw InvalidArgument("run " + run_id + " is a half-class run; diagnose its full run");
  const int dim = resolve_pooled_dim(spec, options.pooled_dim);
  const auto dataset = materialize_dataset(spec.dataset);
  const auto dir = registry.diagnostics_dir(run_id);
  const auto report_path = dir / "report.json";

  nlohmann::json report = fs::exists(report_path) ? read_json(report_path) : nlohmann::json::object();
  report["run_id"] = run_id;
  report["pretext"] = std::string(to_string(spec.pretext));
  report["dataset"] = dataset.name();
  report["seed"] = spec.seed;
  report["train_size"] = dataset.in_split(Split::kTrain).size();
  report["pooled_dim"] = dim;
  if (!report.contains("not_applicable")) report["not_applicable"] = nlohmann::json::object();

  for (const auto d : which) {
    const std::string name(to_string(d));
    log << "diagnose " << run_id << ": " << name << '\n';
    switch (d) {
      case Diagnostic::kGeneralization: {
        if (!has_pretext_accuracy(spec.pretext)) {
          report["not_applicable"][name] = "pretext has no pretext accuracy";
          break;
        }
        const auto half_id = spec.half().id();
        const auto half = registry.find(half_id);
        if (!half || !half->complete()) {
          throw MissingDependency("GENERALIZATION for run " + run_id + " needs the half-class run " + half_id +
                                  "; train it with GENERALIZATION enabled in the config");
        }
        auto model = load_checkpoint(registry.checkpoint_stem(*half));
        const auto result =
            evaluate_generalization(model, halved_dataset(spec), spec.augment, derive_seed(spec.seed, "diagnose/generalization"));
        report["generalization"] = result;
        report["generalization"]["half_run_id"] = half_id;
        break;
      }
      case Diagnostic::kRandomLabels: {
        const auto train = ensure_features(registry, record, Split::kTrain, dim);
        const auto labels = labels_for(train, dataset);
        const auto result = random_label_probe(train, labels, dataset.class_count(),
                                               derive_seed(spec.seed, "diagnose/random_labels"), options.probe);
        report["random_labels"] = result;
        write_file(dir / "random_labels.csv", "normal_train_acc,shuffled_train_acc,gap\n" +
                                                  nlohmann::json(result.normal_train_acc).dump() + "," +
                                                  nlohmann::json(result.shuffled_train_acc).dump() + "," +
                                                  nlohmann::json(result.gap()).dump() + "\n");
        break;
      }
      case Diagnostic::kPca: {
        const auto train = pca_explained_variance(ensure_features(registry, record, Split::kTrain, dim));
        const auto val = pca_explained_variance(ensure_features(registry, record, Split::kVal, dim));
        report["pca"] = {{"train", train}, {"val", val}};
        std::string csv = "n,train,val\n";
        for (std::size_t i = 0; i < train.n.size(); ++i) {
          csv += std::to_string(train.n[i]) + "," + nlohmann::json(train.fractions[i]).dump() + "," +
                 nlohmann::json(val.at(train.n[i])).dump() + "\n";
        }
        write_file(dir / "pca.csv", csv);
        break;
      }
      case Diagnostic::kKnn: {
        const auto pooled = ensure_features(registry, record, Split::kVal, dim);
        report["knn"] = knn_section(pooled, spec, options, pooled.source().mode);
        std::string csv = "query_id,rank,image_id,distance\n";
        for (const auto& q : report["knn"]["queries"]) {
          std::vector<Neighbor> ns;
          for (const auto& n : q["neighbors"]) ns.push_back({n["image_id"].get<std::int64_t>(), n["distance"].get<double>()});
          const auto part = neighbors_csv(q["query_id"].get<std::int64_t>(), ns);
          csv += part.substr(part.find('\n') + 1);
        }
        write_file(dir / "knn.csv", csv);
        break;
      }
      case Diagnostic::kIdLoss: {
        if (spec.pretext != PretextKind::kInstanceDiscrimination) {
          report["not_applicable"][name] = "pretext is not instance discrimination";
          break;
        }
        auto model = load_checkpoint(registry.checkpoint_stem(record));
        if (!model->has_state(kMemoryBankState)) throw MissingDependency("run " + run_id + " has no memory bank");
        const MemoryBank bank(model->state(kMemoryBankState), spec.options.id_momentum, spec.options.id_temperature);
        const auto train_items = dataset.in_split(Split::kTrain);
        const double train_loss = id_pretext_loss_summary(train_items, model, bank, spec.augment);
        const auto val_emb = instance_embeddings(model, dataset.in_split(Split::kVal), spec.augment);
        const MemoryBank val_bank(val_emb, spec.options.id_momentum, spec.options.id_temperature);
        report["id_loss"] = {{"train", train_loss}, {"val", mean_id_loss(val_emb, val_bank)}};
        break;
      }
    }
  }
  write_file(report_path, report.dump(2) + "\n");
  return report;
}

namespace {

const std::vector<std::string> kPretextOrder{"rotation", "jigsaw", "instance_discrimination", "autoencoder",
                                             "random_init", "supervised"};

bool is_self_supervised(const std::string& p) {
  return p == "rotation" || p == "jigsaw" || p == "instance_discrimination" || p == "autoencoder";
}

std::vector<std::string> ordered_pretexts(const std::set<std::string>& present) {
  std::vector<std::string> out;
  for (const auto& p : kPretextOrder) {
    if (present.count(p)) out.push_back(p);
  }
  for (const auto& p : present) {
    if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ExplainedVarianceCurve curve_from_json(const nlohmann::json& j) {
  ExplainedVarianceCurve c;
  c.n = j.at("n").get<std::vector<int>>();
  c.fractions = j.at("fractions").get<std::vector<double>>();
  c.dim = j.at("dim").get<std::int64_t>();
  c.split = j.value("split", std::string{});
  return c;
}

// Pointwise mean over the n values every curve shares.
ExplainedVarianceCurve mean_curve(const std::vector<ExplainedVarianceCurve>& curves) {
  ExplainedVarianceCurve out;
  out.dim = curves.front().dim;
  out.split = curves.front().split;
  for (const int n : curves.front().n) {
    std::vector<double> values;
    for (const auto& c : curves) {
      const auto it = std::find(c.n.begin(), c.n.end(), n);
      if (it == c.n.end()) break;
      values.push_back(c.fractions[static_cast<std::size_t>(it - c.n.begin())]);
    }
    if (values.size() != curves.size()) continue;
    out.n.push_back(n);
    out.fractions.push_back(mean(values));
  }
  return out;
}

// Fraction at the largest grid point not above n.
double fraction_up_to(const ExplainedVarianceCurve& c, int n) {
  double v = c.fractions.front();
  for (std::size_t i = 0; i < c.n.size() && c.n[i] <= n; ++i) v = c.fractions[i];
  return v;
}

}  // namespace

ReportSummary cmd_report(const fs::path& out, std::ostream& log) {
  const RunRegistry registry(out);
  const Ledger ledger(registry.ledger_path());
  const auto rows = ledger.read();
  if (rows.empty()) throw MissingDependency("results ledger " + ledger.path().string() + " is empty; run probe first");
  const auto dir = registry.report_dir();
  fs::create_directories(dir);
  ReportSummary summary;
  auto add = [&](const fs::path& stem, std::initializer_list<const char*> suffixes) {
    for (const char* s : suffixes) {
      fs::path p = stem;
      p += s;
      summary.files.push_back(p);
    }
  };

  // Pooled dim shared by the most rows, ties to the smallest.
  std::map<int, int> dim_count;
  for (const auto& r : rows) ++dim_count[r.pooled_dim];
  const int dim = std::max_element(dim_count.begin(), dim_count.end(), [](const auto& a, const auto& b) {
                    return a.second < b.second;
                  })->first;
  std::set<double> fractions;
  std::set<std::string> datasets_set;
  std::set<std::string> pretext_set;
  std::map<std::string, std::size_t> train_size;
  for (const auto& r : rows) {
    if (r.pooled_dim != dim) continue;
    fractions.insert(r.label_fraction);
    datasets_set.insert(r.dataset);
    pretext_set.insert(r.pretext);
    train_size[r.dataset] = r.train_size;
  }
  const std::vector<std::string> datasets(datasets_set.begin(), datasets_set.end());
  const auto pretexts = ordered_pretexts(pretext_set);

  auto mean_acc = [&](const std::string& dataset, const std::string& pretext, double fraction) {
    std::vector<double> v;
    for (const auto& r : rows) {
      if (r.pooled_dim == dim && r.dataset == dataset && r.pretext == pretext && r.label_fraction == fraction) {
        v.push_back(r.test_acc);
      }
    }
    return mean(v);
  };

  // (a) downstream accuracy bars at the largest and smallest label fraction.
  const double full_fraction = *fractions.rbegin();
  std::vector<std::pair<std::string, double>> bar_charts{{"fig3_downstream_accuracy", full_fraction}};
  if (fractions.size() > 1) bar_charts.emplace_back("fig4_label_fraction_accuracy", *fractions.begin());
  for (const auto& [name, fraction] : bar_charts) {
    std::vector<BarSeries> series;
    for (const auto& p : pretexts) {
      BarSeries s{p, {}};
      for (const auto& d : datasets) s.values.push_back(mean_acc(d, p, fraction));
      series.push_back(s);
    }
    write_grouped_bars(dir / name,
                       {"Linear-probe test accuracy (label fraction " + fraction_tag(fraction) + ", dim " +
                            std::to_string(dim) + ")",
                        "dataset", "test accuracy"},
                       datasets, series);
    add(dir / name, {".svg", ".csv"});
  }

  // (b) scatter: supervised vs best self-supervised probe, marker area ~ train size.
  std::vector<ScatterPoint> fig2;
  for (const auto& d : datasets) {
    const double sup = mean_acc(d, "supervised", full_fraction);
    double best = std::nan("");
    for (const auto& p : pretexts) {
      if (!is_self_supervised(p)) continue;
      const double v = mean_acc(d, p, full_fraction);
      if (std::isfinite(v) && !(v <= best)) best = v;
    }
    if (std::isfinite(sup) && std::isfinite(best)) {
      fig2.push_back({"datasets", d, sup, best, static_cast<double>(train_size[d])});
    }
  }
  if (!fig2.empty()) {
    write_scatter(dir / "fig2_supervised_vs_pretext",
                  {"Supervised vs best pretext probe", "supervised test accuracy", "best pretext test accuracy"}, fig2);
    add(dir / "fig2_supervised_vs_pretext", {".svg", ".csv"});
  } else {
    log << "report: no dataset has both supervised and pretext rows; skipping the supervised scatter\n";
  }

  // Diagnostics reports of completed runs.
  std::vector<nlohmann::json> reports;
  for (const auto& record : registry.completed()) {
    const auto path = registry.diagnostics_dir(record.id) / "report.json";
    if (fs::exists(path)) reports.push_back(read_json(path));
  }
  auto normalized_for = [&](const std::string& run_id) -> std::optional<double> {
    for (const auto& r : rows) {
      if (r.run_id == run_id && r.pooled_dim == dim && r.label_fraction == full_fraction) return r.normalized_acc;
    }
    return std::nullopt;
  };

  std::vector<ScatterPoint> fig6;
  std::vector<ScatterPoint> fig6b;
  std::vector<GeneralizationRow> fig6_rows;
  std::vector<ScatterPoint> fig9;
  std::map<std::string, std::vector<ExplainedVarianceCurve>> val_curves;
  std::vector<RandomLabelRow> random_rows;
  for (const auto& rep : reports) {
    const auto run_id = rep.at("run_id").get<std::string>();
    const auto pretext = rep.at("pretext").get<std::string>();
    const auto dataset = rep.at("dataset").get<std::string>();
    const auto size = rep.at("train_size").get<std::size_t>();
    const auto norm = normalized_for(run_id);
    if (rep.contains("generalization")) {
      const auto& ratio = rep["generalization"]["ratio"];
      if (ratio.is_number()) {
        fig6_rows.push_back({dataset, pretext, size, ratio.get<double>(), norm});
        if (norm) fig6.push_back({pretext, dataset, ratio.get<double>(), *norm, static_cast<double>(size)});
      }
    }
    if (rep.contains("id_loss")) {
      const double loss = rep["id_loss"]["train"].get<double>();
      fig6_rows.push_back({dataset, pretext, size, loss, norm});
      if (norm) fig6b.push_back({pretext, dataset, loss, *norm, static_cast<double>(size)});
    }
    if (rep.contains("pca") && rep.at("pooled_dim").get<int>() == dim) {
      const auto val = curve_from_json(rep["pca"]["val"]);
      val_curves[pretext].push_back(val);
      fig9.push_back({pretext, dataset, std::log10(static_cast<double>(size)), fraction_up_to(val, 10),
                      static_cast<double>(size)});
    }
    if (rep.contains("random_labels") && rep.at("pooled_dim").get<int>() == dim) {
      random_rows.push_back({dataset, pretext, rep["random_labels"]["normal_train_acc"].get<double>(),
                             rep["random_labels"]["shuffled_train_acc"].get<double>()});
    }
  }

  if (!fig6.empty()) {
    write_scatter(dir / "fig6a_generalization",
                  {"Pretext generalization vs normalized accuracy", "pretext generalization (test / val-half)",
                   "normalized accuracy"},
                  fig6);
    add(dir / "fig6a_generalization", {".svg", ".csv"});
  }
  if (!fig6b.empty()) {
    write_scatter(dir / "fig6b_id_loss",
                  {"Instance discrimination loss vs normalized accuracy", "pretext loss", "normalized accuracy"}, fig6b);
    add(dir / "fig6b_id_loss", {".svg", ".csv"});
  }
  write_file(dir / "fig6.csv", fig6_csv(fig6_rows));
  summary.files.push_back(dir / "fig6.csv");
  if (!fig9.empty()) {
    write_scatter(dir / "fig9_pca_vs_size",
                  {"Variance explained by 10 components vs training-set size", "log10(train size)",
                   "fraction of variance (n <= 10)"},
                  fig9);
    add(dir / "fig9_pca_vs_size", {".svg", ".csv"});
  }

  // (c) explained-variance curves and table_s3.csv.
  if (!val_curves.empty()) {
    std::vector<LineSeries> lines;
    std::vector<PcaColumn> columns;
    for (const auto& p : ordered_pretexts([&] {
           std::set<std::string> s;
           for (const auto& [k, v] : val_curves) s.insert(k);
           return s;
         }())) {
      const auto m = mean_curve(val_curves[p]);
      LineSeries s{p, {}, m.fractions};
      for (const int n : m.n) s.x.push_back(n);
      lines.push_back(s);
      columns.push_back({p, m});
    }
    write_lines(dir / "fig8_explained_variance",
                {"Mean explained variance (validation)", "principal components n", "fraction of variance"}, lines);
    add(dir / "fig8_explained_variance", {".svg", ".csv"});
    write_file(dir / "table_s3.csv", table_s3_csv(columns));
    summary.files.push_back(dir / "table_s3.csv");
  } else {
    log << "report: no PCA diagnostics found; skipping explained-variance curves\n";
  }

  // (d) random-label gap bars and table2.csv.
  if (!random_rows.empty()) {
    std::set<std::string> present;
    for (const auto& r : random_rows) present.insert(r.pretext);
    std::vector<BarSeries> series;
    for (const auto& p : ordered_pretexts(present)) {
      BarSeries s{p, {}};
      for (const auto& d : datasets) {
        std::vector<double> gaps;
        for (const auto& r : random_rows) {
          if (r.pretext == p && r.dataset == d) gaps.push_back(r.normal_train_acc - r.shuffled_train_acc);
        }
        s.values.push_back(mean(gaps));
      }
      series.push_back(s);
    }
    write_grouped_bars(dir / "fig7_random_label_gap",
                       {"Normal minus shuffled-label probe training accuracy", "dataset", "accuracy gap"}, datasets,
                       series);
    add(dir / "fig7_random_label_gap", {".svg", ".csv"});
    write_file(dir / "table2.csv", table2_csv(random_label_correlations(random_rows)));
    summary.files.push_back(dir / "table2.csv");
  } else {
    log << "report: no random-label diagnostics found; skipping gap bars\n";
  }

  std::ostringstream md;
  md << "# Results summary\n\nPooled dim " << dim << ", label fraction " << fraction_tag(full_fraction)
     << ". Mean linear-probe test accuracy:\n\n| dataset |";
  for (const auto& p : pretexts) md << ' ' << p << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < pretexts.size(); ++i) md << "---|";
  md << '\n';
  for (const auto& d : datasets) {
    md << "| " << d << " |";
    for (const auto& p : pretexts) {
      const double v = mean_acc(d, p, full_fraction);
      md << ' ' << (std::isfinite(v) ? nlohmann::json(std::round(v * 1e4) / 1e4).dump() : std::string("-")) << " |";
    }
    md << '\n';
  }
  write_file(dir / "summary.md", md.str());
  summary.files.push_back(dir / "summary.md");
  log << "report: wrote " << summary.files.size() << " files to " << dir.string() << '\n';
  return summary;
}

FeatureMatrix cmd_export_features(const fs::path& out, const std::string& run_id, Split split, int pooled_dim,
                                  const fs::path& dest, std::ostream& log) {
  const RunRegistry registry(out);
  const auto record = registry.require_complete(run_id);
  const int dim = resolve_pooled_dim(record.spec, pooled_dim);
  auto features = ensure_features(registry, record, split, dim);
  if (!dest.empty()) {
    features.save(dest);
    log << "exported " << features.rows() << " x " << features.dim() << " features to " << dest.string()
        << ".{f32,json}\n";
  } else {
    log << "features cached at " << registry.features_stem(run_id, split, dim).string() << ".{f32,json}\n";
  }
  return features;
}

std::vector<fs::path> cmd_make_dataset(const ExperimentConfig& config, const fs::path& dest, std::ostream& log) {
  std::vector<fs::path> out;
  for (const auto& spec : config.datasets) {
    const auto table = materialize_dataset(spec);
    const auto root = dest / table.name();
    export_directory_dataset(table, root);
    log << "wrote " << table.size() << " images of " << table.name() << " to " << root.string() << '\n';
    out.push_back(root);
  }
  return out;
}

ReportSummary run_pipeline(const ExperimentConfig& config, const fs::path& out, std::ostream& log) {
  const auto outcomes = cmd_train(config, out, log);
  const int dim = config.effective_pooled_dim();
  for (const auto& o : outcomes) {
    const auto& spec = o.record.spec;
    if (spec.variant != "full") continue;
    if (spec.pretext == PretextKind::kSupervised) {
      cmd_probe(out, o.record.id, *spec.label_fraction, dim, config.probe, log);
    }
  }
  for (const auto& o : outcomes) {
    const auto& spec = o.record.spec;
    if (spec.variant != "full" || spec.pretext == PretextKind::kSupervised) continue;
    for (const double f : config.label_fractions) cmd_probe(out, o.record.id, f, dim, config.probe, log);
  }
  DiagnoseOptions options;
  options.pooled_dim = dim;
  options.knn_k = config.knn_k;
  options.knn_queries = config.knn_queries;
  options.probe = config.probe;
  for (const auto& o : outcomes) {
    if (o.record.spec.variant != "full") continue;
    cmd_diagnose(out, o.record.id, config.diagnostics, options, log);
  }
  return cmd_report(out, log);
}

}  // namespace sslab
