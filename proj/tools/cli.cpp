#include "cli.hpp"

#include <cstdlib>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <c10/util/Exception.h>
#include <torch/torch.h>

#include "CLI11.hpp"
#include "sslab/commands.hpp"
#include "sslab/config.hpp"
#include "sslab/error.hpp"

namespace sslab {
namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

ExperimentConfig require_config(const GlobalOptions& g) {
  if (g.config.empty()) throw ConfigError("--config: this command needs an experiment config file");
  auto config = load_config(g.config);
  if (g.seed) config.seeds = {*g.seed};
  return config;
}

std::optional<ExperimentConfig> optional_config(const GlobalOptions& g) {
  if (g.config.empty()) return std::nullopt;
  return require_config(g);
}

std::filesystem::path output_root(const GlobalOptions& g, const std::optional<ExperimentConfig>& config) {
  return resolve_output_root(g.out, config ? &*config : nullptr);
}

void apply_threads(const std::optional<ExperimentConfig>& config) {
  torch::set_num_threads(config ? config->threads : 1);
}

std::set<Diagnostic> parse_diagnostics(const std::vector<std::string>& names) {
  if (names.empty()) return all_diagnostics();
  std::set<Diagnostic> out;
  for (const auto& n : names) {
    try {
      out.insert(diagnostic_from_string(n));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("--which: ") + e.what());
    }
  }
  return out;
}

Split parse_split(const std::string& text) {
  try {
    return split_from_string(text);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("--split: ") + e.what());
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised pretext task lab"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  app.add_option("--seed", g.seed, "Replace the config's seed list with this single seed");
  app.add_option("--out", g.out, std::string("Output root (overrides $") + kOutputEnvVar + " and the config)");

  auto* train = app.add_subcommand("train", "Train every run the config plans; completed runs are skipped");

  std::string run_id;
  double fraction = 1.0;
  std::optional<int> pooled_dim;
  auto* probe = app.add_subcommand("probe", "Fit a linear probe on a completed run and append a ledger row");
  probe->add_option("--run", run_id, "Run id")->required();
  probe->add_option("--fraction", fraction, "Label fraction in (0,1]");
  probe->add_option("--pooled-dim", pooled_dim, "Pooled feature size (default: global pool)");

  std::vector<std::string> which;
  std::optional<int> knn_k;
  auto* diagnose = app.add_subcommand("diagnose", "Run diagnostics on a completed run");
  diagnose->add_option("--run", run_id, "Run id")->required();
  diagnose->add_option("--which", which, "GENERALIZATION, RANDOM_LABELS, PCA, KNN, ID_LOSS (default all)")
      ->delimiter(',');
  diagnose->add_option("--pooled-dim", pooled_dim, "Pooled feature size (default: global pool)");
  diagnose->add_option("--knn-k", knn_k, "Neighbors per query");

  auto* report = app.add_subcommand("report", "Render figures and tables from the ledger");

  std::string split_name = "train";
  std::string dest;
  auto* export_features = app.add_subcommand("export-features", "Write a run's feature matrix to <dest>.{f32,json}");
  export_features->add_option("--run", run_id, "Run id")->required();
  export_features->add_option("--split", split_name, "train, val or test");
  export_features->add_option("--pooled-dim", pooled_dim, "Pooled feature size (default: global pool)");
  export_features->add_option("--dest", dest, "Destination stem");

  auto* make_dataset = app.add_subcommand("make-dataset", "Write the configured datasets as class folders");
  make_dataset->add_option("--dest", dest, "Destination directory (default <out>/datasets)");

  auto* pipeline = app.add_subcommand("pipeline", "train, probe, diagnose and report in one go");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (train->parsed()) {
      const auto config = require_config(g);
      apply_threads(config);
      const auto outcomes = cmd_train(config, output_root(g, config), err);
      for (const auto& o : outcomes) {
        out << o.record.id << ' ' << to_string(o.record.spec.pretext) << ' ' << o.record.dataset_name << ' '
            << (o.cache_hit ? "cached" : "trained") << '\n';
      }
    } else if (probe->parsed()) {
      const auto config = optional_config(g);
      apply_threads(config);
      const int dim = pooled_dim.value_or(config ? config->effective_pooled_dim() : 0);
      const auto row = cmd_probe(output_root(g, config), run_id, fraction, dim, config ? config->probe : ProbeConfig{},
                                 err);
      out << format_ledger_row(row) << '\n';
    } else if (diagnose->parsed()) {
      const auto config = optional_config(g);
      apply_threads(config);
      DiagnoseOptions options;
      if (config) {
        options.pooled_dim = config->effective_pooled_dim();
        options.knn_k = config->knn_k;
        options.knn_queries = config->knn_queries;
        options.probe = config->probe;
      }
      if (pooled_dim) options.pooled_dim = *pooled_dim;
      if (knn_k) options.knn_k = *knn_k;
      const auto doc = cmd_diagnose(output_root(g, config), run_id, parse_diagnostics(which), options, err);
      out << doc.dump(2) << '\n';
    } else if (report->parsed()) {
      const auto config = optional_config(g);
      for (const auto& f : cmd_report(output_root(g, config), err).files) out << f.string() << '\n';
    } else if (export_features->parsed()) {
      const auto config = optional_config(g);
      apply_threads(config);
      const int dim = pooled_dim.value_or(config ? config->effective_pooled_dim() : 0);
      const auto features = cmd_export_features(output_root(g, config), run_id, parse_split(split_name), dim, dest, err);
      out << features.checksum() << '\n';
    } else if (make_dataset->parsed()) {
      const auto config = require_config(g);
      const auto target = dest.empty() ? output_root(g, config) / "datasets" : std::filesystem::path(dest);
      for (const auto& p : cmd_make_dataset(config, target, err)) out << p.string() << '\n';
    } else if (pipeline->parsed()) {
      const auto config = require_config(g);
      apply_threads(config);
      for (const auto& f : run_pipeline(config, output_root(g, config), err).files) out << f.string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingDependency& e) {
    err << "missing dependency: " << e.what() << '\n';
    return kExitMissing;
  } catch (const RuntimeFailure& e) {
    err << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const c10::Error& e) {
    err << "runtime failure: " << e.what_without_backtrace() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace sslab
