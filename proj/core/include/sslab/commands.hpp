#pragma once

#include <filesystem>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sslab/config.hpp"
#include "sslab/diagnostics.hpp"
#include "sslab/evaluation.hpp"
#include "sslab/ledger.hpp"
#include "sslab/registry.hpp"

namespace sslab {

// Seed scheme. A run's top-level seed s expands as
//   training         derive_seed(s, "train/<pretext>/<variant>[/<fraction>]")
//   class halving    derive_seed(s, "halve")
//   probes           derive_seed(s, "probe/<fraction>/<pooled_dim>")
//   diagnostics      derive_seed(s, "diagnose/<name>")
// Dataset generation and splitting use the dataset spec's own seed d:
// generator d, split derive_seed(d, "split").

/// Generated or loaded table with its split assigned. Cached per process.
DatasetTable materialize_dataset(const DatasetSpec& spec);

/// The table a run trains on: the full dataset, or the reduced half-class
/// table for variant "half".
DatasetTable run_dataset(const RunSpec& spec);
HalvedDataset halved_dataset(const RunSpec& spec);

TrainingSetup training_setup(const RunSpec& spec, std::ostream* log = nullptr);

/// Every run the config implies, supervised baselines first, then pretexts,
/// then the half-class runs needed by GENERALIZATION.
std::vector<RunSpec> planned_runs(const ExperimentConfig& config);

struct TrainOutcome {
  RunRecord record;
  bool cache_hit = false;
};

/// Trains one run unless a completed run with the same id exists.
TrainOutcome train_run(const RunRegistry& registry, const RunSpec& spec, std::ostream& log);

std::vector<TrainOutcome> cmd_train(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

/// Loads cached features or extracts and caches them.
FeatureMatrix ensure_features(const RunRegistry& registry, const RunRecord& record, Split split, int pooled_dim);

/// Probes a completed run and appends one ledger row. A row already present
/// for (run, fraction, pooled_dim) is returned unchanged. Supervised runs
/// are probed only at their own label fraction.
LedgerRow cmd_probe(const std::filesystem::path& out, const std::string& run_id, double label_fraction,
                    int pooled_dim, const ProbeConfig& probe, std::ostream& log);

/// The probe computation behind cmd_probe, without touching the ledger.
LedgerRow compute_probe_row(const RunRegistry& registry, const RunRecord& record, double label_fraction,
                            int pooled_dim, const ProbeConfig& probe);

struct DiagnoseOptions {
  int pooled_dim = 0;  // 0 selects the globally pooled size
  int knn_k = 10;
  int knn_queries = 3;
  ProbeConfig probe;
};

/// Writes diagnostics/<id>/report.json plus CSV tables and returns the
/// report. Sections already on disk for diagnostics not requested are kept.
nlohmann::json cmd_diagnose(const std::filesystem::path& out, const std::string& run_id,
                            const std::set<Diagnostic>& which, const DiagnoseOptions& options, std::ostream& log);

struct ReportSummary {
  std::vector<std::filesystem::path> files;
};

/// Renders figures and tables from the ledger and diagnostics reports.
ReportSummary cmd_report(const std::filesystem::path& out, std::ostream& log);

/// Copies a run's cached feature matrix to <dest>.f32 / <dest>.json.
FeatureMatrix cmd_export_features(const std::filesystem::path& out, const std::string& run_id, Split split,
                                  int pooled_dim, const std::filesystem::path& dest, std::ostream& log);

/// Writes each configured dataset in directory format under dest/<name>.
std::vector<std::filesystem::path> cmd_make_dataset(const ExperimentConfig& config, const std::filesystem::path& dest,
                                                    std::ostream& log);

/// train -> probe -> diagnose -> report for every planned run.
ReportSummary run_pipeline(const ExperimentConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace sslab
