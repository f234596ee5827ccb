#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sslab {

inline constexpr int kLedgerVersion = 1;

/// One probe result with its provenance.
struct LedgerRow {
  std::string run_id;
  std::string dataset;
  std::string pretext;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
  int pooled_dim = 0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::optional<double> normalized_acc;
  std::size_t train_count = 0;  // rows the probe was fitted on
  std::size_t train_size = 0;   // TRAIN split size of the dataset
  bool standardized = false;
  std::uint64_t probe_seed = 0;
  std::string feature_checksum;

  bool operator==(const LedgerRow&) const = default;
};

/// Append-only CSV results ledger. The first line carries the format
/// version, the second the column names. Appends hold an exclusive flock on
/// a sibling lock file.
class Ledger {
 public:
  explicit Ledger(std::filesystem::path path);

  const std::filesystem::path& path() const { return path_; }
  std::vector<LedgerRow> read() const;

  /// Appends `row`. Non-supervised rows get normalized_acc from the
  /// supervised row with the same dataset, seed, label fraction and pooled
  /// dim when one exists; a supervised row normalizes to 1. Returns the row
  /// as stored, at ledger precision.
  LedgerRow append(LedgerRow row) const;

  /// First row matching the probe key, if any.
  std::optional<LedgerRow> find(const std::string& run_id, double label_fraction, int pooled_dim) const;

 private:
  std::filesystem::path path_;
};

std::string ledger_header();
std::string format_ledger_row(const LedgerRow& row);
LedgerRow parse_ledger_row(const std::string& line);

}  // namespace sslab
