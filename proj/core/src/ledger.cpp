#include "sslab/ledger.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "sslab/error.hpp"

namespace fs = std::filesystem;

namespace sslab {
namespace {

constexpr const char* kColumns =
    "run_id,dataset,pretext,seed,label_fraction,pooled_dim,train_acc,val_acc,test_acc,normalized_acc,"
    "train_count,train_size,standardized,probe_seed,feature_checksum";
constexpr int kColumnCount = 15;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string quoted(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        in_quotes = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(cell);
  return out;
}

std::string version_line() { return "# sslab results ledger v" + std::to_string(kLedgerVersion); }

// Exclusive advisory lock held for the lifetime of the object.
class FileLock {
 public:
  explicit FileLock(const fs::path& path) : fd_(::open(path.c_str(), O_RDWR | O_CREAT, 0644)) {
    if (fd_ < 0 || ::flock(fd_, LOCK_EX) != 0) throw RuntimeFailure("cannot lock " + path.string());
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

std::vector<LedgerRow> read_rows(const fs::path& path) {
  std::vector<LedgerRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != version_line()) {
    throw RuntimeFailure("ledger " + path.string() + " has unsupported version line '" + line + "'");
  }
  if (!std::getline(in, line) || line != kColumns) {
    throw RuntimeFailure("ledger " + path.string() + " has an unexpected column header");
  }
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_ledger_row(line));
  }
  return rows;
}

}  // namespace

std::string ledger_header() { return version_line() + "\n" + kColumns + "\n"; }

std::string format_ledger_row(const LedgerRow& r) {
  std::ostringstream out;
  out << quoted(r.run_id) << ',' << quoted(r.dataset) << ',' << quoted(r.pretext) << ',' << r.seed << ','
      << fixed6(r.label_fraction) << ',' << r.pooled_dim << ',' << fixed6(r.train_acc) << ',' << fixed6(r.val_acc)
      << ',' << fixed6(r.test_acc) << ',' << (r.normalized_acc ? fixed6(*r.normalized_acc) : std::string{}) << ','
      << r.train_count << ',' << r.train_size << ',' << (r.standardized ? 1 : 0) << ',' << r.probe_seed << ','
      << r.feature_checksum;
  return out.str();
}

LedgerRow parse_ledger_row(const std::string& line) {
  const auto cells = split_csv(line);
  if (cells.size() != kColumnCount) {
    throw RuntimeFailure("ledger row has " + std::to_string(cells.size()) + " columns, expected " +
                         std::to_string(kColumnCount));
  }
  try {
    LedgerRow r;
    r.run_id = cells[0];
    r.dataset = cells[1];
    r.pretext = cells[2];
    r.seed = std::stoull(cells[3]);
    r.label_fraction = std::stod(cells[4]);
    r.pooled_dim = std::stoi(cells[5]);
    r.train_acc = std::stod(cells[6]);
    r.val_acc = std::stod(cells[7]);
    r.test_acc = std::stod(cells[8]);
    if (!cells[9].empty()) r.normalized_acc = std::stod(cells[9]);
    r.train_count = std::stoull(cells[10]);
    r.train_size = std::stoull(cells[11]);
    r.standardized = cells[12] == "1";
    r.probe_seed = std::stoull(cells[13]);
    r.feature_checksum = cells[14];
    return r;
  } catch (const std::logic_error& e) {
    throw RuntimeFailure(std::string("malformed ledger row: ") + e.what());
  }
}

Ledger::Ledger(fs::path path) : path_(std::move(path)) {}

std::vector<LedgerRow> Ledger::read() const { return read_rows(path_); }

std::optional<LedgerRow> Ledger::find(const std::string& run_id, double label_fraction, int pooled_dim) const {
  for (const auto& r : read()) {
    if (r.run_id == run_id && fixed6(r.label_fraction) == fixed6(label_fraction) && r.pooled_dim == pooled_dim) {
      return r;
    }
  }
  return std::nullopt;
}

LedgerRow Ledger::append(LedgerRow row) const {
  if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
  fs::path lock_path = path_;
  lock_path += ".lock";
  const FileLock lock(lock_path);

  const auto existing = read_rows(path_);
  if (row.pretext == "supervised") {
    row.normalized_acc = 1.0;
  } else {
    row.normalized_acc.reset();
    for (const auto& r : existing) {
      if (r.pretext == "supervised" && r.dataset == row.dataset && r.seed == row.seed &&
          fixed6(r.label_fraction) == fixed6(row.label_fraction) && r.pooled_dim == row.pooled_dim &&
          r.test_acc > 0.0) {
        row.normalized_acc = row.test_acc / r.test_acc;
        break;
      }
    }
  }

  const bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
  std::ofstream out(path_, std::ios::app);
  if (fresh) out << ledger_header();
  const auto line = format_ledger_row(row);
  out << line << '\n';
  out.flush();
  if (!out) throw RuntimeFailure("cannot append to ledger " + path_.string());
  return parse_ledger_row(line);
}

}  // namespace sslab
