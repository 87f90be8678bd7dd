#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coarse2fine/model.hpp"

namespace c2f {

/// A problem with an input file; the message carries file and line context.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Minimal comma-separated table. No quoting: values must not contain commas.
struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row

  int column(const std::string& name) const;  // -1 if absent
  int require_column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

/// 17 significant digits: parses back to the identical double.
std::string format_double(double v);

double parse_double(const std::string& text, const std::string& file, int line);
int parse_int(const std::string& text, const std::string& file, int line);

enum class SignalKind { logit, fraction };

struct IngestSpec {
  std::string groups_file;
  std::string items_file;
  SignalKind signal_kind = SignalKind::logit;
  // Columns crossed into buckets; empty means the items file is pre-binned
  // (columns group_id, bin, optional weight and label).
  std::vector<std::string> feature_columns;
  std::optional<double> cap_m;
  // Pre-binned input: fixes K and bucket labels instead of inferring them.
  std::optional<std::string> manifest_file;
  // Feature input: restricts each column to the declared levels.
  std::map<std::string, std::vector<std::string>> declared_levels;
};

struct IngestResult {
  Dataset dataset;
  std::vector<std::string> manifest_columns;            // "bin","label",features...
  std::vector<std::vector<std::string>> manifest_rows;  // one row per bucket
};

// Reads groups and items, builds the bucket cross product (levels sorted
// lexicographically per column, last column varying fastest), converts
// fraction signals through the clamped logit, and applies down-weighting when
// cap_m is set.
IngestResult ingest(const IngestSpec& spec);

}  // namespace c2f
