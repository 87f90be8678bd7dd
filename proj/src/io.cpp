#include "coarse2fine/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "coarse2fine/analysis.hpp"

namespace c2f {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

[[noreturn]] void fail_at(const std::string& file, int line, const std::string& what) {
  throw IngestError(file + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int idx = column(name);
  if (idx < 0) {
    std::string found;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i > 0) found += ", ";
      found += header[i];
    }
    throw IngestError(path + ": missing column '" + name + "' (found: " + found + ")");
  }
  return idx;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestError("cannot open " + path);
  }
  CsvTable table;
  table.path = path;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1) {
      table.header = split_line(line);
      continue;
    }
    std::vector<std::string> row = split_line(line);
    if (row.size() != table.header.size()) {
      fail_at(path, line_no,
              "expected " + std::to_string(table.header.size()) + " fields, got " +
                  std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) {
    throw IngestError(path + ": missing header row");
  }
  return table;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& file, int line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail_at(file, line, "cannot parse '" + text + "' as a number");
  }
}

int parse_int(const std::string& text, const std::string& file, int line) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(text, &pos);
    if (pos != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail_at(file, line, "cannot parse '" + text + "' as an integer");
  }
}

namespace {

struct ParsedGroups {
  std::vector<GroupObservations> groups;             // he filled, items empty
  std::unordered_map<std::string, std::size_t> index;
};

ParsedGroups parse_groups(const IngestSpec& spec) {
  const CsvTable table = read_csv(spec.groups_file);
  const int id_col = table.require_column("group_id");
  const int sig_col = table.require_column("signal");
  ParsedGroups out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const int line = table.line_numbers[r];
    const std::string& id = table.rows[r][static_cast<std::size_t>(id_col)];
    if (id.empty()) fail_at(spec.groups_file, line, "empty group_id");
    if (out.index.count(id)) fail_at(spec.groups_file, line, "duplicate group_id '" + id + "'");
    const double signal =
        parse_double(table.rows[r][static_cast<std::size_t>(sig_col)], spec.groups_file, line);
    GroupObservations g;
    g.group_id = id;
    g.he = spec.signal_kind == SignalKind::fraction ? logit_from_fraction(signal) : signal;
    out.index.emplace(id, out.groups.size());
    out.groups.push_back(std::move(g));
  }
  return out;
}

}  // namespace

IngestResult ingest(const IngestSpec& spec) {
  ParsedGroups parsed = parse_groups(spec);
  const CsvTable items = read_csv(spec.items_file);
  const int id_col = items.require_column("group_id");
  const int weight_col = items.column("weight");
  const int label_col = items.column("label");

  IngestResult out;
  out.dataset.groups = std::move(parsed.groups);
  std::vector<std::vector<int>> labels(out.dataset.groups.size());
  bool any_label = label_col >= 0;

  if (spec.feature_columns.empty()) {
    // Pre-binned input.
    const int bin_col = items.require_column("bin");
    int k = 0;
    std::vector<std::string> bin_labels;
    if (spec.manifest_file) {
      const CsvTable manifest = read_csv(*spec.manifest_file);
      const int mbin = manifest.require_column("bin");
      const int mlabel = manifest.require_column("label");
      k = static_cast<int>(manifest.rows.size());
      bin_labels.resize(static_cast<std::size_t>(k));
      for (std::size_t r = 0; r < manifest.rows.size(); ++r) {
        const int line = manifest.line_numbers[r];
        const int b = parse_int(manifest.rows[r][static_cast<std::size_t>(mbin)],
                                *spec.manifest_file, line);
        if (b < 1 || b > k) fail_at(*spec.manifest_file, line, "bin index out of range");
        bin_labels[static_cast<std::size_t>(b - 1)] =
            manifest.rows[r][static_cast<std::size_t>(mlabel)];
      }
    } else {
      for (std::size_t r = 0; r < items.rows.size(); ++r) {
        k = std::max(k, parse_int(items.rows[r][static_cast<std::size_t>(bin_col)],
                                  spec.items_file, items.line_numbers[r]));
      }
      if (k < 2) k = 2;
    }
    for (std::size_t r = 0; r < items.rows.size(); ++r) {
      const int line = items.line_numbers[r];
      const std::string& id = items.rows[r][static_cast<std::size_t>(id_col)];
      const auto found = parsed.index.find(id);
      if (found == parsed.index.end()) {
        fail_at(spec.items_file, line, "unknown group_id '" + id + "'");
      }
      const int bin =
          parse_int(items.rows[r][static_cast<std::size_t>(bin_col)], spec.items_file, line);
      if (bin < 1 || bin > k) {
        fail_at(spec.items_file, line,
                "bin index " + std::to_string(bin) + " outside 1.." + std::to_string(k));
      }
      double weight = 1.0;
      if (weight_col >= 0) {
        weight = parse_double(items.rows[r][static_cast<std::size_t>(weight_col)],
                              spec.items_file, line);
      }
      out.dataset.groups[found->second].items.push_back(Item{bin, weight});
      if (any_label) {
        labels[found->second].push_back(
            parse_int(items.rows[r][static_cast<std::size_t>(label_col)], spec.items_file, line));
      }
    }
    if (bin_labels.empty()) {
      out.dataset.binning = BehaviorBinning::simple(k);
    } else {
      out.dataset.binning.k = k;
      out.dataset.binning.factor_levels = {k};
      out.dataset.binning.labels = bin_labels;
    }
    out.manifest_columns = {"bin", "label"};
    for (int b = 0; b < k; ++b) {
      out.manifest_rows.push_back(
          {std::to_string(b + 1), out.dataset.binning.labels[static_cast<std::size_t>(b)]});
    }
  } else {
    // Feature-crossed input: collect levels, then assign row-major bins.
    std::vector<int> feature_cols;
    for (const std::string& name : spec.feature_columns) {
      feature_cols.push_back(items.require_column(name));
    }
    std::vector<std::vector<std::string>> levels(spec.feature_columns.size());
    for (std::size_t f = 0; f < spec.feature_columns.size(); ++f) {
      const auto declared = spec.declared_levels.find(spec.feature_columns[f]);
      if (declared != spec.declared_levels.end()) {
        levels[f] = declared->second;
        std::sort(levels[f].begin(), levels[f].end());
        continue;
      }
      std::set<std::string> seen;
      for (const auto& row : items.rows) {
        seen.insert(row[static_cast<std::size_t>(feature_cols[f])]);
      }
      levels[f].assign(seen.begin(), seen.end());
    }

    std::vector<std::pair<std::string, std::vector<std::string>>> factors;
    for (std::size_t f = 0; f < spec.feature_columns.size(); ++f) {
      factors.emplace_back(spec.feature_columns[f], levels[f]);
    }
    out.dataset.binning = BehaviorBinning::crossed(factors);

    for (std::size_t r = 0; r < items.rows.size(); ++r) {
      const int line = items.line_numbers[r];
      const std::string& id = items.rows[r][static_cast<std::size_t>(id_col)];
      const auto found = parsed.index.find(id);
      if (found == parsed.index.end()) {
        fail_at(spec.items_file, line, "unknown group_id '" + id + "'");
      }
      int bin0 = 0;
      for (std::size_t f = 0; f < feature_cols.size(); ++f) {
        const std::string& value = items.rows[r][static_cast<std::size_t>(feature_cols[f])];
        const auto at = std::lower_bound(levels[f].begin(), levels[f].end(), value);
        if (at == levels[f].end() || *at != value) {
          fail_at(spec.items_file, line,
                  "level '" + value + "' of column '" + spec.feature_columns[f] +
                      "' is not among the declared levels");
        }
        bin0 = bin0 * static_cast<int>(levels[f].size()) +
               static_cast<int>(at - levels[f].begin());
      }
      double weight = 1.0;
      if (weight_col >= 0) {
        weight = parse_double(items.rows[r][static_cast<std::size_t>(weight_col)],
                              spec.items_file, line);
      }
      out.dataset.groups[found->second].items.push_back(Item{bin0 + 1, weight});
      if (any_label) {
        labels[found->second].push_back(
            parse_int(items.rows[r][static_cast<std::size_t>(label_col)], spec.items_file, line));
      }
    }

    out.manifest_columns = {"bin", "label"};
    for (const std::string& name : spec.feature_columns) out.manifest_columns.push_back(name);
    for (int b = 0; b < out.dataset.binning.k; ++b) {
      std::vector<std::string> row = {
          std::to_string(b + 1), out.dataset.binning.labels[static_cast<std::size_t>(b)]};
      int rest = b;
      std::vector<int> idx(levels.size(), 0);
      for (int f = static_cast<int>(levels.size()) - 1; f >= 0; --f) {
        idx[static_cast<std::size_t>(f)] = rest % static_cast<int>(levels[static_cast<std::size_t>(f)].size());
        rest /= static_cast<int>(levels[static_cast<std::size_t>(f)].size());
      }
      for (std::size_t f = 0; f < levels.size(); ++f) {
        row.push_back(levels[f][static_cast<std::size_t>(idx[f])]);
      }
      out.manifest_rows.push_back(std::move(row));
    }
  }

  if (any_label) {
    out.dataset.item_labels = std::move(labels);
  }
  if (spec.cap_m) {
    out.dataset = downweight(out.dataset, *spec.cap_m);
  }
  return out;
}

}  // namespace c2f
