#include "statfuse/frame.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "statfuse/csv.hpp"
#include "statfuse/errors.hpp"

namespace statfuse {

namespace {

int require_column(const CsvTable& table, const std::string& name, const std::string& path) {
  int idx = table.column(name);
  if (idx < 0) throw ConfigError(path + ": column '" + name + "' not found in header");
  return idx;
}

void validate(const SampleFrame& frame) {
  const int n = frame.n();
  if (frame.x.rows() != n || frame.weights.size() != n ||
      (frame.extra.size() > 0 && frame.extra.rows() != n)) {
    throw ConfigError("frame blocks disagree on row count");
  }
  std::set<std::string> seen;
  for (int i = 0; i < n; ++i) {
    if (!seen.insert(frame.ids[i]).second) {
      throw DataError("row " + std::to_string(i + 1) + ": duplicate id '" + frame.ids[i] + "'");
    }
    double w = frame.weights(i);
    if (!std::isfinite(w) || w <= 0.0) {
      throw DataError("row " + std::to_string(i + 1) + ": weight must be > 0");
    }
  }
  if (!frame.x.allFinite()) throw DataError("x block contains non-finite entries");
  if (frame.extra.size() > 0 && !frame.extra.allFinite()) {
    throw DataError("variable block contains non-finite entries");
  }
}

}  // namespace

SampleFrame load_frame(const std::string& path, const ColumnMap& columns, Role role) {
  CsvTable table = read_csv(path);
  const int n = static_cast<int>(table.rows.size());

  const int id_col = require_column(table, columns.id, path);
  const int weight_col = require_column(table, columns.weight, path);
  std::vector<int> x_cols;
  for (const auto& name : columns.x) x_cols.push_back(require_column(table, name, path));
  std::vector<int> extra_cols;
  for (const auto& name : columns.extra) extra_cols.push_back(require_column(table, name, path));

  SampleFrame frame;
  frame.role = role;
  frame.ids.reserve(n);
  frame.x.resize(n, static_cast<int>(x_cols.size()));
  frame.weights.resize(n);
  frame.x_names = columns.x;

  for (int i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    frame.ids.push_back(trim(row[id_col]));
    auto w = parse_double(row[weight_col]);
    if (!w) {
      throw DataError(path + ": row " + std::to_string(i + 1) + ": weight '" +
                      row[weight_col] + "' is not a number");
    }
    if (!std::isfinite(*w) || *w <= 0.0) {
      throw DataError(path + ": row " + std::to_string(i + 1) + ": weight must be > 0");
    }
    frame.weights(i) = *w;
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      auto v = parse_double(row[x_cols[j]]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(path + ": row " + std::to_string(i + 1) + ": column '" +
                        columns.x[j] + "' must be a finite number, got '" + row[x_cols[j]] + "'");
      }
      frame.x(i, j) = *v;
    }
  }

  // Extra columns: numeric columns pass through, any column with a
  // non-numeric entry is treated as categorical and one-hot expanded with a
  // lexicographic level order shared through CategoricalEncoding.
  std::vector<std::vector<double>> expanded;
  for (std::size_t j = 0; j < extra_cols.size(); ++j) {
    const int col = extra_cols[j];
    bool numeric = true;
    for (int i = 0; i < n; ++i) {
      if (!parse_double(table.rows[i][col])) {
        if (trim(table.rows[i][col]).empty()) {
          throw DataError(path + ": row " + std::to_string(i + 1) + ": column '" +
                          columns.extra[j] + "' has a missing value");
        }
        numeric = false;
        break;
      }
    }
    if (numeric) {
      std::vector<double> values(n);
      for (int i = 0; i < n; ++i) {
        auto v = parse_double(table.rows[i][col]);
        if (!v || !std::isfinite(*v)) {
          throw DataError(path + ": row " + std::to_string(i + 1) + ": column '" +
                          columns.extra[j] + "' must be finite");
        }
        values[i] = *v;
      }
      expanded.push_back(std::move(values));
      frame.extra_names.push_back(columns.extra[j]);
    } else {
      std::set<std::string> level_set;
      for (int i = 0; i < n; ++i) level_set.insert(trim(table.rows[i][col]));
      CategoricalEncoding enc;
      enc.column = columns.extra[j];
      enc.levels.assign(level_set.begin(), level_set.end());
      std::map<std::string, int> level_index;
      for (std::size_t l = 0; l < enc.levels.size(); ++l) level_index[enc.levels[l]] = static_cast<int>(l);
      std::vector<std::vector<double>> hot(enc.levels.size(), std::vector<double>(n, 0.0));
      for (int i = 0; i < n; ++i) hot[level_index[trim(table.rows[i][col])]][i] = 1.0;
      for (std::size_t l = 0; l < enc.levels.size(); ++l) {
        expanded.push_back(std::move(hot[l]));
        frame.extra_names.push_back(columns.extra[j] + "=" + enc.levels[l]);
      }
      frame.encodings.push_back(std::move(enc));
    }
  }
  frame.extra.resize(n, static_cast<int>(expanded.size()));
  for (std::size_t j = 0; j < expanded.size(); ++j) {
    for (int i = 0; i < n; ++i) frame.extra(i, static_cast<int>(j)) = expanded[j][i];
  }

  validate(frame);
  return frame;
}

void save_frame(const SampleFrame& frame, const std::string& path, const std::string& weight_name) {
  std::vector<std::string> header;
  header.push_back("id");
  for (const auto& name : frame.x_names) header.push_back(name);
  for (const auto& name : frame.extra_names) header.push_back(name);
  header.push_back(weight_name);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(frame.n());
  for (int i = 0; i < frame.n(); ++i) {
    std::vector<std::string> row;
    row.push_back(frame.ids[i]);
    for (int j = 0; j < frame.p(); ++j) row.push_back(format_double(frame.x(i, j)));
    for (int j = 0; j < frame.extra_dim(); ++j) row.push_back(format_double(frame.extra(i, j)));
    row.push_back(format_double(frame.weights(i)));
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

SampleFrame make_frame(Role role, std::vector<std::string> ids, Eigen::MatrixXd x,
                       Eigen::MatrixXd extra, Eigen::VectorXd weights,
                       std::vector<std::string> x_names, std::vector<std::string> extra_names) {
  SampleFrame frame;
  frame.role = role;
  frame.ids = std::move(ids);
  for (auto& id : frame.ids) id = trim(id);
  frame.x = std::move(x);
  frame.extra = std::move(extra);
  frame.weights = std::move(weights);
  if (x_names.empty()) {
    for (int j = 0; j < frame.p(); ++j) x_names.push_back("x" + std::to_string(j + 1));
  }
  if (extra_names.empty()) {
    const char* base = role == Role::kRecipient ? "y" : "z";
    for (int j = 0; j < frame.extra_dim(); ++j) extra_names.push_back(base + std::to_string(j + 1));
  }
  frame.x_names = std::move(x_names);
  frame.extra_names = std::move(extra_names);
  validate(frame);
  return frame;
}

OverlapInfo detect_overlap(const SampleFrame& recipient, const SampleFrame& donor) {
  if (recipient.p() != donor.p()) {
    throw ConfigError("x dimension mismatch: recipient has " + std::to_string(recipient.p()) +
                      " matching variables, donor has " + std::to_string(donor.p()));
  }
  std::unordered_map<std::string, int> donor_pos;
  donor_pos.reserve(donor.ids.size());
  for (int l = 0; l < donor.n(); ++l) donor_pos.emplace(donor.ids[l], l);

  OverlapInfo info;
  for (int k = 0; k < recipient.n(); ++k) {
    auto it = donor_pos.find(recipient.ids[k]);
    if (it != donor_pos.end()) {
      info.common_ids.push_back(recipient.ids[k]);
      info.pairs.emplace_back(k, it->second);
    }
  }
  return info;
}

}  // namespace statfuse
