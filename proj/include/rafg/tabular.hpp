#pragma once

#include "rafg/error.hpp"
#include "rafg/util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rafg::tabular {

enum class ColumnKind { Numeric, Categorical };

/// Per-column metadata. Generated columns record the iteration that adopted
/// them; categorical columns keep their original strings in first-appearance
/// order (values hold the integer codes).
struct FeatureMeta {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::string description;
  std::optional<int> generated_at;
  std::vector<std::string> categories;

  bool operator==(const FeatureMeta&) const = default;
};

struct Column {
  FeatureMeta meta;
  std::vector<double> values;

  bool operator==(const Column&) const = default;
};

/// Fold assignment for cross-validation: assignments[row] is the fold index.
struct FoldPlan {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> assignments;
};

/// Immutable tabular dataset: ordered feature columns, an integer-coded
/// target, and a free-text description that evolves as features are adopted.
/// All mutation is copy-on-append, so instances are safe to share.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Column> columns, std::vector<int> target,
          std::vector<std::string> class_names, std::string target_name,
          std::string description)
      : columns_(std::move(columns)),
        target_(std::move(target)),
        class_names_(std::move(class_names)),
        target_name_(std::move(target_name)),
        description_(std::move(description)),
        n_rows_(target_.size()) {
    for (const auto& c : columns_) {
      if (c.values.size() != n_rows_)
        fail(Errc::LengthMismatch, "column '" + c.meta.name + "' has " +
                                       std::to_string(c.values.size()) +
                                       " values, expected " +
                                       std::to_string(n_rows_));
    }
    if (!target_.empty()) {
      if (class_names_.size() < 2)
        fail(Errc::SingleClassTarget, "target needs at least two classes");
      for (int y : target_)
        if (y < 0 || static_cast<std::size_t>(y) >= class_names_.size())
          fail(Errc::LengthMismatch, "target code out of range: " + std::to_string(y));
    }
  }

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_features() const { return columns_.size(); }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<int>& target() const { return target_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  int n_classes() const { return static_cast<int>(class_names_.size()); }
  const std::string& target_name() const { return target_name_; }
  const std::string& description() const { return description_; }

  const Column* find_column(std::string_view name) const {
    for (const auto& c : columns_)
      if (c.meta.name == name) return &c;
    return nullptr;
  }

  const Column& column(std::string_view name) const {
    const Column* c = find_column(name);
    if (!c) fail(Errc::UnknownColumn, "unknown column: " + std::string(name));
    return *c;
  }

  std::vector<FeatureMeta> schema() const {
    std::vector<FeatureMeta> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.meta);
    return out;
  }

  std::vector<std::string> feature_names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.meta.name);
    return out;
  }

  Dataset with_description(std::string description) const {
    Dataset d = *this;
    d.description_ = std::move(description);
    return d;
  }

  /// Row-subset copy; class codes stay stable even if a class is absent.
  Dataset subset(std::span<const int> rows) const {
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
      Column nc{c.meta, {}};
      nc.values.reserve(rows.size());
      for (int r : rows) nc.values.push_back(c.values.at(static_cast<std::size_t>(r)));
      cols.push_back(std::move(nc));
    }
    std::vector<int> tgt;
    tgt.reserve(rows.size());
    for (int r : rows) tgt.push_back(target_.at(static_cast<std::size_t>(r)));
    return Dataset(std::move(cols), std::move(tgt), class_names_, target_name_,
                   description_);
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::vector<Column> columns_;
  std::vector<int> target_;
  std::vector<std::string> class_names_;
  std::string target_name_;
  std::string description_;
  std::size_t n_rows_ = 0;
};

namespace detail {

// RFC 4180 reader: quoted fields, "" escapes, embedded separators and line
// breaks; accepts LF and CRLF; final record may lack a terminator.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  const std::size_t n = text.size();

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };

  while (i < n) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && text[i + 1] == '"') {
          field += '"';
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        field += c;
        ++i;
      }
    } else if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
      ++i;
    } else if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' && i + 1 < n && text[i + 1] == '\n') {
      end_record();
      i += 2;
    } else if (c == '\n' || c == '\r') {
      end_record();
      ++i;
    } else {
      field += c;
      field_started = true;
      ++i;
    }
  }
  if (in_quotes) fail(Errc::MalformedCsv, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

inline bool is_missing_marker(const std::string& cell) {
  if (cell.empty()) return true;
  std::string low = to_lower(cell);
  return low == "na" || low == "nan";
}

// Strict full-string decimal parse; rejects inf/nan spellings so ingested
// numeric columns contain only finite values.
inline std::optional<double> parse_decimal(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  const char* b = cell.data();
  const char* e = b + cell.size();
  if (*b == '+') ++b;  // from_chars does not accept a leading '+'
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  if (v.size() % 2 == 1) return v[m];
  return (v[m - 1] + v[m]) / 2.0;
}

inline std::string csv_escape(const std::string& s) {
  bool needs_quotes = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

/// Loads an RFC 4180 CSV with a header row. Columns whose every non-missing
/// cell parses as a decimal become numeric (missing cells imputed with the
/// column median, count noted in the meta description); everything else is
/// categorical with integer codes in first-appearance order. The target
/// column is removed from the feature set and must have at least two classes.
inline Dataset load_csv(const std::filesystem::path& path,
                        const std::string& target_name,
                        const std::string& description) {
  if (!std::filesystem::exists(path))
    fail(Errc::MissingFile, "no such file: " + path.string());
  std::string text = read_text_file(path);
  auto records = detail::parse_csv(text);
  if (records.empty()) fail(Errc::EmptyTable, "empty CSV: " + path.string());

  const auto& header = records.front();
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second)
        fail(Errc::DuplicateHeader, "duplicate header: " + h);
  }
  std::size_t target_idx = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == target_name) target_idx = i;
  if (target_idx == header.size())
    fail(Errc::UnknownTarget, "target column not found: " + target_name);

  const std::size_t n_rows = records.size() - 1;
  if (n_rows == 0) fail(Errc::EmptyTable, "CSV has a header but no rows");
  for (std::size_t r = 1; r < records.size(); ++r)
    if (records[r].size() != header.size())
      fail(Errc::MalformedCsv,
           "row " + std::to_string(r) + " has " +
               std::to_string(records[r].size()) + " fields, expected " +
               std::to_string(header.size()));

  // Target: class codes in first-appearance order.
  std::vector<int> target(n_rows);
  std::vector<std::string> class_names;
  {
    std::map<std::string, int> codes;
    for (std::size_t r = 0; r < n_rows; ++r) {
      const std::string& cell = records[r + 1][target_idx];
      auto it = codes.find(cell);
      if (it == codes.end()) {
        it = codes.emplace(cell, static_cast<int>(class_names.size())).first;
        class_names.push_back(cell);
      }
      target[r] = it->second;
    }
    if (class_names.size() < 2)
      fail(Errc::SingleClassTarget,
           "target '" + target_name + "' has a single class");
  }

  std::vector<Column> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target_idx) continue;
    bool numeric = true;
    std::size_t n_missing = 0;
    std::vector<double> parsed(n_rows, 0.0);
    std::vector<bool> missing(n_rows, false);
    std::vector<double> present;
    for (std::size_t r = 0; r < n_rows; ++r) {
      const std::string& cell = records[r + 1][c];
      if (detail::is_missing_marker(cell)) {
        missing[r] = true;
        ++n_missing;
        continue;
      }
      auto v = detail::parse_decimal(cell);
      if (!v) {
        numeric = false;
        break;
      }
      parsed[r] = *v;
      present.push_back(*v);
    }

    Column col;
    col.meta.name = header[c];
    if (numeric) {
      col.meta.kind = ColumnKind::Numeric;
      double med = detail::median(present);
      for (std::size_t r = 0; r < n_rows; ++r)
        parsed[r] = missing[r] ? med : parsed[r];
      col.values = std::move(parsed);
      if (n_missing > 0) {
        std::string note = "[missing: " + std::to_string(n_missing) + "]";
        col.meta.description =
            col.meta.description.empty() ? note : col.meta.description + " " + note;
      }
    } else {
      // Categorical: every cell string (markers included) is a category.
      col.meta.kind = ColumnKind::Categorical;
      std::map<std::string, int> codes;
      col.values.resize(n_rows);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const std::string& cell = records[r + 1][c];
        auto it = codes.find(cell);
        if (it == codes.end()) {
          it = codes.emplace(cell, static_cast<int>(col.meta.categories.size())).first;
          col.meta.categories.push_back(cell);
        }
        col.values[r] = static_cast<double>(it->second);
      }
    }
    columns.push_back(std::move(col));
  }

  return Dataset(std::move(columns), std::move(target), std::move(class_names),
                 target_name, description);
}

/// CSV text: features (in column order) followed by the target column.
/// Categorical codes are written back as their original strings; numeric
/// values in shortest round-trip form, so load -> write -> load is identity.
inline std::string render_csv(const Dataset& d) {
  std::string out;
  for (const auto& c : d.columns()) {
    out += detail::csv_escape(c.meta.name);
    out += ',';
  }
  out += detail::csv_escape(d.target_name());
  out += '\n';
  for (std::size_t r = 0; r < d.n_rows(); ++r) {
    for (const auto& c : d.columns()) {
      if (c.meta.kind == ColumnKind::Categorical) {
        auto code = static_cast<std::size_t>(c.values[r]);
        out += detail::csv_escape(c.meta.categories.at(code));
      } else {
        out += format_double(c.values[r]);
      }
      out += ',';
    }
    out += detail::csv_escape(
        d.class_names().at(static_cast<std::size_t>(d.target()[r])));
    out += '\n';
  }
  return out;
}

inline void write_csv(const Dataset& d, const std::filesystem::path& path) {
  write_text_file(path, render_csv(d));
}

/// Returns a copy of the dataset with one extra column, ordered last.
inline Dataset append_feature(const Dataset& d, FeatureMeta meta,
                              std::vector<double> values) {
  if (meta.name.empty()) fail(Errc::InvalidName, "feature name is empty");
  if (d.find_column(meta.name))
    fail(Errc::NameCollision, "feature already exists: " + meta.name);
  if (values.size() != d.n_rows())
    fail(Errc::LengthMismatch, "feature '" + meta.name + "' has " +
                                   std::to_string(values.size()) +
                                   " values, expected " +
                                   std::to_string(d.n_rows()));
  std::vector<Column> cols = d.columns();
  cols.push_back(Column{std::move(meta), std::move(values)});
  return Dataset(std::move(cols), d.target(), d.class_names(), d.target_name(),
                 d.description());
}

/// Deterministic k-fold assignment. When every class has at least k rows the
/// split is stratified: rows are shuffled within each class, class blocks are
/// concatenated and dealt round-robin, which bounds both the global and the
/// per-class fold-size spread at 1.
inline FoldPlan make_folds(const Dataset& d, int k, std::uint64_t seed) {
  if (k < 2) fail(Errc::BadFoldCount, "fold count must be >= 2");
  if (d.n_rows() < static_cast<std::size_t>(k))
    fail(Errc::BadFoldCount, "fold count " + std::to_string(k) +
                                 " exceeds row count " +
                                 std::to_string(d.n_rows()));

  std::vector<std::size_t> class_counts(static_cast<std::size_t>(d.n_classes()), 0);
  for (int y : d.target()) ++class_counts[static_cast<std::size_t>(y)];
  bool stratify = true;
  for (std::size_t n : class_counts)
    if (n < static_cast<std::size_t>(k)) stratify = false;

  std::mt19937_64 rng(mix_seed(seed, d.n_rows()));
  std::vector<int> sequence;
  sequence.reserve(d.n_rows());
  if (stratify) {
    for (int cls = 0; cls < d.n_classes(); ++cls) {
      std::vector<int> rows;
      for (std::size_t r = 0; r < d.n_rows(); ++r)
        if (d.target()[r] == cls) rows.push_back(static_cast<int>(r));
      deterministic_shuffle(rows, rng);
      sequence.insert(sequence.end(), rows.begin(), rows.end());
    }
  } else {
    for (std::size_t r = 0; r < d.n_rows(); ++r)
      sequence.push_back(static_cast<int>(r));
    deterministic_shuffle(sequence, rng);
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(d.n_rows(), 0);
  for (std::size_t i = 0; i < sequence.size(); ++i)
    plan.assignments[static_cast<std::size_t>(sequence[i])] =
        static_cast<int>(i % static_cast<std::size_t>(k));
  return plan;
}

}  // namespace rafg::tabular
