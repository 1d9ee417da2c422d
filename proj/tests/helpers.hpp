#pragma once

#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace rafg::test {

// Scratch directory under the system temp root, wiped on construction and
// removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("rafg-test-" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline tabular::Dataset make_dataset(
    std::vector<std::pair<std::string, std::vector<double>>> numeric_columns,
    std::vector<int> target, std::vector<std::string> class_names,
    std::string description = "") {
  std::vector<tabular::Column> cols;
  for (auto& [name, values] : numeric_columns) {
    tabular::Column c;
    c.meta.name = name;
    c.meta.kind = tabular::ColumnKind::Numeric;
    c.values = std::move(values);
    cols.push_back(std::move(c));
  }
  return tabular::Dataset(std::move(cols), std::move(target),
                          std::move(class_names), "label", std::move(description));
}

inline std::vector<int> all_rows(const tabular::Dataset& d) {
  std::vector<int> rows(d.n_rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  return rows;
}

}  // namespace rafg::test
