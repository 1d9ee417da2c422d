#pragma once

#include "rafg/error.hpp"
#include "rafg/metrics.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rafg::learners {

enum class LearnerKind { DecisionTree, RandomForest };

inline LearnerKind parse_learner_kind(const std::string& s) {
  if (s == "decision_tree") return LearnerKind::DecisionTree;
  if (s == "random_forest") return LearnerKind::RandomForest;
  fail(Errc::InvalidConfig, "unknown learner kind: " + s);
}

struct LearnerConfig {
  LearnerKind kind = LearnerKind::DecisionTree;
  int max_depth = 8;
  int min_leaf = 2;
  int n_trees = 100;          // forest only
  double feature_fraction = 0.0;  // forest only; <= 0 means sqrt(n_features)
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<std::size_t> class_counts;
  int prediction = 0;
};

struct TreeModel {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int n_classes = 0;

  int predict_row(const tabular::Dataset& d, std::size_t row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
      double x = d.columns()[static_cast<std::size_t>(nd.feature)].values[row];
      i = x <= nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<std::size_t>(i)].prediction;
  }
};

struct Model {
  LearnerKind kind = LearnerKind::DecisionTree;
  std::vector<TreeModel> trees;
  int n_classes = 0;
};

namespace detail {

inline double gini(const std::vector<std::size_t>& counts, std::size_t total) {
  double g = 1.0;
  for (std::size_t c : counts) {
    double p = static_cast<double>(c) / static_cast<double>(total);
    g -= p * p;
  }
  return g;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = -1.0;
};

// Exhaustive scan over midpoints of adjacent distinct values. Candidates are
// visited in ascending (feature index, threshold) order and replaced only on
// strictly greater gain, which yields the tie-break: maximal Gini gain, then
// lowest feature index, then lowest threshold.
inline std::optional<SplitChoice> best_split(
    const tabular::Dataset& d, const std::vector<int>& rows,
    const std::vector<std::size_t>& parent_counts,
    const std::vector<int>& features, int min_leaf) {
  const std::size_t n = rows.size();
  const double parent_gini = gini(parent_counts, n);
  SplitChoice best;

  std::vector<std::pair<double, int>> ordered(n);  // (value, class)
  for (int f : features) {
    const auto& values = d.columns()[static_cast<std::size_t>(f)].values;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = static_cast<std::size_t>(rows[i]);
      ordered[i] = {values[r], d.target()[r]};
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<std::size_t> left(parent_counts.size(), 0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      ++left[static_cast<std::size_t>(ordered[i].second)];
      if (ordered[i].first == ordered[i + 1].first) continue;
      std::size_t nl = i + 1;
      std::size_t nr = n - nl;
      if (nl < static_cast<std::size_t>(min_leaf) ||
          nr < static_cast<std::size_t>(min_leaf))
        continue;
      std::vector<std::size_t> right(parent_counts.size());
      for (std::size_t c = 0; c < right.size(); ++c)
        right[c] = parent_counts[c] - left[c];
      double weighted =
          (static_cast<double>(nl) * gini(left, nl) +
           static_cast<double>(nr) * gini(right, nr)) /
          static_cast<double>(n);
      double gain = parent_gini - weighted;
      if (gain > best.gain) {
        best.feature = f;
        best.threshold = (ordered[i].first + ordered[i + 1].first) / 2.0;
        best.gain = gain;
      }
    }
  }
  if (best.feature < 0) return std::nullopt;
  return best;
}

// Candidate features per split: an explicit fraction of the splittable
// pool, or floor(sqrt(pool size)) when unset.
inline int resolve_features_per_split(const LearnerConfig& config, int pool_size) {
  if (config.feature_fraction > 0.0) {
    int m = static_cast<int>(std::llround(config.feature_fraction * pool_size));
    return std::clamp(m, 1, pool_size);
  }
  int m = static_cast<int>(std::floor(std::sqrt(static_cast<double>(pool_size))));
  return std::clamp(m, 1, pool_size);
}

struct TreeBuilder {
  const tabular::Dataset& d;
  const LearnerConfig& config;
  std::mt19937_64* rng;  // null for plain decision trees
  TreeModel model;

  int build(const std::vector<int>& rows, int depth) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(d.n_classes()), 0);
    for (int r : rows) ++counts[static_cast<std::size_t>(d.target()[static_cast<std::size_t>(r)])];

    int node_index = static_cast<int>(model.nodes.size());
    model.nodes.emplace_back();
    model.nodes.back().class_counts = counts;
    model.nodes.back().prediction = argmax_class(counts);

    bool pure = false;
    for (std::size_t c : counts)
      if (c == rows.size()) pure = true;
    if (pure || depth >= config.max_depth ||
        rows.size() < 2 * static_cast<std::size_t>(config.min_leaf))
      return node_index;

    auto split = best_split(d, rows, counts, candidate_features(rows), config.min_leaf);
    if (!split) return node_index;

    std::vector<int> left_rows, right_rows;
    const auto& values = d.columns()[static_cast<std::size_t>(split->feature)].values;
    for (int r : rows) {
      if (values[static_cast<std::size_t>(r)] <= split->threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }

    int left = build(left_rows, depth + 1);
    int right = build(right_rows, depth + 1);
    TreeNode& nd = model.nodes[static_cast<std::size_t>(node_index)];
    nd.feature = split->feature;
    nd.threshold = split->threshold;
    nd.left = left;
    nd.right = right;
    return node_index;
  }

  static int argmax_class(const std::vector<std::size_t>& counts) {
    int best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
      if (counts[c] > counts[static_cast<std::size_t>(best)])
        best = static_cast<int>(c);
    return best;  // ties keep the smallest class code
  }

  // The subsampling pool holds only features splittable at this node (at
  // least two distinct values among its rows). Unsplittable columns neither
  // enter the pool nor consume random draws, so appending a constant column
  // can never alter the trained model.
  std::vector<int> candidate_features(const std::vector<int>& rows) {
    std::vector<int> pool;
    for (int f = 0; f < static_cast<int>(d.n_features()); ++f) {
      const auto& values = d.columns()[static_cast<std::size_t>(f)].values;
      double first = values[static_cast<std::size_t>(rows[0])];
      for (int r : rows) {
        if (values[static_cast<std::size_t>(r)] != first) {
          pool.push_back(f);
          break;
        }
      }
    }
    if (!rng || pool.empty()) return pool;
    std::size_t m = static_cast<std::size_t>(
        resolve_features_per_split(config, static_cast<int>(pool.size())));
    if (m >= pool.size()) return pool;
    // Partial Fisher-Yates draw, then ascending order for the tie-break scan.
    std::vector<int> picked;
    picked.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t j = i + static_cast<std::size_t>((*rng)() % (pool.size() - i));
      std::swap(pool[i], pool[j]);
      picked.push_back(pool[i]);
    }
    std::sort(picked.begin(), picked.end());
    return picked;
  }
};

inline TreeModel train_tree(const LearnerConfig& config, const tabular::Dataset& d,
                            const std::vector<int>& rows, std::mt19937_64* rng) {
  TreeBuilder b{d, config, rng, {}};
  b.model.n_classes = d.n_classes();
  b.build(rows, 0);
  return std::move(b.model);
}

}  // namespace detail

/// CART with Gini impurity; a forest is n_trees CARTs over bootstrap samples
/// with per-split feature subsampling. Fully deterministic given the seed.
inline Model train(const LearnerConfig& config, const tabular::Dataset& d,
                   std::span<const int> rows) {
  if (rows.empty()) fail(Errc::EmptyTrainingSet, "no training rows");
  if (config.max_depth < 1 || config.min_leaf < 1 || config.n_trees < 1)
    fail(Errc::InvalidConfig, "learner config out of range");
  std::vector<int> row_vec(rows.begin(), rows.end());

  Model m;
  m.kind = config.kind;
  m.n_classes = d.n_classes();
  if (config.kind == LearnerKind::DecisionTree) {
    m.trees.push_back(detail::train_tree(config, d, row_vec, nullptr));
    return m;
  }

  for (int t = 0; t < config.n_trees; ++t) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<int> sample(row_vec.size());
    for (auto& r : sample)
      r = row_vec[static_cast<std::size_t>(rng() % row_vec.size())];
    m.trees.push_back(detail::train_tree(config, d, sample, &rng));
  }
  return m;
}

/// One label per requested row; forests vote, ties go to the smallest class
/// code.
inline std::vector<int> predict(const Model& m, const tabular::Dataset& d,
                                std::span<const int> rows) {
  for (const auto& tree : m.trees)
    for (const auto& nd : tree.nodes)
      if (nd.feature >= static_cast<int>(d.n_features()))
        fail(Errc::UnknownColumn, "model references a missing column");

  std::vector<int> out;
  out.reserve(rows.size());
  for (int r : rows) {
    if (m.trees.size() == 1) {
      out.push_back(m.trees[0].predict_row(d, static_cast<std::size_t>(r)));
      continue;
    }
    std::vector<int> votes(static_cast<std::size_t>(m.n_classes), 0);
    for (const auto& tree : m.trees)
      ++votes[static_cast<std::size_t>(tree.predict_row(d, static_cast<std::size_t>(r)))];
    int best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c)
      if (votes[c] > votes[static_cast<std::size_t>(best)])
        best = static_cast<int>(c);
    out.push_back(best);
  }
  return out;
}

inline double score_labels(metrics::MetricId metric, std::span<const int> y_true,
                           std::span<const int> y_pred) {
  if (metric == metrics::MetricId::Accuracy) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i)
      if (y_true[i] == y_pred[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(y_true.size());
  }
  return metrics::classification_report(y_true, y_pred).macro_f1;
}

/// Mean out-of-fold metric across the folds of the plan. Fold seeds are
/// derived from the config seed, so identical inputs give identical scores.
inline double evaluate_cv(const LearnerConfig& config, const tabular::Dataset& d,
                          const tabular::FoldPlan& folds,
                          metrics::MetricId metric) {
  if (folds.assignments.size() != d.n_rows())
    fail(Errc::LengthMismatch, "fold plan does not match dataset rows");
  double total = 0.0;
  for (int f = 0; f < folds.k; ++f) {
    std::vector<int> train_rows, test_rows;
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
      if (folds.assignments[r] == f)
        test_rows.push_back(static_cast<int>(r));
      else
        train_rows.push_back(static_cast<int>(r));
    }
    LearnerConfig fold_config = config;
    fold_config.seed = mix_seed(config.seed, 0x0f01d5ull + static_cast<std::uint64_t>(f));
    Model m = train(fold_config, d, train_rows);
    std::vector<int> pred = predict(m, d, test_rows);
    std::vector<int> truth;
    truth.reserve(test_rows.size());
    for (int r : test_rows) truth.push_back(d.target()[static_cast<std::size_t>(r)]);
    total += score_labels(metric, truth, pred);
  }
  return total / static_cast<double>(folds.k);
}

}  // namespace rafg::learners
