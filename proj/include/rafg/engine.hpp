#pragma once

#include "rafg/error.hpp"
#include "rafg/fexpr.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/learners.hpp"
#include "rafg/metrics.hpp"
#include "rafg/oracle.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rafg::engine {

struct EngineConfig {
  int max_iterations = 10;  // T
  int patience = 3;         // K: consecutive non-improving iterations tolerated
  int top_k = 3;
  metrics::MetricId metric = metrics::MetricId::Accuracy;
  learners::LearnerConfig learner;
  int cv_folds = 5;
  std::uint64_t seed = 7;
  std::string task_goal;
  double test_fraction = 0.2;  // held out for the final report, never for adoption
  int ig_bins = 4;             // binning for the reported information gain
};

enum class StopReason { Patience, MaxIterations };
enum class Decision { Accepted, Rejected };

/// Outcome of one proposal: either scored, or rejected with a reason
/// (malformed reply, non-finite evaluation, ...).
struct CandidateRecord {
  std::string source_doc;
  std::optional<oracle::CandidateProposal> proposal;
  std::optional<double> score;
  std::string rejection_reason;  // empty when scored
};

struct IterationRecord {
  int t = 0;
  std::string query;
  knowledge::RetrievalResult retrieved;
  std::vector<CandidateRecord> candidates;
  std::optional<oracle::CandidateProposal> chosen;
  std::optional<double> chosen_score;
  Decision decision = Decision::Rejected;
  std::string description_after;
  double best_score_after = 0.0;
  std::size_t n_features_after = 0;
};

struct RunResult {
  std::vector<tabular::FeatureMeta> final_features;
  double base_score = 0.0;
  double best_score = 0.0;
  std::vector<IterationRecord> iterations;
  StopReason stop_reason = StopReason::MaxIterations;
  tabular::Dataset final_dataset;  // all rows, original + adopted columns
  std::size_t n_original = 0;
  std::size_t n_generated = 0;
  metrics::MetricsReport holdout_report;  // scored once, after the loop
  double info_gain_bits = 0.0;
  std::vector<int> train_rows;
  std::vector<int> test_rows;
};

/// Raised when a run dies mid-loop (transport, I/O); carries everything
/// recorded so far so callers can still flush the provenance log.
class RunAborted : public Error {
 public:
  RunAborted(const Error& cause, RunResult partial)
      : Error(cause.code(), cause.what(), cause.position()),
        partial_(std::move(partial)) {}

  const RunResult& partial() const { return partial_; }

 private:
  RunResult partial_;
};

namespace detail {

inline void check_config(const EngineConfig& c) {
  if (c.max_iterations < 1) fail(Errc::InvalidConfig, "max_iterations must be >= 1");
  if (c.patience < 1) fail(Errc::InvalidConfig, "patience must be >= 1");
  if (c.top_k < 1) fail(Errc::InvalidConfig, "top_k must be >= 1");
  if (c.cv_folds < 2) fail(Errc::InvalidConfig, "cv_folds must be >= 2");
  if (c.test_fraction < 0.0 || c.test_fraction > 0.5)
    fail(Errc::InvalidConfig, "test_fraction must be in [0, 0.5]");
  if (c.ig_bins < 2) fail(Errc::InvalidConfig, "ig_bins must be >= 2");
}

// Stratified holdout: within each class, rows are shuffled deterministically
// and a rounded fraction moves to the test side; every class keeps at least
// one training row.
inline void split_holdout(const tabular::Dataset& d, double fraction,
                          std::uint64_t seed, std::vector<int>* train,
                          std::vector<int>* test) {
  std::mt19937_64 rng(mix_seed(seed, 0x5917ull + d.n_rows()));
  std::vector<char> is_test(d.n_rows(), 0);
  for (int cls = 0; cls < d.n_classes(); ++cls) {
    std::vector<int> rows;
    for (std::size_t r = 0; r < d.n_rows(); ++r)
      if (d.target()[r] == cls) rows.push_back(static_cast<int>(r));
    deterministic_shuffle(rows, rng);
    auto want = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(rows.size())));
    if (want >= rows.size()) want = rows.size() - 1;
    for (std::size_t i = 0; i < want; ++i)
      is_test[static_cast<std::size_t>(rows[i])] = 1;
  }
  for (std::size_t r = 0; r < d.n_rows(); ++r)
    (is_test[r] ? *test : *train).push_back(static_cast<int>(r));
}

}  // namespace detail

/// Scores one proposal: evaluate the formula over the given dataset, append
/// it as a temporary column, and run cross-validation. The temporary dataset
/// is discarded. Fold assignments depend only on (rows, target, k, seed), so
/// every candidate in a run is scored against the same folds.
inline double evaluate_candidate(const tabular::Dataset& d,
                                 const oracle::CandidateProposal& proposal,
                                 const EngineConfig& config) {
  fexpr::FeatureExpr fx = fexpr::parse(proposal.formula);
  std::vector<double> column = fexpr::evaluate(fx, d);
  tabular::FeatureMeta meta;
  meta.name = proposal.label;
  meta.description = proposal.reasoning;
  tabular::Dataset tmp = tabular::append_feature(d, std::move(meta), std::move(column));
  tabular::FoldPlan folds = tabular::make_folds(tmp, config.cv_folds, config.seed);
  return learners::evaluate_cv(config.learner, tmp, folds, config.metric);
}

/// The full iterative loop. Per iteration: generate a query, retrieve top-k
/// documents (documents that already yielded an adopted feature are skipped),
/// ask for one proposal per document, score each valid proposal by
/// cross-validation, pick the argmax (ties resolved by retrieval rank, which
/// itself ties by ascending document id) and adopt it only on strict
/// improvement. Adoption appends the column, re-derives the description and
/// resets the patience counter; anything else leaves all state untouched.
/// Stops after `patience` consecutive non-improving iterations or at
/// `max_iterations`.
inline RunResult run(const EngineConfig& config, const tabular::Dataset& d0,
                     const knowledge::KnowledgeBase& kb, oracle::Oracle& llm) {
  detail::check_config(config);
  if (kb.docs.empty()) fail(Errc::EmptyCorpus, "knowledge base is empty");

  RunResult result;
  result.n_original = d0.n_features();
  detail::split_holdout(d0, config.test_fraction, config.seed,
                        &result.train_rows, &result.test_rows);

  tabular::Dataset full = d0;
  tabular::Dataset train = full.subset(result.train_rows);
  const tabular::FoldPlan folds =
      tabular::make_folds(train, config.cv_folds, config.seed);

  result.base_score =
      learners::evaluate_cv(config.learner, train, folds, config.metric);
  double best = result.base_score;

  std::string description = d0.description();
  std::set<std::string> adopted_docs;
  int no_improve = 0;
  result.stop_reason = StopReason::MaxIterations;

  try {
    for (int t = 1; t <= config.max_iterations; ++t) {
      IterationRecord rec;
      rec.t = t;
      rec.query = llm.generate_query(description, full.schema(), config.task_goal);
      rec.retrieved = knowledge::retrieve(
          kb, rec.query, static_cast<std::size_t>(config.top_k), adopted_docs);

      // One proposal per retrieved document; a malformed reply voids only
      // that candidate.
      struct Scored {
        oracle::CandidateProposal proposal;
        double score;
        std::vector<double> full_column;
      };
      std::vector<Scored> scored;
      for (const auto& [doc_id, sim] : rec.retrieved.ranked) {
        const knowledge::Document* doc = kb.find(doc_id);
        CandidateRecord cand;
        cand.source_doc = doc_id;
        oracle::CandidateProposal proposal;
        try {
          proposal = llm.propose_feature(*doc, full.schema(), description);
        } catch (const Error& e) {
          if (e.code() != Errc::MalformedProposal) throw;
          cand.rejection_reason = e.what();
          rec.candidates.push_back(std::move(cand));
          continue;
        }
        cand.proposal = proposal;
        if (proposal.label == full.target_name()) {
          cand.rejection_reason = "label collides with the target column";
          rec.candidates.push_back(std::move(cand));
          continue;
        }
        try {
          fexpr::FeatureExpr fx = fexpr::parse(proposal.formula);
          std::vector<double> column = fexpr::evaluate(fx, full);
          double score = evaluate_candidate(train, proposal, config);
          cand.score = score;
          scored.push_back({proposal, score, std::move(column)});
        } catch (const Error& e) {
          if (e.code() != Errc::NonFiniteResult) throw;
          cand.rejection_reason = e.what();
        }
        rec.candidates.push_back(std::move(cand));
      }

      // Argmax over scored candidates; earlier retrieval rank wins ties.
      const Scored* chosen = nullptr;
      for (const auto& s : scored)
        if (!chosen || s.score > chosen->score) chosen = &s;

      if (chosen && chosen->score > best) {
        tabular::FeatureMeta meta;
        meta.name = chosen->proposal.label;
        meta.kind = tabular::ColumnKind::Numeric;
        meta.description = chosen->proposal.reasoning;
        meta.generated_at = t;
        full = tabular::append_feature(full, std::move(meta), chosen->full_column);
        train = full.subset(result.train_rows);
        best = chosen->score;
        description = llm.update_description(description, chosen->proposal);
        full = full.with_description(description);
        adopted_docs.insert(chosen->proposal.source_doc);
        no_improve = 0;
        rec.decision = Decision::Accepted;
        rec.chosen = chosen->proposal;
        rec.chosen_score = chosen->score;
      } else {
        ++no_improve;
        rec.decision = Decision::Rejected;
        if (chosen) {
          rec.chosen = chosen->proposal;
          rec.chosen_score = chosen->score;
        }
      }

      rec.description_after = description;
      rec.best_score_after = best;
      rec.n_features_after = full.n_features();
      result.iterations.push_back(std::move(rec));

      if (no_improve >= config.patience) {
        result.stop_reason = StopReason::Patience;
        break;
      }
    }
  } catch (const Error& e) {
    result.best_score = best;
    result.final_features = full.schema();
    result.final_dataset = full;
    result.n_generated = full.n_features() - d0.n_features();
    throw RunAborted(e, std::move(result));
  }

  result.best_score = best;
  result.final_dataset = full;
  result.final_features = full.schema();
  result.n_generated = full.n_features() - d0.n_features();

  // Holdout report: train once on the training rows of the final feature
  // set, score the held-out rows (or the training rows when no holdout).
  {
    learners::Model model = learners::train(config.learner, full, result.train_rows);
    const std::vector<int>& eval_rows =
        result.test_rows.empty() ? result.train_rows : result.test_rows;
    std::vector<int> pred = learners::predict(model, full, eval_rows);
    std::vector<int> truth;
    truth.reserve(eval_rows.size());
    for (int r : eval_rows) truth.push_back(full.target()[static_cast<std::size_t>(r)]);
    result.holdout_report = metrics::classification_report(truth, pred);
  }

  std::vector<std::string> original_names;
  for (const auto& c : d0.columns()) original_names.push_back(c.meta.name);
  result.info_gain_bits = metrics::information_gain(
      original_names, full.feature_names(), full, config.ig_bins);
  return result;
}

namespace detail {

inline nlohmann::ordered_json iteration_to_json(const IterationRecord& rec) {
  nlohmann::ordered_json j;
  j["t"] = rec.t;
  j["query"] = rec.query;
  auto& retrieved = j["retrieved"] = nlohmann::ordered_json::array();
  for (const auto& [id, score] : rec.retrieved.ranked)
    retrieved.push_back({{"id", id}, {"score", score}});
  auto& cands = j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : rec.candidates) {
    nlohmann::ordered_json cj;
    cj["doc"] = c.source_doc;
    if (c.proposal) {
      cj["label"] = c.proposal->label;
      cj["formula"] = c.proposal->formula;
    }
    if (c.score) cj["score"] = *c.score;
    if (!c.rejection_reason.empty()) cj["reason"] = c.rejection_reason;
    if (c.proposal) {
      cj["reasoning"] = c.proposal->reasoning;
      cj["chain_of_thought"] = c.proposal->chain_of_thought;
    }
    cands.push_back(std::move(cj));
  }
  j["decision"] = rec.decision == Decision::Accepted ? "accepted" : "rejected";
  j["description_hash"] = hex64(fnv1a64(rec.description_after));
  if (rec.chosen) {
    j["chosen"] = {{"label", rec.chosen->label}, {"score", *rec.chosen_score}};
  }
  j["best_score_after"] = rec.best_score_after;
  j["n_features_after"] = rec.n_features_after;
  j["description_after"] = rec.description_after;
  return j;
}

}  // namespace detail

/// Line-delimited provenance: one JSON record per iteration, fields in fixed
/// order, ending with the description hash and the full description text.
inline void write_provenance(const RunResult& result,
                             const std::filesystem::path& path) {
  std::string out;
  for (const auto& rec : result.iterations)
    out += detail::iteration_to_json(rec).dump() + "\n";
  write_text_file(path, out);
}

}  // namespace rafg::engine
