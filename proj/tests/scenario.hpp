#pragma once

// Shared builders for end-to-end scenarios: a synthetic mass-for-height
// dataset whose label is a ratio threshold of two raw columns, a small
// knowledge base where exactly one document describes that ratio, and
// replay scripts assembled in retrieval order.

#include "rafg/engine.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/oracle.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include "helpers.hpp"

#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace rafg::test {

inline tabular::Dataset make_bmi_dataset(std::size_t n_rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> weight(n_rows), height(n_rows);
  std::vector<int> target(n_rows);
  std::vector<std::string> class_names{"0", "1"};
  for (std::size_t i = 0; i < n_rows; ++i) {
    weight[i] = uniform_real(rng, 45.0, 110.0);
    height[i] = uniform_real(rng, 1.50, 1.95);
    target[i] = weight[i] / (height[i] * height[i]) > 27.0 ? 1 : 0;
  }
  std::vector<tabular::Column> cols(2);
  cols[0].meta.name = "weight";
  cols[0].values = std::move(weight);
  cols[1].meta.name = "height";
  cols[1].values = std::move(height);
  return tabular::Dataset(std::move(cols), std::move(target),
                          std::move(class_names), "label",
                          "People with body measurements.");
}

inline knowledge::KnowledgeBase make_bmi_kb(std::size_t dim = 256) {
  auto embedder = std::make_shared<knowledge::HashEmbedder>(dim);
  knowledge::KnowledgeBase kb;
  kb.dim = dim;
  kb.embedder_id = embedder->id();
  kb.embedder = embedder;

  auto add = [&](const std::string& id, const std::string& title,
                 const std::string& body) {
    knowledge::Document d;
    d.id = id;
    d.title = title;
    d.body = body;
    d.embedding = embedder->embed(body);
    kb.docs.push_back(std::move(d));
  };
  add("bmi", "Body Mass Index",
      "# Body Mass Index\nThe body mass index is weight divided by the "
      "square of height. High values indicate excess weight for a given "
      "height.");
  add("hydration", "Hydration",
      "# Hydration\nDaily water intake supports metabolism and "
      "recovery. Hydration needs scale with activity.");
  add("sleep", "Sleep",
      "# Sleep\nSleep duration and regularity influence recovery and "
      "long-term health outcomes.");
  std::sort(kb.docs.begin(), kb.docs.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return kb;
}

inline std::string fenced_proposal(const std::string& label,
                                   const std::string& formula,
                                   const std::string& reasoning,
                                   const std::string& thought = "") {
  std::string out;
  if (!thought.empty()) out += thought + "\n";
  out += "```\nLabel: " + label + "\nCalculation: " + formula +
         "\nReasoning: " + reasoning + "\n```";
  return out;
}

// Replay script for the ratio-adoption scenario: iteration 1 proposes the
// ratio from the matching document (plus useless companions); every later
// iteration proposes only no-op features until patience ends the run.
// Proposal records are emitted in the engine's retrieval order.
inline std::vector<std::string> make_bmi_replay(const knowledge::KnowledgeBase& kb,
                                                int extra_iterations,
                                                std::size_t top_k = 3) {
  std::vector<std::string> records;
  const std::string q1 = "body mass index from weight and height";
  records.push_back(q1);

  auto order1 = knowledge::retrieve(kb, q1, top_k);
  for (const auto& [id, score] : order1.ranked) {
    if (id == "bmi") {
      records.push_back(fenced_proposal(
          "bmi", "weight / (height * height)",
          "Weight divided by squared height separates heavy-for-height rows.",
          "The document describes mass scaled by squared height, which both "
          "columns support."));
    } else if (id == "hydration") {
      records.push_back("This document suggests nothing computable here.");
    } else {
      records.push_back(
          fenced_proposal("weight_twice", "weight * 2",
                          "A rescaled copy of an existing column."));
    }
  }
  records.push_back(
      "People with body measurements. The bmi column stores weight divided "
      "by squared height.");

  for (int it = 0; it < extra_iterations; ++it) {
    const std::string q = "follow-up query " + std::to_string(it);
    records.push_back(q);
    auto order = knowledge::retrieve(kb, q, top_k, {"bmi"});
    int filler = 0;
    for (std::size_t slot = 0; slot < order.ranked.size(); ++slot) {
      switch ((it + filler++) % 3) {
        case 0:
          records.push_back(fenced_proposal(
              "flat_" + std::to_string(it) + "_" + std::to_string(filler),
              "weight - weight", "A constant column."));
          break;
        case 1:
          records.push_back(fenced_proposal(
              "rescale_" + std::to_string(it) + "_" + std::to_string(filler),
              "height * 2", "A rescaled copy."));
          break;
        default:
          records.push_back(fenced_proposal("bmi", "weight / height",
                                            "Collides with an adopted label."));
          break;
      }
    }
  }
  return records;
}

struct RandomScenarioOutcome {
  tabular::Dataset d0;
  engine::RunResult result;
};

// One randomized replay run: a small synthetic dataset whose target depends
// on one feature, plus a generously padded script drawing from a pool of
// improving, tying, broken and malformed proposal replies.
inline RandomScenarioOutcome run_random_script_scenario(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 13);
  std::size_t n = 50 + rng() % 30;
  std::vector<double> f0(n), f1(n), f2(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    f0[i] = uniform_real(rng, -5, 5);
    f1[i] = uniform_real(rng, -5, 5);
    f2[i] = uniform_real(rng, 1, 9);
    y[i] = (f0[i] + uniform_real(rng, -2, 2) > 0) ? 1 : 0;
  }
  y[0] = 0;
  y[1] = 1;
  auto d0 = make_dataset({{"f0", f0}, {"f1", f1}, {"f2", f2}}, y,
                         {"neg", "pos"}, "synthetic rows");
  auto kb = make_bmi_kb();

  const char* pool[] = {
      "weightless junk without a block",
      "```\nLabel: gX\nCalculation: f0 * f0\nReasoning: squared signal\n```",
      "```\nLabel: gX\nCalculation: f0 + f1\nReasoning: sum\n```",
      "```\nLabel: gX\nCalculation: f1 - f1\nReasoning: constant\n```",
      "```\nLabel: gX\nCalculation: log(abs(f0) + 1)\nReasoning: damped\n```",
      "```\nLabel: gX\nCalculation: f0 / (f1 - f1)\nReasoning: broken\n```",
      "```\nLabel: gX\nCalculation: unknown_col\nReasoning: bogus\n```",
      "```\nLabel: gX\nCalculation: if f0 > 0 then 1 else 0\nReasoning: sign\n```",
  };
  std::vector<std::string> records;
  for (int slot = 0; slot < 24; ++slot) {
    std::string rec = pool[rng() % 8];
    auto at = rec.find("gX");
    if (at != std::string::npos) rec.replace(at, 2, "g" + std::to_string(slot));
    records.push_back(rec);
  }

  oracle::ReplayGateway gw(records);
  oracle::Oracle llm(&gw);
  engine::EngineConfig cfg;
  cfg.max_iterations = 4;
  cfg.patience = 2;
  cfg.top_k = 3;
  cfg.cv_folds = 4;
  cfg.seed = seed;
  cfg.task_goal = "separate the classes";
  cfg.learner.max_depth = 3;
  return {d0, engine::run(cfg, d0, kb, llm)};
}

// Counts violations of the adoption rules over a finished run: accepted
// iterations must strictly improve and advance the state by exactly one
// feature; rejected iterations must leave score, feature count and
// description bit-identical.
inline int count_adoption_violations(const RandomScenarioOutcome& s) {
  int violations = 0;
  double prev_best = s.result.base_score;
  std::size_t prev_features = s.d0.n_features();
  std::string prev_desc = s.d0.description();
  std::size_t accepted = 0;
  for (const auto& it : s.result.iterations) {
    if (it.decision == engine::Decision::Accepted) {
      ++accepted;
      if (!it.chosen_score || !(*it.chosen_score > prev_best)) ++violations;
      if (it.best_score_after != (it.chosen_score ? *it.chosen_score : -1.0)) ++violations;
      if (it.n_features_after != prev_features + 1) ++violations;
    } else {
      if (it.best_score_after != prev_best) ++violations;
      if (it.n_features_after != prev_features) ++violations;
      if (it.description_after != prev_desc) ++violations;
    }
    prev_best = it.best_score_after;
    prev_features = it.n_features_after;
    prev_desc = it.description_after;
  }
  if (s.result.n_generated != accepted) ++violations;
  if (s.result.best_score != prev_best) ++violations;
  if (s.result.best_score < s.result.base_score) ++violations;
  return violations;
}

}  // namespace rafg::test
