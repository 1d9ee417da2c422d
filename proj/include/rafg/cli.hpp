#pragma once

#include "rafg/engine.hpp"
#include "rafg/error.hpp"
#include "rafg/http_gateway.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/oracle.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace rafg::cli {

// Exit codes: 0 success, 2 usage/configuration, 3 runtime/transport.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

enum class RunMode { Live, Replay, Fallback };

struct RunManifest {
  std::filesystem::path data;
  std::string target;
  std::filesystem::path description_path;
  std::filesystem::path kb;   // index file, or a directory to index in-memory
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  RunMode mode = RunMode::Fallback;
  std::filesystem::path replay_path;
  std::string endpoint;
  std::string model;
};

namespace detail {

inline int exit_code_for(const Error& e) {
  switch (e.code()) {
    case Errc::MissingFile:
    case Errc::UnknownTarget:
    case Errc::DuplicateHeader:
    case Errc::EmptyTable:
    case Errc::SingleClassTarget:
    case Errc::MalformedCsv:
    case Errc::InvalidName:
    case Errc::BadFoldCount:
    case Errc::EmptyCorpus:
    case Errc::DuplicateId:
    case Errc::UnreadableFile:
    case Errc::BadIndexFile:
    case Errc::InvalidConfig:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

inline std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(Errc::InvalidConfig, "bad integer for '" + key + "': " + value);
  }
}

inline int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(Errc::InvalidConfig, "bad integer for '" + key + "': " + value);
  }
}

inline double parse_double_value(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    fail(Errc::InvalidConfig, "bad number for '" + key + "': " + value);
  }
}

}  // namespace detail

/// Flat key=value run configuration. The key set is closed: anything outside
/// the engine and learner keys (or a repeated key) is a hard error, so a
/// typo cannot silently fall back to a default.
inline engine::EngineConfig parse_config_file(const std::filesystem::path& path) {
  std::string text = read_text_file(path);
  engine::EngineConfig cfg;
  std::set<std::string> seen;

  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line = eol == std::string::npos ? text.substr(pos)
                                                : text.substr(pos, eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      fail(Errc::InvalidConfig,
           "line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    if (!seen.insert(key).second)
      fail(Errc::InvalidConfig, "duplicate config key: " + key);

    if (key == "max_iterations") cfg.max_iterations = detail::parse_int(key, value);
    else if (key == "patience") cfg.patience = detail::parse_int(key, value);
    else if (key == "top_k") cfg.top_k = detail::parse_int(key, value);
    else if (key == "metric") cfg.metric = metrics::parse_metric_id(value);
    else if (key == "cv_folds") cfg.cv_folds = detail::parse_int(key, value);
    else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
    else if (key == "task_goal") cfg.task_goal = value;
    else if (key == "test_fraction") cfg.test_fraction = detail::parse_double_value(key, value);
    else if (key == "ig_bins") cfg.ig_bins = detail::parse_int(key, value);
    else if (key == "learner.kind") cfg.learner.kind = learners::parse_learner_kind(value);
    else if (key == "learner.max_depth") cfg.learner.max_depth = detail::parse_int(key, value);
    else if (key == "learner.min_leaf") cfg.learner.min_leaf = detail::parse_int(key, value);
    else if (key == "learner.n_trees") cfg.learner.n_trees = detail::parse_int(key, value);
    else if (key == "learner.feature_fraction")
      cfg.learner.feature_fraction = detail::parse_double_value(key, value);
    else if (key == "learner.seed") cfg.learner.seed = detail::parse_u64(key, value);
    else fail(Errc::InvalidConfig, "unknown config key: " + key);
  }
  return cfg;
}

/// `index`: embed every document in a directory and persist the index.
inline int cmd_index(const std::filesystem::path& kb_dir,
                     const std::filesystem::path& out_index, std::size_t dim,
                     std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  try {
    auto embedder = std::make_shared<knowledge::HashEmbedder>(dim);
    knowledge::KnowledgeBase kb = knowledge::index_directory(kb_dir, embedder);
    knowledge::save_index(kb, out_index);
    out << "indexed " << kb.docs.size() << " documents into "
        << out_index.string() << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "index: " << e.what() << "\n";
    return detail::exit_code_for(e);
  }
}

namespace detail {

inline knowledge::KnowledgeBase load_kb(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path))
    return knowledge::index_directory(path, std::make_shared<knowledge::HashEmbedder>(256));
  knowledge::KnowledgeBase kb = knowledge::load_index(path);
  if (!kb.embedder)
    fail(Errc::InvalidConfig,
         "index was built with embedder '" + kb.embedder_id +
             "', which cannot be reattached automatically");
  return kb;
}

inline std::string render_run_report(const engine::RunResult& r,
                                     const engine::EngineConfig& cfg,
                                     const tabular::Dataset& d) {
  std::string out;
  out += "# generated " + utc_timestamp() + "\n";
  out += "rows " + std::to_string(d.n_rows()) + " (train " +
         std::to_string(r.train_rows.size()) + ", holdout " +
         std::to_string(r.test_rows.size()) + ")\n";
  out += "features original " + std::to_string(r.n_original) + ", generated " +
         std::to_string(r.n_generated) + "\n";
  out += "metric " + metrics::metric_name(cfg.metric) + "\n";
  out += "base_score " + format_double(r.base_score) + "\n";
  out += "best_score " + format_double(r.best_score) + "\n";
  out += std::string("stop_reason ") +
         (r.stop_reason == engine::StopReason::Patience ? "patience"
                                                        : "max_iterations") +
         "\n";
  out += "iterations:\n";
  out += "t     decision  best_after    adopted\n";
  for (const auto& it : r.iterations) {
    std::string t = std::to_string(it.t);
    t.append(t.size() < 6 ? 6 - t.size() : 1, ' ');
    std::string dec = it.decision == engine::Decision::Accepted ? "accepted" : "rejected";
    dec.append(10 - dec.size(), ' ');
    std::string score = format_double(it.best_score_after);
    score.append(score.size() < 14 ? 14 - score.size() : 1, ' ');
    std::string label =
        it.decision == engine::Decision::Accepted && it.chosen ? it.chosen->label : "-";
    out += t + dec + score + label + "\n";
  }
  out += "holdout metrics:\n";
  out += metrics::render_report_text(r.holdout_report, d.class_names(),
                                     r.info_gain_bits);
  return out;
}

}  // namespace detail

/// `run`: end-to-end loop. Writes report.txt, metrics.kv, provenance.jsonl
/// and augmented.csv into the output directory; the provenance log is
/// flushed even when the run aborts mid-loop.
inline int cmd_run(const RunManifest& manifest, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  std::unique_ptr<oracle::ChatGateway> gateway;
  engine::EngineConfig cfg;
  tabular::Dataset dataset;
  knowledge::KnowledgeBase kb;
  try {
    cfg = parse_config_file(manifest.config_path);
    std::string description = read_text_file(manifest.description_path);
    dataset = tabular::load_csv(manifest.data, manifest.target, description);
    kb = detail::load_kb(manifest.kb);

    switch (manifest.mode) {
      case RunMode::Replay:
        gateway = std::make_unique<oracle::ReplayGateway>(
            oracle::ReplayGateway::from_file(manifest.replay_path));
        break;
      case RunMode::Live: {
        const char* key = std::getenv("RAFG_API_KEY");
        if (!key || !*key)
          fail(Errc::InvalidConfig, "live mode requires RAFG_API_KEY to be set");
        oracle::HttpGatewayConfig gc;
        gc.base_url = manifest.endpoint;
        gc.model = manifest.model;
        gc.api_key = key;
        gateway = std::make_unique<oracle::HttpChatGateway>(gc);
        break;
      }
      case RunMode::Fallback:
        break;
    }
    std::filesystem::create_directories(manifest.out_dir);
  } catch (const Error& e) {
    err << "run: " << e.what() << "\n";
    return detail::exit_code_for(e);
  }

  oracle::Oracle llm(gateway.get());
  try {
    engine::RunResult result = engine::run(cfg, dataset, kb, llm);

    engine::write_provenance(result, manifest.out_dir / "provenance.jsonl");
    write_text_file(manifest.out_dir / "metrics.kv",
                    metrics::render_report_kv(result.holdout_report,
                                              result.info_gain_bits));
    write_text_file(manifest.out_dir / "report.txt",
                    detail::render_run_report(result, cfg, dataset));
    std::string csv = "# original " + std::to_string(result.n_original) +
                      ", generated " + std::to_string(result.n_generated) + "\n" +
                      tabular::render_csv(result.final_dataset);
    write_text_file(manifest.out_dir / "augmented.csv", csv);

    out << "base " << format_double(result.base_score) << " -> best "
        << format_double(result.best_score) << " after "
        << result.iterations.size() << " iterations ("
        << (result.stop_reason == engine::StopReason::Patience
                ? "patience"
                : "max_iterations")
        << "), +" << result.n_generated << " features\n";
    return kExitOk;
  } catch (const engine::RunAborted& e) {
    try {
      engine::write_provenance(e.partial(), manifest.out_dir / "provenance.jsonl");
    } catch (const Error& io) {
      err << "run: failed to flush partial provenance: " << io.what() << "\n";
    }
    err << "run: aborted: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    err << "run: " << e.what() << "\n";
    return detail::exit_code_for(e);
  }
}

/// `report`: re-render the stored metrics and the per-iteration trajectory.
inline int cmd_report(const std::filesystem::path& run_dir,
                      std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  try {
    if (!std::filesystem::is_directory(run_dir))
      fail(Errc::MissingFile, "no such run directory: " + run_dir.string());
    std::string kv = read_text_file(run_dir / "metrics.kv");
    out << kv;

    std::string prov = read_text_file(run_dir / "provenance.jsonl");
    out << "t     decision  best_after    adopted\n";
    std::size_t pos = 0;
    while (pos < prov.size()) {
      std::size_t eol = prov.find('\n', pos);
      if (eol == std::string::npos) eol = prov.size();
      std::string line = prov.substr(pos, eol - pos);
      pos = eol + 1;
      if (trim(line).empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail(Errc::IoError, std::string("bad provenance line: ") + e.what());
      }
      std::string t = std::to_string(j.value("t", 0));
      t.append(t.size() < 6 ? 6 - t.size() : 1, ' ');
      std::string dec = j.value("decision", "?");
      dec.append(dec.size() < 10 ? 10 - dec.size() : 1, ' ');
      std::string score = format_double(j.value("best_score_after", 0.0));
      score.append(score.size() < 14 ? 14 - score.size() : 1, ' ');
      std::string label = "-";
      if (j.contains("chosen") && j["decision"] == "accepted")
        label = j["chosen"].value("label", "-");
      out << t << dec << score << label << "\n";
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "report: " << e.what() << "\n";
    return detail::exit_code_for(e);
  }
}

/// Argument surface:
///   rafg index --kb-dir D --out F [--dim N]
///   rafg run --data F --target NAME --description F --kb F --config F
///            --out DIR [--replay F | --live --endpoint URL --model NAME]
///   rafg report --run DIR
inline int cli_main(const std::vector<std::string>& args,
                    std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"retrieval-grounded feature generation for tabular classification"};
  app.require_subcommand(1);

  auto* index = app.add_subcommand("index", "build a knowledge-base index");
  std::string kb_dir, out_index;
  std::size_t dim = 256;
  index->add_option("--kb-dir", kb_dir, "directory of .txt/.md documents")->required();
  index->add_option("--out", out_index, "index file to write")->required();
  index->add_option("--dim", dim, "embedding dimension");

  auto* run = app.add_subcommand("run", "run the feature-generation loop");
  std::string data, target, description, kb, config, out_dir, replay, endpoint, model;
  bool live = false;
  run->add_option("--data", data, "input CSV")->required();
  run->add_option("--target", target, "target column name")->required();
  run->add_option("--description", description, "dataset description text file")->required();
  run->add_option("--kb", kb, "knowledge-base index file (or a document directory)")->required();
  run->add_option("--config", config, "run configuration file")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--replay", replay, "replay script (scripted gateway mode)");
  run->add_flag("--live", live, "use the live chat endpoint (needs RAFG_API_KEY)");
  run->add_option("--endpoint", endpoint, "chat endpoint base URL (live mode)");
  run->add_option("--model", model, "chat model name (live mode)");

  auto* report = app.add_subcommand("report", "render a stored run report");
  std::string run_dir;
  report->add_option("--run", run_dir, "run output directory")->required();

  std::vector<const char*> argv;
  argv.push_back("rafg");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (index->parsed()) return cmd_index(kb_dir, out_index, dim, out, err);
  if (run->parsed()) {
    RunManifest m;
    m.data = data;
    m.target = target;
    m.description_path = description;
    m.kb = kb;
    m.config_path = config;
    m.out_dir = out_dir;
    if (!replay.empty() && live) {
      err << "run: --replay and --live are mutually exclusive\n";
      return kExitConfig;
    }
    if (!replay.empty()) {
      m.mode = RunMode::Replay;
      m.replay_path = replay;
    } else if (live) {
      m.mode = RunMode::Live;
      m.endpoint = endpoint;
      m.model = model;
    }
    return cmd_run(m, out, err);
  }
  return cmd_report(run_dir, out, err);
}

}  // namespace rafg::cli
