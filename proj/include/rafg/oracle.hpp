#pragma once

#include "rafg/error.hpp"
#include "rafg/fexpr.hpp"
#include "rafg/knowledge.hpp"
#include "rafg/tabular.hpp"
#include "rafg/util.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rafg::oracle {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string text;
};

struct ChatTranscript {
  std::vector<ChatMessage> messages;
};

class ChatGateway {
 public:
  virtual ~ChatGateway() = default;
  virtual std::string complete(const ChatTranscript& transcript) = 0;
};

/// Scripted transport: record i answers the i-th call of the run. Records
/// are separated by a line containing exactly "---". Every received
/// transcript is kept for inspection, which makes prompt-content tests and
/// provenance checks possible without a live model.
class ReplayGateway final : public ChatGateway {
 public:
  explicit ReplayGateway(std::vector<std::string> records)
      : records_(std::move(records)) {}

  static std::vector<std::string> parse_records(std::string_view text) {
    std::vector<std::string> records;
    std::string current;
    std::size_t pos = 0;
    auto push = [&] {
      // Outer blank lines are separators, inner content stays verbatim.
      while (!current.empty() && (current.front() == '\n' || current.front() == '\r'))
        current.erase(current.begin());
      while (!current.empty() && (current.back() == '\n' || current.back() == '\r'))
        current.pop_back();
      records.push_back(current);
      current.clear();
    };
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      std::string_view line = eol == std::string_view::npos
                                  ? text.substr(pos)
                                  : text.substr(pos, eol - pos);
      std::string_view stripped = line;
      while (!stripped.empty() && stripped.back() == '\r') stripped.remove_suffix(1);
      if (stripped == "---") {
        push();
      } else {
        current.append(line);
        current += '\n';
      }
      if (eol == std::string_view::npos) break;
      pos = eol + 1;
    }
    push();
    if (!records.empty() && records.back().empty()) records.pop_back();
    return records;
  }

  static ReplayGateway from_file(const std::filesystem::path& path) {
    return ReplayGateway(parse_records(read_text_file(path)));
  }

  std::string complete(const ChatTranscript& transcript) override {
    transcripts_.push_back(transcript);
    if (cursor_ >= records_.size())
      fail(Errc::ReplayExhausted,
           "replay script exhausted after " + std::to_string(records_.size()) +
               " records");
    return records_[cursor_++];
  }

  const std::vector<ChatTranscript>& transcripts() const { return transcripts_; }
  std::size_t consumed() const { return cursor_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<std::string> records_;
  std::size_t cursor_ = 0;
  std::vector<ChatTranscript> transcripts_;
};

/// A candidate feature as extracted from a model reply: the three structured
/// fields plus the free-form reasoning that preceded the block.
struct CandidateProposal {
  std::string label;
  std::string formula;
  std::string reasoning;
  std::string source_doc;
  std::string chain_of_thought;
};

namespace detail {

inline std::string sanitize_single_line(std::string s, std::size_t max_len) {
  for (char& c : s)
    if (c == '\n' || c == '\r' || c == '\t') c = ' ';
  s = trim(s);
  if (s.size() > max_len) s.resize(max_len);
  return s;
}

inline std::string describe_column(const tabular::FeatureMeta& m) {
  std::string line = "- " + m.name;
  line += m.kind == tabular::ColumnKind::Numeric ? " (numeric)" : " (categorical)";
  if (!m.description.empty()) line += ": " + m.description;
  return line;
}

inline std::string grammar_summary() {
  return "Formulas use existing column names (wrap names that are not plain "
         "identifiers in backquotes, e.g. `Land Area (Km2)`), decimal "
         "numbers, the operators + - * /, comparisons < <= > >= == !=, "
         "and/or, if/then/else, and the functions log, exp, sqrt, abs, min, "
         "max. Example: weight / (height * height)";
}

struct ExtractedFields {
  std::string label;
  std::string formula;
  std::string reasoning;
  std::string chain_of_thought;
};

inline bool field_line(std::string_view line, std::string_view key,
                       std::string* out) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (line.size() - i < key.size()) return false;
  for (std::size_t j = 0; j < key.size(); ++j) {
    char a = line[i + j];
    char b = key[j];
    if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
    if (b >= 'A' && b <= 'Z') b = static_cast<char>(b - 'A' + 'a');
    if (a != b) return false;
  }
  i += key.size();
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i >= line.size() || line[i] != ':') return false;
  *out = trim(line.substr(i + 1));
  return true;
}

// Finds the first fenced block containing Label/Calculation/Reasoning lines.
// Reasoning may continue over the remaining block lines.
inline std::optional<ExtractedFields> extract_fields(const std::string& reply) {
  std::vector<std::string> lines;
  {
    std::size_t pos = 0;
    while (pos <= reply.size()) {
      std::size_t eol = reply.find('\n', pos);
      std::string line = eol == std::string::npos ? reply.substr(pos)
                                                  : reply.substr(pos, eol - pos);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
      if (eol == std::string::npos) break;
      pos = eol + 1;
    }
  }

  for (std::size_t start = 0; start < lines.size(); ++start) {
    if (lines[start].rfind("```", 0) != 0) continue;
    std::size_t end = start + 1;
    while (end < lines.size() && lines[end].rfind("```", 0) != 0) ++end;
    if (end >= lines.size()) break;  // unterminated fence

    ExtractedFields f;
    bool have_label = false, have_formula = false, have_reasoning = false;
    for (std::size_t i = start + 1; i < end; ++i) {
      std::string value;
      if (!have_label && field_line(lines[i], "Label", &value)) {
        f.label = value;
        have_label = true;
      } else if (!have_formula && field_line(lines[i], "Calculation", &value)) {
        f.formula = value;
        have_formula = true;
      } else if (!have_reasoning && field_line(lines[i], "Reasoning", &value)) {
        f.reasoning = value;
        have_reasoning = true;
      } else if (have_reasoning && !trim(lines[i]).empty()) {
        f.reasoning += "\n" + std::string(trim(lines[i]));
      }
    }
    if (have_label && have_formula && have_reasoning) {
      std::string before;
      for (std::size_t i = 0; i < start; ++i) before += lines[i] + "\n";
      f.chain_of_thought = trim(before);
      return f;
    }
    start = end;  // skip past this block and keep scanning
  }
  return std::nullopt;
}

}  // namespace detail

/// Language-model gateway wrapper: query generation, candidate proposal and
/// description update. With no gateway attached it degrades to deterministic
/// templates (queries and description updates) and proposes nothing.
class Oracle {
 public:
  explicit Oracle(ChatGateway* gateway) : gateway_(gateway) {}

  bool has_gateway() const { return gateway_ != nullptr; }

  /// One-line retrieval query (at most 512 characters) built from the
  /// current description, the schema and the task goal.
  std::string generate_query(const std::string& description,
                             const std::vector<tabular::FeatureMeta>& schema,
                             const std::string& task_goal) {
    if (schema.empty()) fail(Errc::InvalidConfig, "schema is empty");
    if (!gateway_) {
      std::string q = task_goal;
      for (const auto& m : schema) q += " " + m.name;
      return detail::sanitize_single_line(q, kMaxQueryLen);
    }

    ChatTranscript t;
    t.messages.push_back(
        {"system",
         "You craft short search queries that find domain knowledge useful "
         "for deriving new tabular features."});
    std::string user = "Task goal: " + task_goal + "\n";
    user += "Dataset description: " + description + "\n";
    user += "Available columns:\n";
    for (const auto& m : schema) user += detail::describe_column(m) + "\n";
    user +=
        "Write one concise search query (a single line) for background "
        "knowledge that could suggest a useful derived feature. Reply with "
        "the query only.";
    t.messages.push_back({"user", std::move(user)});

    std::string reply = gateway_->complete(t);
    std::string q = detail::sanitize_single_line(reply, kMaxQueryLen);
    if (q.empty()) fail(Errc::EmptyResponse, "model returned an empty query");
    return q;
  }

  /// Asks for one candidate feature grounded in the given document. The
  /// reply must contain a fenced block with Label / Calculation / Reasoning
  /// lines and the formula must validate against the schema; anything else
  /// raises MalformedProposal.
  CandidateProposal propose_feature(const knowledge::Document& doc,
                                    const std::vector<tabular::FeatureMeta>& schema,
                                    const std::string& description) {
    if (!gateway_)
      fail(Errc::MalformedProposal, "no language model attached; cannot propose");

    ChatTranscript t;
    t.messages.push_back(
        {"system",
         "You derive new tabular features from existing columns, grounded in "
         "a reference document. " + detail::grammar_summary()});
    std::string user = "Reference document '" + doc.title + "':\n" + doc.body + "\n\n";
    user += "Dataset description: " + description + "\n";
    user += "Existing columns:\n";
    for (const auto& m : schema) user += detail::describe_column(m) + "\n";
    user +=
        "\nThink step by step about which relationship from the document can "
        "be computed from the existing columns. Then answer with exactly one "
        "fenced code block of the form:\n"
        "```\n"
        "Label: <new feature name>\n"
        "Calculation: <formula over existing columns>\n"
        "Reasoning: <one or two sentences>\n"
        "```\n";
    t.messages.push_back({"user", std::move(user)});

    std::string reply = gateway_->complete(t);
    auto fields = detail::extract_fields(reply);
    if (!fields)
      fail(Errc::MalformedProposal,
           "reply has no Label/Calculation/Reasoning block");
    if (fields->label.empty())
      fail(Errc::MalformedProposal, "proposal label is empty");
    for (const auto& m : schema)
      if (m.name == fields->label)
        fail(Errc::MalformedProposal,
             "proposal label collides with column '" + fields->label + "'");

    try {
      fexpr::FeatureExpr fx = fexpr::parse(fields->formula);
      fexpr::validate(fx, schema);
    } catch (const Error& e) {
      fail(Errc::MalformedProposal,
           std::string("proposal formula rejected: ") + e.what());
    }

    CandidateProposal p;
    p.label = fields->label;
    p.formula = fields->formula;
    p.reasoning = fields->reasoning;
    p.source_doc = doc.id;
    p.chain_of_thought = fields->chain_of_thought;
    return p;
  }

  /// New dataset description after adopting a feature. Transport problems
  /// never abort: the deterministic template is appended instead. The result
  /// always mentions the adopted label.
  std::string update_description(const std::string& description,
                                 const CandidateProposal& adopted) {
    std::string updated;
    if (gateway_) {
      try {
        ChatTranscript t;
        t.messages.push_back(
            {"system",
             "You maintain a dataset description for a tabular classification "
             "task."});
        t.messages.push_back(
            {"user",
             "Current description:\n" + description +
                 "\n\nA new feature was just added.\nLabel: " + adopted.label +
                 "\nCalculation: " + adopted.formula +
                 "\nReasoning: " + adopted.reasoning +
                 "\n\nReply with the full updated description text, keeping "
                 "the existing content and mentioning the new feature."});
        updated = gateway_->complete(t);
      } catch (const Error& e) {
        if (e.code() == Errc::ReplayExhausted) throw;  // a broken script should surface
        updated.clear();
      }
    }
    if (trim(updated).empty()) updated = fallback_description(description, adopted);
    if (updated.find(adopted.label) == std::string::npos)
      updated = fallback_description(updated, adopted);
    return updated;
  }

  static std::string fallback_description(const std::string& description,
                                          const CandidateProposal& adopted) {
    std::string sentence = "Newly added feature: " + adopted.label + " = " +
                           adopted.formula + ". " + adopted.reasoning;
    if (trim(description).empty()) return sentence;
    return description + "\n" + sentence;
  }

 private:
  static constexpr std::size_t kMaxQueryLen = 512;

  ChatGateway* gateway_;
};

}  // namespace rafg::oracle
