#pragma once

// Correctness judgement against gold answers, and the results file that
// carries one line per evaluated item:
//   {item_id, strategy, answer, confidence, correct, attempted, status,
//    transcript_path, model, category, subtask, modality, eval_config,
//    task_kind}

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vcal/dataset.hpp"
#include "vcal/parsing.hpp"
#include "vcal/types.hpp"

namespace vcal {

struct Verdict {
  bool correct = false;
  bool attempted = false;
  bool operator==(const Verdict&) const = default;
};

struct GroupLabels {
  std::string category;
  std::string subtask;
  Modality modality = Modality::image;
  std::string strategy;
  EvalConfig eval_config = EvalConfig::general;
  TaskKind task_kind = TaskKind::mcq;
  std::string model;
  bool operator==(const GroupLabels&) const = default;
};

struct CalibrationRecord {
  std::string item_id;
  double confidence = 0.0;
  bool correct = false;
  bool attempted = true;
  GroupLabels group;
};

struct RunMeta {
  std::string model;
  std::string strategy;
};

namespace normalize {

inline bool is_terminal_punct(char c) {
  return c == '.' || c == ',' || c == '!' || c == '?' || c == ';' || c == ':';
}

/// Lowercase, collapse whitespace runs, strip terminal punctuation.
inline std::string text(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char ch : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  while (!out.empty() && (is_terminal_punct(out.back()) || out.back() == ' ')) out.pop_back();
  return out;
}

/// "A", "a.", "(a)", "[B]", "C) foo", "D. bar" -> the uppercase letter;
/// anything else -> nullopt.
inline std::optional<char> letter(std::string_view s) {
  auto t = trim(s);
  auto is_wrap = [](char c) { return c == '(' || c == ')' || c == '[' || c == ']' || c == '.' || c == ':' || c == '*'; };
  while (!t.empty() && is_wrap(t.front())) t.remove_prefix(1);
  auto core = t;
  while (!core.empty() && (is_wrap(core.back()) || std::isspace(static_cast<unsigned char>(core.back())))) {
    core.remove_suffix(1);
  }
  if (core.size() == 1 && std::isalpha(static_cast<unsigned char>(core[0]))) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(core[0])));
  }
  if (t.size() >= 2 && std::isalpha(static_cast<unsigned char>(t[0])) && (t[1] == '.' || t[1] == ')' || t[1] == ':')) {
    return static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  }
  return std::nullopt;
}

/// Decimal or simple "p/q" fraction.
inline std::optional<double> number(std::string_view s) {
  std::string t = text(s);
  auto parse = [](const std::string& x) -> std::optional<double> {
    if (x.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(x.c_str(), &end);
    if (end == x.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
    return v;
  };
  if (auto slash = t.find('/'); slash != std::string::npos) {
    auto p = parse(std::string(trim(std::string_view(t).substr(0, slash))));
    auto q = parse(std::string(trim(std::string_view(t).substr(slash + 1))));
    if (!p || !q || *q == 0.0) return std::nullopt;
    return *p / *q;
  }
  return parse(t);
}

}  // namespace normalize

inline constexpr double kNumericRelativeTolerance = 1e-6;

inline bool numbers_match(double a, double b) {
  if (a == b) return true;
  return std::fabs(a - b) <= kNumericRelativeTolerance * std::max(std::fabs(a), std::fabs(b));
}

/// Grades a prediction. Abstentions are neither attempted nor correct.
inline Verdict judge(const Prediction& pred, const GoldAnswer& gold) {
  if (pred.abstained) return {false, false};
  auto candidates = [&] {
    std::vector<std::string_view> c{gold.canonical};
    for (const auto& a : gold.aliases) c.push_back(a);
    return c;
  }();
  bool correct = false;
  switch (gold.match_mode) {
    case MatchMode::letter: {
      auto got = normalize::letter(pred.answer);
      if (!got) break;
      for (auto c : candidates) {
        auto want = normalize::letter(c);
        if (want && *want == *got) correct = true;
      }
      break;
    }
    case MatchMode::exact_normalized: {
      auto got = normalize::text(pred.answer);
      for (auto c : candidates) {
        if (normalize::text(c) == got) correct = true;
      }
      break;
    }
    case MatchMode::numeric: {
      auto got_text = normalize::text(pred.answer);
      auto got = normalize::number(pred.answer);
      for (auto c : candidates) {
        if (normalize::text(c) == got_text) correct = true;
        auto want = normalize::number(c);
        if (got && want && numbers_match(*got, *want)) correct = true;
      }
      break;
    }
  }
  return {correct, true};
}

inline GroupLabels group_of(const EvalItem& item, const RunMeta& meta) {
  return {item.category, item.subtask, item.modality, meta.strategy, item.eval_config, item.task_kind, meta.model};
}

/// Requires a confidence value; rows without one become status entries.
inline CalibrationRecord make_record(const EvalItem& item, const Prediction& pred, const Verdict& verdict,
                                     const RunMeta& meta) {
  if (!pred.confidence) throw Error("item " + item.id + " has no confidence; record it as a status entry");
  return {item.id, *pred.confidence, verdict.correct, verdict.attempted, group_of(item, meta)};
}

enum class RowStatus { ok, missing_confidence, parse_error, request_error, plan_error };

inline std::string_view to_string(RowStatus s) {
  switch (s) {
    case RowStatus::ok: return "ok";
    case RowStatus::missing_confidence: return "missing_confidence";
    case RowStatus::parse_error: return "parse_error";
    case RowStatus::request_error: return "request_error";
    case RowStatus::plan_error: return "plan_error";
  }
  return "?";
}

inline std::optional<RowStatus> parse_row_status(std::string_view s) {
  for (auto st : {RowStatus::ok, RowStatus::missing_confidence, RowStatus::parse_error, RowStatus::request_error,
                  RowStatus::plan_error}) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

/// One line of the results file: a calibration record (status ok) or an
/// explicit status entry.
struct ResultRow {
  std::string item_id;
  std::string strategy;
  std::string answer;
  std::optional<double> confidence;
  bool correct = false;
  bool attempted = false;
  RowStatus status = RowStatus::ok;
  std::string transcript_path;
  std::string detail;
  GroupLabels group;

  bool is_record() const { return status == RowStatus::ok && confidence.has_value(); }

  CalibrationRecord to_record() const {
    if (!is_record()) throw Error("row " + item_id + " is a status entry, not a record");
    return {item_id, *confidence, correct, attempted, group};
  }
};

inline nlohmann::json to_json(const ResultRow& r) {
  nlohmann::json j;
  j["item_id"] = r.item_id;
  j["strategy"] = r.strategy;
  j["answer"] = r.answer;
  j["confidence"] = r.confidence ? nlohmann::json(*r.confidence) : nlohmann::json(nullptr);
  j["correct"] = r.correct;
  j["attempted"] = r.attempted;
  j["status"] = to_string(r.status);
  j["transcript_path"] = r.transcript_path;
  if (!r.detail.empty()) j["detail"] = r.detail;
  j["model"] = r.group.model;
  j["category"] = r.group.category;
  j["subtask"] = r.group.subtask;
  j["modality"] = to_string(r.group.modality);
  j["eval_config"] = to_string(r.group.eval_config);
  j["task_kind"] = to_string(r.group.task_kind);
  return j;
}

inline ResultRow result_row_from_json(const nlohmann::json& j) {
  ResultRow r;
  r.item_id = j.at("item_id").get<std::string>();
  r.strategy = j.value("strategy", "");
  r.answer = j.value("answer", "");
  if (j.contains("confidence") && !j.at("confidence").is_null()) r.confidence = j.at("confidence").get<double>();
  r.correct = j.value("correct", false);
  r.attempted = j.value("attempted", false);
  auto st = parse_row_status(j.value("status", "ok"));
  if (!st) throw Error("unknown status in results row " + r.item_id);
  r.status = *st;
  r.transcript_path = j.value("transcript_path", "");
  r.detail = j.value("detail", "");
  r.group.strategy = r.strategy;
  r.group.model = j.value("model", "");
  r.group.category = j.value("category", "");
  r.group.subtask = j.value("subtask", "");
  r.group.modality = parse_modality(j.value("modality", "image")).value_or(Modality::image);
  r.group.eval_config = parse_eval_config(j.value("eval_config", "general")).value_or(EvalConfig::general);
  r.group.task_kind = parse_task_kind(j.value("task_kind", "mcq")).value_or(TaskKind::mcq);
  if (r.confidence && (*r.confidence < 0.0 || *r.confidence > 1.0)) {
    throw Error("results row " + r.item_id + " has confidence outside [0,1]");
  }
  return r;
}

inline std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open results file " + path.string());
  std::vector<ResultRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      rows.push_back(result_row_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return rows;
}

inline void write_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write results file " + path.string());
  for (const auto& r : rows) out << to_json(r).dump() << '\n';
}

inline std::vector<CalibrationRecord> records_of(const std::vector<ResultRow>& rows) {
  std::vector<CalibrationRecord> out;
  for (const auto& r : rows) {
    if (r.is_record()) out.push_back(r.to_record());
  }
  return out;
}

}  // namespace vcal
