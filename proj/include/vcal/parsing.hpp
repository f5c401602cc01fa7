#pragma once

// Extraction of tagged answers and verbalized confidence from model output.
// Only the tagged spans are inspected; the reasoning prose around them is
// ignored.

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vcal/types.hpp"

namespace vcal {

class ParseError : public Error {
 public:
  using Error::Error;
};

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Inner text of the last well-formed <tag>...</tag> block, trimmed.
inline std::optional<std::string> extract_tag(std::string_view text, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t search_end = text.size();
  while (search_end > 0) {
    auto c = text.rfind(close, search_end - 1);
    if (c == std::string_view::npos) return std::nullopt;
    if (c >= open.size()) {
      auto o = text.rfind(open, c - open.size());
      if (o != std::string_view::npos) {
        auto inner = text.substr(o + open.size(), c - o - open.size());
        return std::string(trim(inner));
      }
    }
    if (c == 0) break;
    search_end = c;
  }
  return std::nullopt;
}

struct ConfidenceReading {
  double value = 0.0;
  bool clamped = false;
};

/// "80%", "80 %" -> 0.8; a bare value in [0,1] is a fraction, above 1 a
/// percentage. Results outside [0,1] are clamped and flagged.
inline ConfidenceReading parse_confidence(std::string_view raw) {
  auto s = trim(raw);
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = trim(s.substr(1, s.size() - 2));
  if (s.empty()) throw ParseError("empty confidence");
  bool percent = false;
  if (s.back() == '%') {
    percent = true;
    s = trim(s.substr(0, s.size() - 1));
  }
  std::string buf(s);
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0' || !std::isfinite(v) || errno == ERANGE) {
    throw ParseError("confidence \"" + std::string(raw) + "\" is not numeric");
  }
  if (percent || v > 1.0) v /= 100.0;
  ConfidenceReading r{v, false};
  if (r.value < 0.0) r = {0.0, true};
  if (r.value > 1.0) r = {1.0, true};
  return r;
}

struct Guess {
  std::string answer;
  double confidence = 0.0;
};

struct Prediction {
  std::string answer;
  /// Absent when no confidence tag was emitted.
  std::optional<double> confidence;
  bool abstained = false;
  bool confidence_clamped = false;
  /// Top-K candidates in index order.
  std::optional<std::vector<Guess>> guesses;
};

/// Answers that count as declining to answer. Matching is case-insensitive
/// substring matching after whitespace trimming.
struct AbstentionPolicy {
  std::vector<std::string> phrases{"i don't know", "cannot determine", "unanswerable"};

  bool is_abstention(std::string_view answer) const {
    std::string a(trim(answer));
    if (a.empty()) return true;
    for (auto& ch : a) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    // Typographic apostrophe (U+2019) folds to ASCII.
    for (std::size_t pos; (pos = a.find("\xE2\x80\x99")) != std::string::npos;) a.replace(pos, 3, "'");
    for (const auto& p : phrases) {
      std::string lp = p;
      for (auto& ch : lp) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (!lp.empty() && a.find(lp) != std::string::npos) return true;
    }
    return false;
  }
};

/// Single <answer>/<confidence> grammar.
inline Prediction parse_single(std::string_view text, const AbstentionPolicy& policy = {}) {
  Prediction p;
  auto answer = extract_tag(text, "answer");
  p.answer = answer.value_or("");
  p.abstained = policy.is_abstention(p.answer);
  if (auto raw = extract_tag(text, "confidence")) {
    auto c = parse_confidence(*raw);
    p.confidence = c.value;
    p.confidence_clamped = c.clamped;
  }
  return p;
}

/// Numbered <answerI>/<confidenceI> grammar. Up to k guesses are collected;
/// the final answer is the most confident guess, lowest index on ties.
inline Prediction parse_topk(std::string_view text, int k, const AbstentionPolicy& policy = {}) {
  if (k < 1) throw ParseError("Top-K parsing needs k >= 1");
  std::vector<Guess> guesses;
  bool best_clamped = false;
  std::size_t best = 0;
  for (int i = 1; i <= k; ++i) {
    auto a = extract_tag(text, "answer" + std::to_string(i));
    auto c = extract_tag(text, "confidence" + std::to_string(i));
    if (!a || a->empty() || !c) continue;
    ConfidenceReading r;
    try {
      r = parse_confidence(*c);
    } catch (const ParseError&) {
      continue;
    }
    guesses.push_back({*a, r.value});
    if (guesses.size() == 1 || r.value > guesses[best].confidence) {
      best = guesses.size() - 1;
      best_clamped = r.clamped;
    }
  }
  if (guesses.empty()) throw ParseError("no well-formed Top-K guess");
  Prediction p;
  p.answer = guesses[best].answer;
  p.confidence = guesses[best].confidence;
  p.confidence_clamped = best_clamped;
  p.abstained = policy.is_abstention(p.answer);
  p.guesses = std::move(guesses);
  return p;
}

/// Confidence emitted by the shared reflection round.
inline double parse_reflection_confidence(std::string_view text) {
  auto raw = extract_tag(text, "confidence");
  if (!raw) throw ParseError("reflection output has no <confidence> tag");
  return parse_confidence(*raw).value;
}

/// Round-one answer with its confidence replaced by the reflection score.
inline Prediction with_reflection(Prediction first_round, std::string_view reflection_text) {
  auto raw = extract_tag(reflection_text, "confidence");
  if (!raw) throw ParseError("reflection output has no <confidence> tag");
  auto c = parse_confidence(*raw);
  first_round.confidence = c.value;
  first_round.confidence_clamped = c.clamped;
  return first_round;
}

}  // namespace vcal
