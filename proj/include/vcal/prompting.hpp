#pragma once

// Prompt templates and strategy-specific dialogue plans.
//
// Templates are plain-text assets under a directory laid out as
//   <step>/<category>__<subtask>__<modality>.txt
// where <step> is one of cot, topk, self_reflection_1st, self_reflection_2nd,
// vcap_1st, vcap_2nd. A manifest.json beside them maps each relative path to
// {"name": ..., "placeholders": [...]}; the listed placeholders must match
// the {name} tokens found in the body exactly.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vcal/dataset.hpp"
#include "vcal/types.hpp"

namespace vcal {

class TemplateError : public Error {
 public:
  using Error::Error;
};

using Bindings = std::map<std::string, std::string>;

namespace detail {

inline bool is_placeholder_start(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }
inline bool is_placeholder_char(char c) { return is_placeholder_start(c) || (c >= '0' && c <= '9'); }

// Calls fn(name, begin, end) for every {name} token, left to right.
template <class Fn>
void scan_placeholders(std::string_view body, Fn&& fn) {
  std::size_t i = 0;
  while (i < body.size()) {
    if (body[i] == '{' && i + 1 < body.size() && is_placeholder_start(body[i + 1])) {
      std::size_t j = i + 1;
      while (j < body.size() && is_placeholder_char(body[j])) ++j;
      if (j < body.size() && body[j] == '}') {
        fn(body.substr(i + 1, j - i - 1), i, j + 1);
        i = j + 1;
        continue;
      }
    }
    ++i;
  }
}

}  // namespace detail

inline std::set<std::string> placeholders_in(std::string_view body) {
  std::set<std::string> out;
  detail::scan_placeholders(body, [&](std::string_view name, std::size_t, std::size_t) { out.emplace(name); });
  return out;
}

struct PromptTemplate {
  std::string name;
  std::string body;
  std::set<std::string> required_placeholders;

  /// Builds a template whose placeholder set is read off the body.
  static PromptTemplate from_body(std::string name, std::string body) {
    auto required = placeholders_in(body);
    return {std::move(name), std::move(body), std::move(required)};
  }

  bool consistent() const { return placeholders_in(body) == required_placeholders; }
};

/// Substitutes every placeholder in one left-to-right pass; bound values are
/// inserted verbatim and never re-scanned.
inline std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
  for (const auto& name : placeholders_in(tmpl.body)) {
    if (!tmpl.required_placeholders.count(name)) {
      throw TemplateError("template " + tmpl.name + ": unknown placeholder {" + name + "}");
    }
  }
  for (const auto& name : tmpl.required_placeholders) {
    if (!bindings.count(name)) throw TemplateError("template " + tmpl.name + ": missing binding \"" + name + "\"");
  }
  for (const auto& [name, value] : bindings) {
    if (!tmpl.required_placeholders.count(name)) {
      throw TemplateError("template " + tmpl.name + ": unused binding \"" + name + "\"");
    }
  }
  std::string out;
  out.reserve(tmpl.body.size());
  std::size_t copied = 0;
  detail::scan_placeholders(tmpl.body, [&](std::string_view name, std::size_t begin, std::size_t end) {
    out.append(tmpl.body, copied, begin - copied);
    out += bindings.at(std::string(name));
    copied = end;
  });
  out.append(tmpl.body, copied, std::string::npos);
  return out;
}

/// "A. first\nB. second\n..." with no trailing newline.
inline std::string render_options(const std::vector<std::string>& options) {
  if (options.size() > 26) throw TemplateError("at most 26 options can be labelled");
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += '\n';
    out += EvalItem::option_label(i);
    out += ". ";
    out += options[i];
  }
  return out;
}

struct Strategy {
  StrategyKind kind = StrategyKind::cot;
  /// Number of guesses; present iff kind == topk.
  std::optional<int> k;

  static Strategy cot() { return {StrategyKind::cot, std::nullopt}; }
  static Strategy topk(int k = 3) { return make(StrategyKind::topk, k); }
  static Strategy self_reflection() { return {StrategyKind::self_reflection, std::nullopt}; }
  static Strategy vcap() { return {StrategyKind::vcap, std::nullopt}; }

  static Strategy make(StrategyKind kind, std::optional<int> k = std::nullopt) {
    if (kind == StrategyKind::topk) {
      int value = k.value_or(3);
      if (value < 1) throw Error("Top-K needs k >= 1");
      return {kind, value};
    }
    return {kind, std::nullopt};
  }

  std::string label() const { return std::string(to_string(kind)); }
  bool operator==(const Strategy&) const = default;
};

struct PlanStep {
  std::shared_ptr<const PromptTemplate> prompt;
  bool carries_attachments = true;
  std::set<std::string> bindings_from_prior;
};

struct DialoguePlan {
  Strategy strategy;
  std::vector<PlanStep> steps;
};

/// The guess count the shipped Top-K templates ask for.
inline constexpr int kShippedTopK = 3;

class TemplateLibrary {
 public:
  TemplateLibrary() = default;

  /// Loads every template listed in <dir>/manifest.json and checks that the
  /// manifest's placeholder list matches each body.
  static TemplateLibrary load(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw TemplateError("no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(mf);
    } catch (const nlohmann::json::parse_error& e) {
      throw TemplateError(std::string("manifest.json: ") + e.what());
    }
    TemplateLibrary lib;
    for (const auto& [rel, entry] : manifest.items()) {
      std::ifstream in(dir / rel, std::ios::binary);
      if (!in) throw TemplateError("template file " + rel + " listed in manifest is missing");
      std::ostringstream ss;
      ss << in.rdbuf();
      PromptTemplate t{entry.value("name", rel), ss.str(), {}};
      for (const auto& p : entry.at("placeholders")) t.required_placeholders.insert(p.get<std::string>());
      if (!t.consistent()) throw TemplateError("template " + rel + ": manifest placeholders disagree with body");
      lib.add(rel, std::move(t));
    }
    return lib;
  }

  void add(const std::string& relative_path, PromptTemplate t) {
    templates_[relative_path] = std::make_shared<const PromptTemplate>(std::move(t));
  }

  std::shared_ptr<const PromptTemplate> get(const std::string& relative_path) const {
    auto it = templates_.find(relative_path);
    return it == templates_.end() ? nullptr : it->second;
  }

  /// Resolution order for a step directory: the exact (category, subtask,
  /// modality) key, then a category-level key by task kind, then the generic
  /// fallback. Embedded-instruction items use "embedded" as their task key.
  std::shared_ptr<const PromptTemplate> resolve(std::string_view step, const EvalItem& item) const {
    for (const auto& key : candidate_keys(item)) {
      if (auto t = get(std::string(step) + "/" + key + ".txt")) return t;
    }
    return nullptr;
  }

  static std::vector<std::string> candidate_keys(const EvalItem& item) {
    const std::string mod(to_string(item.modality));
    const std::string kind =
        item.eval_config == EvalConfig::embedded_instruction ? "embedded" : std::string(to_string(item.task_kind));
    return {item.category + "__" + item.subtask + "__" + mod, item.category + "__" + kind + "__" + mod,
            "generic__" + kind + "__" + mod};
  }

  const std::map<std::string, std::shared_ptr<const PromptTemplate>>& all() const { return templates_; }
  std::size_t size() const { return templates_.size(); }

 private:
  std::map<std::string, std::shared_ptr<const PromptTemplate>> templates_;
};

inline constexpr std::string_view kSharedReflectionTemplate = "self_reflection_2nd/shared.txt";

/// Builds the dialogue plan for one item.
inline DialoguePlan plan(const TemplateLibrary& lib, const Strategy& strategy, const EvalItem& item) {
  auto require = [&](std::string_view step) {
    auto t = lib.resolve(step, item);
    if (!t) {
      throw TemplateError("no " + std::string(step) + " template for category=" + item.category +
                          " subtask=" + item.subtask + " modality=" + std::string(to_string(item.modality)));
    }
    return t;
  };
  DialoguePlan p{strategy, {}};
  switch (strategy.kind) {
    case StrategyKind::cot:
      p.steps.push_back({require("cot"), true, {}});
      break;
    case StrategyKind::topk:
      if (strategy.k.value_or(kShippedTopK) != kShippedTopK) {
        throw TemplateError("Top-K templates request exactly " + std::to_string(kShippedTopK) + " guesses; k=" +
                            std::to_string(*strategy.k) + " is not available");
      }
      p.steps.push_back({require("topk"), true, {}});
      break;
    case StrategyKind::self_reflection: {
      auto shared = lib.get(std::string(kSharedReflectionTemplate));
      if (!shared) throw TemplateError("shared self-reflection template is missing");
      p.steps.push_back({require("self_reflection_1st"), true, {}});
      p.steps.push_back({shared, false, {"problem", "solution"}});
      break;
    }
    case StrategyKind::vcap:
      if (item.modality == Modality::text) {
        throw TemplateError("VCAP describes a visual input; item " + item.id + " is text-only");
      }
      p.steps.push_back({require("vcap_1st"), true, {}});
      p.steps.push_back({require("vcap_2nd"), true, {"description"}});
      break;
  }
  return p;
}

/// Values the item itself supplies for a step's placeholders.
inline Bindings item_bindings(const PlanStep& step, const EvalItem& item) {
  Bindings out;
  for (const auto& name : step.prompt->required_placeholders) {
    if (step.bindings_from_prior.count(name)) continue;
    if (name == "question" || name == "problem") {
      if (!item.question_text) throw TemplateError("item " + item.id + " has no question text for {" + name + "}");
      out[name] = *item.question_text;
    } else if (name == "options") {
      if (item.options.empty()) throw TemplateError("item " + item.id + " has no options");
      out[name] = render_options(item.options);
    } else if (name == "text") {
      const auto* t = item.first_of(AttachmentKind::inline_text);
      if (!t) throw TemplateError("item " + item.id + " has no inline_text attachment for {text}");
      out[name] = t->path_or_text;
    } else if (name == "domain") {
      out[name] = item.domain_suffix.value_or("");
    } else {
      throw TemplateError("item " + item.id + " cannot supply {" + name + "}");
    }
  }
  return out;
}

/// Round-two bindings derived from round one. VCAP injects the whole first
/// response (reasoning and tags) as the description; self-reflection binds
/// the rendered round-one prompt and the response.
inline Bindings bind_second_round(const DialoguePlan& p, std::string_view first_prompt, std::string_view first_output) {
  if (p.steps.size() != 2) throw TemplateError("second-round bindings need a two-step plan");
  if (first_output.empty()) throw TemplateError("first-round output is empty");
  switch (p.strategy.kind) {
    case StrategyKind::vcap:
      return {{"description", std::string(first_output)}};
    case StrategyKind::self_reflection:
      return {{"problem", std::string(first_prompt)}, {"solution", std::string(first_output)}};
    default:
      throw TemplateError("strategy " + p.strategy.label() + " has no second round");
  }
}

/// Renders step `index` of a plan; `prior` holds bindings from earlier rounds.
inline std::string render_step(const DialoguePlan& p, std::size_t index, const EvalItem& item,
                               const Bindings& prior = {}) {
  const auto& step = p.steps.at(index);
  auto b = item_bindings(step, item);
  for (const auto& name : step.bindings_from_prior) {
    auto it = prior.find(name);
    if (it == prior.end()) throw TemplateError("missing prior binding \"" + name + "\"");
    b[name] = it->second;
  }
  return render(*step.prompt, b);
}

}  // namespace vcal
