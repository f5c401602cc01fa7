#pragma once

// Shared vocabulary: label enums, their wire spellings, and the exception
// hierarchy every module throws from.

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace vcal {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { mcq, open_ended, factuality };
enum class EvalConfig { general, embedded_instruction, semantically_aligned };
enum class Modality { image, text, video };
enum class StrategyKind { cot, topk, self_reflection, vcap };

namespace detail {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

inline constexpr NameTable<TaskKind, 3> kTaskKindNames{{
    {TaskKind::mcq, "mcq"},
    {TaskKind::open_ended, "open_ended"},
    {TaskKind::factuality, "factuality"},
}};

inline constexpr NameTable<EvalConfig, 3> kEvalConfigNames{{
    {EvalConfig::general, "general"},
    {EvalConfig::embedded_instruction, "embedded_instruction"},
    {EvalConfig::semantically_aligned, "semantically_aligned"},
}};

inline constexpr NameTable<Modality, 3> kModalityNames{{
    {Modality::image, "image"},
    {Modality::text, "text"},
    {Modality::video, "video"},
}};

inline constexpr NameTable<StrategyKind, 4> kStrategyNames{{
    {StrategyKind::cot, "cot"},
    {StrategyKind::topk, "topk"},
    {StrategyKind::self_reflection, "self_reflection"},
    {StrategyKind::vcap, "vcap"},
}};

template <class E, std::size_t N>
constexpr std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "?";
}

template <class E, std::size_t N>
std::optional<E> value_of(const NameTable<E, N>& table, std::string_view name) {
  for (const auto& [e, n] : table) {
    if (n == name) return e;
  }
  return std::nullopt;
}

}  // namespace detail

constexpr std::string_view to_string(TaskKind v) { return detail::name_of(detail::kTaskKindNames, v); }
constexpr std::string_view to_string(EvalConfig v) { return detail::name_of(detail::kEvalConfigNames, v); }
constexpr std::string_view to_string(Modality v) { return detail::name_of(detail::kModalityNames, v); }
constexpr std::string_view to_string(StrategyKind v) { return detail::name_of(detail::kStrategyNames, v); }

inline std::optional<TaskKind> parse_task_kind(std::string_view s) {
  return detail::value_of(detail::kTaskKindNames, s);
}

/// Accepts both the canonical names and the short CLI spellings
/// ("embedded", "aligned").
inline std::optional<EvalConfig> parse_eval_config(std::string_view s) {
  if (s == "embedded") return EvalConfig::embedded_instruction;
  if (s == "aligned") return EvalConfig::semantically_aligned;
  return detail::value_of(detail::kEvalConfigNames, s);
}

inline std::optional<Modality> parse_modality(std::string_view s) {
  return detail::value_of(detail::kModalityNames, s);
}

/// "reflect" is the CLI spelling of self_reflection.
inline std::optional<StrategyKind> parse_strategy_kind(std::string_view s) {
  if (s == "reflect") return StrategyKind::self_reflection;
  return detail::value_of(detail::kStrategyNames, s);
}

}  // namespace vcal
