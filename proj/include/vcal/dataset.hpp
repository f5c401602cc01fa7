#pragma once

// Benchmark item ingestion. Items live in a line-delimited JSON file, one
// object per line:
//
//   {"id": "...", "task_kind": "mcq", "eval_config": "general",
//    "question": "...", "options": ["...", ...],
//    "attachments": [{"kind": "image_file", "path": "img/1.png",
//                     "media_type": "image/png"}],
//    "modality": "image",
//    "gold": {"canonical": "A", "aliases": [], "match_mode": "letter"},
//    "category": "...", "subtask": "...",
//    "pair_id": "...", "domain_suffix": " defined on [a, b]"}
//
// Relative attachment paths resolve against the item file's directory. A
// frame_dir attachment names a directory of zero-padded frame images with a
// "frames.count" sidecar holding the total frame count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vcal/types.hpp"

namespace vcal {

enum class AttachmentKind { image_file, frame_dir, inline_text };
enum class MatchMode { letter, exact_normalized, numeric };

inline std::string_view to_string(AttachmentKind k) {
  switch (k) {
    case AttachmentKind::image_file: return "image_file";
    case AttachmentKind::frame_dir: return "frame_dir";
    case AttachmentKind::inline_text: return "inline_text";
  }
  return "?";
}

inline std::string_view to_string(MatchMode m) {
  switch (m) {
    case MatchMode::letter: return "letter";
    case MatchMode::exact_normalized: return "exact_normalized";
    case MatchMode::numeric: return "numeric";
  }
  return "?";
}

inline std::optional<AttachmentKind> parse_attachment_kind(std::string_view s) {
  if (s == "image_file") return AttachmentKind::image_file;
  if (s == "frame_dir") return AttachmentKind::frame_dir;
  if (s == "inline_text") return AttachmentKind::inline_text;
  return std::nullopt;
}

inline std::optional<MatchMode> parse_match_mode(std::string_view s) {
  if (s == "letter") return MatchMode::letter;
  if (s == "exact_normalized") return MatchMode::exact_normalized;
  if (s == "numeric") return MatchMode::numeric;
  return std::nullopt;
}

struct Attachment {
  AttachmentKind kind = AttachmentKind::image_file;
  std::string path_or_text;
  std::string media_type;
  /// Total frames read from the sidecar; set only for frame_dir.
  std::optional<std::size_t> frame_count;

  bool operator==(const Attachment&) const = default;
};

struct GoldAnswer {
  std::string canonical;
  std::vector<std::string> aliases;
  MatchMode match_mode = MatchMode::exact_normalized;

  bool operator==(const GoldAnswer&) const = default;
};

struct EvalItem {
  std::string id;
  TaskKind task_kind = TaskKind::mcq;
  EvalConfig eval_config = EvalConfig::general;
  std::optional<std::string> question_text;
  std::vector<std::string> options;
  std::vector<Attachment> attachments;
  Modality modality = Modality::image;
  GoldAnswer gold;
  std::string category;
  std::string subtask;
  std::optional<std::string> pair_id;
  /// Expands the {domain} placeholder of the math templates: either empty or
  /// text such as " defined on [-2, 2]".
  std::optional<std::string> domain_suffix;

  bool operator==(const EvalItem&) const = default;

  /// Option labels are the first |options| uppercase letters.
  static char option_label(std::size_t index) { return static_cast<char>('A' + index); }

  const Attachment* first_of(AttachmentKind kind) const {
    for (const auto& a : attachments) {
      if (a.kind == kind) return &a;
    }
    return nullptr;
  }
};

struct PairedItem {
  std::string pair_id;
  EvalItem image_variant;
  EvalItem text_variant;
};

class LoadError : public Error {
 public:
  LoadError(std::size_t line, std::string item_id, const std::string& what)
      : Error(format(line, item_id, what)), line_(line), item_id_(std::move(item_id)) {}

  std::size_t line() const { return line_; }
  const std::string& item_id() const { return item_id_; }

 private:
  static std::string format(std::size_t line, const std::string& id, const std::string& what) {
    std::string s = "line " + std::to_string(line);
    if (!id.empty()) s += " (item " + id + ")";
    return s + ": " + what;
  }

  std::size_t line_;
  std::string item_id_;
};

class PairingError : public Error {
 public:
  using Error::Error;
};

/// Result of reading an item file. Every non-blank line produces exactly one
/// entry in either `items` or `errors`.
struct LoadReport {
  std::vector<EvalItem> items;
  std::vector<LoadError> errors;
  std::size_t records() const { return items.size() + errors.size(); }
};

struct PairingResult {
  std::vector<PairedItem> pairs;
  /// Ids of aligned items without a partner; they stay evaluable singly.
  std::vector<std::string> orphans;
};

namespace detail {

inline constexpr std::string_view kFrameCountSidecar = "frames.count";

inline std::size_t read_frame_count(const std::filesystem::path& dir) {
  std::ifstream in(dir / std::string(kFrameCountSidecar));
  if (!in) throw Error("frame directory " + dir.string() + " has no frames.count sidecar");
  long long n = 0;
  if (!(in >> n) || n < 1) throw Error("frames.count in " + dir.string() + " must hold an integer >= 1");
  return static_cast<std::size_t>(n);
}

inline bool parses_as_finite_number(const std::string& s) {
  if (s.empty()) return false;
  std::size_t used = 0;
  try {
    double v = std::stod(s, &used);
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    return used == s.size() && std::isfinite(v);
  } catch (const std::exception&) {
    return false;
  }
}

template <class T>
T required_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) throw Error(std::string("missing field \"") + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("field \"") + key + "\" has the wrong type");
  }
}

template <class T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(std::string("field \"") + key + "\" has the wrong type");
  }
}

}  // namespace detail

/// Checks the per-item invariants; throws Error with a description on the
/// first violation. Attachment existence is checked by the loader.
inline void validate_item(const EvalItem& item) {
  if (item.id.empty()) throw Error("empty id");
  if (item.gold.canonical.empty()) throw Error("gold.canonical is empty");
  if (item.gold.match_mode == MatchMode::numeric && !detail::parses_as_finite_number(item.gold.canonical)) {
    throw Error("numeric gold \"" + item.gold.canonical + "\" is not a finite number");
  }
  if (item.eval_config == EvalConfig::embedded_instruction) {
    if (item.question_text) throw Error("embedded_instruction items carry no question text");
    if (!item.first_of(AttachmentKind::image_file)) throw Error("embedded_instruction items need an image attachment");
  }
  if (item.task_kind == TaskKind::mcq && item.eval_config != EvalConfig::embedded_instruction) {
    if (item.options.size() < 2 || item.options.size() > 10) {
      throw Error("mcq items need 2-10 options, got " + std::to_string(item.options.size()));
    }
  }
  if (item.modality == Modality::video) {
    const auto* frames = item.first_of(AttachmentKind::frame_dir);
    if (!frames) throw Error("video items need a frame_dir attachment");
    if (!frames->frame_count || *frames->frame_count < 1) throw Error("video frame count must be >= 1");
  }
  for (const auto& a : item.attachments) {
    if (a.kind == AttachmentKind::inline_text && a.path_or_text.empty()) throw Error("inline_text attachment is empty");
  }
}

/// Parses one record. `base_dir` resolves relative attachment paths;
/// `config` is the evaluation configuration the caller expects.
inline EvalItem parse_item(const nlohmann::json& j, EvalConfig config, const std::filesystem::path& base_dir) {
  namespace fs = std::filesystem;
  if (!j.is_object()) throw Error("record is not a JSON object");
  EvalItem item;
  item.id = detail::required_field<std::string>(j, "id");

  auto kind = parse_task_kind(detail::required_field<std::string>(j, "task_kind"));
  if (!kind) throw Error("unknown task_kind");
  item.task_kind = *kind;

  item.eval_config = config;
  if (auto cfg = detail::optional_field<std::string>(j, "eval_config")) {
    auto parsed = parse_eval_config(*cfg);
    if (!parsed) throw Error("unknown eval_config \"" + *cfg + "\"");
    if (*parsed != config) {
      throw Error("eval_config \"" + *cfg + "\" does not match requested \"" + std::string(to_string(config)) + "\"");
    }
  }

  item.question_text = detail::optional_field<std::string>(j, "question");
  item.options = detail::optional_field<std::vector<std::string>>(j, "options").value_or(std::vector<std::string>{});

  auto modality = parse_modality(detail::required_field<std::string>(j, "modality"));
  if (!modality) throw Error("unknown modality");
  item.modality = *modality;

  if (!j.contains("gold") || !j.at("gold").is_object()) throw Error("missing field \"gold\"");
  const auto& g = j.at("gold");
  item.gold.canonical = detail::required_field<std::string>(g, "canonical");
  item.gold.aliases = detail::optional_field<std::vector<std::string>>(g, "aliases").value_or(std::vector<std::string>{});
  auto mode = parse_match_mode(detail::required_field<std::string>(g, "match_mode"));
  if (!mode) throw Error("unknown gold.match_mode");
  item.gold.match_mode = *mode;

  item.category = detail::required_field<std::string>(j, "category");
  item.subtask = detail::required_field<std::string>(j, "subtask");
  item.pair_id = detail::optional_field<std::string>(j, "pair_id");
  item.domain_suffix = detail::optional_field<std::string>(j, "domain_suffix");

  if (j.contains("attachments")) {
    if (!j.at("attachments").is_array()) throw Error("field \"attachments\" has the wrong type");
    for (const auto& aj : j.at("attachments")) {
      Attachment a;
      auto ak = parse_attachment_kind(detail::required_field<std::string>(aj, "kind"));
      if (!ak) throw Error("unknown attachment kind");
      a.kind = *ak;
      auto payload = detail::optional_field<std::string>(aj, "path");
      if (!payload) payload = detail::optional_field<std::string>(aj, "text");
      if (!payload) throw Error("attachment has neither \"path\" nor \"text\"");
      a.path_or_text = *payload;
      a.media_type = detail::optional_field<std::string>(aj, "media_type").value_or("");
      if (a.kind != AttachmentKind::inline_text) {
        fs::path p(a.path_or_text);
        if (p.is_relative()) p = base_dir / p;
        p = p.lexically_normal();
        a.path_or_text = p.string();
        if (a.kind == AttachmentKind::image_file && !fs::is_regular_file(p)) {
          throw Error("missing attachment file " + p.string());
        }
        if (a.kind == AttachmentKind::frame_dir) {
          if (!fs::is_directory(p)) throw Error("missing frame directory " + p.string());
          a.frame_count = detail::read_frame_count(p);
        }
      }
      item.attachments.push_back(std::move(a));
    }
  }
  validate_item(item);
  return item;
}

/// Reads every record of `path`, keeping failures alongside successes.
inline LoadReport read_items(const std::filesystem::path& path, EvalConfig config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open item file " + path.string());
  LoadReport report;
  const auto base = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      report.errors.emplace_back(line_no, "", std::string("malformed JSON: ") + e.what());
      continue;
    }
    std::string id = j.is_object() && j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
    try {
      report.items.push_back(parse_item(j, config, base));
    } catch (const Error& e) {
      report.errors.emplace_back(line_no, id, e.what());
    }
  }
  return report;
}

/// Strict loader: returns items in file order or throws the first LoadError.
inline std::vector<EvalItem> load_items(const std::filesystem::path& path, EvalConfig config) {
  auto report = read_items(path, config);
  if (!report.errors.empty()) throw report.errors.front();
  return std::move(report.items);
}

inline nlohmann::json item_to_json(const EvalItem& item) {
  nlohmann::json j;
  j["id"] = item.id;
  j["task_kind"] = to_string(item.task_kind);
  j["eval_config"] = to_string(item.eval_config);
  if (item.question_text) j["question"] = *item.question_text;
  j["options"] = item.options;
  j["attachments"] = nlohmann::json::array();
  for (const auto& a : item.attachments) {
    j["attachments"].push_back({{"kind", to_string(a.kind)}, {"path", a.path_or_text}, {"media_type", a.media_type}});
  }
  j["modality"] = to_string(item.modality);
  j["gold"] = {{"canonical", item.gold.canonical},
               {"aliases", item.gold.aliases},
               {"match_mode", to_string(item.gold.match_mode)}};
  j["category"] = item.category;
  j["subtask"] = item.subtask;
  if (item.pair_id) j["pair_id"] = *item.pair_id;
  if (item.domain_suffix) j["domain_suffix"] = *item.domain_suffix;
  return j;
}

inline std::string serialize_item(const EvalItem& item) { return item_to_json(item).dump(); }

/// Groups semantically-aligned items by pair_id into image/text pairs.
/// Throws PairingError on duplicate membership or same-modality pairs.
inline PairingResult pair_modalities(const std::vector<EvalItem>& items) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EvalItem*>> groups;
  std::map<std::string, int> seen_ids;
  PairingResult result;
  for (const auto& item : items) {
    if (item.eval_config != EvalConfig::semantically_aligned) continue;
    if (seen_ids[item.id]++ > 0) throw PairingError("item " + item.id + " appears more than once");
    if (!item.pair_id) {
      result.orphans.push_back(item.id);
      continue;
    }
    auto [it, inserted] = groups.try_emplace(*item.pair_id);
    if (inserted) order.push_back(*item.pair_id);
    it->second.push_back(&item);
  }
  for (const auto& pid : order) {
    const auto& members = groups.at(pid);
    if (members.size() == 1) {
      result.orphans.push_back(members.front()->id);
      continue;
    }
    if (members.size() > 2) {
      throw PairingError("pair " + pid + " has " + std::to_string(members.size()) + " members");
    }
    const EvalItem* a = members[0];
    const EvalItem* b = members[1];
    if (a->modality == b->modality) {
      throw PairingError("pair " + pid + " has two " + std::string(to_string(a->modality)) + " items");
    }
    if (a->modality == Modality::text) std::swap(a, b);
    if (a->modality != Modality::image || b->modality != Modality::text) {
      throw PairingError("pair " + pid + " must combine an image and a text item");
    }
    if (!(a->gold == b->gold) || a->category != b->category || a->subtask != b->subtask) {
      throw PairingError("pair " + pid + " variants disagree on gold, category or subtask");
    }
    result.pairs.push_back({pid, *a, *b});
  }
  return result;
}

/// Uniform frame selection: index i maps to floor(i * total / k). Short
/// videos (total < k) repeat frames rather than fail.
inline std::vector<std::size_t> sample_frame_indices(std::size_t total_frames, std::size_t k) {
  if (total_frames < 1 || k < 1) throw Error("sample_frame_indices needs total_frames >= 1 and k >= 1");
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    out[i] = static_cast<std::size_t>((static_cast<unsigned __int128>(i) * total_frames) / k);
  }
  return out;
}

/// Frame image files of a frame_dir attachment in name order (the sidecar is
/// skipped).
inline std::vector<std::filesystem::path> frame_files(const Attachment& frames) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(frames.path_or_text)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().filename() == std::string(detail::kFrameCountSidecar)) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Paths of the k uniformly sampled frames of a video item.
inline std::vector<std::filesystem::path> sampled_frames(const Attachment& frames, std::size_t k) {
  if (frames.kind != AttachmentKind::frame_dir || !frames.frame_count) throw Error("not a frame_dir attachment");
  auto files = frame_files(frames);
  if (files.size() < *frames.frame_count) {
    throw Error("frame directory " + frames.path_or_text + " holds " + std::to_string(files.size()) +
                " frames but frames.count says " + std::to_string(*frames.frame_count));
  }
  std::vector<std::filesystem::path> out;
  for (auto idx : sample_frame_indices(*frames.frame_count, k)) out.push_back(files[idx]);
  return out;
}

}  // namespace vcal
