#pragma once

// Runs a strategy over a list of items and collects one ResultRow per item.
// Failures become status rows; the run itself only aborts on setup errors.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "vcal/client.hpp"
#include "vcal/dataset.hpp"
#include "vcal/parsing.hpp"
#include "vcal/prompting.hpp"
#include "vcal/scoring.hpp"

namespace vcal {

struct RunConfig {
  Strategy strategy;
  std::size_t frames = 32;
  std::size_t workers = 4;
  /// Transcripts go to <transcript_dir>/<item id>.json when set.
  std::filesystem::path transcript_dir;
  AbstentionPolicy abstention;
};

struct RunOutcome {
  std::vector<ResultRow> rows;

  std::size_t count(RowStatus s) const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [&](const auto& r) { return r.status == s; }));
  }
  std::size_t errored() const {
    return count(RowStatus::parse_error) + count(RowStatus::request_error) + count(RowStatus::plan_error);
  }
  /// 0 when every item produced a row without error, 2 otherwise.
  int exit_code() const { return errored() == 0 ? 0 : 2; }
};

/// Final prediction of a finished transcript under the given strategy.
inline Prediction predict(const Strategy& strategy, const Transcript& t, const AbstentionPolicy& policy = {}) {
  if (t.rounds.empty()) throw ParseError("transcript has no rounds");
  switch (strategy.kind) {
    case StrategyKind::cot:
      return parse_single(t.rounds.back().response_text, policy);
    case StrategyKind::topk:
      return parse_topk(t.rounds.back().response_text, strategy.k.value_or(kShippedTopK), policy);
    case StrategyKind::self_reflection: {
      if (t.rounds.size() != 2) throw ParseError("self-reflection transcript needs 2 rounds");
      return with_reflection(parse_single(t.rounds[0].response_text, policy), t.rounds[1].response_text);
    }
    case StrategyKind::vcap:
      if (t.rounds.size() != 2) throw ParseError("VCAP transcript needs 2 rounds");
      return parse_single(t.rounds[1].response_text, policy);
  }
  throw ParseError("unknown strategy");
}

/// File-system-safe transcript name for an item id.
inline std::string transcript_file_name(const std::string& id) {
  std::string out;
  for (char c : id) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out + ".json";
}

inline ResultRow evaluate_item(ChatClient& client, const TemplateLibrary& lib, const EvalItem& item,
                               const RunConfig& cfg) {
  ResultRow row;
  row.item_id = item.id;
  row.strategy = cfg.strategy.label();
  row.group = group_of(item, {client.endpoint().model_name, row.strategy});

  DialoguePlan p;
  try {
    p = plan(lib, cfg.strategy, item);
    (void)render_step(p, 0, item);
  } catch (const std::exception& e) {
    row.status = RowStatus::plan_error;
    row.detail = e.what();
    return row;
  }

  auto save = [&](const Transcript& t) {
    if (cfg.transcript_dir.empty()) return;
    auto path = cfg.transcript_dir / transcript_file_name(item.id);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (out) {
      out << transcript_json(t).dump(2) << '\n';
      row.transcript_path = path.string();
    }
  };

  Transcript t;
  try {
    t = run_dialogue(client, p, item, cfg.frames);
  } catch (const DialogueError& e) {
    save(e.partial());
    row.status = RowStatus::request_error;
    row.detail = e.what();
    return row;
  }
  save(t);

  Prediction pred;
  try {
    pred = predict(cfg.strategy, t, cfg.abstention);
  } catch (const std::exception& e) {
    row.status = RowStatus::parse_error;
    row.detail = e.what();
    return row;
  }
  row.answer = pred.answer;
  auto verdict = judge(pred, item.gold);
  row.correct = verdict.correct;
  row.attempted = verdict.attempted;
  if (!pred.confidence) {
    row.status = RowStatus::missing_confidence;
    row.detail = "no <confidence> tag in the final response";
    return row;
  }
  row.confidence = pred.confidence;
  if (pred.confidence_clamped) row.detail = "confidence clamped to [0,1]";
  row.status = RowStatus::ok;
  return row;
}

/// Evaluates all items on cfg.workers threads. Rows keep the item order.
inline RunOutcome run_items(ChatClient& client, const TemplateLibrary& lib, const std::vector<EvalItem>& items,
                            const RunConfig& cfg) {
  if (!cfg.transcript_dir.empty()) std::filesystem::create_directories(cfg.transcript_dir);
  RunOutcome outcome;
  outcome.rows.resize(items.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < items.size();) {
      outcome.rows[i] = evaluate_item(client, lib, items[i], cfg);
    }
  };
  std::size_t n = std::clamp<std::size_t>(cfg.workers, 1, std::max<std::size_t>(1, items.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(work);
  }
  return outcome;
}

}  // namespace vcal
