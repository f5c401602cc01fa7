#pragma once

// Calibration and failure-prediction metrics over CalibrationRecords.
//
// Binning: bin m (1-based) of M covers ((m-1)/M, m/M]; a confidence of
// exactly 0 falls in bin 1. Bounds are evaluated as (m-1)/double(M) and
// m/double(M) so membership is exact for the stored doubles.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vcal/scoring.hpp"
#include "vcal/types.hpp"

namespace vcal {

class MetricError : public Error {
 public:
  using Error::Error;
};

struct EceConfig {
  int bins = 10;
  /// true: drop unattempted rows everywhere; false: keep all rows;
  /// unset: drop unattempted rows of factuality items only.
  std::optional<bool> attempted_only;
};

struct BinStat {
  int index = 1;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> avg_conf;
  std::optional<double> acc;
};

namespace detail {

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace detail

inline bool counts_for_metrics(const CalibrationRecord& r, const EceConfig& cfg) {
  if (r.attempted) return true;
  if (cfg.attempted_only) return !*cfg.attempted_only;
  return r.group.task_kind != TaskKind::factuality;
}

inline std::vector<CalibrationRecord> filter_records(std::span<const CalibrationRecord> records, const EceConfig& cfg) {
  std::vector<CalibrationRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (counts_for_metrics(r, cfg)) out.push_back(r);
  }
  return out;
}

inline double bin_lower(int m, int bins) { return static_cast<double>(m - 1) / static_cast<double>(bins); }
inline double bin_upper(int m, int bins) { return static_cast<double>(m) / static_cast<double>(bins); }

/// 1-based bin of a confidence in [0,1].
inline int bin_of(double confidence, int bins) {
  if (bins < 1) throw MetricError("bin count must be >= 1");
  if (!(confidence > 0.0)) return 1;
  int m = static_cast<int>(std::ceil(confidence * bins));
  m = std::clamp(m, 1, bins);
  while (m > 1 && confidence <= bin_lower(m, bins)) --m;
  while (m < bins && confidence > bin_upper(m, bins)) ++m;
  return m;
}

/// Per-bin statistics over the filtered records; empty bins are included.
inline std::vector<BinStat> reliability_curve(std::span<const CalibrationRecord> records, const EceConfig& cfg = {}) {
  if (cfg.bins < 1) throw MetricError("bin count must be >= 1");
  std::vector<BinStat> curve(static_cast<std::size_t>(cfg.bins));
  std::vector<detail::CompensatedSum> conf_sum(curve.size());
  std::vector<std::size_t> correct(curve.size(), 0);
  for (int m = 1; m <= cfg.bins; ++m) {
    auto& b = curve[static_cast<std::size_t>(m - 1)];
    b.index = m;
    b.lower = bin_lower(m, cfg.bins);
    b.upper = bin_upper(m, cfg.bins);
  }
  std::size_t n = 0;
  for (const auto& r : records) {
    if (!counts_for_metrics(r, cfg)) continue;
    if (!(r.confidence >= 0.0 && r.confidence <= 1.0)) {
      throw MetricError("record " + r.item_id + " has confidence outside [0,1]");
    }
    auto i = static_cast<std::size_t>(bin_of(r.confidence, cfg.bins) - 1);
    ++curve[i].count;
    conf_sum[i].add(r.confidence);
    if (r.correct) ++correct[i];
    ++n;
  }
  if (n == 0) throw MetricError("no records left after filtering");
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].count == 0) continue;
    auto c = static_cast<double>(curve[i].count);
    curve[i].avg_conf = conf_sum[i].value() / c;
    curve[i].acc = static_cast<double>(correct[i]) / c;
  }
  return curve;
}

/// Weighted mean of |acc - avg_conf| over the bins of a curve.
inline double ece_from_curve(std::span<const BinStat> curve) {
  std::size_t n = 0;
  for (const auto& b : curve) n += b.count;
  if (n == 0) throw MetricError("empty reliability curve");
  double total = 0.0;
  for (const auto& b : curve) {
    if (b.count == 0) continue;
    total += (static_cast<double>(b.count) / static_cast<double>(n)) * std::fabs(*b.acc - *b.avg_conf);
  }
  return total;
}

/// Expected calibration error with M = cfg.bins equal-width bins.
inline double ece(std::span<const CalibrationRecord> records, const EceConfig& cfg = {}) {
  auto curve = reliability_curve(records, cfg);
  return ece_from_curve(curve);
}

inline double accuracy(std::span<const CalibrationRecord> records, const EceConfig& cfg = {}) {
  std::size_t n = 0, correct = 0;
  for (const auto& r : records) {
    if (!counts_for_metrics(r, cfg)) continue;
    ++n;
    if (r.correct) ++correct;
  }
  if (n == 0) throw MetricError("no records left after filtering");
  return static_cast<double>(correct) / static_cast<double>(n);
}

/// Probability that a random correct record carries a higher confidence than
/// a random incorrect one, ties counted one half. Computed from midranks.
inline double auroc(std::span<const CalibrationRecord> records, const EceConfig& cfg = {}) {
  std::vector<std::pair<double, bool>> scored;
  for (const auto& r : records) {
    if (counts_for_metrics(r, cfg)) scored.emplace_back(r.confidence, r.correct);
  }
  std::size_t n_pos = 0;
  for (const auto& s : scored) n_pos += s.second ? 1 : 0;
  const std::size_t n_neg = scored.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("AUROC needs both correct and incorrect records");
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < scored.size()) {
    std::size_t j = i;
    std::size_t pos_in_tie = 0;
    while (j < scored.size() && scored[j].first == scored[i].first) {
      if (scored[j].second) ++pos_in_tie;
      ++j;
    }
    // ranks i+1 .. j share the midrank
    double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    rank_sum_pos += midrank * static_cast<double>(pos_in_tie);
    i = j;
  }
  const double p = static_cast<double>(n_pos);
  const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(n_neg));
}

inline std::optional<double> try_auroc(std::span<const CalibrationRecord> records, const EceConfig& cfg = {}) {
  try {
    return auroc(records, cfg);
  } catch (const MetricError&) {
    return std::nullopt;
  }
}

/// Value of a named group label; throws MetricError for unknown names.
inline std::string label_value(const GroupLabels& g, const std::string& label) {
  if (label == "category") return g.category;
  if (label == "subtask") return g.subtask;
  if (label == "modality") return std::string(to_string(g.modality));
  if (label == "strategy") return g.strategy;
  if (label == "eval_config") return std::string(to_string(g.eval_config));
  if (label == "task_kind") return std::string(to_string(g.task_kind));
  if (label == "model") return g.model;
  throw MetricError("unknown group label \"" + label + "\"");
}

inline void check_labels(const std::vector<std::string>& labels) {
  GroupLabels probe;
  for (const auto& l : labels) (void)label_value(probe, l);
}

/// Joined key of the given labels, e.g. "mathematics|parity". An empty label
/// list yields the single group "all".
inline std::string group_key(const GroupLabels& g, const std::vector<std::string>& labels) {
  if (labels.empty()) return "all";
  std::string key;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) key += '|';
    key += label_value(g, labels[i]);
  }
  return key;
}

/// Records partitioned by group key, keys in sorted order.
inline std::map<std::string, std::vector<CalibrationRecord>> partition(std::span<const CalibrationRecord> records,
                                                                       const std::vector<std::string>& labels) {
  check_labels(labels);
  std::map<std::string, std::vector<CalibrationRecord>> out;
  for (const auto& r : records) out[group_key(r.group, labels)].push_back(r);
  return out;
}

struct MetricPair {
  std::optional<double> image;
  std::optional<double> text;
  std::optional<double> gap;

  static MetricPair of(std::optional<double> image, std::optional<double> text) {
    MetricPair p{image, text, std::nullopt};
    if (image && text) p.gap = *image - *text;
    return p;
  }
};

struct GapRow {
  std::string group;
  MetricPair acc;
  MetricPair ece;
  MetricPair auroc;
};

struct GapReport {
  std::vector<GapRow> rows;
};

/// Image-minus-text differences of accuracy, ECE and AUROC per group. AUROC
/// is absent on a side whose records are single-class.
inline GapReport modality_gap(std::span<const CalibrationRecord> image_records,
                              std::span<const CalibrationRecord> text_records,
                              const std::vector<std::string>& group_by = {}, const EceConfig& cfg = {}) {
  auto img = partition(image_records, group_by);
  auto txt = partition(text_records, group_by);
  for (const auto& [key, _] : img) {
    if (!txt.count(key)) throw MetricError("group \"" + key + "\" has no text-modality records");
  }
  for (const auto& [key, _] : txt) {
    if (!img.count(key)) throw MetricError("group \"" + key + "\" has no image-modality records");
  }
  GapReport report;
  for (const auto& [key, irecs] : img) {
    const auto& trecs = txt.at(key);
    GapRow row;
    row.group = key;
    row.acc = MetricPair::of(accuracy(irecs, cfg), accuracy(trecs, cfg));
    row.ece = MetricPair::of(ece(irecs, cfg), ece(trecs, cfg));
    row.auroc = MetricPair::of(try_auroc(irecs, cfg), try_auroc(trecs, cfg));
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Headline numbers for a set of result rows.
struct Summary {
  std::size_t rows = 0;
  std::size_t records = 0;
  std::size_t attempted = 0;
  std::size_t abstained = 0;
  std::size_t missing_confidence = 0;
  std::size_t errors = 0;
  std::optional<double> accuracy;
  std::optional<double> ece;
  std::optional<double> auroc;
};

inline Summary summarize(const std::vector<ResultRow>& rows, const EceConfig& cfg = {}) {
  Summary s;
  s.rows = rows.size();
  for (const auto& r : rows) {
    switch (r.status) {
      case RowStatus::ok:
        ++s.records;
        if (r.attempted) {
          ++s.attempted;
        } else {
          ++s.abstained;
        }
        break;
      case RowStatus::missing_confidence:
        ++s.missing_confidence;
        break;
      default:
        ++s.errors;
    }
  }
  auto recs = records_of(rows);
  if (!filter_records(recs, cfg).empty()) {
    s.accuracy = accuracy(recs, cfg);
    s.ece = ece(recs, cfg);
    s.auroc = try_auroc(recs, cfg);
  }
  return s;
}

}  // namespace vcal
