#pragma once

// Grouped metric tables and their csv / json / markdown serializations.
//
// Layout: one row per (metric, model, strategy), one column per distinct
// value of the group-by labels. A cell whose records are all
// semantically-aligned and span both image and text variants is shown as
// "image/text". Accuracy prints as a percentage with one decimal, ECE and
// AUROC as fractions with three.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcal/metrics.hpp"
#include "vcal/scoring.hpp"

namespace vcal {

enum class Metric { acc, ece, auroc, n };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::acc: return "acc";
    case Metric::ece: return "ece";
    case Metric::auroc: return "auroc";
    case Metric::n: return "n";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(std::string_view s) {
  if (s == "acc" || s == "accuracy") return Metric::acc;
  if (s == "ece") return Metric::ece;
  if (s == "auroc") return Metric::auroc;
  if (s == "n" || s == "count") return Metric::n;
  return std::nullopt;
}

enum class Format { csv, json, markdown };

inline std::optional<Format> parse_format(std::string_view s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  if (s == "markdown" || s == "md") return Format::markdown;
  return std::nullopt;
}

struct Cell {
  std::size_t n = 0;
  bool slash = false;
  std::optional<double> value;
  std::optional<double> image;
  std::optional<double> text;
};

struct ReportRow {
  Metric metric = Metric::acc;
  /// Values of ReportTable::row_labels.
  std::vector<std::string> key;
  /// Column name -> cell; absent columns render empty.
  std::map<std::string, Cell> cells;
};

struct ReportTable {
  std::vector<std::string> row_labels;
  std::vector<std::string> columns;
  std::vector<ReportRow> rows;
};

namespace detail {

inline std::optional<double> metric_value(Metric m, std::span<const CalibrationRecord> recs, const EceConfig& cfg) {
  if (filter_records(recs, cfg).empty()) return std::nullopt;
  switch (m) {
    case Metric::acc: return accuracy(recs, cfg);
    case Metric::ece: return ece(recs, cfg);
    case Metric::auroc: return try_auroc(recs, cfg);
    case Metric::n: return static_cast<double>(recs.size());
  }
  return std::nullopt;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s(buf);
  if (s == "-0.0" || s == "-0.000") s.erase(0, 1);
  return s;
}

}  // namespace detail

inline std::string format_value(Metric m, std::optional<double> v) {
  if (!v) return "-";
  switch (m) {
    case Metric::acc: return detail::fixed(*v * 100.0, 1);
    case Metric::ece:
    case Metric::auroc: return detail::fixed(*v, 3);
    case Metric::n: return std::to_string(static_cast<long long>(*v));
  }
  return "-";
}

inline std::string format_cell(Metric m, const Cell& c) {
  if (c.slash) return format_value(m, c.image) + "/" + format_value(m, c.text);
  return format_value(m, c.value);
}

/// Builds the table. Throws MetricError on an unknown group label.
inline ReportTable aggregate(std::span<const CalibrationRecord> records, const std::vector<std::string>& group_by,
                             const std::vector<Metric>& metrics, const EceConfig& cfg = {}) {
  check_labels(group_by);
  ReportTable table;
  for (const char* l : {"model", "strategy"}) {
    if (std::find(group_by.begin(), group_by.end(), l) == group_by.end()) table.row_labels.emplace_back(l);
  }
  const bool split_modality = std::find(group_by.begin(), group_by.end(), "modality") == group_by.end();

  std::map<std::vector<std::string>, std::map<std::string, std::vector<CalibrationRecord>>> grid;
  std::set<std::string> columns;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (const auto& l : table.row_labels) key.push_back(label_value(r.group, l));
    auto col = group_key(r.group, group_by);
    columns.insert(col);
    grid[key][col].push_back(r);
  }
  table.columns.assign(columns.begin(), columns.end());

  for (auto m : metrics) {
    for (const auto& [key, cols] : grid) {
      ReportRow row{m, key, {}};
      for (const auto& [col, recs] : cols) {
        Cell c;
        c.n = recs.size();
        std::vector<CalibrationRecord> img, txt;
        bool aligned = true;
        for (const auto& r : recs) {
          aligned = aligned && r.group.eval_config == EvalConfig::semantically_aligned;
          if (r.group.modality == Modality::image) img.push_back(r);
          if (r.group.modality == Modality::text) txt.push_back(r);
        }
        if (split_modality && aligned && !img.empty() && !txt.empty() && img.size() + txt.size() == recs.size()) {
          c.slash = true;
          c.image = detail::metric_value(m, img, cfg);
          c.text = detail::metric_value(m, txt, cfg);
        } else {
          c.value = detail::metric_value(m, recs, cfg);
        }
        row.cells.emplace(col, c);
      }
      table.rows.push_back(std::move(row));
    }
  }
  return table;
}

inline std::vector<std::string> header_of(const ReportTable& t) {
  std::vector<std::string> h{"metric"};
  h.insert(h.end(), t.row_labels.begin(), t.row_labels.end());
  h.insert(h.end(), t.columns.begin(), t.columns.end());
  return h;
}

inline std::vector<std::vector<std::string>> body_of(const ReportTable& t) {
  std::vector<std::vector<std::string>> out;
  for (const auto& row : t.rows) {
    std::vector<std::string> line{std::string(to_string(row.metric))};
    line.insert(line.end(), row.key.begin(), row.key.end());
    for (const auto& col : t.columns) {
      auto it = row.cells.find(col);
      line.push_back(it == row.cells.end() ? "" : format_cell(row.metric, it->second));
    }
    out.push_back(std::move(line));
  }
  return out;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string md_field(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

}  // namespace detail

inline std::string render_table(const ReportTable& t, Format f) {
  auto header = header_of(t);
  auto body = body_of(t);
  std::ostringstream out;
  switch (f) {
    case Format::csv: {
      auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << detail::csv_field(cells[i]);
        out << '\n';
      };
      line(header);
      for (const auto& r : body) line(r);
      break;
    }
    case Format::markdown: {
      auto line = [&](const std::vector<std::string>& cells) {
        out << '|';
        for (const auto& c : cells) out << ' ' << detail::md_field(c) << " |";
        out << '\n';
      };
      line(header);
      out << '|';
      for (std::size_t i = 0; i < header.size(); ++i) out << " --- |";
      out << '\n';
      for (const auto& r : body) line(r);
      break;
    }
    case Format::json: {
      nlohmann::json j{{"columns", header}, {"rows", nlohmann::json::array()}};
      for (const auto& r : body) j["rows"].push_back(r);
      out << j.dump(2) << '\n';
      break;
    }
  }
  return out.str();
}

inline void emit(const ReportTable& t, Format f, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << render_table(t, f);
  if (!out) throw Error("write to " + path.string() + " failed");
}

/// One JSON object per bin: {m, lower, upper, count, avg_conf, acc}.
inline std::string curve_jsonl(const std::vector<BinStat>& curve) {
  std::string out;
  for (const auto& b : curve) {
    nlohmann::json j{{"m", b.index}, {"lower", b.lower}, {"upper", b.upper}, {"count", b.count}};
    j["avg_conf"] = b.avg_conf ? nlohmann::json(*b.avg_conf) : nlohmann::json(nullptr);
    j["acc"] = b.acc ? nlohmann::json(*b.acc) : nlohmann::json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace vcal
