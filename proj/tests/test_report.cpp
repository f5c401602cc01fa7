#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "vcal/report.hpp"

using namespace vcal;
using testing_support::record;

namespace {

CalibrationRecord labelled(double conf, bool correct, std::string category, Modality modality = Modality::image,
                           EvalConfig config = EvalConfig::general) {
  auto r = record(conf, correct);
  r.group.category = std::move(category);
  r.group.subtask = "s";
  r.group.modality = modality;
  r.group.eval_config = config;
  r.group.model = "m";
  r.group.strategy = "cot";
  return r;
}

// math: 0.8 right, 0.6 wrong; science: 0.9 right.
std::vector<CalibrationRecord> two_categories() {
  return {labelled(0.8, true, "mathematics"), labelled(0.6, false, "mathematics"), labelled(0.9, true, "science")};
}

const std::vector<Metric> kDefault{Metric::acc, Metric::ece, Metric::auroc};

}  // namespace

TEST(Format, Values) {
  EXPECT_EQ(format_value(Metric::acc, 0.467), "46.7");
  EXPECT_EQ(format_value(Metric::acc, 1.0), "100.0");
  EXPECT_EQ(format_value(Metric::ece, 0.2844), "0.284");
  EXPECT_EQ(format_value(Metric::auroc, 0.5), "0.500");
  EXPECT_EQ(format_value(Metric::ece, -1e-18), "0.000");
  EXPECT_EQ(format_value(Metric::n, 12.0), "12");
  EXPECT_EQ(format_value(Metric::ece, std::nullopt), "-");
}

TEST(Aggregate, TwoCategoriesMatchHandWrittenCsv) {
  auto recs = two_categories();
  auto t = aggregate(recs, {"category"}, kDefault);
  EXPECT_EQ(t.row_labels, (std::vector<std::string>{"model", "strategy"}));
  EXPECT_EQ(t.columns, (std::vector<std::string>{"mathematics", "science"}));
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(render_table(t, Format::csv),
            testing_support::read_file(testing_support::fixtures() / "report" / "two_categories.csv"));
  EXPECT_EQ(render_table(t, Format::markdown),
            testing_support::read_file(testing_support::fixtures() / "report" / "two_categories.md"));
}

TEST(Aggregate, JsonCarriesTheSameCells) {
  auto recs = two_categories();
  auto j = nlohmann::json::parse(render_table(aggregate(recs, {"category"}, kDefault), Format::json));
  EXPECT_EQ(j["columns"], (nlohmann::json{"metric", "model", "strategy", "mathematics", "science"}));
  ASSERT_EQ(j["rows"].size(), 3u);
  EXPECT_EQ(j["rows"][1], (nlohmann::json{"ece", "m", "cot", "0.400", "0.100"}));
}

TEST(Aggregate, AlignedCellsShowImageSlashText) {
  std::vector<CalibrationRecord> recs{
      labelled(0.533, true, "mathematics", Modality::image, EvalConfig::semantically_aligned),
      labelled(0.716, true, "mathematics", Modality::text, EvalConfig::semantically_aligned)};
  auto t = aggregate(recs, {"category"}, {Metric::acc, Metric::ece});
  auto body = body_of(t);
  ASSERT_EQ(body.size(), 2u);
  EXPECT_EQ(body[0], (std::vector<std::string>{"acc", "m", "cot", "100.0/100.0"}));
  EXPECT_EQ(body[1], (std::vector<std::string>{"ece", "m", "cot", "0.467/0.284"}));

  // Grouping by modality splits the pair into two plain columns.
  auto by_modality = body_of(aggregate(recs, {"modality"}, {Metric::ece}));
  EXPECT_EQ(by_modality[0], (std::vector<std::string>{"ece", "m", "cot", "0.467", "0.284"}));

  // A general-config record in the same cell turns the slash off.
  recs.push_back(labelled(0.5, true, "mathematics"));
  EXPECT_FALSE(aggregate(recs, {"category"}, {Metric::ece}).rows[0].cells.at("mathematics").slash);
}

TEST(Aggregate, ModelAndStrategyBecomeRowsUnlessGrouped) {
  auto recs = two_categories();
  auto other = labelled(0.7, true, "science");
  other.group.model = "n";
  recs.push_back(other);
  auto t = aggregate(recs, {"category"}, {Metric::n});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(body_of(t)[0], (std::vector<std::string>{"n", "m", "cot", "2", "1"}));
  EXPECT_EQ(body_of(t)[1], (std::vector<std::string>{"n", "n", "cot", "", "1"}));

  auto by_model = aggregate(recs, {"model"}, {Metric::n});
  EXPECT_EQ(by_model.row_labels, std::vector<std::string>{"strategy"});
  EXPECT_EQ(by_model.columns, (std::vector<std::string>{"m", "n"}));
}

TEST(Aggregate, NoGroupingGivesOneColumn) {
  auto recs = two_categories();
  auto t = aggregate(recs, {}, {Metric::acc});
  EXPECT_EQ(t.columns, std::vector<std::string>{"all"});
  EXPECT_EQ(body_of(t)[0].back(), "66.7");
}

TEST(Aggregate, EmptyInputGivesHeaderOnly) {
  std::vector<CalibrationRecord> none;
  auto t = aggregate(none, {"category"}, kDefault);
  EXPECT_EQ(render_table(t, Format::csv), "metric,model,strategy\n");
  EXPECT_EQ(render_table(t, Format::markdown), "| metric | model | strategy |\n| --- | --- | --- |\n");
}

TEST(Aggregate, UnknownLabelIsAnError) {
  auto recs = two_categories();
  EXPECT_THROW(aggregate(recs, {"colour"}, kDefault), MetricError);
}

TEST(Aggregate, RenderingIsDeterministic) {
  std::mt19937_64 rng(41);
  auto recs = testing_support::random_records(rng, 300);
  const char* cats[] = {"a", "b", "c"};
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].group.category = cats[i % 3];
  auto first = render_table(aggregate(recs, {"category", "task_kind"}, kDefault), Format::csv);
  std::shuffle(recs.begin(), recs.end(), rng);
  auto second = render_table(aggregate(recs, {"category", "task_kind"}, kDefault), Format::csv);
  EXPECT_EQ(first, second);
}

TEST(Aggregate, CountsAddUpToTheInput) {
  std::mt19937_64 rng(43);
  auto recs = testing_support::random_records(rng, 250);
  const char* cats[] = {"a", "b", "c", "d"};
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].group.category = cats[(i * 7) % 4];
  auto parts = partition(recs, {"category"});
  std::size_t total = 0;
  for (const auto& [key, group] : parts) total += group.size();
  EXPECT_EQ(total, recs.size());
  auto t = aggregate(recs, {"category"}, {Metric::n});
  std::size_t cells = 0;
  for (const auto& [col, c] : t.rows.at(0).cells) cells += c.n;
  EXPECT_EQ(cells, recs.size());
}

TEST(Csv, FieldsWithCommasAreQuoted) {
  std::vector<CalibrationRecord> recs{labelled(0.5, true, "a, \"b\"")};
  auto csv = render_table(aggregate(recs, {"category"}, {Metric::n}), Format::csv);
  EXPECT_EQ(csv, "metric,model,strategy,\"a, \"\"b\"\"\"\nn,m,cot,1\n");
}

TEST(Emit, WritesFile) {
  testing_support::TempDir dir;
  auto recs = two_categories();
  auto t = aggregate(recs, {"category"}, kDefault);
  emit(t, Format::csv, dir / "out.csv");
  EXPECT_EQ(testing_support::read_file(dir / "out.csv"), render_table(t, Format::csv));
  EXPECT_THROW(emit(t, Format::csv, dir / "missing" / "out.csv"), Error);
}

TEST(Curve, JsonLinesOnePerBin) {
  std::vector<CalibrationRecord> recs{record(0.05, false), record(0.95, true), record(0.95, false)};
  auto text = curve_jsonl(reliability_curve(recs, {.bins = 10}));
  std::istringstream in(text);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 10u);
  EXPECT_EQ(lines[0]["m"], 1);
  EXPECT_EQ(lines[0]["count"], 1);
  EXPECT_TRUE(lines[4]["avg_conf"].is_null());
  EXPECT_TRUE(lines[4]["acc"].is_null());
  EXPECT_EQ(lines[9]["count"], 2);
  EXPECT_DOUBLE_EQ(lines[9]["acc"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(lines[9]["lower"].get<double>(), 0.9);
  EXPECT_DOUBLE_EQ(lines[9]["upper"].get<double>(), 1.0);
}

TEST(Parse, MetricAndFormatNames) {
  EXPECT_EQ(parse_metric("accuracy"), Metric::acc);
  EXPECT_EQ(parse_metric("ece"), Metric::ece);
  EXPECT_FALSE(parse_metric("brier"));
  EXPECT_EQ(parse_format("md"), Format::markdown);
  EXPECT_FALSE(parse_format("xlsx"));
}
