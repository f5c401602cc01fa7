// vcal: run a prompting strategy against a chat-completions endpoint, score
// the results, and tabulate them.
//
//   vcal run    --items FILE --model NAME --base-url URL --strategy S --out DIR
//   vcal score  --results FILE
//   vcal report --records FILE --group-by category --format markdown
//
// Exit codes: 0 success, 2 partial (some items errored), 1 fatal.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "vcal/vcal.hpp"

#ifndef VCAL_DEFAULT_TEMPLATES_DIR
#define VCAL_DEFAULT_TEMPLATES_DIR "assets/templates"
#endif

namespace fs = std::filesystem;

namespace {

struct RunArgs {
  std::string items;
  std::string model;
  std::string base_url;
  std::string strategy = "cot";
  int k = vcal::kShippedTopK;
  std::string config = "general";
  std::size_t frames = 32;
  std::size_t concurrency = 4;
  std::string cache_dir;
  std::string out = "vcal-out";
  std::string templates = VCAL_DEFAULT_TEMPLATES_DIR;
  std::string api_key_env = "OPENAI_API_KEY";
  double temperature = 0.0;
  int max_tokens = 4096;
  double timeout_s = 120.0;
  int retries = 5;
};

struct ScoreArgs {
  std::string results;
  int bins = 10;
  std::string curve;
};

struct ReportArgs {
  std::string records;
  std::vector<std::string> group_by;
  std::vector<std::string> metrics{"acc", "ece", "auroc"};
  std::string format = "csv";
  int bins = 10;
  std::string out;
  std::string curve;
};

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw vcal::Error("cannot write " + path);
  out << text;
}

std::string fmt_opt(std::optional<double> v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

nlohmann::json summary_json(const vcal::Summary& s) {
  auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"rows", s.rows},         {"records", s.records},
          {"attempted", s.attempted}, {"abstained", s.abstained},
          {"missing_confidence", s.missing_confidence},
          {"errors", s.errors},     {"accuracy", opt(s.accuracy)},
          {"ece", opt(s.ece)},      {"auroc", opt(s.auroc)}};
}

int do_run(const RunArgs& a) {
  auto config = vcal::parse_eval_config(a.config);
  if (!config) throw vcal::Error("unknown --config " + a.config);
  auto kind = vcal::parse_strategy_kind(a.strategy);
  if (!kind) throw vcal::Error("unknown --strategy " + a.strategy);

  auto lib = vcal::TemplateLibrary::load(a.templates);
  auto loaded = vcal::read_items(a.items, *config);
  for (const auto& e : loaded.errors) std::cerr << "vcal: " << a.items << ": " << e.what() << '\n';
  if (loaded.items.empty()) {
    std::cerr << "vcal: no usable items\n";
    return 1;
  }
  if (*config == vcal::EvalConfig::semantically_aligned) {
    auto pairing = vcal::pair_modalities(loaded.items);
    for (const auto& id : pairing.orphans) std::cerr << "vcal: item " << id << " has no modality partner\n";
  }

  vcal::ModelEndpoint ep;
  ep.base_url = a.base_url;
  ep.model_name = a.model;
  ep.api_key_ref = a.api_key_env;
  ep.temperature = a.temperature;
  ep.max_tokens = a.max_tokens;
  ep.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000.0));

  std::shared_ptr<vcal::ResponseCache> cache;
  if (!a.cache_dir.empty()) cache = std::make_shared<vcal::ResponseCache>(a.cache_dir);
  vcal::ChatClient::Options opts;
  opts.retry.max_attempts = a.retries;
  opts.max_in_flight = a.concurrency;
  vcal::ChatClient client(ep, std::make_shared<vcal::HttpTransport>(), cache, opts);

  fs::path out(a.out);
  fs::create_directories(out);
  vcal::RunConfig rc;
  rc.strategy = vcal::Strategy::make(*kind, a.k);
  rc.frames = a.frames;
  rc.workers = a.concurrency;
  rc.transcript_dir = out / "transcripts";

  auto outcome = vcal::run_items(client, lib, loaded.items, rc);
  vcal::write_results(out / "results.jsonl", outcome.rows);
  auto summary = vcal::summarize(outcome.rows);
  auto sj = summary_json(summary);
  sj["load_errors"] = loaded.errors.size();
  write_text((out / "summary.json").string(), sj.dump(2) + "\n");

  std::cerr << "vcal: " << outcome.rows.size() << " items, " << summary.records << " scored, "
            << summary.abstained << " abstained, " << summary.missing_confidence << " missing confidence, "
            << outcome.errored() << " errored, " << loaded.errors.size() << " unreadable\n";
  for (const auto& r : outcome.rows) {
    if (r.status != vcal::RowStatus::ok && r.status != vcal::RowStatus::missing_confidence) {
      std::cerr << "vcal: " << r.item_id << ": " << vcal::to_string(r.status) << ": " << r.detail << '\n';
    }
  }
  return outcome.errored() == 0 && loaded.errors.empty() ? 0 : 2;
}

int do_score(const ScoreArgs& a) {
  auto rows = vcal::read_results(a.results);
  vcal::EceConfig cfg;
  cfg.bins = a.bins;
  auto s = vcal::summarize(rows, cfg);
  std::cout << summary_json(s).dump(2) << '\n';
  if (!a.curve.empty()) write_text(a.curve, vcal::curve_jsonl(vcal::reliability_curve(vcal::records_of(rows), cfg)));
  std::cerr << "vcal: accuracy " << fmt_opt(s.accuracy) << ", ECE " << fmt_opt(s.ece) << ", AUROC "
            << fmt_opt(s.auroc) << '\n';
  return 0;
}

int do_report(const ReportArgs& a) {
  auto format = vcal::parse_format(a.format);
  if (!format) throw vcal::Error("unknown --format " + a.format);
  std::vector<vcal::Metric> metrics;
  for (const auto& m : a.metrics) {
    auto parsed = vcal::parse_metric(m);
    if (!parsed) throw vcal::Error("unknown metric " + m);
    metrics.push_back(*parsed);
  }
  auto records = vcal::records_of(vcal::read_results(a.records));
  if (records.empty()) throw vcal::Error(a.records + " holds no scored records");
  vcal::EceConfig cfg;
  cfg.bins = a.bins;
  auto table = vcal::aggregate(records, a.group_by, metrics, cfg);
  write_text(a.out, vcal::render_table(table, *format));
  if (!a.curve.empty()) write_text(a.curve, vcal::curve_jsonl(vcal::reliability_curve(records, cfg)));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verbalized-confidence evaluation harness"};
  app.require_subcommand(1);

  RunArgs run;
  auto* r = app.add_subcommand("run", "Query a model on every item and write results.jsonl");
  r->add_option("--items", run.items, "Item file (JSON lines)")->required();
  r->add_option("--model", run.model, "Model name sent to the endpoint")->required();
  r->add_option("--base-url", run.base_url, "Endpoint base URL, e.g. http://localhost:8000/v1")->required();
  r->add_option("--strategy", run.strategy, "cot | topk | reflect | vcap")->capture_default_str();
  r->add_option("--k", run.k, "Top-K guess count")->capture_default_str();
  r->add_option("--config", run.config, "general | embedded | aligned")->capture_default_str();
  r->add_option("--frames", run.frames, "Frames sampled per video")->capture_default_str()->check(CLI::PositiveNumber);
  r->add_option("--concurrency", run.concurrency, "Maximum requests in flight")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  r->add_option("--cache-dir", run.cache_dir, "Response cache directory");
  r->add_option("--out", run.out, "Output directory")->capture_default_str();
  r->add_option("--templates", run.templates, "Prompt template directory")->capture_default_str();
  r->add_option("--api-key-env", run.api_key_env, "Environment variable holding the API key")->capture_default_str();
  r->add_option("--temperature", run.temperature)->capture_default_str();
  r->add_option("--max-tokens", run.max_tokens)->capture_default_str();
  r->add_option("--timeout", run.timeout_s, "Request timeout in seconds")->capture_default_str();
  r->add_option("--retries", run.retries, "Attempts per request")->capture_default_str();

  ScoreArgs score;
  auto* s = app.add_subcommand("score", "Summarize a results file");
  s->add_option("--results", score.results, "results.jsonl")->required();
  s->add_option("--bins", score.bins)->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--curve", score.curve, "Write the reliability curve (JSON lines) here");

  ReportArgs report;
  auto* p = app.add_subcommand("report", "Tabulate grouped metrics");
  p->add_option("--records", report.records, "results.jsonl")->required();
  p->add_option("--group-by", report.group_by, "Comma-separated labels")->delimiter(',');
  p->add_option("--metrics", report.metrics, "Comma-separated: acc, ece, auroc, n")
      ->delimiter(',')
      ->capture_default_str();
  p->add_option("--format", report.format, "csv | json | markdown")->capture_default_str();
  p->add_option("--bins", report.bins)->capture_default_str()->check(CLI::PositiveNumber);
  p->add_option("--out", report.out, "Output file (default stdout)");
  p->add_option("--curve", report.curve, "Write the reliability curve (JSON lines) here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*r) return do_run(run);
    if (*s) return do_score(score);
    if (*p) return do_report(report);
  } catch (const std::exception& e) {
    std::cerr << "vcal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
