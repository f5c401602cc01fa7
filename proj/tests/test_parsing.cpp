#include <gtest/gtest.h>

#include <cstdio>
#include <random>

#include "support.hpp"
#include "vcal/parsing.hpp"

using namespace vcal;

TEST(ExtractTag, Basic) {
  EXPECT_EQ(extract_tag("reasoning <answer>A</answer>", "answer"), "A");
  EXPECT_EQ(extract_tag("<answer>  spaced \n</answer>", "answer"), "spaced");
  EXPECT_EQ(extract_tag("<answer></answer>", "answer"), "");
}

TEST(ExtractTag, LastOccurrenceWins) {
  const std::string text =
      "Format: <answer>[letter]</answer>\nThinking...\n<answer>C</answer>\n<confidence>70%</confidence>";
  EXPECT_EQ(extract_tag(text, "answer"), "C");
}

TEST(ExtractTag, UnclosedOrAbsent) {
  EXPECT_EQ(extract_tag("<answer>A", "answer"), std::nullopt);
  EXPECT_EQ(extract_tag("no tags at all", "answer"), std::nullopt);
  EXPECT_EQ(extract_tag("A</answer>", "answer"), std::nullopt);
  // A trailing unclosed block does not hide an earlier closed one.
  EXPECT_EQ(extract_tag("<answer>B</answer> then <answer>C", "answer"), "B");
}

TEST(ExtractTag, NumberedTagsAreDistinct) {
  const std::string text = "<answer1>x</answer1><answer2>y</answer2>";
  EXPECT_EQ(extract_tag(text, "answer1"), "x");
  EXPECT_EQ(extract_tag(text, "answer2"), "y");
  EXPECT_EQ(extract_tag(text, "answer"), std::nullopt);
}

TEST(ParseConfidence, GrammarTable) {
  struct Row {
    const char* raw;
    double value;
    bool clamped;
  };
  const Row rows[] = {
      {"80%", 0.80, false},  {"80 %", 0.80, false}, {"95 %", 0.95, false}, {"0.5", 0.5, false},
      {"1", 1.0, false},     {"0", 0.0, false},     {"100%", 1.0, false},  {"75", 0.75, false},
      {"110%", 1.0, true},   {"[85%]", 0.85, false}, {" 60% ", 0.60, false}, {"-5%", 0.0, true},
      {"250", 1.0, true},    {"0.0%", 0.0, false},  {"12.5%", 0.125, false},
  };
  for (const auto& r : rows) {
    auto c = parse_confidence(r.raw);
    EXPECT_DOUBLE_EQ(c.value, r.value) << r.raw;
    EXPECT_EQ(c.clamped, r.clamped) << r.raw;
  }
}

TEST(ParseConfidence, NonNumericThrows) {
  for (const char* raw : {"", "high", "80%%", "eighty percent", "%", "nan", "inf", "0.8 or so"}) {
    EXPECT_THROW(parse_confidence(raw), ParseError) << raw;
  }
}

TEST(ParseConfidence, AlwaysInUnitInterval) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  std::bernoulli_distribution pct(0.5);
  for (int i = 0; i < 2000; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f%s", u(rng), pct(rng) ? "%" : "");
    auto c = parse_confidence(buf);
    EXPECT_GE(c.value, 0.0) << buf;
    EXPECT_LE(c.value, 1.0) << buf;
  }
}

TEST(ParseSingle, StandardExampleOutput) {
  auto p = parse_single("[YOUR_REASONING]\n<answer>A</answer>\n<confidence>80%</confidence>");
  EXPECT_EQ(p.answer, "A");
  ASSERT_TRUE(p.confidence);
  EXPECT_DOUBLE_EQ(*p.confidence, 0.80);
  EXPECT_FALSE(p.abstained);
  EXPECT_FALSE(p.guesses.has_value());
}

TEST(ParseSingle, NoTagsMeansAbstainedWithoutConfidence) {
  auto p = parse_single("I think the answer might be A but I am not sure.");
  EXPECT_TRUE(p.abstained);
  EXPECT_FALSE(p.confidence.has_value());
}

TEST(ParseSingle, FractionConfidence) {
  auto p = parse_single("work... <answer>12</answer><confidence>0.9</confidence>");
  EXPECT_EQ(p.answer, "12");
  EXPECT_DOUBLE_EQ(*p.confidence, 0.9);
}

TEST(ParseSingle, NonNumericConfidenceThrows) {
  EXPECT_THROW(parse_single("<answer>A</answer><confidence>very high</confidence>"), ParseError);
}

TEST(ParseSingle, AbstentionPhrases) {
  for (const char* a : {"I don't know", "i DON'T KNOW.", "Cannot determine from the image", "Unanswerable",
                        "I don\xE2\x80\x99t know", "   "}) {
    auto p = parse_single(std::string("<answer>") + a + "</answer><confidence>30%</confidence>");
    EXPECT_TRUE(p.abstained) << a;
    EXPECT_DOUBLE_EQ(*p.confidence, 0.3);
  }
  EXPECT_FALSE(parse_single("<answer>Paris</answer><confidence>30%</confidence>").abstained);
  AbstentionPolicy custom{{"no idea"}};
  EXPECT_TRUE(parse_single("<answer>No idea</answer>", custom).abstained);
  EXPECT_FALSE(parse_single("<answer>I don't know</answer>", custom).abstained);
}

TEST(ParseSingle, ProseOutsideTagsIsIgnored) {
  const std::string tags = "<answer>odd</answer>\n<confidence>65%</confidence>";
  auto base = parse_single(tags);
  std::mt19937_64 rng(5);
  const std::string alphabet = "abcdefghij 0123456789%.,\n[]()";
  for (int i = 0; i < 200; ++i) {
    std::string prose;
    for (int j = 0; j < 80; ++j) prose += alphabet[rng() % alphabet.size()];
    auto p = parse_single(prose + tags);
    EXPECT_EQ(p.answer, base.answer);
    EXPECT_EQ(p.confidence, base.confidence);
  }
}

TEST(ParseTopK, PuzzleExample) {
  const std::string text =
      "[YOUR_REASONING]\n<answer1>e2e4</answer1>\n<confidence1>95%</confidence1>\n<answer2>e1f2</answer2>\n"
      "<confidence2>80%</confidence2>\n<answer3>d2a3</answer3>\n<confidence3>50%</confidence3>";
  auto p = parse_topk(text, 3);
  EXPECT_EQ(p.answer, "e2e4");
  EXPECT_DOUBLE_EQ(*p.confidence, 0.95);
  ASSERT_TRUE(p.guesses);
  EXPECT_EQ(p.guesses->size(), 3u);
}

TEST(ParseTopK, SingleGuess) {
  auto p = parse_topk("<answer1>B</answer1><confidence1>40%</confidence1>", 3);
  EXPECT_EQ(p.answer, "B");
  EXPECT_DOUBLE_EQ(*p.confidence, 0.4);
}

TEST(ParseTopK, TieGoesToLowestIndex) {
  auto p = parse_topk("<answer1>True</answer1><confidence1>60%</confidence1>"
                      "<answer2>False</answer2><confidence2>60%</confidence2>",
                      3);
  EXPECT_EQ(p.answer, "True");
}

TEST(ParseTopK, SkipsMalformedGuessesAndFailsWhenNoneRemain) {
  auto p = parse_topk("<answer1>x</answer1><confidence1>lots</confidence1>"
                      "<answer2>y</answer2><confidence2>30%</confidence2>"
                      "<answer3>z</answer3>",
                      3);
  EXPECT_EQ(p.answer, "y");
  EXPECT_EQ(p.guesses->size(), 1u);
  EXPECT_THROW(parse_topk("no guesses", 3), ParseError);
  EXPECT_THROW(parse_topk("<answer1>x</answer1>", 3), ParseError);
}

TEST(ParseTopK, ArgmaxPropertyOverRandomGuessLists) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    int k = 2 + static_cast<int>(rng() % 4);
    std::string text = "reasoning\n";
    std::vector<int> conf;
    for (int i = 1; i <= k; ++i) {
      int c = static_cast<int>(rng() % 5) * 20;  // small grid forces ties
      conf.push_back(c);
      text += "<answer" + std::to_string(i) + ">g" + std::to_string(i) + "</answer" + std::to_string(i) + ">";
      text += "<confidence" + std::to_string(i) + ">" + std::to_string(c) + "%</confidence" + std::to_string(i) + ">\n";
    }
    int best = 0;
    for (int i = 1; i < k; ++i) {
      if (conf[i] > conf[best]) best = i;
    }
    auto p = parse_topk(text, k);
    EXPECT_EQ(p.answer, "g" + std::to_string(best + 1));
    EXPECT_DOUBLE_EQ(*p.confidence, conf[best] / 100.0);
    double mx = 0.0;
    for (const auto& g : *p.guesses) mx = std::max(mx, g.confidence);
    EXPECT_EQ(*p.confidence, mx);
  }
}

TEST(ParseReflection, Examples) {
  EXPECT_DOUBLE_EQ(parse_reflection_confidence("[YOUR_REASONING]\n<confidence>80%</confidence>"), 0.80);
  EXPECT_DOUBLE_EQ(parse_reflection_confidence("<confidence>100%</confidence>"), 1.0);
  EXPECT_THROW(parse_reflection_confidence("I am fairly sure."), ParseError);
  EXPECT_THROW(parse_reflection_confidence("<confidence>sure</confidence>"), ParseError);
}

TEST(ParseReflection, OverridesFirstRoundConfidence) {
  auto first = parse_single("<answer>B</answer>");
  EXPECT_FALSE(first.confidence);
  auto combined = with_reflection(first, "<confidence>35%</confidence>");
  EXPECT_EQ(combined.answer, "B");
  EXPECT_DOUBLE_EQ(*combined.confidence, 0.35);
}

// Every example output block from the shipped prompt templates, with the
// documented parse in a sibling .json file.
TEST(GoldenOutputs, EveryExampleParsesToDocumentedValues) {
  namespace fs = std::filesystem;
  const auto dir = testing_support::fixtures() / "golden_outputs";
  int checked = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    auto expect = nlohmann::json::parse(testing_support::read_file(entry.path()));
    auto txt = entry.path();
    txt.replace_extension(".txt");
    ASSERT_TRUE(fs::exists(txt)) << txt;
    const auto text = testing_support::read_file(txt);
    const auto parser = expect.at("parser").get<std::string>();
    SCOPED_TRACE(txt.filename().string());
    if (parser == "single") {
      auto p = parse_single(text);
      EXPECT_EQ(p.answer, expect.at("answer").get<std::string>());
      if (expect.at("confidence").is_null()) {
        EXPECT_FALSE(p.confidence.has_value());
      } else {
        ASSERT_TRUE(p.confidence);
        EXPECT_DOUBLE_EQ(*p.confidence, expect.at("confidence").get<double>());
      }
      EXPECT_FALSE(p.abstained);
    } else if (parser == "topk") {
      auto p = parse_topk(text, expect.at("k").get<int>());
      EXPECT_EQ(p.answer, expect.at("answer").get<std::string>());
      EXPECT_DOUBLE_EQ(*p.confidence, expect.at("confidence").get<double>());
      EXPECT_EQ(p.guesses->size(), expect.at("guess_count").get<std::size_t>());
    } else if (parser == "reflection") {
      EXPECT_DOUBLE_EQ(parse_reflection_confidence(text), expect.at("confidence").get<double>());
    } else {
      ADD_FAILURE() << "unknown parser " << parser;
    }
    ++checked;
  }
  EXPECT_EQ(checked, 81);
}
