#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "safesig/judge.hpp"

using namespace safesig;
using namespace safesig::judge;

namespace {

TokenSequence seq(std::vector<std::string> words) {
  TokenSequence t;
  t.texts = std::move(words);
  for (std::size_t i = 0; i < t.texts.size(); ++i) t.ids.push_back(static_cast<int>(i));
  t.vocab_size = static_cast<int>(t.texts.size());
  return t;
}

}  // namespace

TEST_CASE("keyword judge flags refusal phrasing") {
  const auto cfg = KeywordJudgeConfig::defaults();
  CHECK(keyword_refusal_judge(std::string("Sorry, I can't fulfill that."), cfg).value == 1);
  CHECK(keyword_refusal_judge(std::string("Here are three tips."), cfg).value == 0);
  CHECK(keyword_refusal_judge(std::string("soRRy about that"), cfg).value == 1);
}

TEST_CASE("keyword judge runs on joined token texts") {
  const auto cfg = KeywordJudgeConfig::defaults();
  CHECK(keyword_refusal_judge(seq({"well", "i", "cannot", "help"}), cfg).value == 1);
  CHECK(keyword_refusal_judge(seq({"here", "is", "the", "plan"}), cfg).value == 0);
}

TEST_CASE("keyword judge determinism and whitespace invariance") {
  const auto cfg = KeywordJudgeConfig::defaults();
  const auto a = keyword_refusal_judge(std::string("no keywords here"), cfg);
  const auto b = keyword_refusal_judge(std::string("no keywords here   "), cfg);
  CHECK(a.value == b.value);
  for (int i = 0; i < 5; ++i)
    CHECK(keyword_refusal_judge(std::string("sorry"), cfg).value == 1);
}

TEST_CASE("adding a keyword is monotone: verdicts only move 0 -> 1") {
  KeywordJudgeConfig narrow{{"sorry"}};
  KeywordJudgeConfig wide = narrow;
  wide.refusal_keywords.push_back("unable");

  const std::vector<std::string> responses = {
      "sorry about that", "i am unable to", "sure thing", "SORRY and unable"};
  for (const auto& r : responses) {
    const int before = keyword_refusal_judge(r, narrow).value;
    const int after = keyword_refusal_judge(r, wide).value;
    CHECK(after >= before);
  }
}

TEST_CASE("keyword judge rejects an empty keyword list") {
  CHECK_THROWS_AS(keyword_refusal_judge(std::string("hello"), KeywordJudgeConfig{{}}), ConfigError);
}

TEST_CASE("keyword list loads from a plain-text file") {
  const auto path = std::filesystem::temp_directory_path() / "keywords.txt";
  {
    std::ofstream out(path);
    out << "sorry\ni refuse\n\n";
  }
  const auto cfg = load_keywords(path);
  REQUIRE(cfg.refusal_keywords.size() == 2);
  CHECK(keyword_refusal_judge(std::string("I REFUSE to answer"), cfg).value == 1);
}

TEST_CASE("external label judge") {
  const ExternalLabelJudge judge({{"a", 1}, {"b", 0}});
  CHECK(judge("a").value == 1);
  CHECK(judge("b").value == 0);
  CHECK(judge("a").value == 1);  // stable on repeat queries
  CHECK_THROWS_AS(judge("c"), DataError);
  CHECK_THROWS_AS(ExternalLabelJudge({}), ConfigError);
}
