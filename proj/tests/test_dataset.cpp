#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "safesig/dataset.hpp"

using namespace safesig;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

LabeledDataset uniform_prompts(int n, int label = 0) {
  LabeledDataset ds;
  for (int i = 0; i < n; ++i) {
    LabeledSample s;
    s.id = "p" + std::to_string(i);
    s.kind = PayloadKind::Prompt;
    s.label = label;
    TokenSequence t;
    t.ids = {i % 3, (i + 1) % 3};
    t.texts = {"a", "b"};
    t.vocab_size = 3;
    s.payload = t;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace

TEST_CASE("load_dataset parses well-formed records in order") {
  const auto p = temp_file("ds_ok.jsonl",
      R"({"id":"a1","kind":"prompt","ids":[0,1],"tokens":["hi","there"],"label":0,"split":"train"})" "\n"
      R"({"id":"a2","kind":"text","ids":[2],"label":1,"split":"val"})" "\n"
      R"({"id":"a3","kind":"features","features":[0.5,-1.0],"label":1,"split":"test"})" "\n");
  const auto ds = load_dataset(p);
  REQUIRE(ds.size() == 3);
  CHECK(ds.samples[0].id == "a1");
  CHECK(ds.samples[0].tokens().texts[1] == "there");
  CHECK(ds.samples[1].kind == PayloadKind::Text);
  CHECK(ds.samples[2].features()[1] == -1.0);
  CHECK(ds.samples[2].split == Split::Test);
}

TEST_CASE("load_dataset reports the offending line") {
  SUBCASE("missing label") {
    const auto p = temp_file("ds_nolabel.jsonl",
        R"({"id":"a1","kind":"prompt","ids":[0],"label":0,"split":"train"})" "\n"
        R"({"id":"a2","kind":"prompt","ids":[1],"split":"train"})" "\n");
    CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("line 2"), DataError);
  }
  SUBCASE("duplicate id") {
    const auto p = temp_file("ds_dup.jsonl",
        R"({"id":"a1","kind":"prompt","ids":[0],"label":0,"split":"train"})" "\n"
        R"({"id":"a1","kind":"prompt","ids":[1],"label":0,"split":"train"})" "\n");
    CHECK_THROWS_WITH_AS(load_dataset(p), doctest::Contains("duplicate id"), DataError);
  }
  SUBCASE("label outside {0,1}") {
    const auto p = temp_file("ds_badlabel.jsonl",
        R"({"id":"a1","kind":"prompt","ids":[0],"label":2,"split":"train"})" "\n");
    CHECK_THROWS_AS(load_dataset(p), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.jsonl"), DataError);
  }
  SUBCASE("kind mismatch") {
    const auto p = temp_file("ds_kind.jsonl",
        R"({"id":"a1","kind":"text","ids":[0],"label":0,"split":"train"})" "\n");
    CHECK_THROWS_AS(load_dataset(p, PayloadKind::Prompt), DataError);
  }
}

TEST_CASE("dataset round-trips through save and load") {
  auto ds = uniform_prompts(5);
  ds.samples[2].label = 1;
  const fs::path p = fs::temp_directory_path() / "ds_roundtrip.jsonl";
  save_dataset(ds, p);
  const auto back = load_dataset(p);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].tokens().ids == ds.samples[i].tokens().ids);
    CHECK(back.samples[i].tokens().texts == ds.samples[i].tokens().texts);
  }
}

TEST_CASE("split_dataset forced rounding and degenerate fractions") {
  const auto ds = uniform_prompts(10);
  const auto parts = split_dataset(ds, {0.8, 0.1, 0.1}, 7);
  CHECK(parts[0].size() == 8);
  CHECK(parts[1].size() == 1);
  CHECK(parts[2].size() == 1);

  const auto all_first = split_dataset(ds, {1.0, 0.0, 0.0}, 3);
  CHECK(all_first[0].size() == 10);
  CHECK(all_first[1].size() == 0);
  CHECK(all_first[2].size() == 0);
}

TEST_CASE("split_dataset is deterministic, disjoint, and exhaustive") {
  auto ds = uniform_prompts(23);
  for (int i = 0; i < 9; ++i) ds.samples[static_cast<std::size_t>(i)].label = 1;

  for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
    const auto a = split_dataset(ds, {0.6, 0.2, 0.2}, seed);
    const auto b = split_dataset(ds, {0.6, 0.2, 0.2}, seed);
    std::set<std::string> seen;
    std::size_t total = 0;
    for (int k = 0; k < 3; ++k) {
      REQUIRE(a[static_cast<std::size_t>(k)].size() == b[static_cast<std::size_t>(k)].size());
      for (std::size_t i = 0; i < a[static_cast<std::size_t>(k)].size(); ++i)
        CHECK(a[static_cast<std::size_t>(k)].samples[i].id == b[static_cast<std::size_t>(k)].samples[i].id);
      for (const auto& s : a[static_cast<std::size_t>(k)]) {
        CHECK(seen.insert(s.id).second);  // disjoint
        ++total;
      }
    }
    CHECK(total == ds.size());  // exhaustive
  }
}

TEST_CASE("split_dataset keeps label proportions within one sample per stratum") {
  auto ds = uniform_prompts(40);
  for (int i = 0; i < 20; ++i) ds.samples[static_cast<std::size_t>(i)].label = 1;
  const auto parts = split_dataset(ds, {0.5, 0.25, 0.25}, 11);
  for (int k = 0; k < 3; ++k) {
    long long pos = 0, neg = 0;
    for (const auto& s : parts[static_cast<std::size_t>(k)]) (s.label == 1 ? pos : neg)++;
    const double want = (k == 0 ? 0.5 : 0.25) * 20;
    CHECK(std::abs(pos - want) <= 1.0);
    CHECK(std::abs(neg - want) <= 1.0);
  }
}

TEST_CASE("split_dataset rejects bad input") {
  const auto ds = uniform_prompts(4);
  CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.6, -0.1}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}, 1), ConfigError);
  CHECK_THROWS_AS(split_dataset(LabeledDataset{}, {1.0, 0.0, 0.0}, 1), DataError);
}
