#include "safesig/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "safesig/rng.hpp"

namespace safesig {
namespace {

using nlohmann::json;

PayloadKind parse_kind(const std::string& s, int line) {
  if (s == "prompt") return PayloadKind::Prompt;
  if (s == "text") return PayloadKind::Text;
  if (s == "features") return PayloadKind::Features;
  throw DataError("line " + std::to_string(line) + ": unknown kind '" + s + "'");
}

Split parse_split(const std::string& s, int line) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw DataError("line " + std::to_string(line) + ": unknown split '" + s + "'");
}

LabeledSample parse_record(const json& rec, int line) {
  if (!rec.is_object()) throw DataError("line " + std::to_string(line) + ": record is not an object");
  for (const char* field : {"id", "kind", "label", "split"})
    if (!rec.contains(field))
      throw DataError("line " + std::to_string(line) + ": record missing \"" + field + "\"");

  LabeledSample s;
  s.id = rec.at("id").get<std::string>();
  s.kind = parse_kind(rec.at("kind").get<std::string>(), line);

  const int label = rec.at("label").get<int>();
  if (label != 0 && label != 1)
    throw DataError("line " + std::to_string(line) + ": label " + std::to_string(label) +
                    " outside {0,1}");
  s.label = label;
  s.split = parse_split(rec.at("split").get<std::string>(), line);

  const bool has_tokens = rec.contains("tokens") || rec.contains("ids");
  const bool has_features = rec.contains("features");
  if (has_tokens == has_features)
    throw DataError("line " + std::to_string(line) +
                    ": exactly one of the token/feature payload groups must be present");

  if (s.kind == PayloadKind::Features) {
    if (!has_features)
      throw DataError("line " + std::to_string(line) + ": feature record missing \"features\"");
    const auto& arr = rec.at("features");
    Vector v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    if (v.size() < 1) throw DataError("line " + std::to_string(line) + ": empty feature vector");
    if (!v.allFinite()) throw DataError("line " + std::to_string(line) + ": non-finite feature");
    s.payload = std::move(v);
    return s;
  }

  if (!rec.contains("ids"))
    throw DataError("line " + std::to_string(line) + ": token record missing \"ids\"");
  TokenSequence t;
  for (const auto& v : rec.at("ids")) t.ids.push_back(v.get<int>());
  if (rec.contains("tokens")) {
    for (const auto& v : rec.at("tokens")) t.texts.push_back(v.get<std::string>());
    if (t.texts.size() != t.ids.size())
      throw DataError("line " + std::to_string(line) + ": ids and tokens differ in length");
  } else {
    for (int id : t.ids) t.texts.push_back("<" + std::to_string(id) + ">");
  }
  int max_id = -1;
  for (int id : t.ids) {
    if (id < 0) throw DataError("line " + std::to_string(line) + ": negative token id");
    max_id = std::max(max_id, id);
  }
  t.vocab_size = max_id + 1;
  s.payload = std::move(t);
  return s;
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& path,
                            std::optional<PayloadKind> expected_kind) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  LabeledDataset ds;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    LabeledSample s = parse_record(rec, lineno);
    if (!seen.insert(s.id).second)
      throw DataError("line " + std::to_string(lineno) + ": duplicate id '" + s.id + "'");
    if (expected_kind && s.kind != *expected_kind)
      throw DataError("line " + std::to_string(lineno) + ": expected kind '" +
                      std::string(to_string(*expected_kind)) + "', got '" + to_string(s.kind) + "'");
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path.string());
  for (const auto& s : ds.samples) {
    json rec;
    rec["id"] = s.id;
    rec["kind"] = to_string(s.kind);
    rec["label"] = s.label;
    rec["split"] = to_string(s.split);
    if (s.kind == PayloadKind::Features) {
      rec["features"] = std::vector<double>(s.features().data(),
                                            s.features().data() + s.features().size());
    } else {
      rec["ids"] = s.tokens().ids;
      rec["tokens"] = s.tokens().texts;
    }
    out << rec.dump() << '\n';
  }
}

std::array<LabeledDataset, 3> split_dataset(const LabeledDataset& ds,
                                            const std::array<double, 3>& fractions,
                                            std::uint64_t seed) {
  for (double f : fractions)
    if (f < 0.0) throw ConfigError("split fraction must be nonnegative");
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (ds.empty()) throw DataError("cannot split an empty dataset");

  std::array<LabeledDataset, 3> out;
  for (int label = 0; label <= 1; ++label) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.samples[i].label == label) idx.push_back(i);
    if (idx.empty()) continue;

    // Fisher-Yates driven by the counter stream.
    rng::Stream stream(rng::derive(seed, 0x5A11D000 + static_cast<std::uint64_t>(label)));
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(stream.next_u64() % i);
      std::swap(idx[i - 1], idx[j]);
    }

    // Largest-remainder allocation; remainder ties go to the earlier split.
    const auto n = static_cast<double>(idx.size());
    std::array<std::size_t, 3> count;
    std::array<double, 3> remainder;
    std::size_t assigned = 0;
    for (int k = 0; k < 3; ++k) {
      const double want = fractions[static_cast<std::size_t>(k)] * n;
      count[static_cast<std::size_t>(k)] = static_cast<std::size_t>(std::floor(want + 1e-12));
      remainder[static_cast<std::size_t>(k)] = want - std::floor(want + 1e-12);
      assigned += count[static_cast<std::size_t>(k)];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)]; });
    for (int k = 0; assigned < idx.size(); ++k)
      ++count[static_cast<std::size_t>(order[static_cast<std::size_t>(k % 3)])], ++assigned;

    std::size_t pos = 0;
    for (int k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < count[static_cast<std::size_t>(k)]; ++c)
        out[static_cast<std::size_t>(k)].samples.push_back(ds.samples[idx[pos++]]);
  }

  return out;
}

}  // namespace safesig
