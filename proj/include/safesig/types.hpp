#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace safesig {

// Error taxonomy shared by the library and the CLI exit-code contract.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A prompt or response as vocabulary ids plus surface token strings.
// Token strings are kept alongside ids so rule-based judges can run
// without a detokenizer.
struct TokenSequence {
  std::vector<int> ids;
  std::vector<std::string> texts;
  int vocab_size = 0;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  void validate() const {
    if (ids.size() != texts.size())
      throw DataError("TokenSequence: ids and texts differ in length");
    if (vocab_size < 0) throw DataError("TokenSequence: negative vocab_size");
    for (int id : ids)
      if (id < 0 || id >= vocab_size)
        throw DataError("TokenSequence: id " + std::to_string(id) +
                        " outside vocabulary of size " + std::to_string(vocab_size));
  }

  // Surface form: token texts joined with single spaces.
  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (i) out += ' ';
      out += texts[i];
    }
    return out;
  }

  bool operator==(const TokenSequence& o) const = default;
};

// Per-token log-likelihood (nats, <= 0), 1-based rank of the realized
// token, and predictive entropy (nats, >= 0) under a scoring model.
struct LogprobTrace {
  std::vector<double> logprobs;
  std::vector<double> ranks;
  std::vector<double> entropies;

  std::size_t size() const { return logprobs.size(); }
  bool empty() const { return logprobs.empty(); }

  void validate() const {
    if (logprobs.size() != ranks.size() || logprobs.size() != entropies.size())
      throw DataError("LogprobTrace: list lengths differ");
    for (double r : ranks)
      if (r < 1.0) throw DataError("LogprobTrace: rank below 1");
    for (double h : entropies)
      if (h < 0.0) throw DataError("LogprobTrace: negative entropy");
  }

  bool operator==(const LogprobTrace& o) const = default;
};

enum class PayloadKind { Prompt, Text, Features };

inline const char* to_string(PayloadKind k) {
  switch (k) {
    case PayloadKind::Prompt: return "prompt";
    case PayloadKind::Text: return "text";
    case PayloadKind::Features: return "features";
  }
  return "?";
}

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

// One labeled instance. label == 1 always means the alternative
// hypothesis (unsafe input / AI-generated / safety-compromising update).
struct LabeledSample {
  std::string id;
  PayloadKind kind = PayloadKind::Prompt;
  std::variant<TokenSequence, Vector> payload;
  int label = 0;
  Split split = Split::Train;

  const TokenSequence& tokens() const {
    if (const auto* t = std::get_if<TokenSequence>(&payload)) return *t;
    throw DataError("sample '" + id + "' carries no token payload");
  }
  const Vector& features() const {
    if (const auto* v = std::get_if<Vector>(&payload)) return *v;
    throw DataError("sample '" + id + "' carries no feature payload");
  }
};

struct LabeledDataset {
  std::vector<LabeledSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  auto begin() const { return samples.begin(); }
  auto end() const { return samples.end(); }
};

// Binary judge outcome plus the rule that produced it.
struct JudgeVerdict {
  int value = 0;  // 1 under the judged hypothesis
  std::string rationale_tag;
};

}  // namespace safesig
