#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safesig/types.hpp"

namespace safesig {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

enum class Capability {
  Generate,
  RespondFromEmbedding,
  LogprobTrace,
  ConditionalLogprob,
  Embed,
  ExtractFeatures,
  Reconstruct,
  ConditionalLogprobFromEmbedding,
  AnalyticGradient,
};

// The generative-model contract every detector queries. Capabilities are
// declared at construction; undeclared ones fail fast with CapabilityError.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual bool has(Capability c) const = 0;

  virtual TokenSequence generate(const TokenSequence& context, std::uint64_t seed) const;
  virtual TokenSequence respond_from_embedding(const Matrix& embedding, std::uint64_t seed) const;
  virtual LogprobTrace logprob_trace(const TokenSequence& sequence) const;
  virtual double conditional_logprob(const TokenSequence& context,
                                     const TokenSequence& continuation) const;
  virtual Matrix embed(const TokenSequence& sequence) const;
  virtual Vector extract_features(const Vector& sample) const;
  virtual Vector reconstruct(const Vector& sample) const;

  // Log-likelihood of a continuation given a context embedding matrix, and
  // its gradient with respect to the context rows. Only closed-form
  // backends implement the gradient.
  virtual double conditional_logprob_from_embedding(const Matrix& context_embedding,
                                                    const TokenSequence& continuation) const;
  virtual Matrix conditional_logprob_gradient(const Matrix& context_embedding,
                                              const TokenSequence& continuation) const;

 protected:
  [[noreturn]] void missing(const char* what) const;
};

// Deterministic toy autoregressive model with a built-in refusal mechanism:
// the refusal branch fires with probability sigmoid(a * m(E)) where m(E) is
// the mean projection of the context embedding onto the harm direction;
// otherwise tokens are sampled from softmax(W^T state) with the state being
// the running mean of all embeddings seen so far.
struct ToyModelSpec {
  int vocab_size = 0;                    // V
  Matrix embedding;                      // V x d token embedding table
  Matrix output_weights;                 // d x V
  Vector harm_direction;                 // unit vector in R^d
  TokenSequence refusal_phrase;          // canned emission; ids may exceed V
  double margin_sharpness = 1.0;         // a > 0
  int response_length = 8;
  std::vector<std::string> vocab_texts;  // size V; defaults to "tok<k>"

  void validate() const;
};

class ToyModel final : public Backend {
 public:
  explicit ToyModel(ToyModelSpec spec);

  std::string name() const override { return "toy"; }
  bool has(Capability c) const override;

  TokenSequence generate(const TokenSequence& context, std::uint64_t seed) const override;
  TokenSequence respond_from_embedding(const Matrix& embedding, std::uint64_t seed) const override;
  LogprobTrace logprob_trace(const TokenSequence& sequence) const override;
  double conditional_logprob(const TokenSequence& context,
                             const TokenSequence& continuation) const override;
  Matrix embed(const TokenSequence& sequence) const override;
  double conditional_logprob_from_embedding(const Matrix& context_embedding,
                                            const TokenSequence& continuation) const override;
  Matrix conditional_logprob_gradient(const Matrix& context_embedding,
                                      const TokenSequence& continuation) const override;

  double margin(const Matrix& embedding) const;
  double refusal_probability(const Matrix& embedding) const;
  const ToyModelSpec& spec() const { return spec_; }

 private:
  ToyModelSpec spec_;
};

// Serves statistics recorded offline, keyed by sample id. The content-based
// Backend surface stays undeclared: querying it is a capability error.
class TraceBackend final : public Backend {
 public:
  struct Record {
    LogprobTrace trace;
    std::optional<Matrix> embedding;
    std::optional<Vector> features;
  };

  explicit TraceBackend(std::map<std::string, Record> records);

  std::string name() const override { return "trace"; }
  bool has(Capability) const override { return false; }

  const Record& record(const std::string& id) const;
  const LogprobTrace& trace_for(const std::string& id) const;
  const Matrix& embedding_for(const std::string& id) const;
  const Vector& features_for(const std::string& id) const;

 private:
  std::map<std::string, Record> records_;
};

// Feature extractor / reconstructor that orthogonally projects onto the
// span of a fixed basis. Backs the perturbation-sensitivity and
// reconstruction fixtures.
class ProjectionBackend final : public Backend {
 public:
  explicit ProjectionBackend(const Matrix& basis);  // D x k, orthonormalized internally

  std::string name() const override { return "projection"; }
  bool has(Capability c) const override {
    return c == Capability::ExtractFeatures || c == Capability::Reconstruct;
  }

  Vector extract_features(const Vector& sample) const override;
  Vector reconstruct(const Vector& sample) const override;

  const Matrix& orthonormal_basis() const { return q_; }

 private:
  Matrix q_;  // D x k with orthonormal columns
};

// Pass-through wrapper that counts queries per capability group. Used for
// the query-cost ledger of the mitigation methods.
class CountingBackend final : public Backend {
 public:
  explicit CountingBackend(std::shared_ptr<const Backend> inner) : inner_(std::move(inner)) {}

  std::string name() const override { return inner_->name(); }
  bool has(Capability c) const override { return inner_->has(c); }

  TokenSequence generate(const TokenSequence& c, std::uint64_t s) const override {
    ++generations_;
    return inner_->generate(c, s);
  }
  TokenSequence respond_from_embedding(const Matrix& e, std::uint64_t s) const override {
    ++generations_;
    return inner_->respond_from_embedding(e, s);
  }
  LogprobTrace logprob_trace(const TokenSequence& x) const override {
    ++logprob_queries_;
    return inner_->logprob_trace(x);
  }
  double conditional_logprob(const TokenSequence& c, const TokenSequence& y) const override {
    ++logprob_queries_;
    return inner_->conditional_logprob(c, y);
  }
  Matrix embed(const TokenSequence& x) const override { return inner_->embed(x); }
  Vector extract_features(const Vector& x) const override {
    ++feature_queries_;
    return inner_->extract_features(x);
  }
  Vector reconstruct(const Vector& x) const override {
    ++feature_queries_;
    return inner_->reconstruct(x);
  }
  double conditional_logprob_from_embedding(const Matrix& e,
                                            const TokenSequence& y) const override {
    ++logprob_queries_;
    return inner_->conditional_logprob_from_embedding(e, y);
  }
  Matrix conditional_logprob_gradient(const Matrix& e, const TokenSequence& y) const override {
    return inner_->conditional_logprob_gradient(e, y);
  }

  long long generations() const { return generations_; }
  long long logprob_queries() const { return logprob_queries_; }
  long long feature_queries() const { return feature_queries_; }
  void reset() { generations_ = logprob_queries_ = feature_queries_ = 0; }

 private:
  std::shared_ptr<const Backend> inner_;
  mutable std::atomic<long long> generations_{0};
  mutable std::atomic<long long> logprob_queries_{0};
  mutable std::atomic<long long> feature_queries_{0};
};

ToyModelSpec load_toy_spec(const std::filesystem::path& path);
void save_toy_spec(const ToyModelSpec& spec, const std::filesystem::path& path);
std::shared_ptr<TraceBackend> load_trace_backend(const std::filesystem::path& path);
void save_trace_file(const std::map<std::string, TraceBackend::Record>& records,
                     const std::filesystem::path& path);

// Dispatch on the "type" field of a backend spec document
// ("toy" | "trace" | "projection").
std::shared_ptr<Backend> load_backend(const std::filesystem::path& path);

}  // namespace safesig
