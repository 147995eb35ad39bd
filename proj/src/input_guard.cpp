#include "safesig/input_guard.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "safesig/rng.hpp"

namespace safesig::input_guard {
namespace {

constexpr std::uint64_t kInferenceTag = 0x1F0000;
constexpr std::uint64_t kProbeTag = 0xCF0000;
constexpr std::uint64_t kCopyTag = 0x5480;

double refusal_rate(const std::vector<int>& indicators) {
  return std::accumulate(indicators.begin(), indicators.end(), 0.0) /
         static_cast<double>(indicators.size());
}

}  // namespace

HighlighterConfig HighlighterConfig::defaults(int vocab_size) {
  HighlighterConfig cfg;
  const std::vector<std::string> words = {"sure", ",",    "i'd",  "like", "to",
                                          "help", "you",  "with", "this", "."};
  cfg.affirmation.texts = words;
  cfg.affirmation.vocab_size = std::max(vocab_size, 1);
  for (std::size_t i = 0; i < words.size(); ++i)
    cfg.affirmation.ids.push_back(static_cast<int>(i) % cfg.affirmation.vocab_size);
  return cfg;
}

double non_refusal_loss(const TokenSequence& x, const Backend& backend,
                        const judge::JudgeFn& judge, int inference_count, std::uint64_t seed) {
  if (inference_count < 1) throw ConfigError("non_refusal_loss: inference count must be >= 1");
  std::vector<int> refusals;
  refusals.reserve(static_cast<std::size_t>(inference_count));
  for (int i = 0; i < inference_count; ++i) {
    const auto response = backend.generate(x, rng::derive(seed, kInferenceTag + static_cast<std::uint64_t>(i)));
    refusals.push_back(judge(response).value);
  }
  return 1.0 - refusal_rate(refusals);
}

double non_refusal_loss(const Matrix& embedding, const Backend& backend,
                        const judge::JudgeFn& judge, int inference_count, std::uint64_t seed) {
  if (inference_count < 1) throw ConfigError("non_refusal_loss: inference count must be >= 1");
  std::vector<int> refusals;
  refusals.reserve(static_cast<std::size_t>(inference_count));
  for (int i = 0; i < inference_count; ++i) {
    const auto response = backend.respond_from_embedding(
        embedding, rng::derive(seed, kInferenceTag + static_cast<std::uint64_t>(i)));
    refusals.push_back(judge(response).value);
  }
  return 1.0 - refusal_rate(refusals);
}

CuffResult gradient_cuff_detect(const TokenSequence& x, const Backend& backend,
                                const judge::JudgeFn& judge, const GradientCuffConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.stage1_cutoff <= 0.0 || cfg.stage1_cutoff >= 1.0)
    throw ConfigError("gradient cuff: stage-1 cutoff must lie in (0,1)");
  const Matrix embedding = backend.embed(x);

  // Probe index 0 is the unperturbed evaluation; it serves both the stage-1
  // check and the estimator's base point.
  auto probe_seed = [seed](int index) {
    return rng::derive(seed, kProbeTag + static_cast<std::uint64_t>(index));
  };
  const double base_loss =
      non_refusal_loss(embedding, backend, judge, cfg.inference_count, probe_seed(0));
  if (base_loss < cfg.stage1_cutoff) return {true, 1, base_loss};

  int next_probe = 1;
  landscape::ScalarField field = [&](const Vector& w) {
    const Matrix probed = landscape::broadcast_perturb(embedding, w, cfg.perturb_scale);
    return non_refusal_loss(probed, backend, judge, cfg.inference_count, probe_seed(next_probe++));
  };

  landscape::ZooConfig zoo = cfg.zoo;
  zoo.seed = rng::derive(seed, kProbeTag);
  const auto estimate = landscape::zoo_gradient_with_base(
      field, Vector::Zero(embedding.cols()), base_loss, zoo);
  return {estimate.norm > cfg.gradient_threshold, 2, estimate.norm};
}

double affirmation_loss(const TokenSequence& x, const HighlighterConfig& cfg,
                        const Backend& backend) {
  return -backend.conditional_logprob(x, cfg.affirmation);
}

std::vector<double> token_influence(const TokenSequence& x, const HighlighterConfig& cfg,
                                    const Backend& backend, GradientPath path) {
  const bool analytic_ok = backend.has(Capability::AnalyticGradient);
  const bool fd_ok = backend.has(Capability::Embed) &&
                     backend.has(Capability::ConditionalLogprobFromEmbedding);
  if (path == GradientPath::Auto) {
    if (analytic_ok) path = GradientPath::Analytic;
    else if (fd_ok) path = GradientPath::FiniteDifference;
    else throw CapabilityError("token_influence: no gradient path available");
  }

  const Matrix embedding = backend.embed(x);
  std::vector<double> norms(static_cast<std::size_t>(embedding.rows()), 0.0);

  if (path == GradientPath::Analytic) {
    if (!analytic_ok) throw CapabilityError("token_influence: analytic gradient unavailable");
    const Matrix grad = -backend.conditional_logprob_gradient(embedding, cfg.affirmation);
    for (Eigen::Index j = 0; j < grad.rows(); ++j) norms[static_cast<std::size_t>(j)] = grad.row(j).norm();
    return norms;
  }

  if (!fd_ok) throw CapabilityError("token_influence: finite differences unavailable");
  const double h = 1e-5;
  Matrix probe = embedding;
  for (Eigen::Index j = 0; j < embedding.rows(); ++j) {
    double sq = 0.0;
    for (Eigen::Index k = 0; k < embedding.cols(); ++k) {
      const double orig = probe(j, k);
      probe(j, k) = orig + h;
      const double up = -backend.conditional_logprob_from_embedding(probe, cfg.affirmation);
      probe(j, k) = orig - h;
      const double down = -backend.conditional_logprob_from_embedding(probe, cfg.affirmation);
      probe(j, k) = orig;
      const double g = (up - down) / (2.0 * h);
      sq += g * g;
    }
    norms[static_cast<std::size_t>(j)] = std::sqrt(sq);
  }
  return norms;
}

Matrix soft_removal(const Matrix& embedding, const std::vector<double>& influences,
                    double top_percent, double shrink) {
  if (top_percent <= 0.0 || top_percent > 100.0)
    throw ConfigError("soft_removal: Q must lie in (0,100]");
  if (shrink < 0.0 || shrink >= 1.0) throw ConfigError("soft_removal: gamma must lie in [0,1)");
  if (influences.size() != static_cast<std::size_t>(embedding.rows()))
    throw DataError("soft_removal: influence list length must match token count");

  const auto rows = static_cast<std::size_t>(embedding.rows());
  if (rows == 0) return embedding;
  const auto keep = static_cast<std::size_t>(std::min<double>(
      static_cast<double>(rows),
      std::ceil(top_percent * static_cast<double>(rows) / 100.0 - 1e-12)));

  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return influences[a] > influences[b]; });

  Matrix out = embedding;
  for (std::size_t i = 0; i < keep; ++i)
    out.row(static_cast<Eigen::Index>(order[i])) *= shrink;
  return out;
}

TokenSequence token_highlighter_respond(const TokenSequence& x, const HighlighterConfig& cfg,
                                        const Backend& backend, std::uint64_t seed) {
  const Matrix embedding = backend.embed(x);
  const auto influences = token_influence(x, cfg, backend);
  const Matrix attenuated = soft_removal(embedding, influences, cfg.top_percent, cfg.shrink);
  return backend.respond_from_embedding(attenuated, seed);
}

double perplexity(const LogprobTrace& trace) {
  if (trace.empty()) throw DataError("perplexity: empty trace");
  const double mean = std::accumulate(trace.logprobs.begin(), trace.logprobs.end(), 0.0) /
                      static_cast<double>(trace.logprobs.size());
  return std::exp(-mean);
}

JudgeVerdict ppl_filter(const TokenSequence& x, const Backend& backend, double threshold) {
  if (x.empty()) throw DataError("ppl_filter: empty sequence");
  const double ppl = perplexity(backend.logprob_trace(x));
  return {ppl > threshold ? 1 : 0, "ppl"};
}

JudgeVerdict smoothing_detect(const TokenSequence& x, const Backend& backend,
                              const judge::JudgeFn& judge, int copies, double perturb_rate,
                              std::uint64_t seed, int vocab_hint) {
  if (copies < 1) throw ConfigError("smoothing_detect: need at least one copy");
  if (perturb_rate < 0.0 || perturb_rate > 1.0)
    throw ConfigError("smoothing_detect: perturb rate must lie in [0,1]");
  const int vocab = vocab_hint > 0 ? vocab_hint : x.vocab_size;
  if (vocab < 1) throw DataError("smoothing_detect: unknown vocabulary size");

  int refusals = 0;
  for (int k = 0; k < copies; ++k) {
    rng::Stream stream(rng::derive(seed, kCopyTag + static_cast<std::uint64_t>(k)));
    TokenSequence copy = x;
    for (std::size_t j = 0; j < copy.size(); ++j) {
      if (stream.next_unit() < perturb_rate) {
        const int id = static_cast<int>(stream.next_u64() % static_cast<std::uint64_t>(vocab));
        copy.ids[j] = id;
        copy.texts[j] = "<" + std::to_string(id) + ">";
      }
    }
    copy.vocab_size = std::max(copy.vocab_size, vocab);
    const auto response =
        backend.generate(copy, rng::derive(seed, kInferenceTag + static_cast<std::uint64_t>(k)));
    refusals += judge(response).value;
  }
  return {2 * refusals >= copies ? 1 : 0, "smoothing-majority"};
}

}  // namespace safesig::input_guard
