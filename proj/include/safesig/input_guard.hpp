#pragma once

#include <cstdint>
#include <vector>

#include "safesig/backend.hpp"
#include "safesig/judge.hpp"
#include "safesig/landscape.hpp"
#include "safesig/types.hpp"

namespace safesig::input_guard {

struct GradientCuffConfig {
  int inference_count = 8;       // N independent inferences per loss evaluation
  double stage1_cutoff = 0.5;    // flag when the non-refusal loss falls below this
  double gradient_threshold = 0.0;  // eta; typically calibrated on benign scores
  landscape::ZooConfig zoo = {0.5, 16, 0};
  double perturb_scale = 1.0;    // scales the broadcast offsets probed in stage 2
};

struct HighlighterConfig {
  TokenSequence affirmation;   // y_a
  double top_percent = 25.0;   // Q in (0, 100]
  double shrink = 0.25;        // gamma in [0, 1)

  // "Sure, I'd like to help you with this." tokenized one word per token;
  // ids are assigned round-robin into the backend vocabulary.
  static HighlighterConfig defaults(int vocab_size);
};

// Empirical non-refusal rate over N inferences: 1 - mean(refusal indicator).
// The judge convention is refusal = verdict 1, so benign prompts score near
// 1 and reliably refused prompts score 0.
double non_refusal_loss(const TokenSequence& x, const Backend& backend,
                        const judge::JudgeFn& judge, int inference_count, std::uint64_t seed);
double non_refusal_loss(const Matrix& embedding, const Backend& backend,
                        const judge::JudgeFn& judge, int inference_count, std::uint64_t seed);

struct CuffResult {
  bool flagged = false;
  int stage = 1;
  double statistic = 0.0;  // stage 1: the loss value; stage 2: estimated gradient norm
};

// Two-stage detection: flag when the non-refusal loss is below the cutoff,
// otherwise flag when the zeroth-order gradient norm of the loss over
// broadcast embedding offsets exceeds the threshold. The stage-1 evaluation
// doubles as the estimator's base point, so a full run costs exactly
// N * (P + 1) generations.
CuffResult gradient_cuff_detect(const TokenSequence& x, const Backend& backend,
                                const judge::JudgeFn& judge, const GradientCuffConfig& cfg,
                                std::uint64_t seed);

// -log p(y_a | x); nonnegative.
double affirmation_loss(const TokenSequence& x, const HighlighterConfig& cfg,
                        const Backend& backend);

enum class GradientPath { Auto, Analytic, FiniteDifference };

// Per-token gradient norms of the affirmation loss with respect to each
// row of the context embedding.
std::vector<double> token_influence(const TokenSequence& x, const HighlighterConfig& cfg,
                                    const Backend& backend,
                                    GradientPath path = GradientPath::Auto);

// Scales the rows of the ceil(Q% * |x|) highest-influence tokens by gamma;
// ties prefer the lower index.
Matrix soft_removal(const Matrix& embedding, const std::vector<double>& influences,
                    double top_percent, double shrink);

TokenSequence token_highlighter_respond(const TokenSequence& x, const HighlighterConfig& cfg,
                                        const Backend& backend, std::uint64_t seed);

double perplexity(const LogprobTrace& trace);

// Flags when exp(-mean logprob) exceeds the threshold.
JudgeVerdict ppl_filter(const TokenSequence& x, const Backend& backend, double threshold);

// Randomized-smoothing baseline: judge K randomly perturbed copies and take
// the majority vote of the refusal indicators (ties flag).
JudgeVerdict smoothing_detect(const TokenSequence& x, const Backend& backend,
                              const judge::JudgeFn& judge, int copies, double perturb_rate,
                              std::uint64_t seed, int vocab_hint = 0);

}  // namespace safesig::input_guard
