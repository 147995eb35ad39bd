#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "safesig/backend.hpp"
#include "safesig/landscape.hpp"
#include "safesig/types.hpp"

namespace safesig::output_detect {

struct SensitivityConfig {
  double sigma = 0.5;  // additive Gaussian noise scale in raw sample space
  int perturbations = 16;
  std::uint64_t seed = 0;
};

// Mean cosine similarity between the extracted features of a sample and of
// K Gaussian-perturbed copies. Higher means real (flatter representation).
double rigid_statistic(const Vector& sample, const Backend& extractor,
                       const SensitivityConfig& cfg);

enum class ReconMetric { L2, L1 };

// Distance between a sample and its reconstruction. Lower means
// AI-generated (the reconstructor models the generator's manifold).
double reconstruction_statistic(const Vector& sample, const Backend& reconstructor,
                                ReconMetric metric = ReconMetric::L2);

enum class TextStatKind { LogP, Rank, LogRank, Entropy };

TextStatKind text_stat_from_string(const std::string& name);

// logp   = mean log-likelihood          (higher => AI-generated)
// rank   = -mean token rank             (higher => AI-generated)
// logrank= -mean log token rank         (higher => AI-generated)
// entropy= mean predictive entropy      (orientation chosen by the caller)
double text_stat(const LogprobTrace& trace, TextStatKind kind);

// Token-substitution paraphraser; rho is the trainable parameter.
struct AttackPolicy {
  std::map<int, std::vector<int>> substitutions;
  double rho = 0.0;

  // Every token may be rewritten to any vocabulary token.
  static AttackPolicy uniform(int vocab_size, double rho);
};

TokenSequence paraphrase_attack(const TokenSequence& x, const AttackPolicy& policy,
                                std::uint64_t seed);

using Perturber = std::function<TokenSequence(const TokenSequence&, std::uint64_t)>;

inline Perturber make_perturber(const AttackPolicy& policy) {
  return [policy](const TokenSequence& x, std::uint64_t seed) {
    return paraphrase_attack(x, policy, seed);
  };
}

// mean-logprob(x) minus the mean over n perturbed rewrites; higher => AI.
double detectgpt_statistic(const TokenSequence& x, const Backend& backend,
                           const Perturber& perturber, int n_perturb, std::uint64_t seed);

// Logistic detector over the four text statistics.
struct LinearDetector {
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
  double bias = 0.0;
  bool trained = false;

  double score(const Eigen::Vector4d& features) const { return weights.dot(features) + bias; }
};

Eigen::Vector4d text_features(const LogprobTrace& trace);

std::string detector_to_json(const LinearDetector& d);
LinearDetector detector_from_json(const std::string& text);

struct AdversarialConfig {
  int rounds = 8;
  std::uint64_t seed = 0;
  double detector_lr = 0.5;
  int detector_steps = 200;
  double attacker_lr = 0.1;
  landscape::ZooConfig attacker_zoo = {0.05, 8, 0};
  bool attacker_frozen = false;  // freezing reduces to standard logistic training
  double early_stop_tol = 1e-3;
};

struct RoundRecord {
  int round = 0;
  double clean_auroc = 0.0;
  double attacked_auroc = 0.0;
  double rho = 0.0;
  double detector_loss = 0.0;
};

struct AdversarialResult {
  LinearDetector detector;
  AttackPolicy policy;
  std::vector<RoundRecord> history;
};

// Alternating min-max loop: the attacker ascends the evasion reward
// (1 - detector accuracy on paraphrased AI text) over rho by zeroth-order
// estimation; the detector descends the logistic loss on human, AI, and
// paraphrased-AI features. Stops early once the validation AUROC stops
// improving.
AdversarialResult adversarial_train(const LabeledDataset& data, const Backend& backend,
                                    AttackPolicy policy, LinearDetector detector,
                                    const AdversarialConfig& cfg);

std::string history_to_csv(const std::vector<RoundRecord>& history);

}  // namespace safesig::output_detect
