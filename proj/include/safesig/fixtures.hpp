#pragma once

#include <cstdint>
#include <memory>

#include "safesig/backend.hpp"
#include "safesig/dataset.hpp"
#include "safesig/output_detect.hpp"
#include "safesig/types.hpp"

namespace safesig::fixtures {

// Desk-scale stand-in for an aligned LLM facing benign and jailbreak
// prompts. Benign prompts sit deep in the compliance region (margin <= -3,
// flat landscape); jailbreak prompts sit just below the refusal boundary
// (margin in [-0.3, -0.05]), so row-wise perturbation tips them into
// refusal. The two compliance-forcing tokens of each jailbreak prompt
// occupy positions 0 and 1.
struct InputFixture {
  ToyModelSpec spec;
  LabeledDataset benign;     // label 0
  LabeledDataset jailbreak;  // label 1

  LabeledDataset combined() const;
};

InputFixture make_input_fixture(int benign_count, int jailbreak_count, std::uint64_t seed);

// Toy scoring model with a peaked next-token distribution plus matched
// human (uniform random tokens) and AI (model-sampled) text corpora.
struct TextFixture {
  ToyModelSpec spec;
  LabeledDataset data;  // human label 0, AI label 1, with train/val/test splits
  output_detect::AttackPolicy attack;  // uniform substitution policy
};

TextFixture make_text_fixture(int per_class, double attack_rho, std::uint64_t seed);

// Feature-space fixture built on a projection backend: one class lies in
// the basis span, the other carries an out-of-span component.
struct FeatureFixture {
  std::shared_ptr<ProjectionBackend> backend;
  LabeledDataset data;
};

// Real samples (label 0) live on the extractor's manifold; generated ones
// (label 1) sit off it and lose more cosine similarity under noise.
FeatureFixture make_sensitivity_fixture(int per_class, std::uint64_t seed);

// Generated samples (label 1) reconstruct through the generator's
// autoencoder almost exactly; real ones (label 0) do not.
FeatureFixture make_reconstruction_fixture(int per_class, std::uint64_t seed);

}  // namespace safesig::fixtures
