#include "safesig/fixtures.hpp"

#include <cmath>

#include "safesig/rng.hpp"

namespace safesig::fixtures {
namespace {

// Input-fixture vocabulary blocks, by margin along the harm direction.
// The strong-harm block dominates the vocabulary so that uniform random
// token substitution (the smoothing baseline) knocks jailbreak prompts
// back into the refusal region, while benign prompts stay deep in
// compliance.
constexpr int kBenignBlock = 0;       // margin near -4
constexpr int kBenignCount = 12;
constexpr int kMildBlock = 12;        // margin near +0.5
constexpr int kMildCount = 6;
constexpr int kSuppressorBlock = 18;  // margin near -1.9
constexpr int kSuppressorCount = 6;
constexpr int kStrongBlock = 24;      // margin near +8.2
constexpr int kStrongCount = 40;
constexpr int kInputVocab = 64;
constexpr int kInputDim = 64;
constexpr int kPromptLen = 8;

TokenSequence refusal_phrase(int vocab_size) {
  TokenSequence p;
  p.texts = {"sorry", ",", "i", "cannot", "comply"};
  for (std::size_t i = 0; i < p.texts.size(); ++i)
    p.ids.push_back(vocab_size + static_cast<int>(i));
  p.vocab_size = vocab_size + static_cast<int>(p.texts.size());
  return p;
}

TokenSequence prompt_from_ids(std::vector<int> ids, int vocab_size,
                              const std::vector<std::string>& texts) {
  TokenSequence t;
  for (int id : ids) t.texts.push_back(texts[static_cast<std::size_t>(id)]);
  t.ids = std::move(ids);
  t.vocab_size = vocab_size;
  return t;
}

}  // namespace

LabeledDataset InputFixture::combined() const {
  LabeledDataset all = benign;
  for (const auto& s : jailbreak.samples) all.samples.push_back(s);
  return all;
}

InputFixture make_input_fixture(int benign_count, int jailbreak_count, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, 0xF1D7));

  ToyModelSpec spec;
  spec.vocab_size = kInputVocab;
  spec.margin_sharpness = 6.0;
  spec.response_length = 8;
  spec.harm_direction = stream.sphere_vector(kInputDim);
  spec.refusal_phrase = refusal_phrase(kInputVocab);

  // Token embeddings: a block-dependent margin along the harm direction
  // plus a small orthogonal part.
  spec.embedding.resize(kInputVocab, kInputDim);
  spec.vocab_texts.clear();
  const Vector h = spec.harm_direction;
  auto block_margin = [&](int id) {
    if (id < kBenignBlock + kBenignCount) return -4.0 + 0.4 * (stream.next_unit() - 0.5);
    if (id < kMildBlock + kMildCount) return 0.5 + 0.05 * (stream.next_unit() - 0.5);
    if (id < kSuppressorBlock + kSuppressorCount) return -1.9 + 0.05 * (stream.next_unit() - 0.5);
    return 8.2 + 0.4 * (stream.next_unit() - 0.5);
  };
  for (int id = 0; id < kInputVocab; ++id) {
    const double mu = block_margin(id);
    Vector perp = stream.gaussian_vector(kInputDim);
    perp -= perp.dot(h) * h;
    perp *= 0.5 / std::max(perp.norm(), 1e-12);
    spec.embedding.row(id) = (mu * h + perp).transpose();
    spec.vocab_texts.push_back("tok" + std::to_string(id));
  }

  spec.output_weights = Matrix::Zero(kInputDim, kInputVocab);
  for (Eigen::Index i = 0; i < spec.output_weights.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.output_weights.cols(); ++j)
      spec.output_weights(i, j) = 0.4 * stream.next_gaussian();

  InputFixture fx;
  fx.spec = spec;
  ToyModel model(spec);

  auto margin_of = [&](const std::vector<int>& ids) {
    double total = 0.0;
    for (int id : ids) total += spec.embedding.row(id).dot(h);
    return total / static_cast<double>(ids.size());
  };

  for (int i = 0; i < benign_count; ++i) {
    std::vector<int> ids;
    do {
      ids.clear();
      for (int j = 0; j < kPromptLen; ++j)
        ids.push_back(kBenignBlock + static_cast<int>(stream.next_u64() % kBenignCount));
    } while (margin_of(ids) > -3.0);
    LabeledSample s;
    s.id = "benign-" + std::to_string(i);
    s.kind = PayloadKind::Prompt;
    s.label = 0;
    s.split = i % 2 == 0 ? Split::Test : Split::Val;
    s.payload = prompt_from_ids(std::move(ids), kInputVocab, spec.vocab_texts);
    fx.benign.samples.push_back(std::move(s));
  }

  // Jailbreak prompts: two suppressors up front mask six mildly harmful
  // tokens; the net margin lands just inside the compliance region.
  for (int i = 0; i < jailbreak_count; ++i) {
    std::vector<int> ids;
    do {
      ids.clear();
      ids.push_back(kSuppressorBlock + static_cast<int>(stream.next_u64() % kSuppressorCount));
      ids.push_back(kSuppressorBlock + static_cast<int>(stream.next_u64() % kSuppressorCount));
      for (int j = 2; j < kPromptLen; ++j)
        ids.push_back(kMildBlock + static_cast<int>(stream.next_u64() % kMildCount));
    } while (margin_of(ids) < -0.3 || margin_of(ids) > -0.05);
    LabeledSample s;
    s.id = "jailbreak-" + std::to_string(i);
    s.kind = PayloadKind::Prompt;
    s.label = 1;
    s.split = Split::Test;
    s.payload = prompt_from_ids(std::move(ids), kInputVocab, spec.vocab_texts);
    fx.jailbreak.samples.push_back(std::move(s));
  }
  return fx;
}

TextFixture make_text_fixture(int per_class, double attack_rho, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, 0x7E87));

  constexpr int vocab = 48;
  constexpr int dim = 16;
  constexpr int favored = 12;   // tokens the model likes to emit
  constexpr int text_len = 14;

  ToyModelSpec spec;
  spec.vocab_size = vocab;
  spec.margin_sharpness = 6.0;
  spec.response_length = text_len;
  spec.refusal_phrase = refusal_phrase(vocab);

  // A content direction carries the signal: favored tokens push the state
  // along it, and their output weights reward staying there. Every token
  // sits deep in the compliance region so sampling never refuses.
  Vector content = stream.sphere_vector(dim);
  Vector harm = stream.gaussian_vector(dim);
  harm -= harm.dot(content) * content;
  harm.normalize();
  spec.harm_direction = harm;

  spec.embedding.resize(vocab, dim);
  spec.vocab_texts.clear();
  for (int id = 0; id < vocab; ++id) {
    const bool is_favored = id < favored;
    Vector perp = stream.gaussian_vector(dim);
    perp -= perp.dot(content) * content;
    perp -= perp.dot(harm) * harm;
    perp *= (is_favored ? 0.3 : 1.4) / std::max(perp.norm(), 1e-12);
    const double along = is_favored ? 1.0 : -0.25;
    spec.embedding.row(id) = (along * content + perp - 3.0 * harm).transpose();
    spec.vocab_texts.push_back("tok" + std::to_string(id));
  }

  // Output weights: logits_k = beta_k * <content, state>; favored tokens
  // get large beta so a content-aligned state concentrates the softmax.
  spec.output_weights = Matrix::Zero(dim, vocab);
  for (int id = 0; id < vocab; ++id) {
    const double beta = id < favored ? 2.4 + 0.2 * stream.next_unit() : -1.2 + 0.3 * stream.next_unit();
    spec.output_weights.col(id) = beta * content;
  }

  TextFixture fx;
  fx.spec = spec;
  fx.attack = output_detect::AttackPolicy::uniform(vocab, attack_rho);

  ToyModel model(spec);

  // AI text: sampled by the model from a content-aligned context.
  TokenSequence context;
  context.ids = {0, 1};
  context.texts = {spec.vocab_texts[0], spec.vocab_texts[1]};
  context.vocab_size = vocab;

  auto split_of = [](int i) {
    const int r = i % 10;
    if (r < 6) return Split::Train;
    if (r < 8) return Split::Val;
    return Split::Test;
  };

  for (int i = 0; i < per_class; ++i) {
    TokenSequence ai = model.generate(context, stream.next_u64());
    LabeledSample s;
    s.id = "ai-" + std::to_string(i);
    s.kind = PayloadKind::Text;
    s.label = 1;
    s.split = split_of(i);
    s.payload = std::move(ai);
    fx.data.samples.push_back(std::move(s));
  }
  for (int i = 0; i < per_class; ++i) {
    TokenSequence human;
    human.vocab_size = vocab;
    for (int t = 0; t < text_len; ++t) {
      const int id = static_cast<int>(stream.next_u64() % vocab);
      human.ids.push_back(id);
      human.texts.push_back(spec.vocab_texts[static_cast<std::size_t>(id)]);
    }
    LabeledSample s;
    s.id = "human-" + std::to_string(i);
    s.kind = PayloadKind::Text;
    s.label = 0;
    s.split = split_of(i);
    s.payload = std::move(human);
    fx.data.samples.push_back(std::move(s));
  }
  return fx;
}

FeatureFixture make_sensitivity_fixture(int per_class, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, 0x51D));
  constexpr int dim = 32;
  constexpr int rank = 8;

  Matrix basis(dim, rank);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < rank; ++j) basis(i, j) = stream.next_gaussian();

  FeatureFixture fx;
  fx.backend = std::make_shared<ProjectionBackend>(basis);
  const Matrix& q = fx.backend->orthonormal_basis();

  for (int i = 0; i < per_class; ++i) {
    // Real: strong in-span energy, so extractor noise barely moves it.
    const Vector real = q * (2.0 * stream.gaussian_vector(rank));
    LabeledSample s;
    s.id = "real-" + std::to_string(i);
    s.kind = PayloadKind::Features;
    s.label = 0;
    s.split = Split::Test;
    s.payload = real;
    fx.data.samples.push_back(std::move(s));

    // Generated: weak in-span component; most energy is invisible to the
    // extractor, so the same noise swings the cosine much further.
    Vector off = stream.gaussian_vector(dim);
    off -= q * (q.transpose() * off);
    const Vector fake = q * (0.45 * stream.gaussian_vector(rank)) + 1.2 * off;
    LabeledSample f;
    f.id = "fake-" + std::to_string(i);
    f.kind = PayloadKind::Features;
    f.label = 1;
    f.split = Split::Test;
    f.payload = fake;
    fx.data.samples.push_back(std::move(f));
  }
  return fx;
}

FeatureFixture make_reconstruction_fixture(int per_class, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, 0x2EC0));
  constexpr int dim = 32;
  constexpr int rank = 8;

  Matrix basis(dim, rank);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < rank; ++j) basis(i, j) = stream.next_gaussian();

  FeatureFixture fx;
  fx.backend = std::make_shared<ProjectionBackend>(basis);
  const Matrix& q = fx.backend->orthonormal_basis();

  for (int i = 0; i < per_class; ++i) {
    // Generated samples live on the decoder manifold up to tiny noise.
    const Vector fake = q * stream.gaussian_vector(rank) + 0.05 * stream.gaussian_vector(dim);
    LabeledSample f;
    f.id = "fake-" + std::to_string(i);
    f.kind = PayloadKind::Features;
    f.label = 1;
    f.split = Split::Test;
    f.payload = fake;
    fx.data.samples.push_back(std::move(f));

    const Vector real = q * stream.gaussian_vector(rank) + 1.0 * stream.gaussian_vector(dim);
    LabeledSample s;
    s.id = "real-" + std::to_string(i);
    s.kind = PayloadKind::Features;
    s.label = 0;
    s.split = Split::Test;
    s.payload = real;
    fx.data.samples.push_back(std::move(s));
  }
  return fx;
}

}  // namespace safesig::fixtures
