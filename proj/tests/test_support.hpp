#pragma once

#include "safesig/backend.hpp"
#include "safesig/rng.hpp"

namespace safesig::testing {

inline TokenSequence make_tokens(std::vector<int> ids, int vocab_size) {
  TokenSequence t;
  for (int id : ids) t.texts.push_back("tok" + std::to_string(id));
  t.ids = std::move(ids);
  t.vocab_size = vocab_size;
  return t;
}

inline TokenSequence refusal_phrase_for(int vocab_size) {
  TokenSequence p;
  p.texts = {"sorry", "i", "cannot"};
  for (std::size_t i = 0; i < p.texts.size(); ++i)
    p.ids.push_back(vocab_size + static_cast<int>(i));
  p.vocab_size = vocab_size + 3;
  return p;
}

// Uniform next-token distribution: zero output weights, zero embeddings.
inline ToyModelSpec make_uniform_spec(int vocab = 4, int dim = 3) {
  ToyModelSpec spec;
  spec.vocab_size = vocab;
  spec.embedding = Matrix::Zero(vocab, dim);
  spec.output_weights = Matrix::Zero(dim, vocab);
  spec.harm_direction = Vector::Unit(dim, 0);
  spec.margin_sharpness = 1.0;
  spec.refusal_phrase = refusal_phrase_for(vocab);
  spec.response_length = 4;
  return spec;
}

// Random dense spec; margins spread around zero.
inline ToyModelSpec make_random_spec(std::uint64_t seed, int vocab = 6, int dim = 5) {
  rng::Stream s(seed);
  ToyModelSpec spec;
  spec.vocab_size = vocab;
  spec.embedding = Matrix::Zero(vocab, dim);
  spec.output_weights = Matrix::Zero(dim, vocab);
  for (Eigen::Index i = 0; i < spec.embedding.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.embedding.cols(); ++j)
      spec.embedding(i, j) = s.next_gaussian();
  for (Eigen::Index i = 0; i < spec.output_weights.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.output_weights.cols(); ++j)
      spec.output_weights(i, j) = 0.7 * s.next_gaussian();
  spec.harm_direction = s.sphere_vector(dim);
  spec.margin_sharpness = 2.0;
  spec.refusal_phrase = refusal_phrase_for(vocab);
  spec.response_length = 4;
  return spec;
}

}  // namespace safesig::testing
