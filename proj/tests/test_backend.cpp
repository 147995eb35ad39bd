#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "safesig/backend.hpp"
#include "safesig/judge.hpp"
#include "safesig/rng.hpp"
#include "test_support.hpp"

using namespace safesig;
using safesig::testing::make_random_spec;
using safesig::testing::make_tokens;
using safesig::testing::make_uniform_spec;

TEST_CASE("refusal probability follows the sigmoid margin") {
  auto spec = make_uniform_spec(4, 3);
  const ToyModel model(spec);

  // Zero embeddings: margin 0, refusal probability exactly one half.
  const auto ctx = make_tokens({0, 1}, 4);
  CHECK(model.refusal_probability(model.embed(ctx)) == doctest::Approx(0.5));

  // Zero-row embedding matrix: margin defined as 0.
  CHECK(model.refusal_probability(Matrix::Zero(0, 3)) == doctest::Approx(0.5));

  // Saturated margin: the refusal phrase comes out every time.
  Matrix strong(2, 3);
  strong << 10, 0, 0, 10, 0, 0;
  ToyModelSpec sharp = spec;
  sharp.margin_sharpness = 5.0;
  const ToyModel sharp_model(sharp);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = sharp_model.respond_from_embedding(strong, seed);
    CHECK(out.texts == sharp.refusal_phrase.texts);
  }

  // Deep negative margin: compliance every time.
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto out = sharp_model.respond_from_embedding(-strong, seed);
    CHECK(out.texts != sharp.refusal_phrase.texts);
  }
}

TEST_CASE("generation is deterministic per seed and consistent with embed") {
  const ToyModel model(make_random_spec(11));
  const auto ctx = make_tokens({0, 2, 4}, 6);
  const auto a = model.generate(ctx, 99);
  const auto b = model.generate(ctx, 99);
  CHECK(a.ids == b.ids);
  const auto c = model.respond_from_embedding(model.embed(ctx), 99);
  CHECK(a.ids == c.ids);
  CHECK(model.generate(ctx, 100).ids != a.ids);  // new seed, new draw (overwhelmingly)
}

TEST_CASE("refusal monotonicity in the margin") {
  const ToyModel model(make_uniform_spec(4, 3));
  Matrix low(1, 3), high(1, 3);
  low << -0.5, 0, 0;
  high << 0.5, 0, 0;
  int low_refusals = 0, high_refusals = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    if (model.respond_from_embedding(low, static_cast<std::uint64_t>(i)).texts[0] == "sorry")
      ++low_refusals;
    if (model.respond_from_embedding(high, static_cast<std::uint64_t>(i)).texts[0] == "sorry")
      ++high_refusals;
  }
  // One-sided check: p_low ~ 0.378, p_high ~ 0.622; 10^4 draws separate
  // them by dozens of standard errors.
  CHECK(high_refusals > low_refusals + 3 * std::sqrt(trials * 0.25));
}

TEST_CASE("out-of-vocabulary tokens are rejected") {
  const ToyModel model(make_uniform_spec(4, 3));
  CHECK_THROWS_AS(model.generate(make_tokens({0, 7}, 8), 1), DataError);
  CHECK_THROWS_AS(model.logprob_trace(make_tokens({-1}, 4)), DataError);
}

TEST_CASE("uniform model yields closed-form conditional logprobs") {
  const ToyModel model(make_uniform_spec(4, 3));
  const auto ctx = make_tokens({0}, 4);
  CHECK(model.conditional_logprob(ctx, make_tokens({1, 2, 3}, 4)) ==
        doctest::Approx(3.0 * std::log(0.25)).epsilon(1e-12));
  CHECK(model.conditional_logprob(ctx, TokenSequence{{}, {}, 4}) == 0.0);
}

TEST_CASE("conditional logprob satisfies the chain rule") {
  const ToyModel model(make_random_spec(21));
  const auto ctx = make_tokens({1, 3}, 6);
  const auto y1 = make_tokens({0, 5}, 6);
  const auto y2 = make_tokens({2, 4, 1}, 6);

  TokenSequence joint = y1;
  joint.ids.insert(joint.ids.end(), y2.ids.begin(), y2.ids.end());
  joint.texts.insert(joint.texts.end(), y2.texts.begin(), y2.texts.end());

  TokenSequence extended = ctx;
  extended.ids.insert(extended.ids.end(), y1.ids.begin(), y1.ids.end());
  extended.texts.insert(extended.texts.end(), y1.texts.begin(), y1.texts.end());

  const double lhs = model.conditional_logprob(ctx, joint);
  const double rhs = model.conditional_logprob(ctx, y1) + model.conditional_logprob(extended, y2);
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  CHECK(lhs <= 0.0);
}

TEST_CASE("logprob trace of the uniform model pins perplexity to V") {
  const ToyModel model(make_uniform_spec(4, 3));
  const auto trace = model.logprob_trace(make_tokens({0, 1, 2, 3, 1}, 4));
  REQUIRE(trace.size() == 5);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    CHECK(trace.logprobs[t] == doctest::Approx(std::log(0.25)).epsilon(1e-12));
    CHECK(trace.entropies[t] == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(trace.ranks[t] == 1.0);  // all probabilities tie
  }
  double mean = 0.0;
  for (double lp : trace.logprobs) mean += lp;
  mean /= static_cast<double>(trace.size());
  CHECK(std::exp(-mean) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("perplexity of any sequence is at least one") {
  const ToyModel model(make_random_spec(31));
  rng::Stream s(7);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> ids;
    for (int j = 0; j < 6; ++j) ids.push_back(static_cast<int>(s.next_u64() % 6));
    const auto trace = model.logprob_trace(make_tokens(ids, 6));
    double mean = 0.0;
    for (double lp : trace.logprobs) mean += lp;
    mean /= static_cast<double>(trace.size());
    CHECK(std::exp(-mean) >= 1.0);
    for (double h : trace.entropies) {
      CHECK(h >= 0.0);
      CHECK(h <= std::log(6.0) + 1e-12);
    }
    for (double r : trace.ranks) {
      CHECK(r >= 1.0);
      CHECK(r <= 6.0);
    }
  }
}

TEST_CASE("analytic gradient matches finite differences of the logprob") {
  const ToyModel model(make_random_spec(41));
  const auto ctx = make_tokens({0, 3, 5}, 6);
  const auto cont = make_tokens({1, 2}, 6);
  const Matrix e = model.embed(ctx);
  const Matrix grad = model.conditional_logprob_gradient(e, cont);
  REQUIRE(grad.rows() == e.rows());

  const double h = 1e-6;
  Matrix probe = e;
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    for (Eigen::Index j = 0; j < e.cols(); ++j) {
      probe(i, j) = e(i, j) + h;
      const double up = model.conditional_logprob_from_embedding(probe, cont);
      probe(i, j) = e(i, j) - h;
      const double down = model.conditional_logprob_from_embedding(probe, cont);
      probe(i, j) = e(i, j);
      CHECK(grad(i, j) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("trace backend serves stored records verbatim") {
  std::map<std::string, TraceBackend::Record> records;
  TraceBackend::Record r;
  r.trace.logprobs = {-1.0, -2.0};
  r.trace.ranks = {1.0, 3.0};
  r.trace.entropies = {0.5, 0.7};
  r.features = Vector::Ones(3);
  records["s1"] = r;

  const auto path = std::filesystem::temp_directory_path() / "traces.jsonl";
  save_trace_file(records, path);
  const auto backend = load_trace_backend(path);

  CHECK(backend->trace_for("s1").logprobs == r.trace.logprobs);
  CHECK(backend->trace_for("s1").ranks == r.trace.ranks);
  CHECK(backend->features_for("s1") == Vector::Ones(3));
  CHECK_THROWS_AS(backend->trace_for("missing"), DataError);
  CHECK_THROWS_AS(backend->embedding_for("s1"), CapabilityError);
  CHECK_THROWS_AS(backend->generate(make_tokens({0}, 2), 1), CapabilityError);
}

TEST_CASE("toy spec round-trips through its JSON document") {
  const auto spec = make_random_spec(51);
  const auto path = std::filesystem::temp_directory_path() / "toy_spec.json";
  save_toy_spec(spec, path);
  const auto loaded = load_toy_spec(path);
  CHECK(loaded.vocab_size == spec.vocab_size);
  CHECK((loaded.embedding - spec.embedding).norm() == doctest::Approx(0.0));
  CHECK((loaded.output_weights - spec.output_weights).norm() == doctest::Approx(0.0));
  CHECK(loaded.refusal_phrase.texts == spec.refusal_phrase.texts);

  const auto backend = load_backend(path);
  CHECK(backend->name() == "toy");
  CHECK(backend->has(Capability::Generate));
  CHECK(!backend->has(Capability::ExtractFeatures));
}

TEST_CASE("projection backend projects orthogonally") {
  Matrix basis(3, 1);
  basis << 1, 0, 0;
  const ProjectionBackend backend(basis);
  Vector x(3);
  x << 2, 5, -1;
  const Vector px = backend.extract_features(x);
  CHECK(px[0] == doctest::Approx(2.0));
  CHECK(px[1] == doctest::Approx(0.0));
  CHECK(px[2] == doctest::Approx(0.0));
  CHECK(backend.reconstruct(x) == px);
  CHECK_THROWS_AS(backend.extract_features(Vector::Ones(2)), DataError);
}

TEST_CASE("counting backend tallies generation queries") {
  const auto inner = std::make_shared<ToyModel>(make_uniform_spec());
  const CountingBackend counted(inner);
  const auto ctx = make_tokens({0, 1}, 4);
  (void)counted.generate(ctx, 1);
  (void)counted.respond_from_embedding(inner->embed(ctx), 2);
  (void)counted.logprob_trace(ctx);
  CHECK(counted.generations() == 2);
  CHECK(counted.logprob_queries() == 1);
}
