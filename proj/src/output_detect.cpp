#include "safesig/output_detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "safesig/metrics.hpp"
#include "safesig/rng.hpp"

namespace safesig::output_detect {
namespace {

constexpr std::uint64_t kPerturbTag = 0xA772C4;
constexpr std::uint64_t kAttackTag = 0xA77AC8;

double cosine(const Vector& a, const Vector& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na <= 0.0 || nb <= 0.0) throw DataError("cosine undefined for a zero-norm vector");
  if (a == b) return 1.0;
  return a.dot(b) / (na * nb);
}

double mean_logprob(const LogprobTrace& trace) {
  if (trace.empty()) throw DataError("mean_logprob: empty trace");
  return std::accumulate(trace.logprobs.begin(), trace.logprobs.end(), 0.0) /
         static_cast<double>(trace.logprobs.size());
}

struct Standardizer {
  Eigen::Vector4d mean = Eigen::Vector4d::Zero();
  Eigen::Vector4d scale = Eigen::Vector4d::Ones();

  static Standardizer fit(const std::vector<Eigen::Vector4d>& rows) {
    Standardizer s;
    if (rows.empty()) return s;
    for (const auto& r : rows) s.mean += r;
    s.mean /= static_cast<double>(rows.size());
    Eigen::Vector4d var = Eigen::Vector4d::Zero();
    for (const auto& r : rows) var += (r - s.mean).cwiseAbs2();
    var /= static_cast<double>(rows.size());
    s.scale = var.cwiseSqrt().cwiseMax(1e-12);
    return s;
  }
  Eigen::Vector4d apply(const Eigen::Vector4d& r) const {
    return (r - mean).cwiseQuotient(scale);
  }
};

double logistic_loss(const std::vector<Eigen::Vector4d>& x, const std::vector<int>& y,
                     const Eigen::Vector4d& w, double b) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = y[i] == 1 ? 1.0 : -1.0;
    const double margin = z * (w.dot(x[i]) + b);
    // log(1 + exp(-m)) computed stably
    loss += margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
  }
  return loss / static_cast<double>(x.size());
}

void logistic_gradient(const std::vector<Eigen::Vector4d>& x, const std::vector<int>& y,
                       const Eigen::Vector4d& w, double b, Eigen::Vector4d& gw, double& gb) {
  gw.setZero();
  gb = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = y[i] == 1 ? 1.0 : -1.0;
    const double s = w.dot(x[i]) + b;
    const double coeff = -z * sigmoid(-z * s);
    gw += coeff * x[i];
    gb += coeff;
  }
  gw /= static_cast<double>(x.size());
  gb /= static_cast<double>(x.size());
}

}  // namespace

double rigid_statistic(const Vector& sample, const Backend& extractor,
                       const SensitivityConfig& cfg) {
  if (cfg.perturbations < 1) throw ConfigError("rigid_statistic: need at least one perturbation");
  if (!(cfg.sigma >= 0.0) || !std::isfinite(cfg.sigma))
    throw ConfigError("rigid_statistic: noise scale must be finite and nonnegative");

  const Vector base = extractor.extract_features(sample);
  rng::Stream stream(rng::derive(cfg.seed, kPerturbTag));
  double total = 0.0;
  for (int k = 0; k < cfg.perturbations; ++k) {
    const Vector noise = stream.gaussian_vector(sample.size());
    const Vector perturbed = extractor.extract_features(sample + cfg.sigma * noise);
    total += cosine(base, perturbed);
  }
  return total / static_cast<double>(cfg.perturbations);
}

double reconstruction_statistic(const Vector& sample, const Backend& reconstructor,
                                ReconMetric metric) {
  const Vector rebuilt = reconstructor.reconstruct(sample);
  if (rebuilt.size() != sample.size())
    throw DataError("reconstruction_statistic: dimension mismatch");
  const Vector residual = sample - rebuilt;
  return metric == ReconMetric::L2 ? residual.norm() : residual.lpNorm<1>();
}

TextStatKind text_stat_from_string(const std::string& name) {
  if (name == "logp") return TextStatKind::LogP;
  if (name == "rank") return TextStatKind::Rank;
  if (name == "logrank") return TextStatKind::LogRank;
  if (name == "entropy") return TextStatKind::Entropy;
  throw ConfigError("unknown text statistic '" + name + "'");
}

double text_stat(const LogprobTrace& trace, TextStatKind kind) {
  if (trace.empty()) throw DataError("text_stat: empty trace");
  const auto n = static_cast<double>(trace.size());
  switch (kind) {
    case TextStatKind::LogP:
      return mean_logprob(trace);
    case TextStatKind::Rank:
      return -std::accumulate(trace.ranks.begin(), trace.ranks.end(), 0.0) / n;
    case TextStatKind::LogRank: {
      double total = 0.0;
      for (double r : trace.ranks) total += std::log(r);
      return -total / n;
    }
    case TextStatKind::Entropy:
      return std::accumulate(trace.entropies.begin(), trace.entropies.end(), 0.0) / n;
  }
  throw ConfigError("text_stat: bad kind");
}

AttackPolicy AttackPolicy::uniform(int vocab_size, double rho) {
  if (vocab_size < 1) throw ConfigError("attack policy: vocabulary must be nonempty");
  AttackPolicy p;
  p.rho = rho;
  std::vector<int> all(static_cast<std::size_t>(vocab_size));
  std::iota(all.begin(), all.end(), 0);
  for (int k = 0; k < vocab_size; ++k) p.substitutions[k] = all;
  return p;
}

TokenSequence paraphrase_attack(const TokenSequence& x, const AttackPolicy& policy,
                                std::uint64_t seed) {
  if (policy.rho < 0.0 || policy.rho > 1.0)
    throw ConfigError("paraphrase_attack: rho must lie in [0,1]");
  rng::Stream stream(rng::derive(seed, kAttackTag));
  TokenSequence out = x;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const double u = stream.next_unit();
    const auto it = policy.substitutions.find(out.ids[j]);
    if (u < policy.rho && it != policy.substitutions.end() && !it->second.empty()) {
      const auto pick = static_cast<std::size_t>(stream.next_u64() % it->second.size());
      out.ids[j] = it->second[pick];
      out.texts[j] = "<" + std::to_string(out.ids[j]) + ">";
      out.vocab_size = std::max(out.vocab_size, out.ids[j] + 1);
    }
  }
  return out;
}

double detectgpt_statistic(const TokenSequence& x, const Backend& backend,
                           const Perturber& perturber, int n_perturb, std::uint64_t seed) {
  if (n_perturb < 1) throw ConfigError("detectgpt: need at least one perturbation");
  const double original = mean_logprob(backend.logprob_trace(x));
  double perturbed_total = 0.0;
  for (int i = 0; i < n_perturb; ++i) {
    const TokenSequence rewritten =
        perturber(x, rng::derive(seed, kPerturbTag + static_cast<std::uint64_t>(i)));
    if (rewritten.empty()) throw DataError("detectgpt: perturber produced an empty sequence");
    perturbed_total += mean_logprob(backend.logprob_trace(rewritten));
  }
  return original - perturbed_total / static_cast<double>(n_perturb);
}

Eigen::Vector4d text_features(const LogprobTrace& trace) {
  return {text_stat(trace, TextStatKind::LogP), text_stat(trace, TextStatKind::Rank),
          text_stat(trace, TextStatKind::LogRank), text_stat(trace, TextStatKind::Entropy)};
}

std::string detector_to_json(const LinearDetector& d) {
  nlohmann::json j;
  j["w_logp"] = d.weights[0];
  j["w_rank"] = d.weights[1];
  j["w_logrank"] = d.weights[2];
  j["w_entropy"] = d.weights[3];
  j["bias"] = d.bias;
  j["trained"] = d.trained;
  return j.dump(2) + "\n";
}

LinearDetector detector_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  LinearDetector d;
  d.weights << j.at("w_logp").get<double>(), j.at("w_rank").get<double>(),
      j.at("w_logrank").get<double>(), j.at("w_entropy").get<double>();
  d.bias = j.at("bias").get<double>();
  d.trained = j.value("trained", true);
  return d;
}

AdversarialResult adversarial_train(const LabeledDataset& data, const Backend& backend,
                                    AttackPolicy policy, LinearDetector detector,
                                    const AdversarialConfig& cfg) {
  std::vector<const LabeledSample*> train_human, train_ai, val_human, val_ai;
  for (const auto& s : data) {
    if (s.kind == PayloadKind::Features) throw DataError("adversarial_train: expected text samples");
    const bool val = s.split == Split::Val;
    auto& bucket = s.label == 1 ? (val ? val_ai : train_ai) : (val ? val_human : train_human);
    bucket.push_back(&s);
  }
  if (train_human.empty() || train_ai.empty())
    throw DataError("adversarial_train: training data must contain both classes");
  // Fall back to the training pool when no validation split is provided.
  if (val_human.empty() || val_ai.empty()) {
    val_human = train_human;
    val_ai = train_ai;
  }

  auto features_of = [&](const TokenSequence& t) { return text_features(backend.logprob_trace(t)); };

  std::vector<Eigen::Vector4d> human_feats, ai_feats, val_human_feats, val_ai_feats;
  for (const auto* s : train_human) human_feats.push_back(features_of(s->tokens()));
  for (const auto* s : train_ai) ai_feats.push_back(features_of(s->tokens()));
  for (const auto* s : val_human) val_human_feats.push_back(features_of(s->tokens()));
  for (const auto* s : val_ai) val_ai_feats.push_back(features_of(s->tokens()));

  auto attack_seed = [&](std::uint64_t round, std::uint64_t index, std::uint64_t purpose) {
    return rng::derive(cfg.seed, (round << 24) ^ (index << 4) ^ purpose);
  };

  AdversarialResult result{detector, policy, {}};
  double prev_metric = -1.0;

  for (int round = 0; round < cfg.rounds; ++round) {
    const auto r = static_cast<std::uint64_t>(round);

    // (a) Attacker: ascend the evasion reward over rho with fixed per-sample
    // seeds so the zeroth-order probes see a smooth objective.
    if (!cfg.attacker_frozen) {
      landscape::ScalarField reward = [&](const Vector& v) {
        AttackPolicy probe = result.policy;
        probe.rho = std::clamp(v[0], 0.0, 1.0);
        long long evaded = 0;
        for (std::size_t i = 0; i < train_ai.size(); ++i) {
          const auto rewritten =
              paraphrase_attack(train_ai[i]->tokens(), probe, attack_seed(r, i, 1));
          if (result.detector.score(features_of(rewritten)) < 0.0) ++evaded;
        }
        return static_cast<double>(evaded) / static_cast<double>(train_ai.size());
      };
      landscape::ZooConfig zoo = cfg.attacker_zoo;
      zoo.seed = rng::derive(cfg.seed, 0xA77ULL + r);
      Vector at(1);
      at[0] = result.policy.rho;
      const auto est = landscape::zoo_gradient(reward, at, zoo);
      result.policy.rho = std::clamp(result.policy.rho + cfg.attacker_lr * est.gradient[0], 0.0, 1.0);
    }

    // (b) Detector: logistic descent on human / AI / paraphrased-AI features.
    std::vector<Eigen::Vector4d> feats;
    std::vector<int> labels;
    for (const auto& f : human_feats) feats.push_back(f), labels.push_back(0);
    for (const auto& f : ai_feats) feats.push_back(f), labels.push_back(1);
    for (std::size_t i = 0; i < train_ai.size(); ++i) {
      const auto rewritten =
          paraphrase_attack(train_ai[i]->tokens(), result.policy, attack_seed(r, i, 2));
      feats.push_back(features_of(rewritten));
      labels.push_back(1);
    }

    const Standardizer std_fit = Standardizer::fit(feats);
    std::vector<Eigen::Vector4d> zfeats;
    zfeats.reserve(feats.size());
    for (const auto& f : feats) zfeats.push_back(std_fit.apply(f));

    // Continue from the previous detector, mapped into the new feature scale.
    Eigen::Vector4d w = result.detector.weights.cwiseProduct(std_fit.scale);
    double b = result.detector.bias + result.detector.weights.dot(std_fit.mean);

    double loss = logistic_loss(zfeats, labels, w, b);
    for (int step = 0; step < cfg.detector_steps; ++step) {
      Eigen::Vector4d gw;
      double gb = 0.0;
      logistic_gradient(zfeats, labels, w, b, gw, gb);
      double lr = cfg.detector_lr;
      for (;;) {
        const Eigen::Vector4d w_try = w - lr * gw;
        const double b_try = b - lr * gb;
        const double loss_try = logistic_loss(zfeats, labels, w_try, b_try);
        if (loss_try <= loss) {
          w = w_try;
          b = b_try;
          loss = loss_try;
          break;
        }
        lr *= 0.5;
        if (lr < 1e-12) break;  // stationary: no descent step improves
      }
      if (lr < 1e-12) break;
    }

    result.detector.weights = w.cwiseQuotient(std_fit.scale);
    result.detector.bias = b - w.cwiseQuotient(std_fit.scale).dot(std_fit.mean);
    result.detector.trained = true;

    // Round bookkeeping on the validation split.
    std::vector<double> scores;
    std::vector<int> ys;
    for (const auto& f : val_human_feats) scores.push_back(result.detector.score(f)), ys.push_back(0);
    for (const auto& f : val_ai_feats) scores.push_back(result.detector.score(f)), ys.push_back(1);
    const double clean =
        metrics::auroc(metrics::roc_curve(scores, ys, metrics::Orientation::HigherIsH1));

    std::vector<double> atk_scores;
    std::vector<int> atk_ys;
    for (const auto& f : val_human_feats) atk_scores.push_back(result.detector.score(f)), atk_ys.push_back(0);
    for (std::size_t i = 0; i < val_ai.size(); ++i) {
      const auto rewritten =
          paraphrase_attack(val_ai[i]->tokens(), result.policy, attack_seed(r, i, 3));
      atk_scores.push_back(result.detector.score(features_of(rewritten)));
      atk_ys.push_back(1);
    }
    const double attacked =
        metrics::auroc(metrics::roc_curve(atk_scores, atk_ys, metrics::Orientation::HigherIsH1));

    result.history.push_back({round, clean, attacked, result.policy.rho, loss});

    const double metric = 0.5 * (clean + attacked);
    if (round > 0 && metric - prev_metric < cfg.early_stop_tol) break;
    prev_metric = std::max(prev_metric, metric);
  }
  return result;
}

std::string history_to_csv(const std::vector<RoundRecord>& history) {
  std::string out = "round,clean_auroc,attacked_auroc,rho\n";
  char buf[160];
  for (const auto& rec : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", rec.round, rec.clean_auroc,
                  rec.attacked_auroc, rec.rho);
    out += buf;
  }
  return out;
}

}  // namespace safesig::output_detect
