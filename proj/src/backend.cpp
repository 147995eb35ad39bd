#include "safesig/backend.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "safesig/rng.hpp"

namespace safesig {
namespace {

using nlohmann::json;

Vector log_softmax(const Vector& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

Matrix matrix_from_json(const json& rows, const char* what) {
  if (!rows.is_array() || rows.empty())
    throw DataError(std::string(what) + ": expected a nonempty array of rows");
  const std::size_t cols = rows[0].size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) throw DataError(std::string(what) + ": ragged rows");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Vector vector_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw DataError(std::string(what) + ": expected an array");
  Vector v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

constexpr std::uint64_t kGenTag = 0x47454E00;  // generation stream

}  // namespace

void Backend::missing(const char* what) const {
  throw CapabilityError("backend '" + name() + "' does not support " + what);
}

TokenSequence Backend::generate(const TokenSequence&, std::uint64_t) const { missing("generate"); }
TokenSequence Backend::respond_from_embedding(const Matrix&, std::uint64_t) const {
  missing("respond_from_embedding");
}
LogprobTrace Backend::logprob_trace(const TokenSequence&) const { missing("logprob_trace"); }
double Backend::conditional_logprob(const TokenSequence&, const TokenSequence&) const {
  missing("conditional_logprob");
}
Matrix Backend::embed(const TokenSequence&) const { missing("embed"); }
Vector Backend::extract_features(const Vector&) const { missing("extract_features"); }
Vector Backend::reconstruct(const Vector&) const { missing("reconstruct"); }
double Backend::conditional_logprob_from_embedding(const Matrix&, const TokenSequence&) const {
  missing("conditional_logprob_from_embedding");
}
Matrix Backend::conditional_logprob_gradient(const Matrix&, const TokenSequence&) const {
  missing("conditional_logprob_gradient");
}

void ToyModelSpec::validate() const {
  if (vocab_size <= 0) throw DataError("toy spec: vocab_size must be positive");
  if (embedding.rows() != vocab_size) throw DataError("toy spec: embedding table must have V rows");
  const Eigen::Index d = embedding.cols();
  if (d < 1) throw DataError("toy spec: embedding dimension must be >= 1");
  if (output_weights.rows() != d || output_weights.cols() != vocab_size)
    throw DataError("toy spec: output weights must be d x V");
  if (harm_direction.size() != d) throw DataError("toy spec: harm direction must live in R^d");
  if (std::abs(harm_direction.norm() - 1.0) > 1e-6)
    throw DataError("toy spec: harm direction must be unit norm");
  if (!(margin_sharpness > 0.0)) throw DataError("toy spec: margin sharpness must be positive");
  if (refusal_phrase.empty()) throw DataError("toy spec: refusal phrase must be nonempty");
  if (response_length < 1) throw DataError("toy spec: response length must be >= 1");
  if (!embedding.allFinite() || !output_weights.allFinite() || !harm_direction.allFinite())
    throw DataError("toy spec: non-finite parameter");
  if (!vocab_texts.empty() && vocab_texts.size() != static_cast<std::size_t>(vocab_size))
    throw DataError("toy spec: vocab_texts must have V entries");
}

ToyModel::ToyModel(ToyModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  spec_.harm_direction.normalize();
  if (spec_.vocab_texts.empty()) {
    spec_.vocab_texts.reserve(static_cast<std::size_t>(spec_.vocab_size));
    for (int k = 0; k < spec_.vocab_size; ++k) spec_.vocab_texts.push_back("tok" + std::to_string(k));
  }
}

bool ToyModel::has(Capability c) const {
  switch (c) {
    case Capability::Generate:
    case Capability::RespondFromEmbedding:
    case Capability::LogprobTrace:
    case Capability::ConditionalLogprob:
    case Capability::Embed:
    case Capability::ConditionalLogprobFromEmbedding:
    case Capability::AnalyticGradient:
      return true;
    case Capability::ExtractFeatures:
    case Capability::Reconstruct:
      return false;
  }
  return false;
}

Matrix ToyModel::embed(const TokenSequence& x) const {
  Matrix e(static_cast<Eigen::Index>(x.size()), spec_.embedding.cols());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const int id = x.ids[j];
    if (id < 0 || id >= spec_.vocab_size)
      throw DataError("toy model: token id " + std::to_string(id) + " out of vocabulary");
    e.row(static_cast<Eigen::Index>(j)) = spec_.embedding.row(id);
  }
  return e;
}

double ToyModel::margin(const Matrix& e) const {
  if (e.cols() != spec_.embedding.cols())
    throw DataError("toy model: embedding dimension mismatch");
  if (e.rows() == 0) return 0.0;
  return (e * spec_.harm_direction).mean();
}

double ToyModel::refusal_probability(const Matrix& e) const {
  return sigmoid(spec_.margin_sharpness * margin(e));
}

TokenSequence ToyModel::generate(const TokenSequence& context, std::uint64_t seed) const {
  return respond_from_embedding(embed(context), seed);
}

TokenSequence ToyModel::respond_from_embedding(const Matrix& e, std::uint64_t seed) const {
  rng::Stream stream(rng::derive(seed, kGenTag));
  if (stream.next_unit() < refusal_probability(e)) return spec_.refusal_phrase;

  const Eigen::Index d = spec_.embedding.cols();
  Vector state_sum = Vector::Zero(d);
  for (Eigen::Index i = 0; i < e.rows(); ++i) state_sum += e.row(i).transpose();
  auto count = static_cast<double>(e.rows());

  TokenSequence out;
  out.vocab_size = spec_.vocab_size;
  for (int t = 0; t < spec_.response_length; ++t) {
    const Vector state = count > 0 ? Vector(state_sum / count) : Vector(Vector::Zero(d));
    const Vector lp = log_softmax(spec_.output_weights.transpose() * state);
    // Inverse-CDF sampling over the vocabulary.
    const double u = stream.next_unit();
    double acc = 0.0;
    int pick = spec_.vocab_size - 1;
    for (int k = 0; k < spec_.vocab_size; ++k) {
      acc += std::exp(lp[k]);
      if (u < acc) {
        pick = k;
        break;
      }
    }
    out.ids.push_back(pick);
    out.texts.push_back(spec_.vocab_texts[static_cast<std::size_t>(pick)]);
    state_sum += spec_.embedding.row(pick).transpose();
    count += 1.0;
  }
  return out;
}

LogprobTrace ToyModel::logprob_trace(const TokenSequence& x) const {
  const Eigen::Index d = spec_.embedding.cols();
  LogprobTrace trace;
  Vector state_sum = Vector::Zero(d);
  double count = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const int id = x.ids[t];
    if (id < 0 || id >= spec_.vocab_size)
      throw DataError("toy model: token id " + std::to_string(id) + " out of vocabulary");
    const Vector state = count > 0 ? Vector(state_sum / count) : Vector(Vector::Zero(d));
    const Vector lp = log_softmax(spec_.output_weights.transpose() * state);
    const double lp_tok = lp[id];
    long long better = 0;
    double entropy = 0.0;
    for (int k = 0; k < spec_.vocab_size; ++k) {
      if (lp[k] > lp_tok) ++better;
      entropy -= std::exp(lp[k]) * lp[k];
    }
    trace.logprobs.push_back(lp_tok);
    trace.ranks.push_back(static_cast<double>(better + 1));
    trace.entropies.push_back(std::max(entropy, 0.0));
    state_sum += spec_.embedding.row(id).transpose();
    count += 1.0;
  }
  return trace;
}

double ToyModel::conditional_logprob(const TokenSequence& context,
                                     const TokenSequence& continuation) const {
  return conditional_logprob_from_embedding(embed(context), continuation);
}

double ToyModel::conditional_logprob_from_embedding(const Matrix& e,
                                                    const TokenSequence& continuation) const {
  if (e.cols() != spec_.embedding.cols())
    throw DataError("toy model: embedding dimension mismatch");
  const Eigen::Index d = spec_.embedding.cols();
  Vector state_sum = Vector::Zero(d);
  for (Eigen::Index i = 0; i < e.rows(); ++i) state_sum += e.row(i).transpose();
  auto count = static_cast<double>(e.rows());

  double total = 0.0;
  for (std::size_t t = 0; t < continuation.size(); ++t) {
    const int id = continuation.ids[t];
    if (id < 0 || id >= spec_.vocab_size)
      throw DataError("toy model: continuation token id " + std::to_string(id) +
                      " out of vocabulary");
    const Vector state = count > 0 ? Vector(state_sum / count) : Vector(Vector::Zero(d));
    const Vector lp = log_softmax(spec_.output_weights.transpose() * state);
    total += lp[id];
    state_sum += spec_.embedding.row(id).transpose();
    count += 1.0;
  }
  return total;
}

Matrix ToyModel::conditional_logprob_gradient(const Matrix& e,
                                              const TokenSequence& continuation) const {
  if (e.cols() != spec_.embedding.cols())
    throw DataError("toy model: embedding dimension mismatch");
  const Eigen::Index d = spec_.embedding.cols();
  const Eigen::Index n = e.rows();

  Vector state_sum = Vector::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) state_sum += e.row(i).transpose();

  // The state is the unweighted running mean, so every context row shares
  // one gradient vector: sum_t W (onehot_t - p_t) / (n + t).
  Vector shared = Vector::Zero(d);
  double count = static_cast<double>(n);
  for (std::size_t t = 0; t < continuation.size(); ++t) {
    const int id = continuation.ids[t];
    if (id < 0 || id >= spec_.vocab_size)
      throw DataError("toy model: continuation token id " + std::to_string(id) +
                      " out of vocabulary");
    if (count > 0) {
      const Vector state = state_sum / count;
      const Vector lp = log_softmax(spec_.output_weights.transpose() * state);
      Vector residual = -lp.array().exp();
      residual[id] += 1.0;
      shared += (spec_.output_weights * residual) / count;
    }
    state_sum += spec_.embedding.row(id).transpose();
    count += 1.0;
  }

  Matrix grad(n, d);
  for (Eigen::Index i = 0; i < n; ++i) grad.row(i) = shared.transpose();
  return grad;
}

TraceBackend::TraceBackend(std::map<std::string, Record> records)
    : records_(std::move(records)) {
  for (const auto& [id, rec] : records_) rec.trace.validate();
}

const TraceBackend::Record& TraceBackend::record(const std::string& id) const {
  const auto it = records_.find(id);
  if (it == records_.end()) throw DataError("trace backend: unknown id '" + id + "'");
  return it->second;
}

const LogprobTrace& TraceBackend::trace_for(const std::string& id) const {
  return record(id).trace;
}

const Matrix& TraceBackend::embedding_for(const std::string& id) const {
  const auto& rec = record(id);
  if (!rec.embedding)
    throw CapabilityError("trace backend: no embedding stored for id '" + id + "'");
  return *rec.embedding;
}

const Vector& TraceBackend::features_for(const std::string& id) const {
  const auto& rec = record(id);
  if (!rec.features)
    throw CapabilityError("trace backend: no features stored for id '" + id + "'");
  return *rec.features;
}

ProjectionBackend::ProjectionBackend(const Matrix& basis) {
  if (basis.rows() < 1 || basis.cols() < 1 || basis.cols() > basis.rows())
    throw ConfigError("projection backend: basis must be D x k with 1 <= k <= D");
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix q = qr.householderQ() * Matrix::Identity(basis.rows(), basis.cols());
  q_ = q;
}

Vector ProjectionBackend::extract_features(const Vector& x) const {
  if (x.size() != q_.rows()) throw DataError("projection backend: dimension mismatch");
  return q_ * (q_.transpose() * x);
}

Vector ProjectionBackend::reconstruct(const Vector& x) const { return extract_features(x); }

ToyModelSpec load_toy_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open toy spec: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("toy spec " + path.string() + ": " + e.what());
  }

  ToyModelSpec spec;
  spec.vocab_size = doc.at("vocab_size").get<int>();
  spec.embedding = matrix_from_json(doc.at("embedding"), "toy spec embedding");
  spec.output_weights = matrix_from_json(doc.at("output_weights"), "toy spec output_weights");
  spec.harm_direction = vector_from_json(doc.at("harm_direction"), "toy spec harm_direction");
  spec.margin_sharpness = doc.at("margin_sharpness").get<double>();
  if (doc.contains("response_length")) spec.response_length = doc.at("response_length").get<int>();
  if (doc.contains("vocab_texts"))
    spec.vocab_texts = doc.at("vocab_texts").get<std::vector<std::string>>();

  const auto& phrase = doc.at("refusal_phrase");
  spec.refusal_phrase.ids = phrase.at("ids").get<std::vector<int>>();
  spec.refusal_phrase.texts = phrase.at("texts").get<std::vector<std::string>>();
  spec.refusal_phrase.vocab_size = 0;
  for (int id : spec.refusal_phrase.ids)
    spec.refusal_phrase.vocab_size = std::max(spec.refusal_phrase.vocab_size, id + 1);
  return spec;
}

void save_toy_spec(const ToyModelSpec& spec, const std::filesystem::path& path) {
  json doc;
  doc["type"] = "toy";
  doc["vocab_size"] = spec.vocab_size;
  doc["embedding"] = matrix_to_json(spec.embedding);
  doc["output_weights"] = matrix_to_json(spec.output_weights);
  doc["harm_direction"] =
      std::vector<double>(spec.harm_direction.data(), spec.harm_direction.data() + spec.harm_direction.size());
  doc["margin_sharpness"] = spec.margin_sharpness;
  doc["response_length"] = spec.response_length;
  doc["vocab_texts"] = spec.vocab_texts;
  doc["refusal_phrase"] = {{"ids", spec.refusal_phrase.ids}, {"texts", spec.refusal_phrase.texts}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write toy spec: " + path.string());
  out << doc.dump(2) << '\n';
}

std::shared_ptr<TraceBackend> load_trace_backend(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trace file: " + path.string());
  std::map<std::string, TraceBackend::Record> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("trace file line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto id = rec.at("id").get<std::string>();
    TraceBackend::Record r;
    r.trace.logprobs = rec.at("logprobs").get<std::vector<double>>();
    r.trace.ranks = rec.at("ranks").get<std::vector<double>>();
    r.trace.entropies = rec.at("entropies").get<std::vector<double>>();
    if (rec.contains("embedding")) r.embedding = matrix_from_json(rec.at("embedding"), "trace embedding");
    if (rec.contains("features")) r.features = vector_from_json(rec.at("features"), "trace features");
    if (!records.emplace(id, std::move(r)).second)
      throw DataError("trace file line " + std::to_string(lineno) + ": duplicate id '" + id + "'");
  }
  return std::make_shared<TraceBackend>(std::move(records));
}

void save_trace_file(const std::map<std::string, TraceBackend::Record>& records,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace file: " + path.string());
  for (const auto& [id, r] : records) {
    json rec;
    rec["id"] = id;
    rec["logprobs"] = r.trace.logprobs;
    rec["ranks"] = r.trace.ranks;
    rec["entropies"] = r.trace.entropies;
    if (r.embedding) rec["embedding"] = matrix_to_json(*r.embedding);
    if (r.features)
      rec["features"] = std::vector<double>(r.features->data(), r.features->data() + r.features->size());
    out << rec.dump() << '\n';
  }
}

std::shared_ptr<Backend> load_backend(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open backend spec: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError("backend spec " + path.string() + ": " + e.what());
  }
  const auto type = doc.value("type", std::string("toy"));
  if (type == "toy") return std::make_shared<ToyModel>(load_toy_spec(path));
  if (type == "trace") {
    const auto trace_path = path.parent_path() / doc.at("path").get<std::string>();
    return load_trace_backend(trace_path);
  }
  if (type == "projection")
    return std::make_shared<ProjectionBackend>(matrix_from_json(doc.at("basis"), "projection basis"));
  throw ConfigError("backend spec " + path.string() + ": unknown type '" + type + "'");
}

}  // namespace safesig
