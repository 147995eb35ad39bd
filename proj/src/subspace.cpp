#include "safesig/subspace.hpp"

#include <Eigen/SVD>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace safesig::subspace {
namespace {

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

}  // namespace

LayerMap alignment_subspace(const LayerMap& base, const LayerMap& aligned) {
  if (base.size() != aligned.size())
    throw DataError("alignment_subspace: layer sets differ in size");
  LayerMap v;
  for (const auto& [name, wb] : base) {
    const auto it = aligned.find(name);
    if (it == aligned.end())
      throw DataError("alignment_subspace: layer '" + name + "' missing from aligned model");
    if (it->second.rows() != wb.rows() || it->second.cols() != wb.cols())
      throw DataError("alignment_subspace: shape mismatch for layer '" + name + "'");
    v[name] = it->second - wb;
  }
  return v;
}

Matrix project_onto(const Matrix& subspace, const Matrix& delta, const GuardConfig& cfg) {
  if (subspace.rows() != delta.rows() || subspace.cols() != delta.cols())
    throw DataError("project_onto: shape mismatch");
  if (subspace.isZero(0.0)) return Matrix::Zero(delta.rows(), delta.cols());

  Eigen::BDCSVD<Matrix> svd(subspace, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double tol = cfg.tolerance.value_or(
      static_cast<double>(std::max(subspace.rows(), subspace.cols())) *
      std::numeric_limits<double>::epsilon() * sv[0]);
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv[rank] > tol) ++rank;
  if (cfg.rank_cap) rank = std::min<Eigen::Index>(rank, std::max(0, *cfg.rank_cap));
  if (rank == 0) return Matrix::Zero(delta.rows(), delta.cols());

  const auto basis = svd.matrixU().leftCols(rank);
  return basis * (basis.transpose() * delta);
}

double alignment_similarity(const Matrix& subspace, const Matrix& delta, const GuardConfig& cfg) {
  const double denom = delta.norm();
  if (denom == 0.0) throw DataError("alignment_similarity: zero update has no direction");
  return project_onto(subspace, delta, cfg).norm() / denom;
}

GuardedUpdate guarded_update(const LayerMap& aligned, const LayerMap& delta,
                             const LayerMap& subspace, const GuardConfig& cfg) {
  if (cfg.tau < 0.0 || cfg.tau > 1.0) throw ConfigError("guarded_update: tau must lie in [0,1]");
  GuardedUpdate out;
  out.weights = aligned;

  for (const auto& [name, d] : delta) {
    const auto base_it = aligned.find(name);
    if (base_it == aligned.end())
      throw DataError("guarded_update: layer '" + name + "' missing from aligned model");
    if (base_it->second.rows() != d.rows() || base_it->second.cols() != d.cols())
      throw DataError("guarded_update: shape mismatch for layer '" + name + "'");

    LayerDecision decision;
    decision.layer = name;

    const auto v_it = subspace.find(name);
    if (v_it == subspace.end()) {
      decision.branch = "passthrough-missing";
      out.weights[name] = base_it->second + d;
      out.decisions.push_back(std::move(decision));
      continue;
    }

    if (d.isZero(0.0)) {
      decision.branch = "raw";
      out.weights[name] = base_it->second + d;
      out.decisions.push_back(std::move(decision));
      continue;
    }

    const double sim = alignment_similarity(v_it->second, d, cfg);
    decision.similarity = sim;
    if (sim >= cfg.tau) {
      decision.branch = "raw";
      out.weights[name] = base_it->second + d;
    } else {
      decision.branch = "projected";
      const Matrix projected = project_onto(v_it->second, d, cfg);
      decision.energy_retained = projected.squaredNorm() / d.squaredNorm();
      out.weights[name] = base_it->second + projected;
    }
    out.decisions.push_back(std::move(decision));
  }
  return out;
}

std::string decisions_to_csv(const std::vector<LayerDecision>& decisions) {
  std::string out = "layer,similarity,branch,energy_retained\n";
  char buf[192];
  for (const auto& d : decisions) {
    std::string sim;
    if (d.similarity) {
      char sbuf[40];
      std::snprintf(sbuf, sizeof(sbuf), "%.17g", *d.similarity);
      sim = sbuf;
    }
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g\n", d.layer.c_str(), sim.c_str(),
                  d.branch.c_str(), d.energy_retained);
    out += buf;
  }
  return out;
}

void save_layer_map(const LayerMap& layers, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["layers"] = nlohmann::json::array();
  for (const auto& [name, m] : layers) {
    const std::string file = sanitize(name) + ".mat";
    manifest["layers"].push_back(
        {{"name", name}, {"file", file}, {"rows", m.rows()}, {"cols", m.cols()}});
    std::ofstream out(dir / file, std::ios::binary);
    if (!out) throw DataError("cannot write layer file: " + (dir / file).string());
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
  }
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot write manifest: " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << '\n';
}

LayerMap load_layer_map(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw DataError("cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mf);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest " + (dir / "manifest.json").string() + ": " + e.what());
  }

  LayerMap layers;
  for (const auto& entry : manifest.at("layers")) {
    const auto name = entry.at("name").get<std::string>();
    const auto file = entry.at("file").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();

    std::ifstream in(dir / file, std::ios::binary);
    if (!in) throw DataError("cannot open layer file: " + (dir / file).string());
    std::string header;
    std::getline(in, header);

    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        double v = 0.0;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
          throw DataError("layer file truncated: " + (dir / file).string());
        m(i, j) = v;
      }
    layers[name] = std::move(m);
  }
  return layers;
}

}  // namespace safesig::subspace
