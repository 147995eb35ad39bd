#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "safesig/types.hpp"

namespace safesig::subspace {

// Per-layer weight matrices keyed by layer name.
using LayerMap = std::map<std::string, Matrix>;

struct GuardConfig {
  double tau = 0.5;                   // similarity threshold in [0,1]
  std::optional<int> rank_cap;        // optional cap on the projection rank
  std::optional<double> tolerance;    // singular-value cutoff override
};

// V = aligned - base, per layer.
LayerMap alignment_subspace(const LayerMap& base, const LayerMap& aligned);

// Orthogonal projection of delta onto the column space of V. Rank is the
// number of singular values above max(m,n) * eps * sigma_max unless
// overridden.
Matrix project_onto(const Matrix& subspace, const Matrix& delta, const GuardConfig& cfg = {});

// ||P_V(delta)||_F / ||delta||_F: the fraction of the update's energy that
// lies inside the alignment subspace.
double alignment_similarity(const Matrix& subspace, const Matrix& delta,
                            const GuardConfig& cfg = {});

struct LayerDecision {
  std::string layer;
  std::optional<double> similarity;  // absent for layers missing from V
  std::string branch;                // "raw" | "projected" | "passthrough-missing"
  double energy_retained = 1.0;      // ||applied||_F^2 / ||delta||_F^2
};

struct GuardedUpdate {
  LayerMap weights;
  std::vector<LayerDecision> decisions;
};

// Per layer: apply delta raw when similarity >= tau, otherwise apply its
// projection onto the alignment subspace. Layers absent from V pass
// through raw with a warning decision.
GuardedUpdate guarded_update(const LayerMap& aligned, const LayerMap& delta, const LayerMap& subspace,
                             const GuardConfig& cfg);

std::string decisions_to_csv(const std::vector<LayerDecision>& decisions);

// Directory layout: manifest.json plus one file per layer, each a one-line
// text header "name rows cols" followed by row-major float64 data.
LayerMap load_layer_map(const std::filesystem::path& dir);
void save_layer_map(const LayerMap& layers, const std::filesystem::path& dir);

}  // namespace safesig::subspace
