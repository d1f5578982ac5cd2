#pragma once

#include "slabdiff/elements.hpp"
#include "slabdiff/lattice.hpp"

#include <map>
#include <string>
#include <vector>

namespace slabdiff {

struct AnomalyThresholds {
  double desorb_distance = 3.5;   // Angstrom, min adsorbate-slab separation
  double recon_displacement = 1.0;  // Angstrom, max free-slab movement
  double intercal_depth = 0.5;    // Angstrom below the top-layer mean z
  double layer_tol = 0.5;         // Angstrom, top-layer membership window
  double bond_scale = 1.2;        // multiplies summed covalent radii

  void validate() const {
    if (!(desorb_distance > 0.0 && recon_displacement > 0.0 && intercal_depth > 0.0 &&
          layer_tol > 0.0 && bond_scale > 0.0))
      throw ContractViolation("anomaly thresholds must be positive");
  }
};

struct AnomalyReport {
  bool desorption = false;
  bool dissociation = false;
  bool reconstruction = false;
  bool intercalation = false;
  // Scalar evidence, filled for every check regardless of outcome.
  std::map<std::string, double> details;

  bool any() const { return desorption || dissociation || reconstruction || intercalation; }
};

/// Bond adjacency over the atoms selected by the mask: edge iff the
/// minimum-image distance is <= bond_scale * (r_cov_i + r_cov_j). Indices in
/// the result are positions within the selected subset.
inline std::vector<std::vector<int>> connectivity_graph(const AdslabSystem& system, TagMask mask,
                                                        double bond_scale = 1.2) {
  const auto idx = system.indices(mask);
  const int n = static_cast<int>(idx.size());
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a) {
    const double ra = covalent_radius(system.species[static_cast<size_t>(idx[a])]);
    for (int b = a + 1; b < n; ++b) {
      const double rb = covalent_radius(system.species[static_cast<size_t>(idx[b])]);
      const Vec3 dx = system.cell.minimum_image(system.positions.row(idx[b]).transpose() -
                                                system.positions.row(idx[a]).transpose());
      if (dx.norm() <= bond_scale * (ra + rb)) {
        adj[static_cast<size_t>(a)].push_back(b);
        adj[static_cast<size_t>(b)].push_back(a);
      }
    }
  }
  return adj;
}

inline int count_components(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<bool> seen(static_cast<size_t>(n), false);
  int components = 0;
  std::vector<int> stack;
  for (int start = 0; start < n; ++start) {
    if (seen[static_cast<size_t>(start)]) continue;
    ++components;
    stack.push_back(start);
    seen[static_cast<size_t>(start)] = true;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (const int w : adj[static_cast<size_t>(v)])
        if (!seen[static_cast<size_t>(w)]) {
          seen[static_cast<size_t>(w)] = true;
          stack.push_back(w);
        }
    }
  }
  return components;
}

/// Classify a relaxed structure against its pre-relaxation state.
/// Desorption: every adsorbate atom farther than desorb_distance from every
/// slab atom. Dissociation: the adsorbate bond graph gained components.
/// Reconstruction: a FREE_SLAB atom moved farther than recon_displacement.
/// Intercalation: an adsorbate atom sank below the top-slab-layer mean z by
/// more than intercal_depth.
inline AnomalyReport classify(const AdslabSystem& initial, const AdslabSystem& relaxed,
                              const AnomalyThresholds& thr = {}) {
  thr.validate();
  if (initial.size() != relaxed.size() || initial.species != relaxed.species ||
      initial.tags != relaxed.tags)
    throw ContractViolation("classify: initial/relaxed structures do not correspond");

  AnomalyReport rep;
  const auto ads = relaxed.indices(TagMask::Adsorbate);
  const auto slab = relaxed.indices(TagMask::Slab);
  if (ads.empty() || slab.empty())
    throw ContractViolation("classify: need adsorbate and slab atoms");

  double min_sep = std::numeric_limits<double>::infinity();
  for (const auto ia : ads)
    for (const auto is : slab) {
      const Vec3 dx = relaxed.cell.minimum_image(relaxed.positions.row(is).transpose() -
                                                 relaxed.positions.row(ia).transpose());
      min_sep = std::min(min_sep, dx.norm());
    }
  rep.desorption = min_sep > thr.desorb_distance;
  rep.details["min_adsorbate_slab_distance"] = min_sep;

  const int comp_initial =
      count_components(connectivity_graph(initial, TagMask::Adsorbate, thr.bond_scale));
  const int comp_relaxed =
      count_components(connectivity_graph(relaxed, TagMask::Adsorbate, thr.bond_scale));
  rep.dissociation = comp_relaxed > comp_initial;
  rep.details["adsorbate_components_initial"] = comp_initial;
  rep.details["adsorbate_components_relaxed"] = comp_relaxed;

  double max_free_move = 0.0;
  for (const auto i : relaxed.indices(TagMask::FreeSlab)) {
    const Vec3 dx = relaxed.cell.minimum_image(relaxed.positions.row(i).transpose() -
                                               initial.positions.row(i).transpose());
    max_free_move = std::max(max_free_move, dx.norm());
  }
  rep.reconstruction = max_free_move > thr.recon_displacement;
  rep.details["max_free_slab_displacement"] = max_free_move;

  double top_z = -std::numeric_limits<double>::infinity();
  for (const auto is : slab) top_z = std::max(top_z, relaxed.positions(is, 2));
  double layer_sum = 0.0;
  int layer_count = 0;
  for (const auto is : slab)
    if (relaxed.positions(is, 2) >= top_z - thr.layer_tol) {
      layer_sum += relaxed.positions(is, 2);
      ++layer_count;
    }
  const double layer_mean = layer_sum / layer_count;
  double min_ads_z = std::numeric_limits<double>::infinity();
  for (const auto ia : ads) min_ads_z = std::min(min_ads_z, relaxed.positions(ia, 2));
  rep.intercalation = min_ads_z < layer_mean - thr.intercal_depth;
  rep.details["top_layer_mean_z"] = layer_mean;
  rep.details["min_adsorbate_z"] = min_ads_z;

  return rep;
}

}  // namespace slabdiff
