#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/param_vector.hpp"

namespace prunelab {

// Binary keep/prune vector over the prunable parameters. Entry i refers to
// layout->prunable_indices()[i]; 1 keeps the weight, 0 prunes it. Masks only
// ever lose ones across pruning levels (nesting).
struct Mask {
  std::vector<std::uint8_t> keep;
  int level = 0;
  LayoutPtr layout;

  static Mask ones(const LayoutPtr& layout) {
    Mask m;
    m.keep.assign(layout->prunable_count(), 1);
    m.layout = layout;
    return m;
  }

  std::size_t size() const { return keep.size(); }
  std::size_t surviving_count() const;
  // Fraction of zeros among prunable entries.
  double sparsity() const;
  double surviving_fraction() const;
  bool nested_in(const Mask& parent) const;

  // Dimension of the axial subspace the mask selects: surviving prunable
  // coordinates plus every non-prunable coordinate.
  std::size_t ambient_dim() const;
};

// Zero out pruned prunable entries of params; other entries pass through.
ParamVector apply_mask(const ParamVector& params, const Mask& mask);

// Full-dimension 0/1 multiplier for SGD-side masking.
std::vector<double> mask_multiplier(const Mask& mask);

// Prune floor(f * surviving) smallest-|w| surviving weights, globally across
// layers. Ties broken by lowest parameter index. Masked entries of params
// must be zero.
Mask magnitude_prune(const ParamVector& params, const Mask& mask, double ratio);

// Same count, pruned set drawn uniformly among surviving indices.
Mask random_prune(const ParamVector& params, const Mask& mask, double ratio,
                  std::uint64_t seed);

// Per-layer variant of magnitude pruning: the floor(f * surviving) quota is
// applied within each prunable block independently.
Mask magnitude_prune_per_layer(const ParamVector& params, const Mask& mask, double ratio);

struct Projection {
  ParamVector params;  // new_mask ⊙ w
  double distance;     // ||w - new_mask ⊙ w||_2
};

// Project params onto the axial subspace of new_mask. new_mask must be
// nested in the support of params' current mask.
Projection project(const ParamVector& params, const Mask& new_mask);

// Surviving fraction after L levels at fixed ratio f.
double sparsity_after_levels(double ratio, int levels);

// Cumulative distribution of |w| / mean(|w|) over an index set of weights.
class WeightCdf {
 public:
  // CDF over the surviving prunable weights of params under mask.
  static WeightCdf of_surviving(const ParamVector& params, const Mask& mask);
  // CDF of a projected vector evaluated over the *previous* support, so the
  // newly pruned zeros show up as an initial flat segment.
  static WeightCdf over_support(const ParamVector& params, const Mask& support);

  // p-th quantile of the normalized magnitudes, p in [0, 1].
  double quantile(double p) const;
  // Fraction of weights with normalized magnitude <= x.
  double cdf(double x) const;
  const std::vector<double>& sorted_normalized() const { return sorted_; }
  double mean_abs() const { return mean_abs_; }

 private:
  std::vector<double> sorted_;
  double mean_abs_ = 0.0;
};

// Mask file: "PLMK", u32 version, u64 json length, json metadata, packed
// little-endian bitset. Round-trips bit-exactly.
void save_mask(const Mask& mask, const std::string& path);
Mask load_mask(const std::string& path, const LayoutPtr& layout);

}  // namespace prunelab
