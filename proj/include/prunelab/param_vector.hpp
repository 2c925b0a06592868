#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "prunelab/errors.hpp"

namespace prunelab {

// One contiguous block of parameters (a layer's weights or biases).
struct LayerBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool prunable = false;
};

// Describes how a flat parameter vector maps onto a model: block table plus
// the sorted list of prunable (weight) indices. Shared by every ParamVector
// the model produces.
class ParamLayout {
 public:
  ParamLayout() = default;
  ParamLayout(std::size_t dim, std::vector<LayerBlock> blocks)
      : dim_(dim), blocks_(std::move(blocks)) {
    for (const auto& b : blocks_) {
      if (b.offset + b.size > dim_) fail("layer block exceeds parameter dimension");
      if (b.prunable) {
        for (std::size_t i = 0; i < b.size; ++i) prunable_.push_back(b.offset + i);
      }
    }
  }

  std::size_t dim() const { return dim_; }
  const std::vector<LayerBlock>& blocks() const { return blocks_; }
  // Sorted global indices of prunable parameters.
  const std::vector<std::size_t>& prunable_indices() const { return prunable_; }
  std::size_t prunable_count() const { return prunable_.size(); }

  // All-prunable single-block layout; convenient for synthetic landscapes.
  static std::shared_ptr<const ParamLayout> dense(std::size_t dim) {
    return std::make_shared<const ParamLayout>(
        dim, std::vector<LayerBlock>{{"dense", 0, dim, true}});
  }

 private:
  std::size_t dim_ = 0;
  std::vector<LayerBlock> blocks_;
  std::vector<std::size_t> prunable_;
};

using LayoutPtr = std::shared_ptr<const ParamLayout>;

// Flat vector of model parameters. Arithmetic is plain loops in index order
// so results are bitwise reproducible.
struct ParamVector {
  std::vector<double> values;
  LayoutPtr layout;

  ParamVector() = default;
  ParamVector(std::vector<double> v, LayoutPtr l) : values(std::move(v)), layout(std::move(l)) {
    if (layout && values.size() != layout->dim()) fail("param vector / layout dimension mismatch");
  }

  std::size_t dim() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  static ParamVector zeros(const LayoutPtr& l) {
    return ParamVector(std::vector<double>(l->dim(), 0.0), l);
  }
};

inline void check_same_dim(const ParamVector& a, const ParamVector& b) {
  if (a.dim() != b.dim()) fail("parameter vectors have different dimensions");
}

inline double dot(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
  return s;
}

inline double norm2(const ParamVector& a) { return std::sqrt(dot(a, a)); }

inline ParamVector add(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b);
  ParamVector out = a;
  for (std::size_t i = 0; i < out.dim(); ++i) out.values[i] += b.values[i];
  return out;
}

inline ParamVector sub(const ParamVector& a, const ParamVector& b) {
  check_same_dim(a, b);
  ParamVector out = a;
  for (std::size_t i = 0; i < out.dim(); ++i) out.values[i] -= b.values[i];
  return out;
}

inline ParamVector scale(const ParamVector& a, double s) {
  ParamVector out = a;
  for (auto& x : out.values) x *= s;
  return out;
}

// a + s*b in place.
inline void axpy(ParamVector& a, double s, const ParamVector& b) {
  check_same_dim(a, b);
  for (std::size_t i = 0; i < a.dim(); ++i) a.values[i] += s * b.values[i];
}

// (1-t)*a + t*b
inline ParamVector lerp(const ParamVector& a, const ParamVector& b, double t) {
  check_same_dim(a, b);
  ParamVector out = a;
  for (std::size_t i = 0; i < out.dim(); ++i)
    out.values[i] = (1.0 - t) * a.values[i] + t * b.values[i];
  return out;
}

inline bool all_finite(const ParamVector& a) {
  for (double x : a.values)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace prunelab
