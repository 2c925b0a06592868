#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prunelab/param_vector.hpp"

namespace prunelab {

enum class Activation { relu, tanh };
enum class ArchKind { mlp, conv };

std::string to_string(Activation a);
std::string to_string(ArchKind k);
Activation activation_from_string(const std::string& s);
ArchKind arch_from_string(const std::string& s);

// Architecture description. (spec, init_seed) fully determines the initial
// parameters, bit for bit.
struct ModelSpec {
  ArchKind kind = ArchKind::mlp;
  Activation activation = Activation::relu;
  int input_dim = 2;             // mlp feature count
  int classes = 2;
  std::vector<int> hidden;       // mlp: hidden widths; conv: channels per block
  int image_h = 0;               // conv geometry (input_dim = c*h*w is derived)
  int image_w = 0;
  int image_c = 0;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::size_t param_count() const;
};

struct Batch {
  std::vector<double> inputs;  // row-major, examples x features
  std::vector<int> labels;
  int examples = 0;
  int features = 0;
};

struct LossStats {
  double loss = 0.0;   // mean cross-entropy
  double error = 0.0;  // misclassification fraction, argmax ties -> lowest class
};

class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const LayoutPtr& layout() const { return layout_; }
  std::size_t dim() const { return layout_->dim(); }

  ParamVector init_params() const;

  LossStats forward_loss(const ParamVector& params, const Batch& batch) const;
  // Single pass computing loss, error and the exact reverse-mode gradient.
  LossStats loss_and_gradient(const ParamVector& params, const Batch& batch,
                              ParamVector& grad) const;
  ParamVector gradient(const ParamVector& params, const Batch& batch) const;
  // Exact Hv: directional derivative of the gradient along v, computed by
  // running the backward pass over dual numbers seeded with v.
  ParamVector hessian_vector_product(const ParamVector& params, const Batch& batch,
                                     const ParamVector& v) const;

 private:
  void check_params(const ParamVector& p) const;
  void check_batch(const Batch& b) const;

  ModelSpec spec_;
  LayoutPtr layout_;
};

}  // namespace prunelab
