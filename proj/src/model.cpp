#include "prunelab/model.hpp"

#include <cmath>

#include "net_eval.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }
std::string to_string(ArchKind k) { return k == ArchKind::mlp ? "mlp" : "conv"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  fail("unknown activation: " + s, exit_bad_config);
}

ArchKind arch_from_string(const std::string& s) {
  if (s == "mlp") return ArchKind::mlp;
  if (s == "conv") return ArchKind::conv;
  fail("unknown architecture: " + s, exit_bad_config);
}

void ModelSpec::validate() const {
  require(classes >= 2, "model needs at least 2 classes");
  if (kind == ArchKind::mlp) {
    require(input_dim >= 1, "mlp input_dim must be >= 1");
    for (int hdim : hidden) require(hdim >= 1, "mlp hidden width must be >= 1");
  } else {
    require(image_h >= 2 && image_w >= 2 && image_c >= 1, "conv image geometry invalid");
    require(!hidden.empty(), "conv net needs at least one conv block");
    int h = image_h, w = image_w;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      require(hidden[i] >= 1, "conv channel count must be >= 1");
      require(h % 2 == 0 && w % 2 == 0, "conv image dims must halve at each pool");
      h /= 2;
      w /= 2;
    }
  }
}

namespace {

std::vector<LayerBlock> build_blocks(const ModelSpec& spec) {
  std::vector<LayerBlock> blocks;
  std::size_t off = 0;
  auto push = [&](const std::string& name, std::size_t size, bool prunable) {
    blocks.push_back({name, off, size, prunable});
    off += size;
  };
  if (spec.kind == ArchKind::mlp) {
    std::vector<int> dims;
    dims.push_back(spec.input_dim);
    for (int hdim : spec.hidden) dims.push_back(hdim);
    dims.push_back(spec.classes);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      push("fc" + std::to_string(l) + ".weight",
           static_cast<std::size_t>(dims[l]) * dims[l + 1], true);
      push("fc" + std::to_string(l) + ".bias", dims[l + 1], false);
    }
  } else {
    int c = spec.image_c, h = spec.image_h, w = spec.image_w;
    for (std::size_t l = 0; l < spec.hidden.size(); ++l) {
      const int cout = spec.hidden[l];
      push("conv" + std::to_string(l) + ".weight",
           static_cast<std::size_t>(cout) * c * 9, true);
      push("conv" + std::to_string(l) + ".bias", cout, false);
      c = cout;
      h /= 2;
      w /= 2;
    }
    push("fc.weight", static_cast<std::size_t>(spec.classes) * c * h * w, true);
    push("fc.bias", spec.classes, false);
  }
  return blocks;
}

// Fan-in of the block a weight belongs to, for init scaling.
std::size_t block_fan_in(const LayerBlock& b, std::size_t out_units) {
  return b.size / out_units;
}

}  // namespace

std::size_t ModelSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& b : build_blocks(*this)) n += b.size;
  return n;
}

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  auto blocks = build_blocks(spec_);
  std::size_t dim = 0;
  for (const auto& b : blocks) dim += b.size;
  layout_ = std::make_shared<const ParamLayout>(dim, std::move(blocks));
}

ParamVector Model::init_params() const {
  Rng rng(spec_.init_seed);
  ParamVector p = ParamVector::zeros(layout_);
  const auto& blocks = layout_->blocks();
  // Weight blocks get scaled normal init (He for relu, Glorot for tanh);
  // bias blocks stay zero. Blocks are visited in layout order so the stream
  // is reproducible.
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const LayerBlock& b = blocks[i];
    if (!b.prunable) continue;
    const LayerBlock& bias = blocks[i + 1];  // bias block follows its weights
    const std::size_t fan_in = block_fan_in(b, bias.size);
    const std::size_t fan_out = bias.size;
    const double std_dev = spec_.activation == Activation::relu
                               ? std::sqrt(2.0 / static_cast<double>(fan_in))
                               : std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t k = 0; k < b.size; ++k) p.values[b.offset + k] = std_dev * rng.normal();
  }
  return p;
}

void Model::check_params(const ParamVector& p) const {
  if (p.dim() != layout_->dim()) fail("parameter vector does not match model dimension");
}

void Model::check_batch(const Batch& b) const {
  require(b.examples >= 1, "batch must contain at least one example");
  const int feat = spec_.kind == ArchKind::mlp ? spec_.input_dim
                                               : spec_.image_c * spec_.image_h * spec_.image_w;
  if (b.features != feat ||
      b.inputs.size() != static_cast<std::size_t>(b.examples) * b.features)
    fail("batch feature dimension does not match model input");
  if (b.labels.size() != static_cast<std::size_t>(b.examples))
    fail("batch labels/examples mismatch");
  for (int y : b.labels)
    if (y < 0 || y >= spec_.classes) fail("batch label out of range");
}

LossStats Model::forward_loss(const ParamVector& params, const Batch& batch) const {
  check_params(params);
  check_batch(batch);
  return detail::net_eval<double>(spec_, layout_->blocks(), params.values, batch, nullptr);
}

LossStats Model::loss_and_gradient(const ParamVector& params, const Batch& batch,
                                   ParamVector& grad) const {
  check_params(params);
  check_batch(batch);
  std::vector<double> g;
  LossStats stats = detail::net_eval<double>(spec_, layout_->blocks(), params.values, batch, &g);
  grad = ParamVector(std::move(g), layout_);
  return stats;
}

ParamVector Model::gradient(const ParamVector& params, const Batch& batch) const {
  ParamVector g;
  loss_and_gradient(params, batch, g);
  return g;
}

ParamVector Model::hessian_vector_product(const ParamVector& params, const Batch& batch,
                                          const ParamVector& v) const {
  check_params(params);
  check_params(v);
  check_batch(batch);
  require(all_finite(v), "hvp direction must be finite");
  std::vector<Dual> dual_params(params.dim());
  for (std::size_t i = 0; i < params.dim(); ++i)
    dual_params[i] = Dual{params.values[i], v.values[i]};
  std::vector<Dual> dual_grad;
  detail::net_eval<Dual>(spec_, layout_->blocks(), dual_params, batch, &dual_grad);
  ParamVector hv = ParamVector::zeros(layout_);
  for (std::size_t i = 0; i < hv.dim(); ++i) hv.values[i] = dual_grad[i].d;
  return hv;
}

}  // namespace prunelab
