#include "prunelab/mask.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "prunelab/errors.hpp"
#include "prunelab/rng.hpp"

namespace prunelab {

std::size_t Mask::surviving_count() const {
  std::size_t n = 0;
  for (auto k : keep) n += k;
  return n;
}

double Mask::sparsity() const {
  if (keep.empty()) return 0.0;
  return 1.0 - surviving_fraction();
}

double Mask::surviving_fraction() const {
  if (keep.empty()) return 1.0;
  return static_cast<double>(surviving_count()) / static_cast<double>(keep.size());
}

bool Mask::nested_in(const Mask& parent) const {
  if (keep.size() != parent.keep.size()) return false;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i] && !parent.keep[i]) return false;
  return true;
}

std::size_t Mask::ambient_dim() const {
  return surviving_count() + (layout->dim() - layout->prunable_count());
}

ParamVector apply_mask(const ParamVector& params, const Mask& mask) {
  require(params.layout && params.layout->prunable_count() == mask.size(),
          "mask does not match parameter layout");
  ParamVector out = params;
  const auto& idx = params.layout->prunable_indices();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask.keep[i]) out.values[idx[i]] = 0.0;
  return out;
}

std::vector<double> mask_multiplier(const Mask& mask) {
  std::vector<double> mult(mask.layout->dim(), 1.0);
  const auto& idx = mask.layout->prunable_indices();
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask.keep[i]) mult[idx[i]] = 0.0;
  return mult;
}

namespace {

std::size_t prune_quota(const Mask& mask, double ratio) {
  require(ratio >= 0.0 && ratio < 1.0, "pruning ratio must be in [0, 1)");
  const std::size_t surviving = mask.surviving_count();
  const auto quota = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(surviving)));
  require(surviving > quota, "pruning would leave zero surviving weights");
  return quota;
}

}  // namespace

Mask magnitude_prune(const ParamVector& params, const Mask& mask, double ratio) {
  require(params.layout && params.layout->prunable_count() == mask.size(),
          "mask does not match parameter layout");
  const std::size_t quota = prune_quota(mask, ratio);
  Mask out = mask;
  out.level = mask.level + 1;
  if (quota == 0) return out;

  const auto& idx = params.layout->prunable_indices();
  std::vector<std::size_t> candidates;
  candidates.reserve(mask.surviving_count());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.keep[i]) candidates.push_back(i);
  // Sort by (|w|, index); the index key makes ties deterministic.
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    const double ma = std::fabs(params.values[idx[a]]);
    const double mb = std::fabs(params.values[idx[b]]);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  for (std::size_t k = 0; k < quota; ++k) out.keep[candidates[k]] = 0;
  return out;
}

Mask random_prune(const ParamVector& params, const Mask& mask, double ratio,
                  std::uint64_t seed) {
  require(params.layout && params.layout->prunable_count() == mask.size(),
          "mask does not match parameter layout");
  const std::size_t quota = prune_quota(mask, ratio);
  Mask out = mask;
  out.level = mask.level + 1;
  if (quota == 0) return out;

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.keep[i]) candidates.push_back(i);
  Rng rng(seed);
  rng.shuffle(candidates);
  for (std::size_t k = 0; k < quota; ++k) out.keep[candidates[k]] = 0;
  return out;
}

Mask magnitude_prune_per_layer(const ParamVector& params, const Mask& mask, double ratio) {
  require(params.layout && params.layout->prunable_count() == mask.size(),
          "mask does not match parameter layout");
  require(ratio >= 0.0 && ratio < 1.0, "pruning ratio must be in [0, 1)");
  const auto& idx = params.layout->prunable_indices();
  Mask out = mask;
  out.level = mask.level + 1;

  // Prunable slots grouped by block; idx is sorted so slots of one block are
  // contiguous in slot order.
  std::size_t slot = 0;
  for (const auto& block : params.layout->blocks()) {
    if (!block.prunable) continue;
    std::vector<std::size_t> candidates;
    for (std::size_t k = 0; k < block.size; ++k, ++slot)
      if (mask.keep[slot]) candidates.push_back(slot);
    const auto quota = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(candidates.size())));
    if (quota == 0) continue;
    require(candidates.size() > quota, "per-layer pruning would empty a layer");
    std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      const double ma = std::fabs(params.values[idx[a]]);
      const double mb = std::fabs(params.values[idx[b]]);
      if (ma != mb) return ma < mb;
      return a < b;
    });
    for (std::size_t k = 0; k < quota; ++k) out.keep[candidates[k]] = 0;
  }
  require(out.surviving_count() > 0, "per-layer pruning left no surviving weights");
  return out;
}

Projection project(const ParamVector& params, const Mask& new_mask) {
  ParamVector projected = apply_mask(params, new_mask);
  double sq = 0.0;
  for (std::size_t i = 0; i < params.dim(); ++i) {
    const double d = params.values[i] - projected.values[i];
    sq += d * d;
  }
  return {std::move(projected), std::sqrt(sq)};
}

double sparsity_after_levels(double ratio, int levels) {
  require(levels >= 0, "level count must be >= 0");
  double f = 1.0;
  for (int i = 0; i < levels; ++i) f *= (1.0 - ratio);
  return f;
}

namespace {

WeightCdf build_cdf(std::vector<double> mags) {
  require(!mags.empty(), "weight CDF over empty support");
  double sum = 0.0;
  for (double m : mags) sum += m;
  const double mean = sum / static_cast<double>(mags.size());
  require(mean > 0.0, "weight CDF undefined: all weights are zero");
  for (double& m : mags) m /= mean;
  std::sort(mags.begin(), mags.end());
  WeightCdf cdf;
  struct Access : WeightCdf {
    static WeightCdf make(std::vector<double> s, double m) {
      WeightCdf c;
      c.set(std::move(s), m);
      return c;
    }
  };
  cdf = Access::make(std::move(mags), mean);
  return cdf;
}

}  // namespace

void WeightCdf::set(std::vector<double> sorted, double mean_abs) {
  sorted_ = std::move(sorted);
  mean_abs_ = mean_abs;
}

WeightCdf WeightCdf::of_surviving(const ParamVector& params, const Mask& mask) {
  const auto& idx = params.layout->prunable_indices();
  std::vector<double> mags;
  mags.reserve(mask.surviving_count());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.keep[i]) mags.push_back(std::fabs(params.values[idx[i]]));
  return build_cdf(std::move(mags));
}

WeightCdf WeightCdf::over_support(const ParamVector& params, const Mask& support) {
  return of_surviving(params, support);
}

double WeightCdf::quantile(double p) const {
  require(p >= 0.0 && p <= 1.0, "quantile argument must be in [0, 1]");
  if (sorted_.empty()) fail("quantile of empty CDF");
  if (p <= 0.0) return sorted_.front();
  // Smallest x with CDF(x) >= p.
  const auto n = sorted_.size();
  auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (k == 0) k = 1;
  if (k > n) k = n;
  return sorted_[k - 1];
}

double WeightCdf::cdf(double x) const {
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_mask(const Mask& mask, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot open mask file for writing: " + path);
  os.write("PLMK", 4);
  write_u32(os, 1);
  nlohmann::json meta = {{"level", mask.level},
                         {"prunable", mask.size()},
                         {"surviving", mask.surviving_count()}};
  const std::string meta_str = meta.dump();
  write_u64(os, meta_str.size());
  os.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  std::vector<unsigned char> bits((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask.keep[i]) bits[i / 8] |= static_cast<unsigned char>(1u << (i % 8));
  os.write(reinterpret_cast<const char*>(bits.data()),
           static_cast<std::streamsize>(bits.size()));
  require(os.good(), "failed writing mask file: " + path);
}

Mask load_mask(const std::string& path, const LayoutPtr& layout) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), "cannot open mask file: " + path, exit_missing_input);
  char magic[4];
  is.read(magic, 4);
  require(is.good() && std::string(magic, 4) == "PLMK", "bad mask file magic: " + path,
          exit_validation);
  const std::uint32_t version = read_u32(is);
  require(version == 1, "unsupported mask file version", exit_validation);
  const std::uint64_t meta_len = read_u64(is);
  std::string meta_str(meta_len, '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  const auto meta = nlohmann::json::parse(meta_str);
  const auto prunable = meta.at("prunable").get<std::size_t>();
  require(prunable == layout->prunable_count(), "mask file does not match layout",
          exit_validation);
  Mask mask;
  mask.layout = layout;
  mask.level = meta.at("level").get<int>();
  mask.keep.assign(prunable, 0);
  std::vector<unsigned char> bits((prunable + 7) / 8, 0);
  is.read(reinterpret_cast<char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
  require(is.good(), "truncated mask file: " + path, exit_validation);
  for (std::size_t i = 0; i < prunable; ++i)
    mask.keep[i] = (bits[i / 8] >> (i % 8)) & 1u;
  return mask;
}

}  // namespace prunelab
