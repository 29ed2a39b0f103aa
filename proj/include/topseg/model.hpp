#pragma once

#include <array>
#include <deque>
#include <string>
#include <vector>

#include "topseg/graph.hpp"
#include "topseg/rng.hpp"

namespace topseg {

struct NetConfig {
  int in_channels = 1;
  int num_classes = 3;  // background, lumen, plaque
  int base_width = 8;
  int depth = 3;  // encoder levels
  uint64_t seed = 0;

  void validate() const;
};

// Named parameter registry with stable iteration order (creation order).
class ParamSet {
 public:
  Parameter& add(const std::string& name, Shape shape);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> with_prefix(const std::string& prefix);
  size_t scalar_count() const;
  size_t scalar_count(const std::string& prefix) const;
  void zero_grads();

 private:
  std::deque<Parameter> params_;  // deque: stable addresses
};

struct ConvSpec {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int pad = 0;

  Value operator()(Graph& g, Value x) const {
    return g.conv2d(x, g.param(*w), g.param(*b), pad);
  }
};

ConvSpec make_conv(ParamSet& ps, const std::string& name, int cin, int cout,
                   int k, Rng& rng);

// Dual-task network: shared encoder, a mirror decoder ending in a per-pixel
// softmax for segmentation, and a cross-scale residual-fusion decoder ending
// in a sigmoid for the skeleton-aware distance field. Both frames of a pair
// are stacked along the batch axis so they pass through identical weights.
class DualTaskNet {
 public:
  explicit DualTaskNet(const NetConfig& cfg);

  struct Outputs {
    Value seg;  // (N, num_classes, H, W), per-pixel simplex
    Value sdt;  // (N, 1, H, W), values in (0,1)
  };

  // images: (N, in_channels, H, W), intensities in [0,1]
  Outputs forward(Graph& g, Value images) const;

  const NetConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  struct Fuse {
    ConvSpec a, b;  // concat -> ca, then ca -> ca, residual skip from the fine input
  };

  Value double_conv(Graph& g, Value x, const ConvSpec& c1, const ConvSpec& c2) const;
  Value fuse(Graph& g, Value fine, Value coarse, const Fuse& f) const;

  NetConfig cfg_;
  ParamSet params_;
  std::vector<std::array<ConvSpec, 2>> enc_;
  std::vector<std::array<ConvSpec, 2>> seg_dec_;
  ConvSpec seg_head_;
  std::vector<std::vector<Fuse>> reg_stages_;
  ConvSpec reg_pre_, reg_head_;
};

}  // namespace topseg
