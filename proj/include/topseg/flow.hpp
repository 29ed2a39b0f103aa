#pragma once

#include <vector>

#include "topseg/graph.hpp"
#include "topseg/model.hpp"
#include "topseg/sdt.hpp"

namespace topseg {

struct FlowConfig {
  int depth = 3;     // pyramid levels, finest included
  int hidden1 = 24;  // predictor widths; ~10k parameters total
  int hidden2 = 40;
  uint64_t seed = 0;
};

// 2x average-pooled pyramid; levels[0] is the input field itself.
// Sides must be divisible by 2^(depth-1).
std::vector<Value> build_pyramid(Graph& g, Value field, int depth);
std::vector<Tensor> build_pyramid(const Tensor& field, int depth);

// Backward bilinear warp with border clamping (alias of the engine op).
Value warp(Graph& g, Value field, Value flow);

// Coarse-to-fine residual flow predictor with weights shared across levels.
// Each level consumes (source level, reference level, upsampled coarser
// flow x2) and emits a residual on top of the upsampled flow.
class FlowEstimator {
 public:
  explicit FlowEstimator(const FlowConfig& cfg);

  // returns depth levels, [0] = finest at the input resolution, level i at
  // 1/2^i scale with displacements in that level's pixel units
  std::vector<Value> estimate(Graph& g, Value r_t, Value r_t1) const;

  const FlowConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 private:
  FlowConfig cfg_;
  ParamSet params_;
  ConvSpec c1_, c2_, c3_;
};

// Sum over levels of the mean squared residual between the reference level
// and the warped source level.
Value flow_loss(Graph& g, const std::vector<Value>& pyr_t,
                const std::vector<Value>& pyr_t1,
                const std::vector<Value>& flows);

// flow_loss over pyramids of (r_t, r_t1) plus the squared warp residual
// averaged over the union of the reference frame's skeleton/boundary points
// (raw_point_sum restores the unnormalised sum).
Value ctc_loss(Graph& g, Value r_t, Value r_t1, const std::vector<Value>& flows,
               const TopoPointSet& zk_hat, const TopoPointSet& zb_hat,
               bool raw_point_sum = false);

}  // namespace topseg
