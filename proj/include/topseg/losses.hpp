#pragma once

#include <atomic>
#include <cstdint>

#include "topseg/graph.hpp"
#include "topseg/sdt.hpp"

namespace topseg {

struct LossWeights {
  double w_seg = 1.0;
  double w_reg = 1.0;
  double w_ps = 1.0;
  double w_itc = 1.0;
  double w_ctc = 1.0;
  int rampup_steps = 0;

  void validate() const;
};

// Gaussian ramp on the consistency terms:
//   exp(-5 (1 - min(step/rampup, 1))^2), 1 when rampup_steps == 0.
double ramp_factor(int step, int rampup_steps);

// Counts guarded empty-point-set events (flat predictions early in training).
std::atomic<uint64_t>& degeneracy_counter();

// Soft Dice over foreground classes:
//   1 - mean_c (2|P_c ∩ G_c| + eps) / (|P_c| + |G_c| + eps)
// seg: (1,K,H,W) per-pixel simplex; onehot_gt: one-hot of the same shape.
Value dice_loss(Graph& g, Value seg, const Tensor& onehot_gt, double eps = 1e-5);

// Mean absolute error over the label's foreground support; background is
// ignored. Empty support returns 0 and flags the batch degenerate.
Value l1_reg_loss(Graph& g, Value pred, const SdtField& label,
                  bool* degenerate = nullptr);

// mean_{Z^K} |R(x) - 1| + mean_{Z^B} R(x); an empty set contributes 0.
Value tc1_loss(Graph& g, Value sdt, const TopoPointSet& zk, const TopoPointSet& zb);

// mean_{Zhat^K} |S(x) - 1| + mean_{Zhat^B} S(x) on the foreground
// probability; point coordinates are constants, gradient reaches S only.
Value tc2_loss(Graph& g, Value seg_fg, const TopoPointSet& zk_hat,
               const TopoPointSet& zb_hat);

// sharpen(p) = p^(1/T) / (p^(1/T) + (1-p)^(1/T)), applied elementwise
Tensor sharpen(const Tensor& p, double temperature);

// Mutual consistency between the two heads of one frame: the sharpened
// foreground probability teaches the field-implied soft mask
// sigmoid((R - 0.5)/0.1) and vice versa, both via MSE with the teacher side
// detached.
Value pseudo_label_frame_loss(Graph& g, Value seg_fg, Value sdt,
                              double temperature = 0.1);

// The five assembled objective terms (consistency parts pre-ramp).
struct LossParts {
  double seg = 0.0;
  double reg = 0.0;
  double ps = 0.0;
  double itc = 0.0;
  double ctc = 0.0;
};

// Weighted sum with the ramp applied to ps/itc/ctc. Throws
// std::runtime_error naming the offending term on any non-finite input.
double total_loss(const LossParts& parts, const LossWeights& weights, int step);

}  // namespace topseg
