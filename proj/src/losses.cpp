#include "topseg/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace topseg {

void LossWeights::validate() const {
  if (w_seg < 0 || w_reg < 0 || w_ps < 0 || w_itc < 0 || w_ctc < 0)
    throw std::invalid_argument("LossWeights: weights must be nonnegative");
  if (rampup_steps < 0)
    throw std::invalid_argument("LossWeights: rampup_steps must be >= 0");
}

double ramp_factor(int step, int rampup_steps) {
  if (rampup_steps <= 0) return 1.0;
  const double s = std::min(static_cast<double>(step) / rampup_steps, 1.0);
  const double d = 1.0 - s;
  return std::exp(-5.0 * d * d);
}

std::atomic<uint64_t>& degeneracy_counter() {
  static std::atomic<uint64_t> counter{0};
  return counter;
}

Value dice_loss(Graph& g, Value seg, const Tensor& onehot_gt, double eps) {
  const Shape s = g.val(seg).shape();
  check_same_shape(g.val(seg), onehot_gt, "dice_loss");
  if (s.n != 1 || s.c < 2)
    throw std::invalid_argument("dice_loss: expected single frame (1,K,H,W), K >= 2");
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double v = onehot_gt.at(0, c, y, x);
        if (v != 0.0 && v != 1.0)
          throw std::invalid_argument("dice_loss: gt must be one-hot");
        sum += v;
      }
      if (sum != 1.0) throw std::invalid_argument("dice_loss: gt must be one-hot");
    }

  Value acc{};
  const int fg_classes = s.c - 1;
  for (int c = 1; c < s.c; ++c) {
    Value p_c = g.slice_channels(seg, c, 1);
    Tensor gt_c(Shape(1, 1, s.h, s.w));
    double gsum = 0.0;
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v = onehot_gt.at(0, c, y, x);
        gt_c.at(0, 0, y, x) = v;
        gsum += v;
      }
    Value inter = g.sum_all(g.mul(p_c, g.constant(std::move(gt_c))));
    Value psum = g.sum_all(p_c);
    Value num = g.add_scalar(g.mul_scalar(inter, 2.0), eps);
    Value den = g.add_scalar(psum, gsum + eps);
    Value dice_c = g.div(num, den);
    acc = acc.valid() ? g.add(acc, dice_c) : dice_c;
  }
  return g.add_scalar(g.mul_scalar(acc, -1.0 / fg_classes), 1.0);
}

Value l1_reg_loss(Graph& g, Value pred, const SdtField& label, bool* degenerate) {
  const Shape s = g.val(pred).shape();
  check_same_shape(g.val(pred), label.values, "l1_reg_loss");
  if (label.support.height != s.h || label.support.width != s.w)
    throw std::invalid_argument("l1_reg_loss: support shape mismatch");
  const size_t n = label.support.count();
  if (degenerate) *degenerate = n == 0;
  if (n == 0) {
    degeneracy_counter()++;
    return g.constant(Tensor::scalar(0.0));
  }
  Tensor support(Shape(1, 1, s.h, s.w));
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      support.at(0, 0, y, x) = label.support.at(y, x) ? 1.0 : 0.0;
  Value diff = g.abs(g.sub(pred, g.constant(label.values)));
  Value masked = g.mul(diff, g.constant(std::move(support)));
  return g.mul_scalar(g.sum_all(masked), 1.0 / static_cast<double>(n));
}

namespace {

Value mean_abs_dev_from_one(Graph& g, Value field, const std::vector<Pt>& pts) {
  return g.mean_all(g.abs(g.add_scalar(g.gather_points(field, pts), -1.0)));
}

Value mean_at_points(Graph& g, Value field, const std::vector<Pt>& pts) {
  return g.mean_all(g.gather_points(field, pts));
}

}  // namespace

Value tc1_loss(Graph& g, Value sdt, const TopoPointSet& zk, const TopoPointSet& zb) {
  Value acc = g.constant(Tensor::scalar(0.0));
  if (!zk.empty())
    acc = g.add(acc, mean_abs_dev_from_one(g, sdt, zk.points));
  else
    degeneracy_counter()++;
  if (!zb.empty())
    acc = g.add(acc, mean_at_points(g, sdt, zb.points));
  else
    degeneracy_counter()++;
  return acc;
}

Value tc2_loss(Graph& g, Value seg_fg, const TopoPointSet& zk_hat,
               const TopoPointSet& zb_hat) {
  Value acc = g.constant(Tensor::scalar(0.0));
  if (!zk_hat.empty())
    acc = g.add(acc, mean_abs_dev_from_one(g, seg_fg, zk_hat.points));
  else
    degeneracy_counter()++;
  if (!zb_hat.empty())
    acc = g.add(acc, mean_at_points(g, seg_fg, zb_hat.points));
  else
    degeneracy_counter()++;
  return acc;
}

Tensor sharpen(const Tensor& p, double temperature) {
  if (temperature <= 0.0)
    throw std::invalid_argument("sharpen: temperature must be positive");
  const double inv_t = 1.0 / temperature;
  Tensor out = p;
  for (size_t i = 0; i < out.size(); ++i) {
    const double a = std::pow(out[i], inv_t);
    const double b = std::pow(1.0 - out[i], inv_t);
    out[i] = a / (a + b);
  }
  return out;
}

Value pseudo_label_frame_loss(Graph& g, Value seg_fg, Value sdt, double temperature) {
  check_same_shape(g.val(seg_fg), g.val(sdt), "pseudo_label_frame_loss");
  // field-implied soft mask, centred at 0.5 with a fixed 0.1 transition width
  Value soft_mask = g.sigmoid(g.mul_scalar(g.add_scalar(sdt, -0.5), 10.0));
  const Tensor teacher_p = sharpen(g.val(seg_fg), temperature);
  const Tensor teacher_m = sharpen(g.val(soft_mask), temperature);
  Value a = g.mean_all(g.square(g.sub(soft_mask, g.constant(teacher_p))));
  Value b = g.mean_all(g.square(g.sub(seg_fg, g.constant(teacher_m))));
  return g.add(a, b);
}

double total_loss(const LossParts& parts, const LossWeights& weights, int step) {
  weights.validate();
  const struct {
    const char* name;
    double v;
  } named[] = {{"L_seg", parts.seg},
               {"L_reg", parts.reg},
               {"L_ps", parts.ps},
               {"L_ITC", parts.itc},
               {"L_CTC", parts.ctc}};
  for (const auto& t : named)
    if (!std::isfinite(t.v))
      throw std::runtime_error(std::string("total_loss: non-finite term ") + t.name);
  const double r = ramp_factor(step, weights.rampup_steps);
  return weights.w_seg * parts.seg + weights.w_reg * parts.reg +
         r * (weights.w_ps * parts.ps + weights.w_itc * parts.itc +
              weights.w_ctc * parts.ctc);
}

}  // namespace topseg
