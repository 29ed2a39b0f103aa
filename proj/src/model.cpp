#include "topseg/model.hpp"

#include <cmath>
#include <stdexcept>

namespace topseg {

void NetConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("NetConfig: depth must be >= 2");
  if (base_width < 4) throw std::invalid_argument("NetConfig: base_width must be >= 4");
  if (num_classes < 2) throw std::invalid_argument("NetConfig: num_classes must be >= 2");
  if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
}

Parameter& ParamSet::add(const std::string& name, Shape shape) {
  params_.emplace_back(name, Tensor(shape));
  return params_.back();
}

std::vector<Parameter*> ParamSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParamSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<Parameter*> ParamSet::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) out.push_back(&p);
  return out;
}

size_t ParamSet::scalar_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

size_t ParamSet::scalar_count(const std::string& prefix) const {
  size_t n = 0;
  for (const auto& p : params_)
    if (p.name.rfind(prefix, 0) == 0) n += p.value.size();
  return n;
}

void ParamSet::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

ConvSpec make_conv(ParamSet& ps, const std::string& name, int cin, int cout,
                   int k, Rng& rng) {
  ConvSpec c;
  c.w = &ps.add(name + ".w", Shape(cout, cin, k, k));
  c.b = &ps.add(name + ".b", Shape(1, cout, 1, 1));
  c.pad = k / 2;
  const double limit = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
  Tensor& w = c.w->value;
  for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return c;
}

namespace {
constexpr double kSlope = 0.1;  // leaky slope; keeps gradients alive everywhere
}

DualTaskNet::DualTaskNet(const NetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed ^ 0x746f707365676e74ULL);
  std::vector<int> widths(cfg_.depth);
  for (int i = 0; i < cfg_.depth; ++i) widths[i] = cfg_.base_width << i;

  int cin = cfg_.in_channels;
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string base = "enc." + std::to_string(i);
    enc_.push_back({make_conv(params_, base + ".c0", cin, widths[i], 3, rng),
                    make_conv(params_, base + ".c1", widths[i], widths[i], 3, rng)});
    cin = widths[i];
  }

  for (int i = cfg_.depth - 2; i >= 0; --i) {
    const std::string base = "segdec." + std::to_string(i);
    const int cat = widths[i + 1] + widths[i];
    seg_dec_.push_back(
        {make_conv(params_, base + ".c0", cat, widths[i], 3, rng),
         make_conv(params_, base + ".c1", widths[i], widths[i], 3, rng)});
  }
  seg_head_ = make_conv(params_, "segdec.head", widths[0], cfg_.num_classes, 1, rng);

  // multi-scale residual fusion: repeatedly fuse adjacent scales until one
  // full-resolution map remains (two stages at the default depth of 3)
  int levels = cfg_.depth;
  int stage = 0;
  while (levels > 1) {
    std::vector<Fuse> blocks;
    for (int i = 0; i + 1 < levels; ++i) {
      const std::string base =
          "regdec.s" + std::to_string(stage) + ".f" + std::to_string(i);
      Fuse f;
      f.a = make_conv(params_, base + ".c0", widths[i] + widths[i + 1], widths[i], 3, rng);
      f.b = make_conv(params_, base + ".c1", widths[i], widths[i], 3, rng);
      blocks.push_back(f);
    }
    reg_stages_.push_back(std::move(blocks));
    --levels;
    ++stage;
  }
  reg_pre_ = make_conv(params_, "regdec.pre", widths[0], widths[0], 3, rng);
  reg_head_ = make_conv(params_, "regdec.head", widths[0], 1, 1, rng);
}

Value DualTaskNet::double_conv(Graph& g, Value x, const ConvSpec& c1,
                               const ConvSpec& c2) const {
  x = g.leaky_relu(c1(g, x), kSlope);
  return g.leaky_relu(c2(g, x), kSlope);
}

Value DualTaskNet::fuse(Graph& g, Value fine, Value coarse, const Fuse& f) const {
  Value up = g.upsample_bilinear2(coarse);
  Value y = g.leaky_relu(f.a(g, g.concat_channels(fine, up)), kSlope);
  y = f.b(g, y);
  return g.leaky_relu(g.add(y, fine), kSlope);
}

DualTaskNet::Outputs DualTaskNet::forward(Graph& g, Value images) const {
  const Shape s = g.val(images).shape();
  if (s.c != cfg_.in_channels)
    throw std::invalid_argument("forward: expected " +
                                std::to_string(cfg_.in_channels) + " channels, got " +
                                std::to_string(s.c));
  const int div = 1 << (cfg_.depth - 1);
  if (s.h % div != 0 || s.w % div != 0)
    throw std::invalid_argument("forward: image sides must be divisible by " +
                                std::to_string(div) + ", got " + s.str());

  std::vector<Value> feats;
  Value cur = images;
  for (int i = 0; i < cfg_.depth; ++i) {
    cur = double_conv(g, cur, enc_[i][0], enc_[i][1]);
    feats.push_back(cur);
    if (i + 1 < cfg_.depth) cur = g.max_pool2(cur);
  }

  // segmentation decoder: plain mirror with skip connections
  Value x = feats[cfg_.depth - 1];
  for (int k = 0; k < cfg_.depth - 1; ++k) {
    const int lvl = cfg_.depth - 2 - k;
    x = g.upsample_bilinear2(x);
    x = g.concat_channels(x, feats[lvl]);
    x = double_conv(g, x, seg_dec_[k][0], seg_dec_[k][1]);
  }
  Value seg = g.softmax_channels(seg_head_(g, x));

  // regression decoder: cross-scale residual fusion over all encoder scales
  std::vector<Value> maps = feats;
  for (const auto& stage : reg_stages_) {
    std::vector<Value> next;
    for (size_t i = 0; i + 1 < maps.size(); ++i)
      next.push_back(fuse(g, maps[i], maps[i + 1], stage[i]));
    maps = std::move(next);
  }
  Value r = g.leaky_relu(reg_pre_(g, maps[0]), kSlope);
  Value sdt = g.sigmoid(reg_head_(g, r));

  return {seg, sdt};
}

}  // namespace topseg
