#include "topseg/sdt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace topseg {

size_t BinaryMask::count() const {
  size_t n = 0;
  for (uint8_t b : v) n += b;
  return n;
}

void BinaryMask::validate() const {
  if (height < 1 || width < 1)
    throw std::invalid_argument("BinaryMask: dimensions must be >= 1x1");
  if (v.size() != static_cast<size_t>(height) * width)
    throw std::invalid_argument("BinaryMask: storage size mismatch");
  for (uint8_t b : v)
    if (b > 1) throw std::invalid_argument("BinaryMask: values must be 0 or 1");
}

bool TopoPointSet::contains(int y, int x) const {
  return std::binary_search(points.begin(), points.end(), Pt{y, x});
}

namespace {

// neighbours p2..p9 clockwise from north, as offsets (dy,dx)
constexpr int kNb[8][2] = {{-1, 0}, {-1, 1}, {0, 1},  {1, 1},
                           {1, 0},  {1, -1}, {0, -1}, {-1, -1}};

inline int nb(const BinaryMask& m, int y, int x, int k) {
  const int ny = y + kNb[k][0], nx = x + kNb[k][1];
  return m.in_bounds(ny, nx) ? m.at(ny, nx) : 0;
}

TopoPointSet points_from_mask(const BinaryMask& m, PointKind kind) {
  TopoPointSet out;
  out.kind = kind;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m.at(y, x)) out.points.push_back({y, x});
  return out;  // row-major scan is already sorted
}

}  // namespace

TopoPointSet extract_skeleton(const BinaryMask& mask) {
  mask.validate();
  BinaryMask img = mask;
  std::vector<Pt> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          if (!img.at(y, x)) continue;
          int p[8];
          int b = 0;
          for (int k = 0; k < 8; ++k) {
            p[k] = nb(img, y, x, k);
            b += p[k];
          }
          if (b < 2 || b > 6) continue;
          int a = 0;  // 0->1 transitions in the p2..p9 cycle
          for (int k = 0; k < 8; ++k)
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
          if (a != 1) continue;
          // p2*p4*p6 and p4*p6*p8 on pass 0; p2*p4*p8 and p2*p6*p8 on pass 1
          const bool c1 = pass == 0 ? (p[0] * p[2] * p[4]) == 0 : (p[0] * p[2] * p[6]) == 0;
          const bool c2 = pass == 0 ? (p[2] * p[4] * p[6]) == 0 : (p[0] * p[4] * p[6]) == 0;
          if (c1 && c2) marked.push_back({y, x});
        }
      for (const Pt& q : marked) img.at(q.y, q.x) = 0;
      if (!marked.empty()) changed = true;
    }
  }
  return points_from_mask(img, PointKind::skeleton);
}

TopoPointSet extract_boundary(const BinaryMask& mask) {
  mask.validate();
  TopoPointSet out;
  out.kind = PointKind::boundary;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      bool edge = false;
      const int d4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
      for (const auto& d : d4) {
        const int ny = y + d[0], nx = x + d[1];
        if (!mask.in_bounds(ny, nx) || !mask.at(ny, nx)) {
          edge = true;
          break;
        }
      }
      if (edge) out.points.push_back({y, x});
    }
  return out;
}

std::vector<int> label_components(const BinaryMask& mask, int* num_components) {
  std::vector<int> labels(static_cast<size_t>(mask.height) * mask.width, 0);
  int next = 0;
  std::vector<Pt> stack;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x) || labels[static_cast<size_t>(y) * mask.width + x]) continue;
      ++next;
      stack.push_back({y, x});
      labels[static_cast<size_t>(y) * mask.width + x] = next;
      while (!stack.empty()) {
        const Pt p = stack.back();
        stack.pop_back();
        for (const auto& d : kNb) {
          const int ny = p.y + d[0], nx = p.x + d[1];
          if (!mask.in_bounds(ny, nx) || !mask.at(ny, nx)) continue;
          int& l = labels[static_cast<size_t>(ny) * mask.width + nx];
          if (!l) {
            l = next;
            stack.push_back({ny, nx});
          }
        }
      }
    }
  if (num_components) *num_components = next;
  return labels;
}

namespace {

// Felzenszwalb-Huttenlocher exact squared Euclidean distance transform of a
// site indicator (0 at sites, +inf elsewhere), separable over rows/columns.
constexpr double kInf = std::numeric_limits<double>::infinity();

void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (f[v[0]] == kInf) {
      v[0] = q;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    if (f[v[0]] == kInf) {
      d[q] = kInf;
      continue;
    }
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

// squared EDT over the grid; sites where site(y,x) is true
std::vector<double> edt_squared(int h, int w, const std::vector<uint8_t>& site) {
  std::vector<double> dist(static_cast<size_t>(h) * w);
  std::vector<double> f(std::max(h, w)), d(std::max(h, w));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y)
      f[y] = site[static_cast<size_t>(y) * w + x] ? 0.0 : kInf;
    edt_1d(f, d, h);
    for (int y = 0; y < h; ++y) dist[static_cast<size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = dist[static_cast<size_t>(y) * w + x];
    edt_1d(f, d, w);
    for (int x = 0; x < w; ++x) dist[static_cast<size_t>(y) * w + x] = d[x];
  }
  return dist;
}

}  // namespace

SdtField compute_sdt(const BinaryMask& mask) {
  mask.validate();
  const int h = mask.height, w = mask.width;
  SdtField out;
  out.values = Tensor(Shape(1, 1, h, w));
  out.support = mask;

  const TopoPointSet skeleton = extract_skeleton(mask);
  const TopoPointSet boundary = extract_boundary(mask);
  if (skeleton.empty()) return out;  // empty mask

  int ncomp = 0;
  const std::vector<int> comp = label_components(mask, &ncomp);

  std::vector<uint8_t> sites(static_cast<size_t>(h) * w, 0);
  for (const Pt& p : skeleton.points) sites[static_cast<size_t>(p.y) * w + p.x] = 1;
  const std::vector<double> dk2 = edt_squared(h, w, sites);

  // boundary distances restricted per component so disjoint objects do not
  // leak distances into each other
  std::vector<double> db2(static_cast<size_t>(h) * w, kInf);
  for (int c = 1; c <= ncomp; ++c) {
    std::fill(sites.begin(), sites.end(), 0);
    bool any = false;
    for (const Pt& p : boundary.points)
      if (comp[static_cast<size_t>(p.y) * w + p.x] == c) {
        sites[static_cast<size_t>(p.y) * w + p.x] = 1;
        any = true;
      }
    if (!any) continue;
    const std::vector<double> d = edt_squared(h, w, sites);
    for (size_t i = 0; i < d.size(); ++i)
      if (comp[i] == c) db2[i] = d[i];
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const size_t i = static_cast<size_t>(y) * w + x;
      if (skeleton.contains(y, x)) {
        out.values.at(0, 0, y, x) = 1.0;  // skeleton precedence
        continue;
      }
      if (boundary.contains(y, x)) {
        out.values.at(0, 0, y, x) = 0.0;
        continue;
      }
      const double db = std::sqrt(db2[i]);
      const double dk = std::sqrt(dk2[i]);
      out.values.at(0, 0, y, x) = db / (db + dk);
    }
  return out;
}

std::pair<TopoPointSet, TopoPointSet> point_sets_from_prediction(
    const SdtField& field, double tau_boundary, double tau_skeleton) {
  if (!(tau_boundary >= 0.0 && tau_boundary < tau_skeleton && tau_skeleton <= 1.0))
    throw std::invalid_argument("point_sets_from_prediction: need 0 <= tau_b < tau_k <= 1");
  const Shape s = field.values.shape();
  for (size_t i = 0; i < field.values.size(); ++i)
    if (!std::isfinite(field.values[i]))
      throw std::invalid_argument("point_sets_from_prediction: non-finite field");
  TopoPointSet sk, bd;
  sk.kind = PointKind::skeleton;
  bd.kind = PointKind::boundary;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const double v = field.values.at(0, 0, y, x);
      if (v >= tau_skeleton)
        sk.points.push_back({y, x});
      else if (v > 0.0 && v <= tau_boundary)
        bd.points.push_back({y, x});
    }
  return {std::move(sk), std::move(bd)};
}

SdtField field_from_tensor(const Tensor& values) {
  const Shape s = values.shape();
  if (s.n != 1 || s.c != 1)
    throw std::invalid_argument("field_from_tensor: expected (1,1,H,W)");
  SdtField f;
  f.values = values;
  f.support = BinaryMask(s.h, s.w);
  std::fill(f.support.v.begin(), f.support.v.end(), 1);
  return f;
}

}  // namespace topseg
