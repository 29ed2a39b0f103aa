#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "topseg/graph.hpp"
#include "topseg/tensor.hpp"

namespace topseg {

// Binary foreground mask, values exactly 0 or 1.
struct BinaryMask {
  int height = 0, width = 0;
  std::vector<uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0) {}

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int y, int x) const {
    return y >= 0 && y < height && x >= 0 && x < width;
  }
  size_t count() const;
  void validate() const;  // dims >= 1, values in {0,1}
};

enum class PointKind { skeleton, boundary };

// Sorted, duplicate-free pixel set; membership test is the indicator function.
struct TopoPointSet {
  PointKind kind = PointKind::skeleton;
  std::vector<Pt> points;  // sorted row-major

  bool contains(int y, int x) const;  // the indicator of the point set
  bool empty() const { return points.empty(); }
  size_t size() const { return points.size(); }
};

// Per-pixel field in [0,1] defined on a foreground support: 0 on the object
// boundary, 1 on its skeleton, 0 (and outside support) on background.
struct SdtField {
  Tensor values;       // (1,1,H,W)
  BinaryMask support;  // foreground where the field is defined
};

// Zhang-Suen morphological thinning of the foreground. Empty mask gives an
// empty set; isolated pixels are fixed points.
TopoPointSet extract_skeleton(const BinaryMask& mask);

// Foreground pixels with at least one background 4-neighbour; the image
// border counts as background.
TopoPointSet extract_boundary(const BinaryMask& mask);

// Skeleton-aware distance transform of a label mask:
//   value(x) = d_boundary(x) / (d_boundary(x) + d_skeleton(x))
// with d_boundary restricted to the pixel's own 8-connected component and
// d_skeleton taken over all skeleton pixels. Pixels that are both skeleton
// and boundary (1-pixel-wide objects) get the skeleton value 1.
SdtField compute_sdt(const BinaryMask& mask);

// Threshold a predicted field into skeleton / boundary point sets:
//   skeleton = {x : field >= tau_skeleton}, boundary = {x : 0 < field <= tau_boundary}.
std::pair<TopoPointSet, TopoPointSet> point_sets_from_prediction(
    const SdtField& field, double tau_boundary = 0.1, double tau_skeleton = 0.8);

// Wrap a raw prediction map (1,1,H,W) as a field defined everywhere.
SdtField field_from_tensor(const Tensor& values);

// 8-connected component labels, 0 = background, components numbered from 1.
std::vector<int> label_components(const BinaryMask& mask, int* num_components);

}  // namespace topseg
