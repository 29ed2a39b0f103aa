#pragma once

#include <functional>
#include <vector>

#include "topseg/tensor.hpp"

namespace topseg {

// Trainable tensor with gradient and Adam state. Owned by the model /
// estimator, bound into a Graph per forward pass.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.shape()),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Integer pixel coordinate (row, col).
struct Pt {
  int y = 0, x = 0;
  bool operator==(const Pt& o) const { return y == o.y && x == o.x; }
  bool operator<(const Pt& o) const { return y != o.y ? y < o.y : x < o.x; }
};

// Reverse-mode tape. A Graph is built fresh for every forward pass; ops
// append nodes, backward() sweeps the tape in reverse and accumulates
// gradients into bound Parameters.
class Graph {
 public:
  // ---- leaves ----
  Value constant(Tensor v);                // no gradient tracked
  Value input(Tensor v);                   // gradient tracked (for grad checks)
  Value param(Parameter& p);               // gradient accumulated into p.grad

  // ---- elementwise ----
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value add_scalar(Value a, double s);
  Value mul_scalar(Value a, double s);
  Value abs(Value a);
  Value square(Value a);
  Value relu(Value a);
  Value leaky_relu(Value a, double slope);
  Value sigmoid(Value a);

  // ---- structure ----
  Value concat_channels(Value a, Value b);
  Value slice_batch(Value x, int start, int count);
  Value slice_channels(Value x, int start, int count);
  Value softmax_channels(Value x);

  // ---- spatial ----
  // stride-1 conv with symmetric zero padding; w is (Cout,Cin,kh,kw), b is (1,Cout,1,1)
  Value conv2d(Value x, Value w, Value b, int pad);
  Value max_pool2(Value x);
  Value avg_pool2(Value x);
  Value upsample_nearest2(Value x);
  Value upsample_bilinear2(Value x);
  // backward warp: out(n,c,y,x) = bilinear sample of field at
  // (y + flow(n,0,y,x), x + flow(n,1,y,x)), border-clamped.
  Value warp_bilinear(Value field, Value flow);

  // ---- reductions / misc ----
  Value sum_all(Value a);
  Value mean_all(Value a);
  // x must be (1,1,H,W); result is (1,1,1,P) of x at the given pixels
  Value gather_points(Value x, const std::vector<Pt>& pts);
  Value stop_gradient(Value a);

  // ---- execution ----
  void backward(Value scalar_loss);

  const Tensor& val(Value v) const { return nodes_[v.idx].value; }
  const Tensor& grad(Value v) const { return nodes_[v.idx].grad; }
  double scalar(Value v) const { return nodes_[v.idx].value.item(); }
  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    std::function<void(Graph&, int)> backward;  // pushes grad into parents
    bool requires_grad = false;
    Parameter* bound = nullptr;
  };

  int push(Tensor value, std::vector<int> parents,
           std::function<void(Graph&, int)> bw);
  Node& node(Value v) { return nodes_[v.idx]; }
  Tensor& grad_ref(int idx) { return nodes_[idx].grad; }

  std::vector<Node> nodes_;
};

}  // namespace topseg
