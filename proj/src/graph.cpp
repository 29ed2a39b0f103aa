#include "topseg/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace topseg {

namespace {

void check_even_hw(const Shape& s, const char* what) {
  if (s.h % 2 != 0 || s.w % 2 != 0)
    throw std::invalid_argument(std::string(what) + ": odd spatial size " + s.str());
}

}  // namespace

int Graph::push(Tensor value, std::vector<int> parents,
                std::function<void(Graph&, int)> bw) {
  Node n;
  n.requires_grad = false;
  for (int p : parents)
    if (nodes_[p].requires_grad) n.requires_grad = true;
  n.value = std::move(value);
  if (n.requires_grad) n.grad = Tensor(n.value.shape());
  n.parents = std::move(parents);
  n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Graph::constant(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Value Graph::input(Tensor v) {
  Node n;
  n.value = std::move(v);
  n.grad = Tensor(n.value.shape());
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Value Graph::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.grad = Tensor(p.value.shape());
  n.requires_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

// ---------------------------------------------------------------- elementwise

Value Graph::add(Value a, Value b) {
  check_same_shape(val(a), val(b), "add");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  const int ia = a.idx, ib = b.idx;
  return {push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_ref(ia);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
    }
  })};
}

Value Graph::sub(Value a, Value b) {
  check_same_shape(val(a), val(b), "sub");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  const int ia = a.idx, ib = b.idx;
  return {push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_ref(ia);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
    }
  })};
}

Value Graph::mul(Value a, Value b) {
  check_same_shape(val(a), val(b), "mul");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  const int ia = a.idx, ib = b.idx;
  return {push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[ia].value;
    const Tensor& vb2 = g.nodes_[ib].value;
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_ref(ia);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * vb2[i];
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * va[i];
    }
  })};
}

Value Graph::div(Value a, Value b) {
  check_same_shape(val(a), val(b), "div");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] /= vb[i];
  const int ia = a.idx, ib = b.idx;
  return {push(std::move(out), {ia, ib}, [ia, ib](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[ia].value;
    const Tensor& vb2 = g.nodes_[ib].value;
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_ref(ia);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / vb2[i];
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      for (size_t i = 0; i < go.size(); ++i)
        gb[i] -= go[i] * va[i] / (vb2[i] * vb2[i]);
    }
  })};
}

Value Graph::add_scalar(Value a, double s) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] += s;
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
  })};
}

Value Graph::mul_scalar(Value a, double s) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia, s](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
  })};
}

Value Graph::abs(Value a) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[ia].value;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i)
      ga[i] += go[i] * (va[i] > 0.0 ? 1.0 : (va[i] < 0.0 ? -1.0 : 0.0));
  })};
}

Value Graph::square(Value a) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= out[i];
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[ia].value;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * 2.0 * va[i];
  })};
}

Value Graph::relu(Value a) { return leaky_relu(a, 0.0); }

Value Graph::leaky_relu(Value a, double slope) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= slope;
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia, slope](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& va = g.nodes_[ia].value;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i)
      ga[i] += go[i] * (va[i] > 0.0 ? 1.0 : slope);
  })};
}

Value Graph::sigmoid(Value a) {
  Tensor out = val(a);
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  const int ia = a.idx;
  return {push(std::move(out), {ia}, [ia](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& vo = g.nodes_[self].value;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < go.size(); ++i)
      ga[i] += go[i] * vo[i] * (1.0 - vo[i]);
  })};
}

// ------------------------------------------------------------------ structure

Value Graph::concat_channels(Value a, Value b) {
  const Shape& sa = val(a).shape();
  const Shape& sb = val(b).shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w)
    throw std::invalid_argument("concat_channels: shape mismatch " + sa.str() +
                                " vs " + sb.str());
  Tensor out(Shape(sa.n, sa.c + sb.c, sa.h, sa.w));
  const Tensor& va = val(a);
  const Tensor& vb = val(b);
  const size_t plane = static_cast<size_t>(sa.h) * sa.w;
  for (int n = 0; n < sa.n; ++n) {
    for (int c = 0; c < sa.c; ++c)
      std::copy_n(va.data() + va.offset(n, c, 0, 0), plane,
                  out.data() + out.offset(n, c, 0, 0));
    for (int c = 0; c < sb.c; ++c)
      std::copy_n(vb.data() + vb.offset(n, c, 0, 0), plane,
                  out.data() + out.offset(n, sa.c + c, 0, 0));
  }
  const int ia = a.idx, ib = b.idx;
  const int ca = sa.c;
  return {push(std::move(out), {ia, ib}, [ia, ib, ca](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Shape so = go.shape();
    const size_t plane = static_cast<size_t>(so.h) * so.w;
    if (g.nodes_[ia].requires_grad) {
      Tensor& ga = g.grad_ref(ia);
      for (int n = 0; n < so.n; ++n)
        for (int c = 0; c < ca; ++c) {
          const double* src = go.data() + go.offset(n, c, 0, 0);
          double* dst = ga.data() + ga.offset(n, c, 0, 0);
          for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      const int cb = so.c - ca;
      for (int n = 0; n < so.n; ++n)
        for (int c = 0; c < cb; ++c) {
          const double* src = go.data() + go.offset(n, ca + c, 0, 0);
          double* dst = gb.data() + gb.offset(n, c, 0, 0);
          for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    }
  })};
}

Value Graph::slice_batch(Value x, int start, int count) {
  const Shape& s = val(x).shape();
  if (start < 0 || count < 1 || start + count > s.n)
    throw std::invalid_argument("slice_batch: bad range");
  Tensor out(Shape(count, s.c, s.h, s.w));
  const Tensor& vx = val(x);
  const size_t block = static_cast<size_t>(s.c) * s.h * s.w;
  std::copy_n(vx.data() + start * block, count * block, out.data());
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix, start, block](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    double* dst = gx.data() + start * block;
    for (size_t i = 0; i < go.size(); ++i) dst[i] += go[i];
  })};
}

Value Graph::slice_channels(Value x, int start, int count) {
  const Shape& s = val(x).shape();
  if (start < 0 || count < 1 || start + count > s.c)
    throw std::invalid_argument("slice_channels: bad range");
  Tensor out(Shape(s.n, count, s.h, s.w));
  const Tensor& vx = val(x);
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < count; ++c)
      std::copy_n(vx.data() + vx.offset(n, start + c, 0, 0), plane,
                  out.data() + out.offset(n, c, 0, 0));
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix, start](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Shape so = go.shape();
    Tensor& gx = g.grad_ref(ix);
    const size_t plane = static_cast<size_t>(so.h) * so.w;
    for (int n = 0; n < so.n; ++n)
      for (int c = 0; c < so.c; ++c) {
        const double* src = go.data() + go.offset(n, c, 0, 0);
        double* dst = gx.data() + gx.offset(n, start + c, 0, 0);
        for (size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
  })};
}

Value Graph::softmax_channels(Value x) {
  const Shape s = val(x).shape();
  Tensor out(s);
  const Tensor& vx = val(x);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int xx = 0; xx < s.w; ++xx) {
        double m = vx.at(n, 0, y, xx);
        for (int c = 1; c < s.c; ++c) m = std::max(m, vx.at(n, c, y, xx));
        double z = 0.0;
        for (int c = 0; c < s.c; ++c) {
          const double e = std::exp(vx.at(n, c, y, xx) - m);
          out.at(n, c, y, xx) = e;
          z += e;
        }
        for (int c = 0; c < s.c; ++c) out.at(n, c, y, xx) /= z;
      }
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& p = g.nodes_[self].value;
    Tensor& gx = g.grad_ref(ix);
    const Shape s = p.shape();
    for (int n = 0; n < s.n; ++n)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          double dot = 0.0;
          for (int c = 0; c < s.c; ++c)
            dot += go.at(n, c, y, xx) * p.at(n, c, y, xx);
          for (int c = 0; c < s.c; ++c)
            gx.at(n, c, y, xx) +=
                p.at(n, c, y, xx) * (go.at(n, c, y, xx) - dot);
        }
  })};
}

// -------------------------------------------------------------------- spatial

Value Graph::conv2d(Value x, Value w, Value b, int pad) {
  const Shape sx = val(x).shape();
  const Shape sw = val(w).shape();
  const Shape sb = val(b).shape();
  if (sw.c != sx.c)
    throw std::invalid_argument("conv2d: in-channel mismatch " + sx.str() +
                                " vs weight " + sw.str());
  if (sb.c != sw.n || sb.n != 1 || sb.h != 1 || sb.w != 1)
    throw std::invalid_argument("conv2d: bias shape " + sb.str());
  const int N = sx.n, Ci = sx.c, H = sx.h, W = sx.w;
  const int Co = sw.n, kh = sw.h, kw = sw.w;
  Tensor out(Shape(N, Co, H, W));
  const Tensor& vx = val(x);
  const Tensor& vw = val(w);
  const Tensor& vb = val(b);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co) {
      double* outp = out.data() + out.offset(n, co, 0, 0);
      const double bias = vb[co];
      for (int i = 0; i < H * W; ++i) outp[i] = bias;
      for (int ci = 0; ci < Ci; ++ci)
        for (int ky = 0; ky < kh; ++ky)
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = vw.at(co, ci, ky, kx);
            if (wv == 0.0) continue;
            const int dy = ky - pad, dx = kx - pad;
            const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
            const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
            for (int y = y0; y < y1; ++y) {
              const double* in_row = vx.data() + vx.offset(n, ci, y + dy, 0) + dx;
              double* out_row = outp + static_cast<size_t>(y) * W;
              for (int xx = x0; xx < x1; ++xx) out_row[xx] += wv * in_row[xx];
            }
          }
    }
  const int ix = x.idx, iw = w.idx, ib = b.idx;
  return {push(std::move(out), {ix, iw, ib}, [ix, iw, ib, pad](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& vx2 = g.nodes_[ix].value;
    const Tensor& vw2 = g.nodes_[iw].value;
    const Shape sx2 = vx2.shape();
    const Shape sw2 = vw2.shape();
    const int N = sx2.n, Ci = sx2.c, H = sx2.h, W = sx2.w;
    const int Co = sw2.n, kh = sw2.h, kw = sw2.w;
    if (g.nodes_[ib].requires_grad) {
      Tensor& gb = g.grad_ref(ib);
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co) {
          const double* gp = go.data() + go.offset(n, co, 0, 0);
          double acc = 0.0;
          for (int i = 0; i < H * W; ++i) acc += gp[i];
          gb[co] += acc;
        }
    }
    if (g.nodes_[iw].requires_grad) {
      Tensor& gw = g.grad_ref(iw);
      for (int n = 0; n < N; ++n)
        for (int co = 0; co < Co; ++co)
          for (int ci = 0; ci < Ci; ++ci)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int dy = ky - pad, dx = kx - pad;
                const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                double acc = 0.0;
                for (int y = y0; y < y1; ++y) {
                  const double* in_row =
                      vx2.data() + vx2.offset(n, ci, y + dy, 0) + dx;
                  const double* go_row = go.data() + go.offset(n, co, y, 0);
                  for (int xx = x0; xx < x1; ++xx) acc += go_row[xx] * in_row[xx];
                }
                gw.at(co, ci, ky, kx) += acc;
              }
    }
    if (g.nodes_[ix].requires_grad) {
      Tensor& gx = g.grad_ref(ix);
      // grad_in = correlation of grad_out with the kernel reflected in both axes
      for (int n = 0; n < N; ++n)
        for (int ci = 0; ci < Ci; ++ci)
          for (int co = 0; co < Co; ++co)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const double wv = vw2.at(co, ci, ky, kx);
                if (wv == 0.0) continue;
                const int dy = ky - pad, dx = kx - pad;
                // out(y,x) uses in(y+dy, x+dx): scatter back as gather
                const int y0 = std::max(0, dy), y1 = std::min(H, H + dy);
                const int x0 = std::max(0, dx), x1 = std::min(W, W + dx);
                for (int iy = y0; iy < y1; ++iy) {
                  const double* go_row =
                      go.data() + go.offset(n, co, iy - dy, 0) - dx;
                  double* gx_row = gx.data() + gx.offset(n, ci, iy, 0);
                  for (int ixx = x0; ixx < x1; ++ixx)
                    gx_row[ixx] += wv * go_row[ixx];
                }
              }
    }
  })};
}

Value Graph::max_pool2(Value x) {
  const Shape s = val(x).shape();
  check_even_hw(s, "max_pool2");
  const int N = s.n, C = s.c, Ho = s.h / 2, Wo = s.w / 2;
  Tensor out(Shape(N, C, Ho, Wo));
  std::vector<int32_t> arg(out.size());
  const Tensor& vx = val(x);
  size_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx, ++o) {
          double best = vx.at(n, c, 2 * y, 2 * xx);
          int besti = 0;
          const double cands[4] = {best, vx.at(n, c, 2 * y, 2 * xx + 1),
                                   vx.at(n, c, 2 * y + 1, 2 * xx),
                                   vx.at(n, c, 2 * y + 1, 2 * xx + 1)};
          for (int k = 1; k < 4; ++k)
            if (cands[k] > best) {
              best = cands[k];
              besti = k;
            }
          out[o] = best;
          arg[o] = besti;
        }
  const int ix = x.idx;
  return {push(std::move(out), {ix},
               [ix, arg = std::move(arg)](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    const Shape so = go.shape();
    size_t o = 0;
    for (int n = 0; n < so.n; ++n)
      for (int c = 0; c < so.c; ++c)
        for (int y = 0; y < so.h; ++y)
          for (int xx = 0; xx < so.w; ++xx, ++o) {
            const int k = arg[o];
            gx.at(n, c, 2 * y + k / 2, 2 * xx + k % 2) += go[o];
          }
  })};
}

Value Graph::avg_pool2(Value x) {
  const Shape s = val(x).shape();
  check_even_hw(s, "avg_pool2");
  const int N = s.n, C = s.c, Ho = s.h / 2, Wo = s.w / 2;
  Tensor out(Shape(N, C, Ho, Wo));
  const Tensor& vx = val(x);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx)
          out.at(n, c, y, xx) =
              0.25 * (vx.at(n, c, 2 * y, 2 * xx) + vx.at(n, c, 2 * y, 2 * xx + 1) +
                      vx.at(n, c, 2 * y + 1, 2 * xx) +
                      vx.at(n, c, 2 * y + 1, 2 * xx + 1));
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    const Shape so = go.shape();
    for (int n = 0; n < so.n; ++n)
      for (int c = 0; c < so.c; ++c)
        for (int y = 0; y < so.h; ++y)
          for (int xx = 0; xx < so.w; ++xx) {
            const double gq = 0.25 * go.at(n, c, y, xx);
            gx.at(n, c, 2 * y, 2 * xx) += gq;
            gx.at(n, c, 2 * y, 2 * xx + 1) += gq;
            gx.at(n, c, 2 * y + 1, 2 * xx) += gq;
            gx.at(n, c, 2 * y + 1, 2 * xx + 1) += gq;
          }
  })};
}

Value Graph::upsample_nearest2(Value x) {
  const Shape s = val(x).shape();
  Tensor out(Shape(s.n, s.c, s.h * 2, s.w * 2));
  const Tensor& vx = val(x);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * 2; ++y)
        for (int xx = 0; xx < s.w * 2; ++xx)
          out.at(n, c, y, xx) = vx.at(n, c, y / 2, xx / 2);
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    const Shape so = go.shape();
    for (int n = 0; n < so.n; ++n)
      for (int c = 0; c < so.c; ++c)
        for (int y = 0; y < so.h; ++y)
          for (int xx = 0; xx < so.w; ++xx)
            gx.at(n, c, y / 2, xx / 2) += go.at(n, c, y, xx);
  })};
}

namespace {

// sample positions for 2x bilinear upscaling: out(Y) reads in(Y/2 - 0.25),
// border-clamped (half-pixel-centre convention)
struct Lin2x {
  int i0, i1;
  double f;  // weight of i1
};

Lin2x lin2x(int out_idx, int in_size) {
  const double s = 0.5 * out_idx - 0.25;
  double sc = s < 0.0 ? 0.0 : (s > in_size - 1 ? in_size - 1 : s);
  int i0 = static_cast<int>(std::floor(sc));
  if (i0 > in_size - 1) i0 = in_size - 1;
  const int i1 = std::min(i0 + 1, in_size - 1);
  return {i0, i1, sc - i0};
}

}  // namespace

Value Graph::upsample_bilinear2(Value x) {
  const Shape s = val(x).shape();
  Tensor out(Shape(s.n, s.c, s.h * 2, s.w * 2));
  const Tensor& vx = val(x);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h * 2; ++y) {
        const Lin2x ly = lin2x(y, s.h);
        for (int xx = 0; xx < s.w * 2; ++xx) {
          const Lin2x lx = lin2x(xx, s.w);
          out.at(n, c, y, xx) =
              (1 - ly.f) * ((1 - lx.f) * vx.at(n, c, ly.i0, lx.i0) +
                            lx.f * vx.at(n, c, ly.i0, lx.i1)) +
              ly.f * ((1 - lx.f) * vx.at(n, c, ly.i1, lx.i0) +
                      lx.f * vx.at(n, c, ly.i1, lx.i1));
        }
      }
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    const Shape si = gx.shape();
    const Shape so = go.shape();
    for (int n = 0; n < so.n; ++n)
      for (int c = 0; c < so.c; ++c)
        for (int y = 0; y < so.h; ++y) {
          const Lin2x ly = lin2x(y, si.h);
          for (int xx = 0; xx < so.w; ++xx) {
            const Lin2x lx = lin2x(xx, si.w);
            const double gv = go.at(n, c, y, xx);
            gx.at(n, c, ly.i0, lx.i0) += gv * (1 - ly.f) * (1 - lx.f);
            gx.at(n, c, ly.i0, lx.i1) += gv * (1 - ly.f) * lx.f;
            gx.at(n, c, ly.i1, lx.i0) += gv * ly.f * (1 - lx.f);
            gx.at(n, c, ly.i1, lx.i1) += gv * ly.f * lx.f;
          }
        }
  })};
}

Value Graph::warp_bilinear(Value field, Value flow) {
  const Shape sf = val(field).shape();
  const Shape sl = val(flow).shape();
  if (sl.c != 2 || sl.n != sf.n || sl.h != sf.h || sl.w != sf.w)
    throw std::invalid_argument("warp_bilinear: flow shape " + sl.str() +
                                " does not match field " + sf.str());
  const Tensor& vl = val(flow);
  for (size_t i = 0; i < vl.size(); ++i)
    if (!std::isfinite(vl[i]))
      throw std::invalid_argument("warp_bilinear: non-finite flow");
  const int N = sf.n, C = sf.c, H = sf.h, W = sf.w;
  Tensor out(sf);
  const Tensor& vf = val(field);
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        double sy = y + vl.at(n, 0, y, xx);
        double sx = xx + vl.at(n, 1, y, xx);
        sy = sy < 0.0 ? 0.0 : (sy > H - 1 ? H - 1 : sy);
        sx = sx < 0.0 ? 0.0 : (sx > W - 1 ? W - 1 : sx);
        const int y0 = std::min(static_cast<int>(std::floor(sy)), H - 1);
        const int x0 = std::min(static_cast<int>(std::floor(sx)), W - 1);
        const int y1 = std::min(y0 + 1, H - 1);
        const int x1 = std::min(x0 + 1, W - 1);
        const double fy = sy - y0, fx = sx - x0;
        for (int c = 0; c < C; ++c)
          out.at(n, c, y, xx) =
              (1 - fy) * ((1 - fx) * vf.at(n, c, y0, x0) + fx * vf.at(n, c, y0, x1)) +
              fy * ((1 - fx) * vf.at(n, c, y1, x0) + fx * vf.at(n, c, y1, x1));
      }
  const int ifld = field.idx, iflw = flow.idx;
  return {push(std::move(out), {ifld, iflw}, [ifld, iflw](Graph& g, int self) {
    const Tensor& go = g.nodes_[self].grad;
    const Tensor& vf = g.nodes_[ifld].value;
    const Tensor& vl = g.nodes_[iflw].value;
    const Shape sf = vf.shape();
    const int N = sf.n, C = sf.c, H = sf.h, W = sf.w;
    const bool need_f = g.nodes_[ifld].requires_grad;
    const bool need_l = g.nodes_[iflw].requires_grad;
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) {
          const double ry = y + vl.at(n, 0, y, xx);
          const double rx = xx + vl.at(n, 1, y, xx);
          const bool cy = ry < 0.0 || ry > H - 1;  // clamped: no flow gradient
          const bool cx = rx < 0.0 || rx > W - 1;
          const double sy = cy ? (ry < 0.0 ? 0.0 : H - 1) : ry;
          const double sx = cx ? (rx < 0.0 ? 0.0 : W - 1) : rx;
          const int y0 = std::min(static_cast<int>(std::floor(sy)), H - 1);
          const int x0 = std::min(static_cast<int>(std::floor(sx)), W - 1);
          const int y1 = std::min(y0 + 1, H - 1);
          const int x1 = std::min(x0 + 1, W - 1);
          const double fy = sy - y0, fx = sx - x0;
          double gdy = 0.0, gdx = 0.0;
          for (int c = 0; c < C; ++c) {
            const double gv = go.at(n, c, y, xx);
            if (gv == 0.0) continue;
            if (need_f) {
              Tensor& gf = g.grad_ref(ifld);
              gf.at(n, c, y0, x0) += gv * (1 - fy) * (1 - fx);
              gf.at(n, c, y0, x1) += gv * (1 - fy) * fx;
              gf.at(n, c, y1, x0) += gv * fy * (1 - fx);
              gf.at(n, c, y1, x1) += gv * fy * fx;
            }
            if (need_l) {
              const double dvy = (1 - fx) * (vf.at(n, c, y1, x0) - vf.at(n, c, y0, x0)) +
                                 fx * (vf.at(n, c, y1, x1) - vf.at(n, c, y0, x1));
              const double dvx = (1 - fy) * (vf.at(n, c, y0, x1) - vf.at(n, c, y0, x0)) +
                                 fy * (vf.at(n, c, y1, x1) - vf.at(n, c, y1, x0));
              gdy += gv * dvy;
              gdx += gv * dvx;
            }
          }
          if (need_l) {
            Tensor& gl = g.grad_ref(iflw);
            if (!cy) gl.at(n, 0, y, xx) += gdy;
            if (!cx) gl.at(n, 1, y, xx) += gdx;
          }
        }
  })};
}

// ------------------------------------------------------------------ reductions

Value Graph::sum_all(Value a) {
  const Tensor& va = val(a);
  double acc = 0.0;
  for (size_t i = 0; i < va.size(); ++i) acc += va[i];
  const int ia = a.idx;
  return {push(Tensor::scalar(acc), {ia}, [ia](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const double gv = g.nodes_[self].grad[0];
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
  })};
}

Value Graph::mean_all(Value a) {
  const Tensor& va = val(a);
  const double inv = 1.0 / static_cast<double>(va.size());
  double acc = 0.0;
  for (size_t i = 0; i < va.size(); ++i) acc += va[i];
  const int ia = a.idx;
  return {push(Tensor::scalar(acc * inv), {ia}, [ia, inv](Graph& g, int self) {
    if (!g.nodes_[ia].requires_grad) return;
    const double gv = g.nodes_[self].grad[0] * inv;
    Tensor& ga = g.grad_ref(ia);
    for (size_t i = 0; i < ga.size(); ++i) ga[i] += gv;
  })};
}

Value Graph::gather_points(Value x, const std::vector<Pt>& pts) {
  const Shape s = val(x).shape();
  if (s.n != 1 || s.c != 1)
    throw std::invalid_argument("gather_points: expected (1,1,H,W), got " + s.str());
  if (pts.empty()) throw std::invalid_argument("gather_points: empty point set");
  Tensor out(Shape(1, 1, 1, static_cast<int>(pts.size())));
  const Tensor& vx = val(x);
  for (size_t i = 0; i < pts.size(); ++i) {
    const Pt& p = pts[i];
    if (p.y < 0 || p.y >= s.h || p.x < 0 || p.x >= s.w)
      throw std::invalid_argument("gather_points: point out of bounds");
    out[i] = vx.at(0, 0, p.y, p.x);
  }
  const int ix = x.idx;
  return {push(std::move(out), {ix}, [ix, pts](Graph& g, int self) {
    if (!g.nodes_[ix].requires_grad) return;
    const Tensor& go = g.nodes_[self].grad;
    Tensor& gx = g.grad_ref(ix);
    for (size_t i = 0; i < pts.size(); ++i)
      gx.at(0, 0, pts[i].y, pts[i].x) += go[i];
  })};
}

Value Graph::stop_gradient(Value a) { return constant(val(a)); }

// ------------------------------------------------------------------- backward

void Graph::backward(Value scalar_loss) {
  Node& root = nodes_[scalar_loss.idx];
  if (root.value.size() != 1)
    throw std::logic_error("backward: loss must be scalar");
  if (!root.requires_grad)
    throw std::logic_error("backward: loss does not depend on any tracked leaf");
  root.grad[0] = 1.0;
  for (int i = scalar_loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    n.backward(*this, i);
  }
  for (Node& n : nodes_)
    if (n.bound) {
      Tensor& dst = n.bound->grad;
      for (size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
    }
}

}  // namespace topseg
