#include "av/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "av/common.hpp"

namespace av::ad {

namespace {

std::atomic<int64_t> g_next_id{1};

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(const Tensor&, const std::vector<Tensor*>&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : n->parents)
    if (p->needs_grad) n->needs_grad = true;
  if (n->needs_grad) n->backward = std::move(backward);
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw GeometryError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                        " vs " + shape_to_string(b.shape()));
}

}  // namespace

Var Var::leaf(Tensor value, bool needs_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->needs_grad = needs_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return from_node(n);
}

Var Var::from_node(NodePtr n) {
  Var v;
  v.node_ = std::move(n);
  return v;
}

const Tensor* GradMap::find(const Node* n) const {
  auto it = grads_.find(n);
  return it == grads_.end() ? nullptr : &it->second;
}

Tensor& GradMap::get_or_create(const Node* n, const std::vector<int64_t>& shape) {
  auto it = grads_.find(n);
  if (it == grads_.end()) it = grads_.emplace(n, Tensor(shape)).first;
  return it->second;
}

GradMap backward(const Var& root) {
  if (!root.defined()) throw GeometryError("backward on an undefined Var");
  if (root.value().size() != 1)
    throw GeometryError("backward root must be a scalar");

  // Collect reachable grad-relevant nodes, iteratively.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!n->needs_grad || seen.count(n)) continue;
    seen.insert(n);
    order.push_back(n);
    for (const auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  GradMap gm;
  if (!root.node()->needs_grad) return gm;
  gm.get_or_create(root.node().get(), root.value().shape()).fill(1.0);

  std::vector<Tensor*> parent_grads;
  for (Node* n : order) {
    const Tensor* g = gm.find(n);
    if (!g || !n->backward) continue;
    parent_grads.clear();
    for (const auto& p : n->parents) {
      if (p->needs_grad)
        parent_grads.push_back(&gm.get_or_create(p.get(), p->value.shape()));
      else
        parent_grads.push_back(nullptr);
    }
    n->backward(*g, parent_grads);
  }
  return gm;
}

// ---- elementwise ----------------------------------------------------------

Var constant(Tensor v) { return Var::leaf(std::move(v), false); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return Var::from_node(
      make_node(std::move(out), {a.node(), b.node()},
                [](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (pg[0]) *pg[0] += g;
                  if (pg[1]) *pg[1] += g;
                }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out -= b.value();
  return Var::from_node(
      make_node(std::move(out), {a.node(), b.node()},
                [](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (pg[0]) *pg[0] += g;
                  if (pg[1]) *pg[1] -= g;
                }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] *= b.value()[i];
  auto an = a.node(), bn = b.node();
  return Var::from_node(
      make_node(std::move(out), {an, bn},
                [an, bn](const Tensor& g, const std::vector<Tensor*>& pg) {
                  const int64_t m = g.size();
                  if (pg[0])
                    for (int64_t i = 0; i < m; ++i) (*pg[0])[i] += g[i] * bn->value[i];
                  if (pg[1])
                    for (int64_t i = 0; i < m; ++i) (*pg[1])[i] += g[i] * an->value[i];
                }));
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return Var::from_node(make_node(std::move(out), {a.node()},
                                  [s](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    const int64_t n = g.size();
                                    for (int64_t i = 0; i < n; ++i) (*pg[0])[i] += s * g[i];
                                  }));
}

Var relu(const Var& a) {
  Tensor out = a.value();
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  auto an = a.node();
  return Var::from_node(make_node(std::move(out), {an},
                                  [an](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    const int64_t n2 = g.size();
                                    for (int64_t i = 0; i < n2; ++i)
                                      if (an->value[i] > 0.0) (*pg[0])[i] += g[i];
                                  }));
}

Var leaky_relu(const Var& a, double negative_slope) {
  Tensor out = a.value();
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i)
    if (out[i] < 0.0) out[i] *= negative_slope;
  auto an = a.node();
  return Var::from_node(
      make_node(std::move(out), {an},
                [an, negative_slope](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (!pg[0]) return;
                  const int64_t n2 = g.size();
                  for (int64_t i = 0; i < n2; ++i)
                    (*pg[0])[i] += g[i] * (an->value[i] > 0.0 ? 1.0 : negative_slope);
                }));
}

Var softplus(const Var& a) {
  Tensor out = a.value();
  const int64_t n = out.size();
  for (int64_t i = 0; i < n; ++i) {
    const double x = out[i];
    out[i] = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  auto an = a.node();
  return Var::from_node(make_node(std::move(out), {an},
                                  [an](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    const int64_t n2 = g.size();
                                    for (int64_t i = 0; i < n2; ++i) {
                                      const double x = an->value[i];
                                      const double s =
                                          x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                                  : std::exp(x) / (1.0 + std::exp(x));
                                      (*pg[0])[i] += g[i] * s;
                                    }
                                  }));
}

Var concat_channels(const std::vector<Var>& xs) {
  if (xs.empty()) throw GeometryError("concat_channels: empty input list");
  const auto& first = xs[0].value().shape();
  std::vector<int64_t> lead(first.begin(), first.end() - 1);
  int64_t total_c = 0;
  std::vector<int64_t> channels;
  for (const auto& x : xs) {
    const auto& s = x.value().shape();
    if (std::vector<int64_t>(s.begin(), s.end() - 1) != lead)
      throw GeometryError("concat_channels: leading dims differ");
    channels.push_back(s.back());
    total_c += s.back();
  }
  std::vector<int64_t> out_shape = lead;
  out_shape.push_back(total_c);
  Tensor out(out_shape);
  const int64_t rows = shape_product(lead);
  int64_t off = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = xs[k].value();
    const int64_t c = channels[k];
    for (int64_t r = 0; r < rows; ++r)
      std::copy(v.data() + r * c, v.data() + (r + 1) * c, out.data() + r * total_c + off);
    off += c;
  }
  std::vector<NodePtr> parents;
  for (const auto& x : xs) parents.push_back(x.node());
  return Var::from_node(make_node(
      std::move(out), std::move(parents),
      [rows, channels, total_c](const Tensor& g, const std::vector<Tensor*>& pg) {
        int64_t off2 = 0;
        for (size_t k = 0; k < channels.size(); ++k) {
          const int64_t c = channels[k];
          if (pg[k]) {
            for (int64_t r = 0; r < rows; ++r) {
              const double* src = g.data() + r * total_c + off2;
              double* dst = pg[k]->data() + r * c;
              for (int64_t i = 0; i < c; ++i) dst[i] += src[i];
            }
          }
          off2 += c;
        }
      }));
}

// ---- convolution core ------------------------------------------------------

namespace {

struct ConvDims {
  int64_t T, H, W, Ci;      // input
  int64_t To, Ho, Wo, Co;   // output
  int kt, kh, kw;           // kernel
  int st, sh, sw;           // stride
  int pt, ph, pw;           // pad before
};

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

ConvDims conv_dims(const std::vector<int64_t>& xs, const std::vector<int64_t>& ws, int st,
                   int sh, int sw) {
  ConvDims d;
  d.T = xs[0];
  d.H = xs[1];
  d.W = xs[2];
  d.Ci = xs[3];
  d.kt = static_cast<int>(ws[0]);
  d.kh = static_cast<int>(ws[1]);
  d.kw = static_cast<int>(ws[2]);
  if (ws[3] != d.Ci)
    throw GeometryError("conv: kernel input channels " + std::to_string(ws[3]) +
                        " do not match input channels " + std::to_string(d.Ci));
  d.Co = ws[4];
  d.st = st;
  d.sh = sh;
  d.sw = sw;
  d.To = ceil_div(d.T, st);
  d.Ho = ceil_div(d.H, sh);
  d.Wo = ceil_div(d.W, sw);
  auto pad_before = [](int64_t in, int64_t out, int stride, int k) {
    const int64_t total = std::max<int64_t>(0, (out - 1) * stride + k - in);
    return static_cast<int>(total / 2);
  };
  d.pt = pad_before(d.T, d.To, st, d.kt);
  d.ph = pad_before(d.H, d.Ho, sh, d.kh);
  d.pw = pad_before(d.W, d.Wo, sw, d.kw);
  return d;
}

void conv_forward(const double* x, const double* w, const double* b, double* y,
                  const ConvDims& d) {
  std::vector<double> acc(static_cast<size_t>(d.Co));
  for (int64_t to = 0; to < d.To; ++to)
    for (int64_t ho = 0; ho < d.Ho; ++ho)
      for (int64_t wo = 0; wo < d.Wo; ++wo) {
        for (int64_t c = 0; c < d.Co; ++c) acc[static_cast<size_t>(c)] = b ? b[c] : 0.0;
        for (int kt = 0; kt < d.kt; ++kt) {
          const int64_t ti = to * d.st + kt - d.pt;
          if (ti < 0 || ti >= d.T) continue;
          for (int kh = 0; kh < d.kh; ++kh) {
            const int64_t hi = ho * d.sh + kh - d.ph;
            if (hi < 0 || hi >= d.H) continue;
            for (int kw = 0; kw < d.kw; ++kw) {
              const int64_t wi = wo * d.sw + kw - d.pw;
              if (wi < 0 || wi >= d.W) continue;
              const double* xp = x + ((ti * d.H + hi) * d.W + wi) * d.Ci;
              const double* wp = w + (((static_cast<int64_t>(kt) * d.kh + kh) * d.kw + kw)) *
                                         d.Ci * d.Co;
              for (int64_t ci = 0; ci < d.Ci; ++ci) {
                const double xv = xp[ci];
                const double* wrow = wp + ci * d.Co;
                for (int64_t co = 0; co < d.Co; ++co)
                  acc[static_cast<size_t>(co)] += xv * wrow[co];
              }
            }
          }
        }
        double* yp = y + ((to * d.Ho + ho) * d.Wo + wo) * d.Co;
        for (int64_t c = 0; c < d.Co; ++c) yp[c] = acc[static_cast<size_t>(c)];
      }
}

void conv_backward(const double* x, const double* w, const double* g, double* dx, double* dw,
                   double* db, const ConvDims& d) {
  for (int64_t to = 0; to < d.To; ++to)
    for (int64_t ho = 0; ho < d.Ho; ++ho)
      for (int64_t wo = 0; wo < d.Wo; ++wo) {
        const double* gp = g + ((to * d.Ho + ho) * d.Wo + wo) * d.Co;
        if (db)
          for (int64_t co = 0; co < d.Co; ++co) db[co] += gp[co];
        for (int kt = 0; kt < d.kt; ++kt) {
          const int64_t ti = to * d.st + kt - d.pt;
          if (ti < 0 || ti >= d.T) continue;
          for (int kh = 0; kh < d.kh; ++kh) {
            const int64_t hi = ho * d.sh + kh - d.ph;
            if (hi < 0 || hi >= d.H) continue;
            for (int kw = 0; kw < d.kw; ++kw) {
              const int64_t wi = wo * d.sw + kw - d.pw;
              if (wi < 0 || wi >= d.W) continue;
              const int64_t xoff = ((ti * d.H + hi) * d.W + wi) * d.Ci;
              const int64_t woff =
                  (((static_cast<int64_t>(kt) * d.kh + kh) * d.kw + kw)) * d.Ci * d.Co;
              for (int64_t ci = 0; ci < d.Ci; ++ci) {
                const double xv = x[xoff + ci];
                const double* wrow = w + woff + ci * d.Co;
                double acc = 0.0;
                double* dwrow = dw ? dw + woff + ci * d.Co : nullptr;
                for (int64_t co = 0; co < d.Co; ++co) {
                  const double gv = gp[co];
                  acc += wrow[co] * gv;
                  if (dwrow) dwrow[co] += xv * gv;
                }
                if (dx) dx[xoff + ci] += acc;
              }
            }
          }
        }
      }
}

Var conv_nd(const Var& x, const Var& w, const Var& b, const std::vector<int64_t>& x4,
            const std::vector<int64_t>& w5, int st, int sh, int sw,
            const std::vector<int64_t>& out_shape_natural) {
  const ConvDims d = conv_dims(x4, w5, st, sh, sw);
  if (b.value().size() != d.Co) throw GeometryError("conv: bias size does not match channels");
  Tensor out(out_shape_natural);
  conv_forward(x.value().data(), w.value().data(), b.value().data(), out.data(), d);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return Var::from_node(make_node(
      std::move(out), {xn, wn, bn},
      [xn, wn, d](const Tensor& g, const std::vector<Tensor*>& pg) {
        conv_backward(xn->value.data(), wn->value.data(), g.data(),
                      pg[0] ? pg[0]->data() : nullptr, pg[1] ? pg[1]->data() : nullptr,
                      pg[2] ? pg[2]->data() : nullptr, d);
      }));
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& b, int stride) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 2 || ws.size() != 3) throw GeometryError("conv1d: expect x [T,Ci], w [K,Ci,Co]");
  const std::vector<int64_t> x4{xs[0], 1, 1, xs[1]};
  const std::vector<int64_t> w5{ws[0], 1, 1, ws[1], ws[2]};
  const int64_t to = ceil_div(xs[0], stride);
  return conv_nd(x, w, b, x4, w5, stride, 1, 1, {to, ws[2]});
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride_t, int stride_f) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 3 || ws.size() != 4)
    throw GeometryError("conv2d: expect x [T,F,Ci], w [Kt,Kf,Ci,Co]");
  const std::vector<int64_t> x4{xs[0], xs[1], 1, xs[2]};
  const std::vector<int64_t> w5{ws[0], ws[1], 1, ws[2], ws[3]};
  const int64_t to = ceil_div(xs[0], stride_t);
  const int64_t fo = ceil_div(xs[1], stride_f);
  return conv_nd(x, w, b, x4, w5, stride_t, stride_f, 1, {to, fo, ws[3]});
}

Var conv3d(const Var& x, const Var& w, const Var& b, int stride_t, int stride_h, int stride_w) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 4 || ws.size() != 5)
    throw GeometryError("conv3d: expect x [T,H,W,Ci], w [Kt,Kh,Kw,Ci,Co]");
  const int64_t to = ceil_div(xs[0], stride_t);
  const int64_t ho = ceil_div(xs[1], stride_h);
  const int64_t wo = ceil_div(xs[2], stride_w);
  return conv_nd(x, w, b, xs, ws, stride_t, stride_h, stride_w, {to, ho, wo, ws[4]});
}

Var avg_pool3d(const Var& x, std::array<int, 3> kernel, std::array<int, 3> stride) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4) throw GeometryError("avg_pool3d: expect x [T,H,W,C]");
  const int64_t T = xs[0], H = xs[1], W = xs[2], C = xs[3];
  const int64_t To = ceil_div(T, stride[0]);
  const int64_t Ho = ceil_div(H, stride[1]);
  const int64_t Wo = ceil_div(W, stride[2]);
  Tensor out({To, Ho, Wo, C});
  const Tensor& xv = x.value();
  for (int64_t to = 0; to < To; ++to)
    for (int64_t ho = 0; ho < Ho; ++ho)
      for (int64_t wo = 0; wo < Wo; ++wo) {
        double* yp = out.data() + ((to * Ho + ho) * Wo + wo) * C;
        int count = 0;
        for (int kt = 0; kt < kernel[0]; ++kt) {
          const int64_t ti = to * stride[0] + kt;
          if (ti >= T) continue;
          for (int kh = 0; kh < kernel[1]; ++kh) {
            const int64_t hi = ho * stride[1] + kh;
            if (hi >= H) continue;
            for (int kw = 0; kw < kernel[2]; ++kw) {
              const int64_t wi = wo * stride[2] + kw;
              if (wi >= W) continue;
              ++count;
              const double* xp = xv.data() + ((ti * H + hi) * W + wi) * C;
              for (int64_t c = 0; c < C; ++c) yp[c] += xp[c];
            }
          }
        }
        const double inv = count > 0 ? 1.0 / count : 0.0;
        for (int64_t c = 0; c < C; ++c) yp[c] *= inv;
      }
  auto xn = x.node();
  return Var::from_node(make_node(
      std::move(out), {xn},
      [T, H, W, C, To, Ho, Wo, kernel, stride](const Tensor& g, const std::vector<Tensor*>& pg) {
        if (!pg[0]) return;
        for (int64_t to = 0; to < To; ++to)
          for (int64_t ho = 0; ho < Ho; ++ho)
            for (int64_t wo = 0; wo < Wo; ++wo) {
              const double* gp = g.data() + ((to * Ho + ho) * Wo + wo) * C;
              int count = 0;
              for (int kt = 0; kt < kernel[0]; ++kt)
                if (to * stride[0] + kt < T)
                  for (int kh = 0; kh < kernel[1]; ++kh)
                    if (ho * stride[1] + kh < H)
                      for (int kw = 0; kw < kernel[2]; ++kw)
                        if (wo * stride[2] + kw < W) ++count;
              if (count == 0) continue;
              const double inv = 1.0 / count;
              for (int kt = 0; kt < kernel[0]; ++kt) {
                const int64_t ti = to * stride[0] + kt;
                if (ti >= T) continue;
                for (int kh = 0; kh < kernel[1]; ++kh) {
                  const int64_t hi = ho * stride[1] + kh;
                  if (hi >= H) continue;
                  for (int kw = 0; kw < kernel[2]; ++kw) {
                    const int64_t wi = wo * stride[2] + kw;
                    if (wi >= W) continue;
                    double* dp = pg[0]->data() + ((ti * H + hi) * W + wi) * C;
                    for (int64_t c = 0; c < C; ++c) dp[c] += gp[c] * inv;
                  }
                }
              }
            }
      }));
}

Var spatial_mean(const Var& x) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4) throw GeometryError("spatial_mean: expect x [T,H,W,C]");
  const int64_t T = xs[0], H = xs[1], W = xs[2], C = xs[3];
  Tensor out({T, C});
  const double inv = 1.0 / static_cast<double>(H * W);
  for (int64_t t = 0; t < T; ++t) {
    double* yp = out.data() + t * C;
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w) {
        const double* xp = x.value().data() + ((t * H + h) * W + w) * C;
        for (int64_t c = 0; c < C; ++c) yp[c] += xp[c];
      }
    for (int64_t c = 0; c < C; ++c) yp[c] *= inv;
  }
  return Var::from_node(
      make_node(std::move(out), {x.node()},
                [T, H, W, C, inv](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (!pg[0]) return;
                  for (int64_t t = 0; t < T; ++t) {
                    const double* gp = g.data() + t * C;
                    for (int64_t h = 0; h < H; ++h)
                      for (int64_t w = 0; w < W; ++w) {
                        double* dp = pg[0]->data() + ((t * H + h) * W + w) * C;
                        for (int64_t c = 0; c < C; ++c) dp[c] += gp[c] * inv;
                      }
                  }
                }));
}

Var global_mean_keep_channels(const Var& x) {
  const auto& xs = x.value().shape();
  if (xs.empty()) throw GeometryError("global_mean_keep_channels: scalar input");
  const int64_t C = xs.back();
  const int64_t rows = x.value().size() / C;
  Tensor out({C});
  for (int64_t r = 0; r < rows; ++r) {
    const double* xp = x.value().data() + r * C;
    for (int64_t c = 0; c < C; ++c) out[c] += xp[c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  out *= inv;
  return Var::from_node(make_node(std::move(out), {x.node()},
                                  [rows, C, inv](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    for (int64_t r = 0; r < rows; ++r) {
                                      double* dp = pg[0]->data() + r * C;
                                      for (int64_t c = 0; c < C; ++c) dp[c] += g[c] * inv;
                                    }
                                  }));
}

Var tile_spatial(const Var& x, int h, int w) {
  const auto& xs = x.value().shape();
  if (xs.size() != 2) throw GeometryError("tile_spatial: expect x [T,C]");
  const int64_t T = xs[0], C = xs[1];
  Tensor out({T, h, w, C});
  for (int64_t t = 0; t < T; ++t) {
    const double* xp = x.value().data() + t * C;
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
      std::copy(xp, xp + C, out.data() + (t * h * w + i) * C);
  }
  const int64_t cells = static_cast<int64_t>(h) * w;
  return Var::from_node(make_node(std::move(out), {x.node()},
                                  [T, C, cells](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    for (int64_t t = 0; t < T; ++t) {
                                      double* dp = pg[0]->data() + t * C;
                                      for (int64_t i = 0; i < cells; ++i) {
                                        const double* gp = g.data() + (t * cells + i) * C;
                                        for (int64_t c = 0; c < C; ++c) dp[c] += gp[c];
                                      }
                                    }
                                  }));
}

Var tile_freq(const Var& x, int f) {
  const auto& xs = x.value().shape();
  if (xs.size() != 2) throw GeometryError("tile_freq: expect x [T,C]");
  const int64_t T = xs[0], C = xs[1];
  Tensor out({T, f, C});
  for (int64_t t = 0; t < T; ++t) {
    const double* xp = x.value().data() + t * C;
    for (int64_t i = 0; i < f; ++i) std::copy(xp, xp + C, out.data() + (t * f + i) * C);
  }
  return Var::from_node(make_node(std::move(out), {x.node()},
                                  [T, C, f](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    for (int64_t t = 0; t < T; ++t) {
                                      double* dp = pg[0]->data() + t * C;
                                      for (int64_t i = 0; i < f; ++i) {
                                        const double* gp = g.data() + (t * f + i) * C;
                                        for (int64_t c = 0; c < C; ++c) dp[c] += gp[c];
                                      }
                                    }
                                  }));
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& xs = x.value().shape();
  const auto& ws = w.value().shape();
  if (xs.size() != 1 || ws.size() != 2 || ws[0] != xs[0])
    throw GeometryError("linear: expect x [Ci], w [Ci,Co]");
  const int64_t Ci = ws[0], Co = ws[1];
  Tensor out({Co});
  for (int64_t co = 0; co < Co; ++co) out[co] = b.value()[co];
  for (int64_t ci = 0; ci < Ci; ++ci) {
    const double xv = x.value()[ci];
    const double* wrow = w.value().data() + ci * Co;
    for (int64_t co = 0; co < Co; ++co) out[co] += xv * wrow[co];
  }
  auto xn = x.node(), wn = w.node();
  return Var::from_node(make_node(
      std::move(out), {xn, wn, b.node()},
      [xn, wn, Ci, Co](const Tensor& g, const std::vector<Tensor*>& pg) {
        if (pg[2]) *pg[2] += g;
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const double* wrow = wn->value.data() + ci * Co;
          const double xv = xn->value[ci];
          double acc = 0.0;
          for (int64_t co = 0; co < Co; ++co) {
            acc += wrow[co] * g[co];
            if (pg[1]) (*pg[1])[ci * Co + co] += xv * g[co];
          }
          if (pg[0]) (*pg[0])[ci] += acc;
        }
      }));
}

Var upsample2x_2d(const Var& x, int64_t out_t, int64_t out_f) {
  const auto& xs = x.value().shape();
  if (xs.size() != 3) throw GeometryError("upsample2x_2d: expect x [T,F,C]");
  const int64_t T = xs[0], F = xs[1], C = xs[2];
  if (out_t > 2 * T || out_f > 2 * F || out_t < T || out_f < F)
    throw GeometryError("upsample2x_2d: target must be between 1x and 2x the input");
  Tensor out({out_t, out_f, C});
  for (int64_t t = 0; t < out_t; ++t) {
    const int64_t ti = std::min(t / 2, T - 1);
    for (int64_t f = 0; f < out_f; ++f) {
      const int64_t fi = std::min(f / 2, F - 1);
      const double* xp = x.value().data() + (ti * F + fi) * C;
      std::copy(xp, xp + C, out.data() + (t * out_f + f) * C);
    }
  }
  return Var::from_node(
      make_node(std::move(out), {x.node()},
                [T, F, C, out_t, out_f](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (!pg[0]) return;
                  for (int64_t t = 0; t < out_t; ++t) {
                    const int64_t ti = std::min(t / 2, T - 1);
                    for (int64_t f = 0; f < out_f; ++f) {
                      const int64_t fi = std::min(f / 2, F - 1);
                      double* dp = pg[0]->data() + (ti * F + fi) * C;
                      const double* gp = g.data() + (t * out_f + f) * C;
                      for (int64_t c = 0; c < C; ++c) dp[c] += gp[c];
                    }
                  }
                }));
}

std::vector<ResampleRow> make_linear_resample_rows(int64_t in_len, double in_rate,
                                                   int64_t out_len, double out_rate) {
  if (in_len < 1 || out_len < 1 || in_rate <= 0.0 || out_rate <= 0.0)
    throw GeometryError("make_linear_resample_rows: invalid lengths or rates");
  std::vector<ResampleRow> rows(static_cast<size_t>(out_len));
  for (int64_t o = 0; o < out_len; ++o) {
    // Center-aligned: output step o sits at time (o + 0.5) / out_rate.
    const double p = (static_cast<double>(o) + 0.5) * in_rate / out_rate - 0.5;
    ResampleRow r;
    if (p <= 0.0 || in_len == 1) {
      r.i0 = r.i1 = 0;
      r.w0 = 1.0;
      r.w1 = 0.0;
    } else if (p >= static_cast<double>(in_len - 1)) {
      r.i0 = r.i1 = static_cast<int>(in_len - 1);
      r.w0 = 1.0;
      r.w1 = 0.0;
    } else {
      const double fl = std::floor(p);
      r.i0 = static_cast<int>(fl);
      r.i1 = r.i0 + 1;
      r.w1 = p - fl;
      r.w0 = 1.0 - r.w1;
    }
    rows[static_cast<size_t>(o)] = r;
  }
  return rows;
}

Var time_resample_linear(const Var& x, const std::vector<ResampleRow>& rows) {
  const auto& xs = x.value().shape();
  if (xs.size() != 2) throw GeometryError("time_resample_linear: expect x [T,C]");
  const int64_t C = xs[1];
  const int64_t To = static_cast<int64_t>(rows.size());
  Tensor out({To, C});
  for (int64_t o = 0; o < To; ++o) {
    const ResampleRow& r = rows[static_cast<size_t>(o)];
    const double* a = x.value().data() + static_cast<int64_t>(r.i0) * C;
    const double* b = x.value().data() + static_cast<int64_t>(r.i1) * C;
    double* yp = out.data() + o * C;
    for (int64_t c = 0; c < C; ++c) yp[c] = r.w0 * a[c] + r.w1 * b[c];
  }
  return Var::from_node(make_node(std::move(out), {x.node()},
                                  [rows, C, To](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    for (int64_t o = 0; o < To; ++o) {
                                      const ResampleRow& r = rows[static_cast<size_t>(o)];
                                      const double* gp = g.data() + o * C;
                                      double* a = pg[0]->data() + static_cast<int64_t>(r.i0) * C;
                                      double* b = pg[0]->data() + static_cast<int64_t>(r.i1) * C;
                                      for (int64_t c = 0; c < C; ++c) {
                                        a[c] += r.w0 * gp[c];
                                        b[c] += r.w1 * gp[c];
                                      }
                                    }
                                  }));
}

Var zeros_like(const Var& x) { return constant(Tensor(x.value().shape())); }

// ---- scalar losses ---------------------------------------------------------

Var mean_all(const Var& x) {
  const int64_t n = x.value().size();
  Tensor out = Tensor::scalar(x.value().sum() / static_cast<double>(n));
  const double inv = 1.0 / static_cast<double>(n);
  return Var::from_node(make_node(std::move(out), {x.node()},
                                  [n, inv](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    const double gv = g[0] * inv;
                                    for (int64_t i = 0; i < n; ++i) (*pg[0])[i] += gv;
                                  }));
}

Var l1_mean(const Var& pred, const Tensor& target) {
  check_same_shape(pred.value(), target, "l1_mean");
  const int64_t n = target.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(pred.value()[i] - target[i]);
  auto pn = pred.node();
  return Var::from_node(make_node(
      Tensor::scalar(acc / static_cast<double>(n)), {pn},
      [pn, target, n](const Tensor& g, const std::vector<Tensor*>& pg) {
        if (!pg[0]) return;
        const double gv = g[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          const double d = pn->value[i] - target[i];
          (*pg[0])[i] += gv * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
        }
      }));
}

Var l1_mean_vv(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "l1_mean_vv");
  const int64_t n = a.value().size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += std::fabs(a.value()[i] - b.value()[i]);
  auto an = a.node(), bn = b.node();
  return Var::from_node(make_node(
      Tensor::scalar(acc / static_cast<double>(n)), {an, bn},
      [an, bn, n](const Tensor& g, const std::vector<Tensor*>& pg) {
        const double gv = g[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
          const double d = an->value[i] - bn->value[i];
          const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          if (pg[0]) (*pg[0])[i] += gv * s;
          if (pg[1]) (*pg[1])[i] -= gv * s;
        }
      }));
}

Var circular_mean(const Var& pred, const Tensor& target) {
  check_same_shape(pred.value(), target, "circular_mean");
  const int64_t n = target.size();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += 1.0 - std::cos(pred.value()[i] - target[i]);
  auto pn = pred.node();
  return Var::from_node(
      make_node(Tensor::scalar(acc / static_cast<double>(n)), {pn},
                [pn, target, n](const Tensor& g, const std::vector<Tensor*>& pg) {
                  if (!pg[0]) return;
                  const double gv = g[0] / static_cast<double>(n);
                  for (int64_t i = 0; i < n; ++i)
                    (*pg[0])[i] += gv * std::sin(pn->value[i] - target[i]);
                }));
}

Var softmax_cross_entropy(const Var& logits, int label) {
  const auto& xs = logits.value().shape();
  if (xs.size() != 1) throw GeometryError("softmax_cross_entropy: expect logits [C]");
  const int64_t C = xs[0];
  if (label < 0 || label >= C) throw GeometryError("softmax_cross_entropy: label out of range");
  double m = logits.value()[0];
  for (int64_t c = 1; c < C; ++c) m = std::max(m, logits.value()[c]);
  double z = 0.0;
  std::vector<double> probs(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    probs[static_cast<size_t>(c)] = std::exp(logits.value()[c] - m);
    z += probs[static_cast<size_t>(c)];
  }
  for (auto& p : probs) p /= z;
  const double loss = -std::log(probs[static_cast<size_t>(label)]);
  return Var::from_node(make_node(Tensor::scalar(loss), {logits.node()},
                                  [probs, label, C](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    if (!pg[0]) return;
                                    for (int64_t c = 0; c < C; ++c) {
                                      double d = probs[static_cast<size_t>(c)];
                                      if (c == label) d -= 1.0;
                                      (*pg[0])[c] += g[0] * d;
                                    }
                                  }));
}

Var add_scalars(const std::vector<Var>& xs) {
  if (xs.empty()) throw GeometryError("add_scalars: empty input");
  double acc = 0.0;
  std::vector<NodePtr> parents;
  for (const auto& x : xs) {
    acc += x.value()[0];
    parents.push_back(x.node());
  }
  const size_t k = xs.size();
  return Var::from_node(make_node(Tensor::scalar(acc), std::move(parents),
                                  [k](const Tensor& g, const std::vector<Tensor*>& pg) {
                                    for (size_t i = 0; i < k; ++i)
                                      if (pg[i]) (*pg[i])[0] += g[0];
                                  }));
}

// ---- parameters ------------------------------------------------------------

Var ParamStore::add(const std::string& name, Tensor init) {
  for (const auto& [n, v] : items)
    if (n == name) throw ConfigError("duplicate parameter name: " + name);
  Var v = Var::leaf(std::move(init), /*needs_grad=*/true);
  items.emplace_back(name, v);
  return v;
}

const Var* ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items)
    if (n == name) return &v;
  return nullptr;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [name, v] : items) n += v.value().size();
  return n;
}

bool ParamStore::all_finite() const {
  for (const auto& [name, v] : items)
    if (!v.value().all_finite()) return false;
  return true;
}

void ParamStore::load_values_from(const ParamStore& from) {
  for (auto& [name, v] : items) {
    const Var* src = from.find(name);
    if (!src) throw ConfigError("checkpoint is missing parameter: " + name);
    if (!src->value().same_shape(v.value()))
      throw ConfigError("parameter shape mismatch for " + name + ": " +
                        shape_to_string(src->value().shape()) + " vs " +
                        shape_to_string(v.value().shape()));
    v.mutable_value() = src->value();
  }
}

double gradcheck(const std::function<Var()>& f, const std::vector<Var>& params, double step,
                 int entries_per_tensor) {
  Var loss = f();
  GradMap gm = backward(loss);

  double worst = 0.0;
  for (const Var& p : params) {
    const Tensor* g = gm.find(p);
    Tensor zero_grad;
    if (!g) {
      zero_grad = Tensor(p.value().shape());
      g = &zero_grad;
    }
    Tensor& value = const_cast<Var&>(p).mutable_value();
    const int64_t n = value.size();
    const int64_t probes = std::min<int64_t>(n, entries_per_tensor);
    for (int64_t k = 0; k < probes; ++k) {
      const int64_t i = probes == n ? k : (k * n) / probes;
      const double orig = value[i];
      value[i] = orig + step;
      const double lp = f().value()[0];
      value[i] = orig - step;
      const double lm = f().value()[0];
      value[i] = orig;
      const double numeric = (lp - lm) / (2.0 * step);
      const double analytic = (*g)[i];
      const double denom = std::max({1e-6, std::fabs(numeric), std::fabs(analytic)});
      worst = std::max(worst, std::fabs(numeric - analytic) / denom);
    }
  }
  return worst;
}

}  // namespace av::ad
