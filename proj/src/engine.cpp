#include "mrb/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrb {

namespace {

struct ConvDims {
  int H, W, Ci, kh, kw, Co, ph, pw, stride, Ho, Wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const OpAttrs& at) {
  if (x.rank() != 3) throw ShapeError("conv2d input must be {H,W,C}, got " + shape_str(x.shape()));
  if (w.rank() != 4) throw ShapeError("conv2d kernel must be {kh,kw,ci,co}, got " + shape_str(w.shape()));
  ConvDims d;
  d.H = x.dim(0); d.W = x.dim(1); d.Ci = x.dim(2);
  d.kh = w.dim(0); d.kw = w.dim(1); d.Co = w.dim(3);
  if (w.dim(2) != d.Ci) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) +
                     " vs kernel " + shape_str(w.shape()));
  }
  d.stride = at.stride;
  if (d.stride < 1) throw ShapeError("conv2d stride must be >= 1");
  if (at.pad == Pad::valid) {
    d.ph = d.pw = 0;
  } else {
    if (d.kh % 2 == 0 || d.kw % 2 == 0) {
      throw ShapeError("padded conv2d needs odd kernel size");
    }
    d.ph = (d.kh - 1) / 2;
    d.pw = (d.kw - 1) / 2;
  }
  if (d.ph >= d.H || d.pw >= d.W) throw ShapeError("conv2d kernel larger than input");
  d.Ho = (d.H + 2 * d.ph - d.kh) / d.stride + 1;
  d.Wo = (d.W + 2 * d.pw - d.kw) / d.stride + 1;
  if (d.Ho < 1 || d.Wo < 1) throw ShapeError("conv2d output would be empty");
  return d;
}

// Maps a padded coordinate into [0, n) for reflect padding (edge not repeated),
// or returns -1 when the zero/valid convention reads outside the input.
inline int pad_index(int i, int n, Pad pad) {
  if (i >= 0 && i < n) return i;
  if (pad == Pad::reflect) {
    if (i < 0) i = -i;
    else i = 2 * n - 2 - i;
    if (i < 0 || i >= n) throw ShapeError("reflect padding out of range");
    return i;
  }
  return -1;
}

const double kSobelH[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};  // d/dx
const double kSobelV[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};  // d/dy

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + " operands differ: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

}  // namespace

Eval::Eval(const Graph& g) : g_(&g) {
  val_.resize(g.nodes().size());
  argmax_.resize(g.nodes().size());
}

NodeId Eval::input_id(const std::string& name) const {
  const auto& nodes = g_->nodes();
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].op == Op::input && nodes[i].name == name) return static_cast<NodeId>(i);
  }
  throw GraphError("no input named '" + name + "'");
}

const Tensor& Eval::forward(const Inputs& inputs) {
  const auto& nodes = g_->nodes();
  for (size_t i = 0; i < nodes.size(); ++i) {
    eval_node(static_cast<NodeId>(i), inputs);
  }
  forward_done_ = true;
  backward_done_ = false;
  return val_[static_cast<size_t>(g_->output())];
}

void Eval::eval_node(NodeId id, const Inputs& inputs) {
  const Node& n = g_->node(id);
  auto in = [&](size_t k) -> const Tensor& { return val_[static_cast<size_t>(n.args.at(k))]; };
  Tensor out;

  switch (n.op) {
    case Op::input: {
      auto it = inputs.find(n.name);
      if (it == inputs.end() || it->second == nullptr) {
        throw GraphError("input '" + n.name + "' not bound");
      }
      out = *it->second;
      break;
    }
    case Op::constant:
      out = n.value;
      break;
    case Op::conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const bool has_bias = n.args.size() == 3;
      ConvDims d = conv_dims(x, w, n.attrs);
      if (has_bias && (in(2).rank() != 1 || in(2).dim(0) != d.Co)) {
        throw ShapeError("conv2d bias must be {co}");
      }
      out = Tensor({d.Ho, d.Wo, d.Co});
      Array acc(d.Co);
      for (int oh = 0; oh < d.Ho; ++oh) {
        for (int ow = 0; ow < d.Wo; ++ow) {
          if (has_bias) acc = in(2).array();
          else acc.setZero();
          const int bh = oh * d.stride - d.ph;
          const int bw = ow * d.stride - d.pw;
          for (int i = 0; i < d.kh; ++i) {
            const int h = pad_index(bh + i, d.H, n.attrs.pad);
            if (h < 0) continue;
            for (int j = 0; j < d.kw; ++j) {
              const int wv = pad_index(bw + j, d.W, n.attrs.pad);
              if (wv < 0) continue;
              const double* xp = &x.array()[(static_cast<Eigen::Index>(h) * d.W + wv) * d.Ci];
              const double* wp = &w.array()[((static_cast<Eigen::Index>(i) * d.kw + j) * d.Ci) * d.Co];
              for (int ci = 0; ci < d.Ci; ++ci) {
                const double xv = xp[ci];
                const double* wrow = wp + static_cast<Eigen::Index>(ci) * d.Co;
                for (int co = 0; co < d.Co; ++co) acc[co] += xv * wrow[co];
              }
            }
          }
          for (int co = 0; co < d.Co; ++co) out.at(oh, ow, co) = acc[co];
        }
      }
      break;
    }
    case Op::max_pool:
    case Op::avg_pool: {
      const Tensor& x = in(0);
      if (x.rank() != 3) throw ShapeError("pool input must be {H,W,C}");
      const int win = n.attrs.window;
      if (win < 1) throw ShapeError("pool window must be >= 1");
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      if (win > H || win > W) throw ShapeError("pool window larger than input");
      const int Ho = (H - win) / win + 1;
      const int Wo = (W - win) / win + 1;
      out = Tensor({Ho, Wo, C});
      if (n.op == Op::max_pool) argmax_[static_cast<size_t>(id)].assign(
          static_cast<size_t>(Ho) * Wo * C, 0);
      const double inv = 1.0 / (static_cast<double>(win) * win);
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
          for (int c = 0; c < C; ++c) {
            if (n.op == Op::avg_pool) {
              double s = 0.0;
              for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) s += x.at(oh * win + i, ow * win + j, c);
              out.at(oh, ow, c) = s * inv;
            } else {
              double best = -std::numeric_limits<double>::infinity();
              Eigen::Index best_idx = 0;
              for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                  const int h = oh * win + i, wv = ow * win + j;
                  const double v = x.at(h, wv, c);
                  if (v > best) {  // ties keep the first scan-order winner
                    best = v;
                    best_idx = (static_cast<Eigen::Index>(h) * W + wv) * C + c;
                  }
                }
              }
              out.at(oh, ow, c) = best;
              argmax_[static_cast<size_t>(id)][(static_cast<size_t>(oh) * Wo + ow) * C + c] = best_idx;
            }
          }
        }
      }
      break;
    }
    case Op::global_avg_pool: {
      const Tensor& x = in(0);
      if (x.rank() != 3) throw ShapeError("global_avg_pool input must be {H,W,C}");
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      out = Tensor({C});
      const double inv = 1.0 / (static_cast<double>(H) * W);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = 0; c < C; ++c) out[c] += x.at(h, w, c);
      out.array() *= inv;
      break;
    }
    case Op::relu:
      out = Tensor(in(0).shape(), in(0).array().max(0.0));
      break;
    case Op::sigmoid:
      out = Tensor(in(0).shape(), 1.0 / (1.0 + (-in(0).array()).exp()));
      break;
    case Op::affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1) {
        throw ShapeError("affine wants x {n}, w {n,m}, b {m}");
      }
      const int nIn = x.dim(0), m = w.dim(1);
      if (w.dim(0) != nIn || b.dim(0) != m) throw ShapeError("affine shape mismatch");
      out = Tensor({m});
      for (int i = 0; i < nIn; ++i) {
        const double xv = x[i];
        const double* wrow = &w.array()[static_cast<Eigen::Index>(i) * m];
        for (int j = 0; j < m; ++j) out[j] += xv * wrow[j];
      }
      out.array() += b.array();
      break;
    }
    case Op::add:
      require_same_shape(in(0), in(1), "add");
      out = Tensor(in(0).shape(), in(0).array() + in(1).array());
      break;
    case Op::sub:
      require_same_shape(in(0), in(1), "sub");
      out = Tensor(in(0).shape(), in(0).array() - in(1).array());
      break;
    case Op::mul:
      require_same_shape(in(0), in(1), "mul");
      out = Tensor(in(0).shape(), in(0).array() * in(1).array());
      break;
    case Op::div:
      require_same_shape(in(0), in(1), "div");
      out = Tensor(in(0).shape(), in(0).array() / in(1).array());
      break;
    case Op::scale:
      out = Tensor(in(0).shape(), n.attrs.a * in(0).array() + n.attrs.b);
      break;
    case Op::sum:
      out = Tensor::scalar(in(0).array().sum());
      break;
    case Op::mean:
      out = Tensor::scalar(in(0).array().mean());
      break;
    case Op::sobel_h:
    case Op::sobel_v: {
      const Tensor& x = in(0);
      if (x.rank() != 3) throw ShapeError("sobel input must be {H,W,C}");
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      const double* k = (n.op == Op::sobel_h) ? kSobelH : kSobelV;
      out = Tensor({H, W, C});
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          for (int i = 0; i < 3; ++i) {
            const int hh = pad_index(h - 1 + i, H, Pad::reflect);
            for (int j = 0; j < 3; ++j) {
              const int ww = pad_index(w - 1 + j, W, Pad::reflect);
              const double kv = k[i * 3 + j];
              if (kv == 0.0) continue;
              for (int c = 0; c < C; ++c) out.at(h, w, c) += kv * x.at(hh, ww, c);
            }
          }
        }
      }
      break;
    }
    case Op::square:
      out = Tensor(in(0).shape(), in(0).array().square());
      break;
    case Op::sqrt_op:
      out = Tensor(in(0).shape(), (in(0).array() + n.attrs.floor).sqrt());
      break;
    case Op::clamp:
      out = Tensor(in(0).shape(), in(0).array().max(n.attrs.lo).min(n.attrs.hi));
      break;
    case Op::upsample2: {
      const Tensor& x = in(0);
      if (x.rank() != 3) throw ShapeError("upsample2 input must be {H,W,C}");
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      out = Tensor({2 * H, 2 * W, C});
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = 0; c < C; ++c) {
            const double v = x.at(h, w, c);
            out.at(2 * h, 2 * w, c) = v;
            out.at(2 * h, 2 * w + 1, c) = v;
            out.at(2 * h + 1, 2 * w, c) = v;
            out.at(2 * h + 1, 2 * w + 1, c) = v;
          }
      break;
    }
  }

  out.require_finite(std::string(op_name(n.op)) + " node " + std::to_string(id));
  val_[static_cast<size_t>(id)] = std::move(out);
}

void Eval::backward() {
  if (!forward_done_) throw GraphError("backward called before forward");
  const Tensor& y = val_[static_cast<size_t>(g_->output())];
  if (!y.is_scalar()) {
    throw GraphError("loss output must be scalar, got " + shape_str(y.shape()));
  }
  backward(Tensor::scalar(1.0));
}

void Eval::backward(const Tensor& seed) {
  if (!forward_done_) throw GraphError("backward called before forward");
  const NodeId out_id = g_->output();
  if (!seed.same_shape(val_[static_cast<size_t>(out_id)])) {
    throw ShapeError("backward seed shape mismatch");
  }
  grad_.assign(g_->nodes().size(), Tensor());
  for (size_t i = 0; i < grad_.size(); ++i) {
    grad_[i] = Tensor::zeros_like(val_[i]);
  }
  grad_[static_cast<size_t>(out_id)] = seed;
  for (NodeId id = static_cast<NodeId>(g_->nodes().size()) - 1; id >= 0; --id) {
    backprop_node(id);
  }
  backward_done_ = true;
}

void Eval::backprop_node(NodeId id) {
  const Node& n = g_->node(id);
  const Tensor& g = grad_[static_cast<size_t>(id)];
  auto in = [&](size_t k) -> const Tensor& { return val_[static_cast<size_t>(n.args.at(k))]; };
  auto gin = [&](size_t k) -> Tensor& { return grad_[static_cast<size_t>(n.args.at(k))]; };

  switch (n.op) {
    case Op::input:
    case Op::constant:
      break;
    case Op::conv2d: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const bool has_bias = n.args.size() == 3;
      ConvDims d = conv_dims(x, w, n.attrs);
      Tensor& gx = gin(0);
      Tensor& gw = gin(1);
      for (int oh = 0; oh < d.Ho; ++oh) {
        for (int ow = 0; ow < d.Wo; ++ow) {
          const double* go = &g.array()[(static_cast<Eigen::Index>(oh) * d.Wo + ow) * d.Co];
          if (has_bias) {
            Tensor& gb = gin(2);
            for (int co = 0; co < d.Co; ++co) gb[co] += go[co];
          }
          const int bh = oh * d.stride - d.ph;
          const int bw = ow * d.stride - d.pw;
          for (int i = 0; i < d.kh; ++i) {
            const int h = pad_index(bh + i, d.H, n.attrs.pad);
            if (h < 0) continue;
            for (int j = 0; j < d.kw; ++j) {
              const int wv = pad_index(bw + j, d.W, n.attrs.pad);
              if (wv < 0) continue;
              const Eigen::Index xoff = (static_cast<Eigen::Index>(h) * d.W + wv) * d.Ci;
              const Eigen::Index woff = (static_cast<Eigen::Index>(i) * d.kw + j) * d.Ci * d.Co;
              for (int ci = 0; ci < d.Ci; ++ci) {
                const double xv = x.array()[xoff + ci];
                double s = 0.0;
                double* gwrow = &gw.array()[woff + static_cast<Eigen::Index>(ci) * d.Co];
                const double* wrow = &w.array()[woff + static_cast<Eigen::Index>(ci) * d.Co];
                for (int co = 0; co < d.Co; ++co) {
                  gwrow[co] += xv * go[co];
                  s += wrow[co] * go[co];
                }
                gx.array()[xoff + ci] += s;
              }
            }
          }
        }
      }
      break;
    }
    case Op::max_pool: {
      Tensor& gx = gin(0);
      const auto& winners = argmax_[static_cast<size_t>(id)];
      for (Eigen::Index k = 0; k < g.numel(); ++k) {
        gx.array()[winners[static_cast<size_t>(k)]] += g.array()[k];
      }
      break;
    }
    case Op::avg_pool: {
      const Tensor& x = in(0);
      Tensor& gx = gin(0);
      const int win = n.attrs.window;
      const int C = x.dim(2);
      const int Ho = g.dim(0), Wo = g.dim(1);
      const double inv = 1.0 / (static_cast<double>(win) * win);
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow)
          for (int c = 0; c < C; ++c) {
            const double gv = g.at(oh, ow, c) * inv;
            for (int i = 0; i < win; ++i)
              for (int j = 0; j < win; ++j) gx.at(oh * win + i, ow * win + j, c) += gv;
          }
      break;
    }
    case Op::global_avg_pool: {
      const Tensor& x = in(0);
      Tensor& gx = gin(0);
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      const double inv = 1.0 / (static_cast<double>(H) * W);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = 0; c < C; ++c) gx.at(h, w, c) += g[c] * inv;
      break;
    }
    case Op::relu:
      gin(0).array() += (in(0).array() > 0.0).cast<double>() * g.array();
      break;
    case Op::sigmoid: {
      const Array& s = val_[static_cast<size_t>(id)].array();
      gin(0).array() += g.array() * s * (1.0 - s);
      break;
    }
    case Op::affine: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const int nIn = x.dim(0), m = w.dim(1);
      Tensor& gx = gin(0);
      Tensor& gw = gin(1);
      Tensor& gb = gin(2);
      for (int j = 0; j < m; ++j) gb[j] += g[j];
      for (int i = 0; i < nIn; ++i) {
        const double xv = x[i];
        const double* wrow = &w.array()[static_cast<Eigen::Index>(i) * m];
        double* gwrow = &gw.array()[static_cast<Eigen::Index>(i) * m];
        double s = 0.0;
        for (int j = 0; j < m; ++j) {
          gwrow[j] += xv * g[j];
          s += wrow[j] * g[j];
        }
        gx[i] += s;
      }
      break;
    }
    case Op::add:
      gin(0).array() += g.array();
      gin(1).array() += g.array();
      break;
    case Op::sub:
      gin(0).array() += g.array();
      gin(1).array() -= g.array();
      break;
    case Op::mul:
      gin(0).array() += g.array() * in(1).array();
      gin(1).array() += g.array() * in(0).array();
      break;
    case Op::div: {
      const Array& a = in(0).array();
      const Array& b = in(1).array();
      gin(0).array() += g.array() / b;
      gin(1).array() -= g.array() * a / (b * b);
      break;
    }
    case Op::scale:
      gin(0).array() += n.attrs.a * g.array();
      break;
    case Op::sum:
      gin(0).array() += g.value();
      break;
    case Op::mean:
      gin(0).array() += g.value() / static_cast<double>(in(0).numel());
      break;
    case Op::sobel_h:
    case Op::sobel_v: {
      const Tensor& x = in(0);
      Tensor& gx = gin(0);
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      const double* k = (n.op == Op::sobel_h) ? kSobelH : kSobelV;
      for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
          for (int i = 0; i < 3; ++i) {
            const int hh = pad_index(h - 1 + i, H, Pad::reflect);
            for (int j = 0; j < 3; ++j) {
              const int ww = pad_index(w - 1 + j, W, Pad::reflect);
              const double kv = k[i * 3 + j];
              if (kv == 0.0) continue;
              for (int c = 0; c < C; ++c) gx.at(hh, ww, c) += kv * g.at(h, w, c);
            }
          }
        }
      }
      break;
    }
    case Op::square:
      gin(0).array() += 2.0 * in(0).array() * g.array();
      break;
    case Op::sqrt_op: {
      const Array& y = val_[static_cast<size_t>(id)].array();
      gin(0).array() += 0.5 * g.array() / y;
      break;
    }
    case Op::clamp: {
      // Straight-through strictly inside (lo, hi); zero at and beyond bounds.
      const Array& x = in(0).array();
      gin(0).array() +=
          ((x > n.attrs.lo) && (x < n.attrs.hi)).cast<double>() * g.array();
      break;
    }
    case Op::upsample2: {
      const Tensor& x = in(0);
      Tensor& gx = gin(0);
      const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
      for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w)
          for (int c = 0; c < C; ++c) {
            gx.at(h, w, c) += g.at(2 * h, 2 * w, c) + g.at(2 * h, 2 * w + 1, c) +
                              g.at(2 * h + 1, 2 * w, c) + g.at(2 * h + 1, 2 * w + 1, c);
          }
      break;
    }
  }
}

const Tensor& Eval::grad(const std::string& input_name) const {
  if (!backward_done_) throw GraphError("grad requested before backward");
  return grad_[static_cast<size_t>(input_id(input_name))];
}

const Tensor& Eval::grad_of(NodeId id) const {
  if (!backward_done_) throw GraphError("grad requested before backward");
  return grad_.at(static_cast<size_t>(id));
}

const Tensor& Eval::value_of(NodeId id) const {
  if (!forward_done_) throw GraphError("value requested before forward");
  return val_.at(static_cast<size_t>(id));
}

const Tensor& Eval::output_value() const {
  if (!forward_done_) throw GraphError("output requested before forward");
  return val_[static_cast<size_t>(g_->output())];
}

Tensor forward(const Graph& g, const Inputs& inputs) {
  Eval ev(g);
  return ev.forward(inputs);
}

Tensor gradient(const Graph& g, const Inputs& inputs, const std::string& wrt) {
  Eval ev(g);
  ev.forward(inputs);
  ev.backward();
  return ev.grad(wrt);
}

}  // namespace mrb
