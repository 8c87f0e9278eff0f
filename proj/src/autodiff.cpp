// Copyright 2026 The mtlevo Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "mtlevo/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "mtlevo/error.hpp"

namespace mtlevo {

namespace {

std::atomic<std::uint64_t> g_next_param_id{1};

const Tensor& require_rank(const Var& v, std::size_t rank, const char* op) {
  const Tensor& t = v.value();
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " input, got " + shape_string(t.shape()));
  }
  return t;
}

Graph& common_graph(std::initializer_list<const Var*> vars, const char* op) {
  Graph* g = nullptr;
  for (const Var* v : vars) {
    if (!v->valid()) throw StateError(std::string(op) + ": invalid variable");
    if (g && v->graph() != g) throw StateError(std::string(op) + ": variables from different graphs");
    g = v->graph();
  }
  return *g;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kElu: return "elu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kLinear: return "linear";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "elu") return Activation::kElu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "linear") return Activation::kLinear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

Param make_param(Tensor value, Real l2_strength, std::string name) {
  if (l2_strength < 0) throw ConfigError("l2 strength must be non-negative");
  auto p = std::make_shared<ParamStorage>();
  p->id = g_next_param_id.fetch_add(1);
  p->name = std::move(name);
  p->grad = Tensor(value.shape());
  p->adam_m = Tensor(value.shape());
  p->adam_v = Tensor(value.shape());
  p->value = std::move(value);
  p->l2_strength = l2_strength;
  return p;
}

Param clone_param(const Param& p) {
  auto q = std::make_shared<ParamStorage>(*p);
  q->id = g_next_param_id.fetch_add(1);
  return q;
}

ScaleGroup ScaleGroup::uniform(std::size_t m, std::string owner) {
  if (m == 0) throw ConfigError("scale group needs at least one input");
  return ScaleGroup{make_param(Tensor({m}), 0.0, "scales:" + owner), std::move(owner)};
}

std::vector<Real> ScaleGroup::weights() const { return softmax(logits->value.data()); }

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.size());
  if (logits.empty()) return out;
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (Real& x : out) x /= total;
  return out;
}

// ---------------------------------------------------------------------------

const Tensor& Var::value() const {
  if (!graph_) throw StateError("value() on an empty variable");
  return graph_->value_of(index_);
}

const Tensor& BackwardContext::input(std::size_t i) const {
  return graph_.value_of(graph_.nodes_[node_].inputs.at(i));
}

Tensor* BackwardContext::input_grad(std::size_t i) {
  const std::size_t idx = graph_.nodes_[node_].inputs.at(i);
  if (!graph_.nodes_[idx].needs_grad) return nullptr;
  Tensor& g = grads_[idx];
  if (g.empty()) g = Tensor(graph_.value_of(idx).shape());
  return &g;
}

Graph::Graph(Mode mode, std::uint64_t seed) : mode_(mode), rng_(seed) {}

const Tensor& Graph::value_of(std::size_t i) const {
  const Node& n = nodes_[i];
  return n.param ? n.param->value : n.value;
}

void Graph::check_owned(const Var& v, const char* what) const {
  if (v.graph_ != this || v.index_ >= nodes_.size()) {
    throw StateError(std::string(what) + ": variable does not belong to this graph");
  }
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::param(const Param& p) {
  if (!p) throw StateError("null parameter");
  if (auto it = param_nodes_.find(p.get()); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.param = p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(p.get(), nodes_.size() - 1);
  params_.push_back(p);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    check_owned(v, "record");
    n.inputs.push_back(v.index_);
    n.needs_grad = n.needs_grad || nodes_[v.index_].needs_grad;
  }
  if (mode_ == Mode::kTrain && n.needs_grad) n.backward = std::move(backward);
  if (!n.backward) n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward called before any forward pass");
  if (mode_ != Mode::kTrain) throw StateError("backward requires a train-mode graph");
  if (backward_done_) throw StateError("backward already ran on this graph");
  check_owned(loss, "backward");
  if (value_of(loss.index_).size() != 1) {
    throw DimensionError("backward needs a scalar loss, got " +
                         shape_string(value_of(loss.index_).shape()));
  }
  backward_done_ = true;

  const std::size_t n = loss.index_ + 1;
  std::vector<char> reachable(n, 0);
  reachable[loss.index_] = 1;
  for (std::size_t i = n; i-- > 0;) {
    if (!reachable[i]) continue;
    for (std::size_t in : nodes_[i].inputs) reachable[in] = 1;
  }

  std::vector<Tensor> grads(n);
  grads[loss.index_] = Tensor(value_of(loss.index_).shape(), 1.0);
  for (std::size_t i = n; i-- > 0;) {
    if (!reachable[i]) continue;
    Node& node = nodes_[i];
    if (node.param) {
      ParamStorage& p = *node.param;
      if (!grads[i].empty()) p.grad += grads[i];
      if (p.l2_strength > 0) {
        for (std::size_t k = 0; k < p.value.size(); ++k) p.grad[k] += p.l2_strength * p.value[k];
      }
      continue;
    }
    if (!node.backward || grads[i].empty()) continue;
    BackwardContext ctx(*this, i, grads[i], node.value, grads);
    node.backward(ctx);
    grads[i] = Tensor();
  }
}

// ---------------------------------------------------------------------------

Var dense(Var x, Var weight, Var bias) {
  Graph& g = common_graph({&x, &weight, &bias}, "dense");
  const Tensor& xv = x.value();
  const Tensor& w = require_rank(weight, 2, "dense weight");
  const Tensor& b = require_rank(bias, 1, "dense bias");
  const std::size_t out = w.shape()[0];
  const std::size_t in = w.shape()[1];
  if (xv.size() != in || b.size() != out) {
    throw DimensionError("dense: input " + shape_string(xv.shape()) + " incompatible with weight " +
                         shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  Tensor y({out});
  for (std::size_t o = 0; o < out; ++o) {
    Real acc = b[o];
    const Real* row = w.data().data() + o * in;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * xv[i];
    y[o] = acc;
  }
  return g.record(std::move(y), {x, weight, bias}, [out, in](BackwardContext& ctx) {
    const Tensor& gy = ctx.grad_out();
    const Tensor& xv = ctx.input(0);
    const Tensor& w = ctx.input(1);
    if (Tensor* gx = ctx.input_grad(0)) {
      for (std::size_t o = 0; o < out; ++o) {
        const Real* row = w.data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) (*gx)[i] += row[i] * gy[o];
      }
    }
    if (Tensor* gw = ctx.input_grad(1)) {
      for (std::size_t o = 0; o < out; ++o) {
        Real* row = gw->data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += gy[o] * xv[i];
      }
    }
    if (Tensor* gb = ctx.input_grad(2)) *gb += gy;
  });
}

Var conv2d(Var x, Var kernel, Var bias) {
  Graph& g = common_graph({&x, &kernel, &bias}, "conv2d");
  const Tensor& xv = require_rank(x, 3, "conv2d input");
  const Tensor& kv = require_rank(kernel, 4, "conv2d kernel");
  const Tensor& bv = require_rank(bias, 1, "conv2d bias");
  const std::size_t H = xv.shape()[0], W = xv.shape()[1], Cin = xv.shape()[2];
  const std::size_t k = kv.shape()[0];
  const std::size_t Cout = kv.shape()[3];
  if (kv.shape()[1] != k || k % 2 == 0) {
    throw DimensionError("conv2d: kernel must be square with odd side, got " + shape_string(kv.shape()));
  }
  if (kv.shape()[2] != Cin || bv.size() != Cout) {
    throw DimensionError("conv2d: input " + shape_string(xv.shape()) + " incompatible with kernel " +
                         shape_string(kv.shape()) + " and bias " + shape_string(bv.shape()));
  }
  const long pad = static_cast<long>(k / 2);
  Tensor y({H, W, Cout});
  const Real* xp = xv.data().data();
  const Real* kp = kv.data().data();
  Real* yp = y.data().data();
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      Real* yrow = yp + (h * W + w) * Cout;
      for (std::size_t co = 0; co < Cout; ++co) yrow[co] = bv[co];
      for (std::size_t dy = 0; dy < k; ++dy) {
        const long ih = static_cast<long>(h + dy) - pad;
        if (ih < 0 || ih >= static_cast<long>(H)) continue;
        for (std::size_t dx = 0; dx < k; ++dx) {
          const long iw = static_cast<long>(w + dx) - pad;
          if (iw < 0 || iw >= static_cast<long>(W)) continue;
          const Real* xin = xp + (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Cin;
          const Real* kk = kp + (dy * k + dx) * Cin * Cout;
          for (std::size_t ci = 0; ci < Cin; ++ci) {
            const Real xval = xin[ci];
            const Real* kr = kk + ci * Cout;
            for (std::size_t co = 0; co < Cout; ++co) yrow[co] += xval * kr[co];
          }
        }
      }
    }
  }
  return g.record(std::move(y), {x, kernel, bias}, [H, W, Cin, Cout, k, pad](BackwardContext& ctx) {
    const Real* gy = ctx.grad_out().data().data();
    const Real* xp = ctx.input(0).data().data();
    const Real* kp = ctx.input(1).data().data();
    Tensor* gx = ctx.input_grad(0);
    Tensor* gk = ctx.input_grad(1);
    Tensor* gb = ctx.input_grad(2);
    Real* gxp = gx ? gx->data().data() : nullptr;
    Real* gkp = gk ? gk->data().data() : nullptr;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        const Real* grow = gy + (h * W + w) * Cout;
        if (gb) {
          for (std::size_t co = 0; co < Cout; ++co) (*gb)[co] += grow[co];
        }
        for (std::size_t dy = 0; dy < k; ++dy) {
          const long ih = static_cast<long>(h + dy) - pad;
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const long iw = static_cast<long>(w + dx) - pad;
            if (iw < 0 || iw >= static_cast<long>(W)) continue;
            const std::size_t xoff = (static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw)) * Cin;
            const std::size_t koff = (dy * k + dx) * Cin * Cout;
            for (std::size_t ci = 0; ci < Cin; ++ci) {
              const Real* kr = kp + koff + ci * Cout;
              if (gxp) {
                Real acc = 0;
                for (std::size_t co = 0; co < Cout; ++co) acc += kr[co] * grow[co];
                gxp[xoff + ci] += acc;
              }
              if (gkp) {
                const Real xval = xp[xoff + ci];
                Real* gkr = gkp + koff + ci * Cout;
                for (std::size_t co = 0; co < Cout; ++co) gkr[co] += xval * grow[co];
              }
            }
          }
        }
      }
    }
  });
}

Var maxpool2x2(Var x) {
  Graph& g = common_graph({&x}, "maxpool2x2");
  const Tensor& xv = require_rank(x, 3, "maxpool2x2 input");
  const std::size_t H = xv.shape()[0], W = xv.shape()[1], C = xv.shape()[2];
  if (H < 2 || W < 2) {
    throw DimensionError("maxpool2x2: feature map " + shape_string(xv.shape()) + " is smaller than 2x2");
  }
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor y({Ho, Wo, C});
  std::vector<std::size_t> argmax(Ho * Wo * C);
  for (std::size_t h = 0; h < Ho; ++h) {
    for (std::size_t w = 0; w < Wo; ++w) {
      for (std::size_t c = 0; c < C; ++c) {
        std::size_t best = ((2 * h) * W + 2 * w) * C + c;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = ((2 * h + dy) * W + 2 * w + dx) * C + c;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        const std::size_t o = (h * Wo + w) * C + c;
        y[o] = xv[best];
        argmax[o] = best;
      }
    }
  }
  return g.record(std::move(y), {x}, [argmax = std::move(argmax)](BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_out();
    for (std::size_t o = 0; o < argmax.size(); ++o) (*gx)[argmax[o]] += gy[o];
  });
}

Var activate(Var x, Activation a) {
  Graph& g = common_graph({&x}, "activate");
  if (a == Activation::kLinear) return x;
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const Real v = xv[i];
    switch (a) {
      case Activation::kRelu: y[i] = v > 0 ? v : 0; break;
      case Activation::kElu: y[i] = v > 0 ? v : std::expm1(v); break;
      case Activation::kSigmoid: y[i] = 1.0 / (1.0 + std::exp(-v)); break;
      case Activation::kTanh: y[i] = std::tanh(v); break;
      case Activation::kLinear: y[i] = v; break;
    }
  }
  return g.record(std::move(y), {x}, [a](BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_out();
    const Tensor& xv = ctx.input(0);
    const Tensor& yv = ctx.output();
    for (std::size_t i = 0; i < gy.size(); ++i) {
      Real d = 1;
      switch (a) {
        case Activation::kRelu: d = xv[i] > 0 ? 1 : 0; break;
        case Activation::kElu: d = xv[i] > 0 ? 1 : yv[i] + 1; break;
        case Activation::kSigmoid: d = yv[i] * (1 - yv[i]); break;
        case Activation::kTanh: d = 1 - yv[i] * yv[i]; break;
        case Activation::kLinear: break;
      }
      (*gx)[i] += d * gy[i];
    }
  });
}

Var dropout(Var x, double rate) {
  Graph& g = common_graph({&x}, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!g.training() || rate == 0.0) return x;
  const Tensor& xv = x.value();
  const Real keep_scale = 1.0 / (1.0 - rate);
  std::vector<Real> mask(xv.size());
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = bernoulli(g.rng(), rate) ? 0.0 : keep_scale;
    y[i] = xv[i] * mask[i];
  }
  return g.record(std::move(y), {x}, [mask = std::move(mask)](BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_out();
    for (std::size_t i = 0; i < mask.size(); ++i) (*gx)[i] += gy[i] * mask[i];
  });
}

Var softmerge(Var logits, std::span<const Var> inputs) {
  if (!logits.valid()) throw StateError("softmerge: invalid logits");
  Graph& g = *logits.graph();
  const Tensor& lv = logits.value();
  const std::size_t m = inputs.size();
  if (m == 0 || lv.size() == 0) throw ConfigError("softmerge needs at least one input");
  if (lv.size() != m) {
    throw DimensionError("softmerge: " + std::to_string(lv.size()) + " scales for " +
                         std::to_string(m) + " inputs");
  }
  const Shape& shape = inputs[0].shape();
  for (const Var& in : inputs) {
    if (in.graph() != &g) throw StateError("softmerge: variables from different graphs");
    if (in.shape() != shape) {
      throw DimensionError("softmerge: input shapes differ (" + shape_string(shape) + " vs " +
                           shape_string(in.shape()) + ")");
    }
  }
  const std::vector<Real> w = softmax(lv.data());
  Tensor y(shape);
  for (std::size_t j = 0; j < m; ++j) {
    const Tensor& xv = inputs[j].value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += w[j] * xv[i];
  }
  std::vector<Var> all;
  all.reserve(m + 1);
  all.push_back(logits);
  all.insert(all.end(), inputs.begin(), inputs.end());
  return g.record(std::move(y), std::move(all), [w, m](BackwardContext& ctx) {
    const Tensor& gy = ctx.grad_out();
    std::vector<Real> dw(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const Tensor& xv = ctx.input(j + 1);
      Real acc = 0;
      for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * xv[i];
      dw[j] = acc;
      if (Tensor* gx = ctx.input_grad(j + 1)) {
        for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += w[j] * gy[i];
      }
    }
    if (Tensor* gl = ctx.input_grad(0)) {
      Real mean = 0;
      for (std::size_t j = 0; j < m; ++j) mean += w[j] * dw[j];
      for (std::size_t j = 0; j < m; ++j) (*gl)[j] += w[j] * (dw[j] - mean);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  Graph& g = common_graph({&logits}, "softmax_cross_entropy");
  const Tensor& lv = logits.value();
  const std::size_t c = lv.size();
  if (c < 2) throw DimensionError("softmax_cross_entropy needs at least two classes");
  if (label >= c) {
    throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(c) +
                    " classes");
  }
  const auto top = std::max_element(lv.data().begin(), lv.data().end());
  const std::size_t arg = static_cast<std::size_t>(top - lv.data().begin());
  const Real mx = *top;
  // log-sum-exp as mx + log1p(rest) keeps precision when one logit dominates.
  Real rest = 0;
  for (std::size_t i = 0; i < c; ++i) {
    if (i != arg) rest += std::exp(lv[i] - mx);
  }
  const Real loss = (mx - lv[label]) + std::log1p(rest);
  return g.record(Tensor::scalar(loss), {logits}, [label](BackwardContext& ctx) {
    Tensor* gl = ctx.input_grad(0);
    if (!gl) return;
    const Real go = ctx.grad_out()[0];
    const std::vector<Real> p = softmax(ctx.input(0).data());
    for (std::size_t i = 0; i < p.size(); ++i) {
      (*gl)[i] += go * (p[i] - (i == label ? 1.0 : 0.0));
    }
  });
}

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw ConfigError("sum of zero terms");
  Graph& g = *terms[0].graph();
  const Shape& shape = terms[0].shape();
  Tensor y(shape);
  for (const Var& t : terms) {
    if (t.graph() != &g) throw StateError("sum: variables from different graphs");
    y += t.value();
  }
  const std::size_t n = terms.size();
  return g.record(std::move(y), std::vector<Var>(terms.begin(), terms.end()),
                  [n](BackwardContext& ctx) {
                    for (std::size_t j = 0; j < n; ++j) {
                      if (Tensor* gx = ctx.input_grad(j)) *gx += ctx.grad_out();
                    }
                  });
}

Var tile_channels(Var x, std::size_t channels) {
  Graph& g = common_graph({&x}, "tile_channels");
  const Tensor& xv = require_rank(x, 3, "tile_channels input");
  const std::size_t c_in = xv.shape()[2];
  if (c_in == channels) return x;
  if (c_in != 1) {
    throw DimensionError("tile_channels: cannot tile " + shape_string(xv.shape()) + " to " +
                         std::to_string(channels) + " channels");
  }
  const std::size_t H = xv.shape()[0], W = xv.shape()[1];
  Tensor y({H, W, channels});
  for (std::size_t p = 0; p < H * W; ++p) {
    for (std::size_t c = 0; c < channels; ++c) y[p * channels + c] = xv[p];
  }
  return g.record(std::move(y), {x}, [channels](BackwardContext& ctx) {
    Tensor* gx = ctx.input_grad(0);
    if (!gx) return;
    const Tensor& gy = ctx.grad_out();
    for (std::size_t p = 0; p < gx->size(); ++p) {
      for (std::size_t c = 0; c < channels; ++c) (*gx)[p] += gy[p * channels + c];
    }
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat of zero tensors");
  if (parts.size() == 1) return parts[0];
  Graph& g = *parts[0].graph();
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 3) throw DimensionError("concat_channels expects H x W x C maps");
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.graph() != &g) throw StateError("concat_channels: variables from different graphs");
    const Shape& s = p.shape();
    if (s.size() != 3 || s[0] != s0[0] || s[1] != s0[1]) {
      throw DimensionError("concat_channels: spatial shapes differ (" + shape_string(s0) + " vs " +
                           shape_string(s) + ")");
    }
    widths.push_back(s[2]);
    total += s[2];
  }
  const std::size_t pixels = s0[0] * s0[1];
  Tensor y({s0[0], s0[1], total});
  std::size_t offset = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const Tensor& xv = parts[j].value();
    for (std::size_t p = 0; p < pixels; ++p) {
      for (std::size_t c = 0; c < widths[j]; ++c) y[p * total + offset + c] = xv[p * widths[j] + c];
    }
    offset += widths[j];
  }
  return g.record(std::move(y), std::vector<Var>(parts.begin(), parts.end()),
                  [widths, total, pixels](BackwardContext& ctx) {
                    const Tensor& gy = ctx.grad_out();
                    std::size_t offset = 0;
                    for (std::size_t j = 0; j < widths.size(); ++j) {
                      if (Tensor* gx = ctx.input_grad(j)) {
                        for (std::size_t p = 0; p < pixels; ++p) {
                          for (std::size_t c = 0; c < widths[j]; ++c) {
                            (*gx)[p * widths[j] + c] += gy[p * total + offset + c];
                          }
                        }
                      }
                      offset += widths[j];
                    }
                  });
}

Var apply_layer(const LayerOp& op, Var input, std::span<const Param> params) {
  Graph& g = common_graph({&input}, "apply_layer");
  auto weights = [&](const char* kind) {
    if (params.size() != 2) {
      throw DimensionError(std::string(kind) + " layer expects weight and bias parameters");
    }
    return std::pair{g.param(params[0]), g.param(params[1])};
  };
  switch (op.kind) {
    case LayerKind::kDense: {
      auto [w, b] = weights("dense");
      return dense(input, w, b);
    }
    case LayerKind::kConv2d: {
      auto [w, b] = weights("conv2d");
      return conv2d(input, w, b);
    }
    case LayerKind::kMaxPool2x2: return maxpool2x2(input);
    case LayerKind::kActivation: return activate(input, op.activation);
    case LayerKind::kDropout: return dropout(input, op.dropout_rate);
  }
  throw ConfigError("unknown layer kind");
}

}  // namespace mtlevo
