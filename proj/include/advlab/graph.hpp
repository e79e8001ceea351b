#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/tensor.hpp"

namespace advlab::graph {

enum class LayerKind { kConv2d, kRelu, kMaxPool, kMeanPool, kFlatten, kDense };

inline const char* layer_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kMaxPool: return "max_pool";
    case LayerKind::kMeanPool: return "mean_pool";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;  // conv2d
  int kernel = 0;        // conv2d (square, stride 1)
  int padding = 0;       // conv2d (symmetric zero padding)
  int out_features = 0;  // dense
};

inline LayerSpec conv2d(int out_channels, int kernel, int padding) {
  return {LayerKind::kConv2d, out_channels, kernel, padding, 0};
}
inline LayerSpec relu() { return {LayerKind::kRelu}; }
inline LayerSpec max_pool() { return {LayerKind::kMaxPool}; }
inline LayerSpec mean_pool() { return {LayerKind::kMeanPool}; }
inline LayerSpec flatten() { return {LayerKind::kFlatten}; }
inline LayerSpec dense(int out_features) {
  return {LayerKind::kDense, 0, 0, 0, out_features};
}

// Per-layer parameters; empty tensors for parameterless layers.
struct LayerParams {
  Tensor w;
  Tensor b;
};

// Activations captured during forward so backward can replay the graph.
// acts[0] is the input batch, acts[i + 1] the output of layer i.
struct ForwardCache {
  std::vector<Tensor> acts;
  // For each max-pool layer index, the flat input offset chosen per output
  // element (ties resolved to the first window element in row-major order).
  std::vector<std::vector<int>> pool_argmax;
};

struct Gradients {
  std::vector<Tensor> gw;
  std::vector<Tensor> gb;
};

// A feed-forward network over NCHW batches: conv/pool/relu stages followed by
// flatten and dense layers. Shapes are resolved once at construction; forward
// is const and carries no state, so one network can serve many threads as long
// as each brings its own ForwardCache.
class Network {
 public:
  Network(int in_c, int in_h, int in_w, std::vector<LayerSpec> specs)
      : in_c_(in_c), in_h_(in_h), in_w_(in_w), specs_(std::move(specs)) {
    if (in_c_ <= 0 || in_h_ <= 0 || in_w_ <= 0)
      throw ConfigError("network input shape must be positive, got [" + std::to_string(in_c_) +
                        "," + std::to_string(in_h_) + "," + std::to_string(in_w_) + "]");
    resolve_shapes();
  }

  int input_c() const { return in_c_; }
  int input_h() const { return in_h_; }
  int input_w() const { return in_w_; }
  int out_features() const { return out_features_; }
  std::size_t layer_count() const { return specs_.size(); }
  const LayerSpec& spec(std::size_t i) const { return specs_[i]; }
  const LayerParams& params(std::size_t i) const { return params_[i]; }
  LayerParams& params(std::size_t i) { return params_[i]; }

  // Named views over every parameter tensor, in layer order. Used by the
  // weight file reader/writer and by the trainer.
  struct NamedParam {
    std::string name;
    Tensor* tensor;
  };
  std::vector<NamedParam> named_params() {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (params_[i].w.numel() == 0) continue;
      out.push_back({"l" + std::to_string(i) + ".w", &params_[i].w});
      out.push_back({"l" + std::to_string(i) + ".b", &params_[i].b});
    }
    return out;
  }

  struct NamedParamView {
    std::string name;
    const Tensor* tensor;
  };
  std::vector<NamedParamView> named_params() const {
    std::vector<NamedParamView> out;
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      if (params_[i].w.numel() == 0) continue;
      out.push_back({"l" + std::to_string(i) + ".w", &params_[i].w});
      out.push_back({"l" + std::to_string(i) + ".b", &params_[i].b});
    }
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.w.numel() + p.b.numel();
    return n;
  }

  // Forward over a [N,C,H,W] batch; returns [N,out_features] logits. Pass a
  // cache when a backward pass will follow.
  Tensor forward(const Tensor& x, ForwardCache* cache = nullptr) const {
    check_input(x);
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.acts.clear();
    fc.pool_argmax.clear();
    fc.acts.push_back(x);
    for (std::size_t i = 0; i < specs_.size(); ++i)
      fc.acts.push_back(apply_layer(i, fc.acts.back(), fc));
    return fc.acts.back();
  }

  // Backprop dlogits through the cached graph. Always produces the gradient
  // with respect to the input batch; fills `grads` with parameter gradients
  // when given (the attack path passes nullptr and skips that work).
  Tensor backward(const ForwardCache& fc, const Tensor& dlogits, Gradients* grads = nullptr) const {
    if (fc.acts.size() != specs_.size() + 1)
      throw ConsistencyError("backward called with a stale forward cache");
    if (grads) {
      grads->gw.assign(specs_.size(), Tensor());
      grads->gb.assign(specs_.size(), Tensor());
      for (std::size_t i = 0; i < specs_.size(); ++i) {
        if (params_[i].w.numel() == 0) continue;
        grads->gw[i] = Tensor(params_[i].w.shape);
        grads->gb[i] = Tensor(params_[i].b.shape);
      }
    }
    Tensor grad = dlogits;
    std::size_t pool_seen = count_max_pools();
    for (std::size_t ri = specs_.size(); ri-- > 0;) {
      if (specs_[ri].kind == LayerKind::kMaxPool) --pool_seen;
      grad = backward_layer(ri, fc, pool_seen, grad, grads);
    }
    return grad;
  }

 private:
  void check_input(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != in_c_ || x.dim(2) != in_h_ || x.dim(3) != in_w_)
      throw ConfigError("network expects [N," + std::to_string(in_c_) + "," +
                        std::to_string(in_h_) + "," + std::to_string(in_w_) + "] input, got " +
                        x.shape_str());
  }

  std::size_t count_max_pools() const {
    std::size_t n = 0;
    for (const auto& s : specs_)
      if (s.kind == LayerKind::kMaxPool) ++n;
    return n;
  }

  // Compute per-layer output shapes and allocate parameter tensors.
  void resolve_shapes() {
    int c = in_c_, h = in_h_, w = in_w_;
    bool flat = false;
    int features = 0;
    params_.resize(specs_.size());
    shapes_.reserve(specs_.size());
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const LayerSpec& s = specs_[i];
      switch (s.kind) {
        case LayerKind::kConv2d: {
          if (flat) throw ConfigError("conv2d after flatten at layer " + std::to_string(i));
          if (s.out_channels <= 0 || s.kernel <= 0 || s.padding < 0)
            throw ConfigError("bad conv2d spec at layer " + std::to_string(i));
          const int oh = h + 2 * s.padding - s.kernel + 1;
          const int ow = w + 2 * s.padding - s.kernel + 1;
          if (oh <= 0 || ow <= 0)
            throw ConfigError("conv2d at layer " + std::to_string(i) +
                              " collapses the spatial extent");
          params_[i].w = Tensor({s.out_channels, c, s.kernel, s.kernel});
          params_[i].b = Tensor({s.out_channels});
          c = s.out_channels;
          h = oh;
          w = ow;
          break;
        }
        case LayerKind::kRelu:
          break;
        case LayerKind::kMaxPool:
        case LayerKind::kMeanPool: {
          if (flat) throw ConfigError("pool after flatten at layer " + std::to_string(i));
          if (h < 2 || w < 2)
            throw ConfigError("pool at layer " + std::to_string(i) + " needs at least 2x2 input");
          h /= 2;
          w /= 2;
          break;
        }
        case LayerKind::kFlatten: {
          if (flat) throw ConfigError("flatten applied twice at layer " + std::to_string(i));
          flat = true;
          features = c * h * w;
          break;
        }
        case LayerKind::kDense: {
          if (!flat) throw ConfigError("dense before flatten at layer " + std::to_string(i));
          if (s.out_features <= 0)
            throw ConfigError("bad dense spec at layer " + std::to_string(i));
          params_[i].w = Tensor({s.out_features, features});
          params_[i].b = Tensor({s.out_features});
          features = s.out_features;
          break;
        }
      }
      shapes_.push_back(flat ? std::vector<int>{features} : std::vector<int>{c, h, w});
    }
    if (!flat) throw ConfigError("network must end in flatten + dense");
    out_features_ = features;
  }

  std::vector<int> batch_shape(std::size_t layer, int n) const {
    std::vector<int> s{n};
    const std::vector<int>& tail = shapes_[layer];
    s.insert(s.end(), tail.begin(), tail.end());
    return s;
  }

  Tensor apply_layer(std::size_t i, const Tensor& x, ForwardCache& fc) const {
    const LayerSpec& s = specs_[i];
    const int n = x.dim(0);
    switch (s.kind) {
      case LayerKind::kConv2d: return conv_forward(i, x);
      case LayerKind::kRelu: {
        Tensor y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        return y;
      }
      case LayerKind::kMaxPool: {
        fc.pool_argmax.emplace_back();
        return max_pool_forward(x, fc.pool_argmax.back());
      }
      case LayerKind::kMeanPool: return mean_pool_forward(x);
      case LayerKind::kFlatten: {
        Tensor y = x;
        y.shape = batch_shape(i, n);
        return y;
      }
      case LayerKind::kDense: return dense_forward(i, x);
    }
    throw ConsistencyError("unreachable layer kind");
  }

  Tensor backward_layer(std::size_t i, const ForwardCache& fc, std::size_t pool_index,
                        const Tensor& dy, Gradients* grads) const {
    const LayerSpec& s = specs_[i];
    const Tensor& x = fc.acts[i];
    switch (s.kind) {
      case LayerKind::kConv2d: return conv_backward(i, x, dy, grads);
      case LayerKind::kRelu: {
        Tensor dx = dy;
        for (std::size_t j = 0; j < dx.data.size(); ++j)
          if (x.data[j] <= 0.0) dx.data[j] = 0.0;
        return dx;
      }
      case LayerKind::kMaxPool: return max_pool_backward(x, fc.pool_argmax[pool_index], dy);
      case LayerKind::kMeanPool: return mean_pool_backward(x, dy);
      case LayerKind::kFlatten: {
        Tensor dx = dy;
        dx.shape = x.shape;
        return dx;
      }
      case LayerKind::kDense: return dense_backward(i, x, dy, grads);
    }
    throw ConsistencyError("unreachable layer kind");
  }

  Tensor conv_forward(std::size_t i, const Tensor& x) const {
    const LayerSpec& s = specs_[i];
    const Tensor& w = params_[i].w;
    const Tensor& b = params_[i].b;
    const int n = x.dim(0), ic = x.dim(1), h = x.dim(2), wid = x.dim(3);
    const int oc = s.out_channels, k = s.kernel, p = s.padding;
    const int oh = h + 2 * p - k + 1, ow = wid + 2 * p - k + 1;
    Tensor y({n, oc, oh, ow});
    for (int in = 0; in < n; ++in)
      for (int co = 0; co < oc; ++co)
        for (int yh = 0; yh < oh; ++yh)
          for (int yw = 0; yw < ow; ++yw) {
            double acc = b.data[co];
            for (int ci = 0; ci < ic; ++ci)
              for (int kh = 0; kh < k; ++kh) {
                const int xh = yh + kh - p;
                if (xh < 0 || xh >= h) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int xw = yw + kw - p;
                  if (xw < 0 || xw >= wid) continue;
                  acc += w.data[w.off4(co, ci, kh, kw)] * x.data[x.off4(in, ci, xh, xw)];
                }
              }
            y.data[y.off4(in, co, yh, yw)] = acc;
          }
    return y;
  }

  Tensor conv_backward(std::size_t i, const Tensor& x, const Tensor& dy, Gradients* grads) const {
    const LayerSpec& s = specs_[i];
    const Tensor& w = params_[i].w;
    const int n = x.dim(0), ic = x.dim(1), h = x.dim(2), wid = x.dim(3);
    const int oc = s.out_channels, k = s.kernel, p = s.padding;
    const int oh = dy.dim(2), ow = dy.dim(3);
    Tensor dx(x.shape);
    Tensor* dw = grads ? &grads->gw[i] : nullptr;
    Tensor* db = grads ? &grads->gb[i] : nullptr;
    for (int in = 0; in < n; ++in)
      for (int co = 0; co < oc; ++co)
        for (int yh = 0; yh < oh; ++yh)
          for (int yw = 0; yw < ow; ++yw) {
            const double g = dy.data[dy.off4(in, co, yh, yw)];
            if (db) db->data[co] += g;
            for (int ci = 0; ci < ic; ++ci)
              for (int kh = 0; kh < k; ++kh) {
                const int xh = yh + kh - p;
                if (xh < 0 || xh >= h) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int xw = yw + kw - p;
                  if (xw < 0 || xw >= wid) continue;
                  dx.data[dx.off4(in, ci, xh, xw)] += w.data[w.off4(co, ci, kh, kw)] * g;
                  if (dw)
                    dw->data[w.off4(co, ci, kh, kw)] += x.data[x.off4(in, ci, xh, xw)] * g;
                }
              }
          }
    return dx;
  }

  static Tensor max_pool_forward(const Tensor& x, std::vector<int>& argmax) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    argmax.assign(y.numel(), 0);
    for (int in = 0; in < n; ++in)
      for (int ci = 0; ci < c; ++ci)
        for (int yh = 0; yh < oh; ++yh)
          for (int yw = 0; yw < ow; ++yw) {
            int best = static_cast<int>(x.off4(in, ci, 2 * yh, 2 * yw));
            double best_v = x.data[best];
            // Scan the 2x2 window row-major; strict > keeps the first max.
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw) {
                const int idx = static_cast<int>(x.off4(in, ci, 2 * yh + dh, 2 * yw + dw));
                if (x.data[idx] > best_v) {
                  best_v = x.data[idx];
                  best = idx;
                }
              }
            const std::size_t o = y.off4(in, ci, yh, yw);
            y.data[o] = best_v;
            argmax[o] = best;
          }
    return y;
  }

  static Tensor max_pool_backward(const Tensor& x, const std::vector<int>& argmax,
                                  const Tensor& dy) {
    Tensor dx(x.shape);
    for (std::size_t o = 0; o < dy.data.size(); ++o) dx.data[argmax[o]] += dy.data[o];
    return dx;
  }

  static Tensor mean_pool_forward(const Tensor& x) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    for (int in = 0; in < n; ++in)
      for (int ci = 0; ci < c; ++ci)
        for (int yh = 0; yh < oh; ++yh)
          for (int yw = 0; yw < ow; ++yw) {
            double acc = 0.0;
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw)
                acc += x.data[x.off4(in, ci, 2 * yh + dh, 2 * yw + dw)];
            y.data[y.off4(in, ci, yh, yw)] = acc / 4.0;
          }
    return y;
  }

  static Tensor mean_pool_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.shape);
    const int n = dy.dim(0), c = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    for (int in = 0; in < n; ++in)
      for (int ci = 0; ci < c; ++ci)
        for (int yh = 0; yh < oh; ++yh)
          for (int yw = 0; yw < ow; ++yw) {
            const double g = dy.data[dy.off4(in, ci, yh, yw)] / 4.0;
            for (int dh = 0; dh < 2; ++dh)
              for (int dw = 0; dw < 2; ++dw)
                dx.data[dx.off4(in, ci, 2 * yh + dh, 2 * yw + dw)] += g;
          }
    return dx;
  }

  Tensor dense_forward(std::size_t i, const Tensor& x) const {
    const Tensor& w = params_[i].w;
    const Tensor& b = params_[i].b;
    const int n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
    Tensor y({n, fout});
    for (int in = 0; in < n; ++in)
      for (int o = 0; o < fout; ++o) {
        double acc = b.data[o];
        const double* wr = w.ptr() + static_cast<std::size_t>(o) * fin;
        const double* xr = x.ptr() + static_cast<std::size_t>(in) * fin;
        for (int j = 0; j < fin; ++j) acc += wr[j] * xr[j];
        y.data[y.off2(in, o)] = acc;
      }
    return y;
  }

  Tensor dense_backward(std::size_t i, const Tensor& x, const Tensor& dy, Gradients* grads) const {
    const Tensor& w = params_[i].w;
    const int n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
    Tensor dx(x.shape);
    Tensor* dw = grads ? &grads->gw[i] : nullptr;
    Tensor* db = grads ? &grads->gb[i] : nullptr;
    for (int in = 0; in < n; ++in)
      for (int o = 0; o < fout; ++o) {
        const double g = dy.data[dy.off2(in, o)];
        if (db) db->data[o] += g;
        const double* wr = w.ptr() + static_cast<std::size_t>(o) * fin;
        const double* xr = x.ptr() + static_cast<std::size_t>(in) * fin;
        double* dxr = dx.ptr() + static_cast<std::size_t>(in) * fin;
        for (int j = 0; j < fin; ++j) {
          dxr[j] += wr[j] * g;
          if (dw) dw->data[static_cast<std::size_t>(o) * fin + j] += xr[j] * g;
        }
      }
    return dx;
  }

  int in_c_, in_h_, in_w_;
  std::vector<LayerSpec> specs_;
  std::vector<LayerParams> params_;
  std::vector<std::vector<int>> shapes_;  // output shape of each layer (sans batch)
  int out_features_ = 0;
};

// Row-wise softmax with max subtraction; logits [N,K] -> probabilities [N,K].
inline Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw ConfigError("softmax expects [N,K] logits");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape);
  for (int i = 0; i < n; ++i) {
    const double* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    double* out = p.ptr() + static_cast<std::size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      out[j] = std::exp(row[j] - m);
      z += out[j];
    }
    for (int j = 0; j < k; ++j) out[j] /= z;
  }
  return p;
}

struct CeResult {
  double loss_sum = 0.0;          // summed over rows
  std::vector<double> per_row;    // per-row cross-entropy
  Tensor dlogits;                 // d(loss_sum)/dlogits = p - onehot, per row
  Tensor probs;
};

// Cross-entropy against integer labels with the log-sum-exp trick. The loss is
// the SUM over rows; callers wanting a mean scale by 1/N themselves (and scale
// dlogits to match).
inline CeResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ConfigError("cross_entropy expects [N,K] logits");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw ConsistencyError("cross_entropy got " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(n) + " logit rows");
  CeResult r;
  r.per_row.resize(n);
  r.dlogits = Tensor(logits.shape);
  r.probs = Tensor(logits.shape);
  for (int i = 0; i < n; ++i) {
    const int t = labels[i];
    if (t < 0 || t >= k)
      throw ConsistencyError("label " + std::to_string(t) + " out of range for " +
                             std::to_string(k) + " classes");
    const double* row = logits.ptr() + static_cast<std::size_t>(i) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const double lse = m + std::log(z);
    r.per_row[i] = lse - row[t];
    r.loss_sum += r.per_row[i];
    double* p = r.probs.ptr() + static_cast<std::size_t>(i) * k;
    double* d = r.dlogits.ptr() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) {
      p[j] = std::exp(row[j] - m) / z;
      d[j] = p[j] - (j == t ? 1.0 : 0.0);
    }
  }
  return r;
}

}  // namespace advlab::graph
