#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/graph.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"

namespace advlab::model {

inline const std::vector<std::string>& known_archs() {
  static const std::vector<std::string> ids{"mlp2", "cnn-a", "cnn-b", "cnn-c"};
  return ids;
}

// Small architectures sized for CPU-only experiments on thumbnail images.
inline graph::Network make_network(const std::string& arch, int c, int h, int w, int classes) {
  using namespace graph;
  if (classes <= 1) throw ConfigError("need at least 2 classes, got " + std::to_string(classes));
  if (arch == "mlp2")
    return Network(c, h, w, {flatten(), dense(48), relu(), dense(classes)});
  if (arch == "cnn-a")
    return Network(c, h, w,
                   {conv2d(4, 3, 1), relu(), max_pool(), conv2d(8, 3, 1), relu(), max_pool(),
                    flatten(), dense(classes)});
  if (arch == "cnn-b")
    return Network(c, h, w,
                   {conv2d(6, 5, 2), relu(), mean_pool(), conv2d(10, 3, 1), relu(), max_pool(),
                    flatten(), dense(classes)});
  if (arch == "cnn-c")
    return Network(c, h, w,
                   {conv2d(6, 3, 1), relu(), conv2d(6, 3, 1), relu(), max_pool(), conv2d(12, 3, 1),
                    relu(), max_pool(), flatten(), dense(classes)});
  std::string ids;
  for (const auto& id : known_archs()) ids += (ids.empty() ? "" : ", ") + id;
  throw ConfigError("unknown architecture '" + arch + "' (known: " + ids + ")");
}

// Glorot-uniform weights, zero biases. Every tensor draws from its own
// counter stream so initialization is reproducible and order-independent.
inline void init_params(graph::Network& net, std::uint64_t seed) {
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    graph::LayerParams& p = net.params(i);
    if (p.w.numel() == 0) continue;
    double fan_in = 0.0, fan_out = 0.0;
    if (net.spec(i).kind == graph::LayerKind::kConv2d) {
      const int k = net.spec(i).kernel;
      fan_in = static_cast<double>(p.w.dim(1)) * k * k;
      fan_out = static_cast<double>(p.w.dim(0)) * k * k;
    } else {
      fan_in = p.w.dim(1);
      fan_out = p.w.dim(0);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    rng::Stream st(rng::derive(seed, 0x696e6974u /*"init"*/, static_cast<std::uint64_t>(i)));
    for (std::size_t j = 0; j < p.w.data.size(); ++j)
      p.w.data[j] = st.uniform(j, -limit, limit);
    p.b.fill(0.0);
  }
}

// Provenance carried alongside the weights: how the model was produced and on
// which dataset. Persisted inside the weight file for reproducibility checks.
struct ModelMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  double train_acc = 0.0;
  std::uint64_t data_fingerprint = 0;
};

struct InputGradResult {
  double loss_sum = 0.0;        // cross-entropy summed over the batch
  Tensor grad;                  // d(loss_sum)/dx, same shape as x
  std::vector<double> per_row;  // per-image cross-entropy
  Tensor logits;
};

// A trained (or freshly initialized) classifier plus its provenance.
struct Model {
  std::string arch;
  int classes = 0;
  graph::Network net;
  ModelMeta meta;

  Model(std::string arch_id, int c, int h, int w, int num_classes)
      : arch(std::move(arch_id)),
        classes(num_classes),
        net(make_network(arch, c, h, w, num_classes)) {}

  Tensor forward(const Tensor& x, graph::ForwardCache* cache = nullptr) const {
    return net.forward(x, cache);
  }

  // Argmax class per row; ties go to the smallest class index.
  std::vector<int> predict(const Tensor& x) const {
    Tensor logits = forward(x);
    const int n = logits.dim(0), k = logits.dim(1);
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) {
      const double* row = logits.ptr() + static_cast<std::size_t>(i) * k;
      int best = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
      out[i] = best;
    }
    return out;
  }

  // Summed cross-entropy over the batch and its gradient with respect to the
  // input pixels. Parameter gradients are not computed on this path.
  InputGradResult loss_and_input_grad(const Tensor& x, const std::vector<int>& labels) const {
    graph::ForwardCache fc;
    Tensor logits = net.forward(x, &fc);
    graph::CeResult ce = graph::cross_entropy(logits, labels);
    InputGradResult r;
    r.loss_sum = ce.loss_sum;
    r.per_row = std::move(ce.per_row);
    r.grad = net.backward(fc, ce.dlogits, nullptr);
    r.logits = std::move(logits);
    return r;
  }

  // Fingerprint over every parameter bit pattern; changes iff any weight does.
  std::uint64_t fingerprint() const {
    std::uint64_t fp = 0x66696e6765ull;
    for (const auto& np : static_cast<const graph::Network&>(net).named_params()) {
      for (char ch : np.name) fp = rng::mix64(fp + static_cast<unsigned char>(ch));
      fp = rng::mix64(fp ^ bits_fingerprint(*np.tensor));
    }
    return fp;
  }
};

inline Model make_model(const std::string& arch, int c, int h, int w, int classes,
                        std::uint64_t seed) {
  Model m(arch, c, h, w, classes);
  init_params(m.net, seed);
  m.meta.seed = seed;
  return m;
}

}  // namespace advlab::model
