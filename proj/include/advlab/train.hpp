#pragma once

#include <cstdint>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/graph.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"

namespace advlab::train {

struct TrainConfig {
  int epochs = 5;
  int batch = 32;
  double lr = 0.05;  // stable for the deepest stock architecture (cnn-c)
  double momentum = 0.9;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch <= 0) throw ConfigError("batch must be > 0");
    if (lr <= 0.0) throw ConfigError("lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
  }
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  double train_acc = 0.0;          // accuracy over the training set after the run
};

// Fraction of samples the model labels correctly. Evaluated in chunks to keep
// activation memory bounded.
inline double accuracy(const model::Model& m, const data::Dataset& d) {
  if (d.size() == 0) throw ConfigError("accuracy over an empty dataset");
  const int chunk = 64;
  int correct = 0;
  for (int start = 0; start < d.size(); start += chunk) {
    const int n = std::min(chunk, d.size() - start);
    Tensor batch({n, 1, d.height(), d.width()});
    std::copy(d.images.ptr() + static_cast<std::size_t>(start) * d.height() * d.width(),
              d.images.ptr() + static_cast<std::size_t>(start + n) * d.height() * d.width(),
              batch.ptr());
    std::vector<int> pred = m.predict(batch);
    for (int i = 0; i < n; ++i)
      if (pred[i] == d.labels[start + i]) ++correct;
  }
  return static_cast<double>(correct) / d.size();
}

// Minibatch SGD with classical momentum on mean cross-entropy. Shuffling is
// keyed off the model seed and epoch index, so a (model, dataset) pair always
// trains to the same weights. epochs == 0 leaves the parameters untouched.
inline TrainReport train_sgd(model::Model& m, const data::Dataset& d, const TrainConfig& cfg) {
  cfg.validate();
  if (d.size() == 0) throw ConfigError("cannot train on an empty dataset");
  if (d.classes > m.classes)
    throw ConsistencyError("dataset has " + std::to_string(d.classes) +
                           " classes but the model outputs " + std::to_string(m.classes));
  TrainReport rep;
  const int hw = d.height() * d.width();

  // One velocity tensor per parameter tensor.
  std::vector<Tensor> vel_w(m.net.layer_count()), vel_b(m.net.layer_count());
  for (std::size_t i = 0; i < m.net.layer_count(); ++i) {
    if (m.net.params(i).w.numel() == 0) continue;
    vel_w[i] = Tensor(m.net.params(i).w.shape);
    vel_b[i] = Tensor(m.net.params(i).b.shape);
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = rng::permutation(
        rng::derive(m.meta.seed, 0x73687566u /*"shuf"*/, static_cast<std::uint64_t>(epoch)),
        d.size());
    double loss_acc = 0.0;
    for (int start = 0; start < d.size(); start += cfg.batch) {
      const int n = std::min(cfg.batch, d.size() - start);
      Tensor batch({n, 1, d.height(), d.width()});
      std::vector<int> labels(n);
      for (int i = 0; i < n; ++i) {
        const std::size_t src = order[start + i];
        std::copy(d.images.ptr() + src * hw, d.images.ptr() + (src + 1) * hw,
                  batch.ptr() + static_cast<std::size_t>(i) * hw);
        labels[i] = d.labels[src];
      }
      graph::ForwardCache fc;
      Tensor logits = m.net.forward(batch, &fc);
      graph::CeResult ce = graph::cross_entropy(logits, labels);
      loss_acc += ce.loss_sum;
      // Mean-reduce: scale dlogits so parameter gradients are per-sample means.
      for (double& v : ce.dlogits.data) v /= n;
      graph::Gradients g;
      m.net.backward(fc, ce.dlogits, &g);
      for (std::size_t li = 0; li < m.net.layer_count(); ++li) {
        if (m.net.params(li).w.numel() == 0) continue;
        Tensor& w = m.net.params(li).w;
        Tensor& b = m.net.params(li).b;
        for (std::size_t j = 0; j < w.data.size(); ++j) {
          vel_w[li].data[j] = cfg.momentum * vel_w[li].data[j] + g.gw[li].data[j];
          w.data[j] -= cfg.lr * vel_w[li].data[j];
        }
        for (std::size_t j = 0; j < b.data.size(); ++j) {
          vel_b[li].data[j] = cfg.momentum * vel_b[li].data[j] + g.gb[li].data[j];
          b.data[j] -= cfg.lr * vel_b[li].data[j];
        }
      }
    }
    rep.epoch_loss.push_back(loss_acc / d.size());
  }

  rep.train_acc = accuracy(m, d);
  m.meta.epochs = cfg.epochs;
  m.meta.train_acc = rep.train_acc;
  m.meta.data_fingerprint = d.fingerprint();
  return rep;
}

}  // namespace advlab::train
