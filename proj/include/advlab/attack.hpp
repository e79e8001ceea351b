#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "advlab/errors.hpp"
#include "advlab/model.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"
#include "advlab/transforms.hpp"

namespace advlab::attack {

struct Objective {
  bool targeted = false;
  int target_label = -1;
};

struct AttackConfig {
  double epsilon = 16.0 / 255.0;  // L-inf budget in pixel units
  int iterations = 10;            // T
  double momentum = 1.0;          // lambda
  int copies = 1;                 // N transform draws per iteration
  Objective objective;
  std::uint64_t seed = 0;
  std::vector<int> checkpoints;  // sorted subset of [1..T]; empty means {T}
  int workers = 1;

  // Step size is tied to the budget: alpha = epsilon / T, exactly.
  double alpha() const { return epsilon / iterations; }

  std::vector<int> effective_checkpoints() const {
    return checkpoints.empty() ? std::vector<int>{iterations} : checkpoints;
  }

  void validate() const {
    if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
    if (iterations <= 0) throw ConfigError("iterations must be positive");
    if (momentum < 0.0) throw ConfigError("momentum must be >= 0");
    if (copies <= 0) throw ConfigError("copies must be positive");
    if (workers <= 0) throw ConfigError("workers must be positive");
    if (objective.targeted && objective.target_label < 0)
      throw ConfigError("targeted objective needs a target label");
    int prev = 0;
    for (int e : checkpoints) {
      if (e < 1 || e > iterations)
        throw ConfigError("checkpoint epoch " + std::to_string(e) + " outside [1.." +
                          std::to_string(iterations) + "]");
      if (e <= prev) throw ConfigError("checkpoint epochs must be strictly increasing");
      prev = e;
    }
  }
};

struct AttackDiagnostics {
  std::uint64_t zero_l1_iterations = 0;    // iterations whose averaged grad had L1 == 0
  std::uint64_t zero_sign_coordinates = 0; // coordinates stepped with sign(g) == 0
};

struct AttackResult {
  std::vector<int> checkpoint_epochs;
  std::vector<Tensor> snapshots;  // one [N,C,H,W] batch per checkpoint epoch
  std::uint64_t momentum_fingerprint = 0;
  AttackConfig config;
  AttackDiagnostics diag;
};

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

// Mean cross-entropy and mean input gradient over a surrogate ensemble, for a
// single [C,H,W] image. The label attacked is the true label (untargeted) or
// the objective's target label.
inline LossGrad ensemble_loss(const std::vector<const model::Model*>& models, const Tensor& image,
                              int label, const Objective& obj) {
  if (models.empty()) throw ConfigError("ensemble_loss needs at least one model");
  if (image.rank() != 3) throw ConfigError("ensemble_loss expects a [C,H,W] image");
  for (const model::Model* m : models) {
    if (m->net.input_c() != image.dim(0) || m->net.input_h() != image.dim(1) ||
        m->net.input_w() != image.dim(2))
      throw ConfigError("ensemble model input [" + std::to_string(m->net.input_c()) + "," +
                        std::to_string(m->net.input_h()) + "," + std::to_string(m->net.input_w()) +
                        "] does not match image " + image.shape_str());
  }
  const int used_label = obj.targeted ? obj.target_label : label;
  Tensor batch({1, image.dim(0), image.dim(1), image.dim(2)});
  std::copy(image.ptr(), image.ptr() + image.numel(), batch.ptr());
  LossGrad out;
  out.grad = Tensor(image.shape);
  for (const model::Model* m : models) {
    model::InputGradResult r = m->loss_and_input_grad(batch, {used_label});
    out.loss += r.loss_sum;
    for (std::size_t j = 0; j < out.grad.data.size(); ++j) out.grad.data[j] += r.grad.data[j];
  }
  const double inv = 1.0 / models.size();
  out.loss *= inv;
  for (double& v : out.grad.data) v *= inv;
  return out;
}

// The transformation-averaged gradient for one image at one iteration:
// mu_bar = (1/N) * sum_i d/dx J(T(x; theta_i)), with theta_i drawn from
// counter-derived streams so any evaluation order gives the same result.
inline Tensor averaged_gradient(const std::vector<const model::Model*>& models, const Tensor& x,
                                int label, const Objective& obj,
                                const transforms::TransformSpec& tspec, std::uint64_t draw_seed,
                                int copies) {
  Tensor mu(x.shape);
  for (int i = 0; i < copies; ++i) {
    const transforms::TransformDraw draw =
        transforms::sample_params(tspec, draw_seed, static_cast<std::uint64_t>(i));
    const Tensor xt = transforms::apply_transform(x, draw);
    const LossGrad lg = ensemble_loss(models, xt, label, obj);
    const Tensor pulled = transforms::transform_pullback(x, draw, lg.grad);
    for (std::size_t j = 0; j < mu.data.size(); ++j) mu.data[j] += pulled.data[j];
  }
  const double inv = 1.0 / copies;
  for (double& v : mu.data) v *= inv;
  return mu;
}

namespace detail {

struct PerImageOut {
  std::uint64_t momentum_fp = 0;
  std::uint64_t zero_l1 = 0;
  std::uint64_t zero_sign = 0;
};

}  // namespace detail

// Momentum iterative FGSM averaged over N stochastic transform copies.
// Each iteration accumulates g = lambda * g + mu_bar / ||mu_bar||_1 (L1 over
// the whole per-image tensor) and steps x by +/- alpha * sign(g), clamped to
// the epsilon-ball around the original image intersected with [0,1].
// Untargeted runs ascend the loss (+); targeted runs descend it (-).
//
// Images are independent, so worker threads split the batch; every random
// draw is keyed by (seed, image index, iteration, copy), which makes the
// result bit-identical for any worker count.
inline AttackResult run_attack(const Tensor& images, const std::vector<int>& labels,
                               const std::vector<const model::Model*>& surrogates,
                               const transforms::TransformSpec& tspec, const AttackConfig& cfg) {
  cfg.validate();
  tspec.validate();
  if (surrogates.empty()) throw ConfigError("run_attack needs at least one surrogate");
  if (images.rank() != 4) throw ConfigError("run_attack expects a [N,C,H,W] batch");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  if (static_cast<int>(labels.size()) != n)
    throw ConsistencyError("run_attack got " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(n) + " images");
  if (tspec.c != c || tspec.h != h || tspec.w != w)
    throw ConfigError("transform spec geometry [" + std::to_string(tspec.c) + "," +
                      std::to_string(tspec.h) + "," + std::to_string(tspec.w) +
                      "] does not match images " + images.shape_str());
  for (const model::Model* m : surrogates) {
    if (m->net.input_c() != c || m->net.input_h() != h || m->net.input_w() != w)
      throw ConfigError("surrogate input shape does not match images " + images.shape_str());
    if (cfg.objective.targeted && cfg.objective.target_label >= m->classes)
      throw ConfigError("target label " + std::to_string(cfg.objective.target_label) +
                        " out of range for " + std::to_string(m->classes) + " classes");
  }
  for (double v : images.data)
    if (!(v >= 0.0 && v <= 1.0))
      throw InputError("run_attack input pixels must lie in [0,1]");

  AttackResult res;
  res.config = cfg;
  res.checkpoint_epochs = cfg.effective_checkpoints();
  res.snapshots.assign(res.checkpoint_epochs.size(), Tensor({n, c, h, w}));

  const double alpha = cfg.alpha();
  const double dir = cfg.objective.targeted ? -1.0 : 1.0;
  std::vector<detail::PerImageOut> per_image(n);

  auto attack_one = [&](int i) {
    Tensor x0 = images.slice_image(i);
    Tensor x = x0;
    Tensor g(x.shape);
    detail::PerImageOut& out = per_image[i];
    std::size_t next_ck = 0;
    for (int t = 1; t <= cfg.iterations; ++t) {
      const std::uint64_t draw_seed = rng::derive(cfg.seed, 0x61747461u /*"atta"*/,
                                                  static_cast<std::uint64_t>(i),
                                                  static_cast<std::uint64_t>(t));
      Tensor mu = averaged_gradient(surrogates, x, labels[i], cfg.objective, tspec, draw_seed,
                                    cfg.copies);
      const double l1 = l1_norm(mu);
      if (l1 == 0.0) {
        // No usable signal: leave the momentum buffer untouched this round.
        ++out.zero_l1;
      } else {
        for (std::size_t j = 0; j < g.data.size(); ++j)
          g.data[j] = cfg.momentum * g.data[j] + mu.data[j] / l1;
      }
      for (std::size_t j = 0; j < x.data.size(); ++j) {
        const double gv = g.data[j];
        double s;
        if (gv > 0.0) {
          s = 1.0;
        } else if (gv < 0.0) {
          s = -1.0;
        } else {
          s = 0.0;
          ++out.zero_sign;
        }
        double v = x.data[j] + dir * alpha * s;
        const double lo = std::max(0.0, x0.data[j] - cfg.epsilon);
        const double hi = std::min(1.0, x0.data[j] + cfg.epsilon);
        x.data[j] = std::clamp(v, lo, hi);
      }
      while (next_ck < res.checkpoint_epochs.size() && res.checkpoint_epochs[next_ck] == t) {
        res.snapshots[next_ck].store_image(i, x);
        ++next_ck;
      }
    }
    out.momentum_fp = bits_fingerprint(g);
  };

  const int threads = std::min(cfg.workers, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) attack_one(i);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> crew;
    crew.reserve(threads);
    for (int t = 0; t < threads; ++t)
      crew.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) attack_one(i);
      });
    for (auto& th : crew) th.join();
  }

  // Combine per-image outputs in image order so scheduling cannot matter.
  std::uint64_t fp = 0x6d6f6du;
  for (const auto& out : per_image) {
    fp = rng::mix64(fp ^ out.momentum_fp);
    res.diag.zero_l1_iterations += out.zero_l1;
    res.diag.zero_sign_coordinates += out.zero_sign;
  }
  res.momentum_fingerprint = fp;
  return res;
}

}  // namespace advlab::attack
