#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/graph.hpp"
#include "advlab/model.hpp"
#include "advlab/pool.hpp"
#include "advlab/rng.hpp"
#include "advlab/tensor.hpp"
#include "advlab/transforms.hpp"

namespace advlab::eval {

// Per-model attack success rate. Untargeted success: the model's argmax
// (ties toward the smallest class) differs from the true label. Targeted
// success: the argmax equals the target label.
inline std::vector<double> attack_success_rate(const std::vector<const model::Model*>& models,
                                               const Tensor& adv_batch,
                                               const std::vector<int>& labels,
                                               const attack::Objective& obj) {
  if (models.empty()) throw ConfigError("attack_success_rate needs at least one model");
  if (adv_batch.rank() != 4 || adv_batch.dim(0) == 0)
    throw ConfigError("attack_success_rate needs a non-empty [N,C,H,W] batch");
  const int n = adv_batch.dim(0);
  if (static_cast<int>(labels.size()) != n)
    throw ConsistencyError("attack_success_rate got " + std::to_string(labels.size()) +
                           " labels for " + std::to_string(n) + " images");
  std::vector<double> out;
  out.reserve(models.size());
  for (const model::Model* m : models) {
    const std::vector<int> pred = m->predict(adv_batch);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const bool success = obj.targeted ? pred[i] == obj.target_label : pred[i] != labels[i];
      if (success) ++hits;
    }
    out.push_back(static_cast<double>(hits) / n);
  }
  return out;
}

// ASR restricted to samples the model classified correctly before the attack
// (per-model masks from the clean batch). Off by default everywhere; the flag
// travels with the results so reports say which convention they used.
inline std::vector<double> attack_success_rate_filtered(
    const std::vector<const model::Model*>& models, const Tensor& adv_batch,
    const Tensor& clean_batch, const std::vector<int>& labels, const attack::Objective& obj) {
  if (!clean_batch.same_shape(adv_batch))
    throw ConsistencyError("filtered ASR needs clean and adversarial batches of the same shape");
  const int n = adv_batch.dim(0);
  std::vector<double> out;
  out.reserve(models.size());
  for (const model::Model* m : models) {
    const std::vector<int> clean_pred = m->predict(clean_batch);
    const std::vector<int> pred = m->predict(adv_batch);
    int kept = 0, hits = 0;
    for (int i = 0; i < n; ++i) {
      if (clean_pred[i] != labels[i]) continue;
      ++kept;
      const bool success = obj.targeted ? pred[i] == obj.target_label : pred[i] != labels[i];
      if (success) ++hits;
    }
    out.push_back(kept == 0 ? 0.0 : static_cast<double>(hits) / kept);
  }
  return out;
}

// KL divergence sum_c p_c ln(p_c / q_c) in nats. q entries are floored at
// 1e-12 before the log (floor events counted); terms with p_c <= 1e-12
// contribute zero.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                            std::uint64_t* floored = nullptr) {
  if (p.size() != q.size())
    throw ConsistencyError("kl_divergence got distributions of different lengths");
  constexpr double kFloor = 1e-12;
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= kFloor) continue;
    double qi = q[i];
    if (qi < kFloor) {
      qi = kFloor;
      if (floored) ++*floored;
    }
    acc += p[i] * std::log(p[i] / qi);
  }
  return acc;
}

struct KLProbeResult {
  transforms::Kind kind = transforms::Kind::kIdentity;
  std::vector<double> z;
  int sample_count = 0;
  int draws_per_sample = 0;
  double mean_kl = 0.0;
  double std_error = 0.0;
  std::uint64_t floored_events = 0;
  std::vector<double> terms;  // one per (sample, draw), sample-major
};

// How much a transform perturbs the surrogate's predictive distribution:
// mean over sampled images and draws of KL(softmax f(x) || softmax f(T(x))).
inline KLProbeResult kl_probe(const model::Model& surrogate, const data::Dataset& data,
                              const transforms::TransformSpec& tspec, int sample_count,
                              int draws_per_sample, std::uint64_t seed) {
  tspec.validate();
  if (sample_count < 1) throw ConfigError("kl_probe needs sample_count >= 1");
  if (draws_per_sample < 1) throw ConfigError("kl_probe needs draws_per_sample >= 1");
  if (sample_count > data.size())
    throw ConfigError("kl_probe wants " + std::to_string(sample_count) + " samples but only " +
                      std::to_string(data.size()) + " are available");
  const std::vector<int> pick =
      rng::permutation(rng::derive(seed, 0x6b6c7069636bu /*"klpick"*/), data.size());

  KLProbeResult res;
  res.kind = tspec.kind;
  res.z = tspec.z;
  res.sample_count = sample_count;
  res.draws_per_sample = draws_per_sample;
  res.terms.reserve(static_cast<std::size_t>(sample_count) * draws_per_sample);

  const int k = surrogate.classes;
  for (int s = 0; s < sample_count; ++s) {
    const Tensor x = data.images.slice_image(pick[s]);
    Tensor batch({1, x.dim(0), x.dim(1), x.dim(2)});
    std::copy(x.ptr(), x.ptr() + x.numel(), batch.ptr());
    const Tensor p_row = graph::softmax(surrogate.forward(batch));
    const std::vector<double> p(p_row.ptr(), p_row.ptr() + k);
    const std::uint64_t draw_seed = rng::derive(seed, 0x6b6cu /*"kl"*/,
                                                static_cast<std::uint64_t>(s));
    for (int j = 0; j < draws_per_sample; ++j) {
      const transforms::TransformDraw draw =
          transforms::sample_params(tspec, draw_seed, static_cast<std::uint64_t>(j));
      const Tensor xt = transforms::apply_transform(x, draw);
      Tensor tb({1, x.dim(0), x.dim(1), x.dim(2)});
      std::copy(xt.ptr(), xt.ptr() + xt.numel(), tb.ptr());
      const Tensor q_row = graph::softmax(surrogate.forward(tb));
      const std::vector<double> q(q_row.ptr(), q_row.ptr() + k);
      res.terms.push_back(kl_divergence(p, q, &res.floored_events));
    }
  }

  const double n = static_cast<double>(res.terms.size());
  double mean = 0.0;
  for (double t : res.terms) mean += t;
  mean /= n;
  res.mean_kl = mean;
  if (res.terms.size() > 1) {
    double ss = 0.0;
    for (double t : res.terms) ss += (t - mean) * (t - mean);
    res.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  return res;
}

struct Unimodality {
  bool unimodal = false;
  int peak_index = -1;  // first index of the (single) peak run; -1 when not unimodal
};

// Smooth with a centered moving average (window truncated at the edges),
// merge equal-value runs, then count runs that sit strictly above both
// distinct neighbors (boundary runs count as peaks). Unimodal iff exactly one.
inline Unimodality unimodality_check(const std::vector<double>& values, int window = 3) {
  const int n = static_cast<int>(values.size());
  if (n < 3) throw ConfigError("unimodality_check needs at least 3 values");
  if (window < 1 || window % 2 == 0) throw ConfigError("smoothing window must be odd and >= 1");
  const int half = window / 2;
  std::vector<double> sm(n);
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half), hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += values[j];
    sm[i] = acc / (hi - lo + 1);
  }
  // Compress plateaus into runs of (value, first index).
  std::vector<std::pair<double, int>> runs;
  for (int i = 0; i < n; ++i)
    if (runs.empty() || sm[i] != runs.back().first) runs.push_back({sm[i], i});
  int peaks = 0, peak_at = -1;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const bool above_prev = r == 0 || runs[r].first > runs[r - 1].first;
    const bool above_next = r + 1 == runs.size() || runs[r].first > runs[r + 1].first;
    if (above_prev && above_next) {
      ++peaks;
      peak_at = runs[r].second;
    }
  }
  Unimodality u;
  u.unimodal = peaks == 1;
  u.peak_index = u.unimodal ? peak_at : -1;
  return u;
}

// One sweep cell: strength z attacked for T iterations, scored on one model.
struct SweepResult {
  transforms::Kind kind = transforms::Kind::kIdentity;
  std::vector<std::vector<double>> grid;  // z vectors, in evaluation order
  std::vector<int> budgets;               // iteration budgets T
  std::vector<std::string> model_tags;
  // asr[z][t][model]
  std::vector<std::vector<std::vector<double>>> asr;
  std::uint64_t seed = 0;
  std::uint64_t config_fingerprint = 0;
  bool filter_benign = false;  // ASR convention used (see attack_success_rate_filtered)

  // Mean over models for one (z index, T index) cell.
  double mean_asr(std::size_t zi, std::size_t ti) const {
    const std::vector<double>& cell = asr[zi][ti];
    double acc = 0.0;
    for (double v : cell) acc += v;
    return acc / cell.size();
  }
};

struct SweepPlan {
  transforms::Kind kind = transforms::Kind::kNoise;
  std::vector<std::vector<double>> grid;  // empty -> canonical grid for the kind
  std::vector<int> budgets{10};           // attacked separately per T, alpha = eps/T
  double epsilon = 16.0 / 255.0;
  double momentum = 1.0;
  int copies = 1;
  attack::Objective objective;
  std::uint64_t seed = 0;
  int workers = 1;
  std::shared_ptr<const Tensor> reference_pool;  // admix only
  double spectrum_sigma = 16.0 / 255.0;
  bool filter_benign = false;
};

// Full canonical grid for a kind: the kind's sweep values, or the cartesian
// product for two-parameter kinds.
inline std::vector<std::vector<double>> canonical_grid(transforms::Kind kind) {
  std::vector<std::vector<double>> out;
  if (transforms::slot_count(kind) == 1) {
    for (double z : transforms::grid_for(kind, 0).values()) out.push_back({z});
  } else {
    for (double b : transforms::grid_for(kind, 0).values())
      for (double r : transforms::grid_for(kind, 1).values()) out.push_back({b, r});
  }
  return out;
}

// Run the ASR-vs-strength sweep: for every grid point and every iteration
// budget, run a fresh attack (its own alpha = eps/T) and score each target.
// One attack seed is shared across the whole sweep, so draws at neighboring z
// reuse the same underlying uniforms (common random numbers keep the curves
// comparable across cells).
inline SweepResult run_sweep(const pool::ModelPool& pool, const Tensor& images,
                             const std::vector<int>& labels, const SweepPlan& plan) {
  if (plan.budgets.empty()) throw ConfigError("sweep needs at least one iteration budget");
  if (plan.kind == transforms::Kind::kIdentity)
    throw ConfigError("sweeping the identity transform is meaningless");
  SweepResult res;
  res.kind = plan.kind;
  res.grid = plan.grid.empty() ? canonical_grid(plan.kind) : plan.grid;
  res.budgets = plan.budgets;
  res.model_tags = pool.target_tags;
  res.seed = plan.seed;
  res.filter_benign = plan.filter_benign;

  std::uint64_t fp = rng::mix64(0x7377656570u /*"sweep"*/ ^ static_cast<std::uint64_t>(plan.kind));
  for (const auto& z : res.grid)
    for (double v : z) fp = rng::mix64(fp ^ std::bit_cast<std::uint64_t>(v));
  for (int t : res.budgets) fp = rng::mix64(fp + static_cast<std::uint64_t>(t));
  fp = rng::mix64(fp ^ std::bit_cast<std::uint64_t>(plan.epsilon));
  fp = rng::mix64(fp + static_cast<std::uint64_t>(plan.copies));
  fp = rng::mix64(fp ^ plan.seed);
  res.config_fingerprint = fp;

  std::vector<const model::Model*> targets;
  for (const auto& m : pool.targets) targets.push_back(&m);

  res.asr.resize(res.grid.size());
  for (std::size_t zi = 0; zi < res.grid.size(); ++zi) {
    transforms::TransformSpec tspec;
    tspec.kind = plan.kind;
    tspec.z = res.grid[zi];
    tspec.c = images.dim(1);
    tspec.h = images.dim(2);
    tspec.w = images.dim(3);
    tspec.reference_pool = plan.reference_pool;
    tspec.spectrum_sigma = plan.spectrum_sigma;
    res.asr[zi].resize(res.budgets.size());
    for (std::size_t ti = 0; ti < res.budgets.size(); ++ti) {
      attack::AttackConfig cfg;
      cfg.epsilon = plan.epsilon;
      cfg.iterations = res.budgets[ti];
      cfg.momentum = plan.momentum;
      cfg.copies = plan.copies;
      cfg.objective = plan.objective;
      cfg.seed = rng::derive(plan.seed, 0x737761u /*"swa"*/);
      cfg.workers = plan.workers;
      const attack::AttackResult ar =
          attack::run_attack(images, labels, {&pool.surrogate}, tspec, cfg);
      res.asr[zi][ti] =
          plan.filter_benign
              ? attack_success_rate_filtered(targets, ar.snapshots.back(), images, labels,
                                             plan.objective)
              : attack_success_rate(targets, ar.snapshots.back(), labels, plan.objective);
    }
  }
  return res;
}

struct TrajectoryResult {
  std::vector<std::vector<double>> z_at_budget;  // argmax z per iteration budget
  bool non_decreasing = false;                   // verdict on the first slot
};

// Pattern probe: where does the best strength sit as the iteration budget
// grows? Argmax of mean-over-model ASR per budget, ties toward the smaller
// (earlier) grid point.
inline TrajectoryResult optimal_z_trajectory(const SweepResult& sweep) {
  if (sweep.budgets.size() < 2)
    throw ConfigError("optimal_z_trajectory needs at least 2 iteration budgets");
  if (sweep.grid.empty()) throw ConfigError("optimal_z_trajectory needs a non-empty grid");
  TrajectoryResult tr;
  for (std::size_t ti = 0; ti < sweep.budgets.size(); ++ti) {
    std::size_t best = 0;
    double best_score = sweep.mean_asr(0, ti);
    for (std::size_t zi = 1; zi < sweep.grid.size(); ++zi) {
      const double s = sweep.mean_asr(zi, ti);
      if (s > best_score) {
        best_score = s;
        best = zi;
      }
    }
    tr.z_at_budget.push_back(sweep.grid[best]);
  }
  tr.non_decreasing = true;
  for (std::size_t i = 1; i < tr.z_at_budget.size(); ++i)
    if (tr.z_at_budget[i][0] < tr.z_at_budget[i - 1][0]) tr.non_decreasing = false;
  return tr;
}

// Spearman rank correlation with average ranks on ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ConfigError("spearman needs two equally sized series of length >= 2");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) throw ConfigError("spearman undefined for a constant series");
  return num / std::sqrt(dx * dy);
}

}  // namespace advlab::eval
