#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "advlab/attack.hpp"
#include "advlab/errors.hpp"
#include "advlab/eval.hpp"
#include "advlab/pool.hpp"
#include "advlab/rng.hpp"
#include "advlab/transforms.hpp"

namespace advlab::dpo {

// One optimized parameter slot: interval [lo, hi] carrying an m-point lattice
// {lo + i*(hi-lo)/m : i=1..m}. For the kinds whose canonical sweep grid has a
// degenerate end just below it, this lattice reproduces the canonical grid
// exactly (noise: 0..0.5/25 -> 0.02..0.50; bsr blocks: 0..9/9 -> 1..9).
struct SlotSpec {
  double lo = 0.0, hi = 0.0;
  int m = 0;
  bool integral = false;
  // Value this slot holds while earlier slots are being optimized; defaults
  // to the lower bound.
  std::optional<double> hold;

  void validate() const {
    if (!(lo < hi)) throw ConfigError("slot needs lo < hi");
    if (m < 2) throw ConfigError("slot needs grid resolution m >= 2");
  }

  double spacing() const { return (hi - lo) / m; }

  int bisect_steps() const {
    int q = 0;
    while ((1 << q) < m) ++q;
    return q;  // ceil(log2(m))
  }

  // Nearest lattice value; used for refinement candidates and for snapping
  // integral slots before every evaluation.
  double snap(double z) const {
    int i = static_cast<int>(std::llround((z - lo) / spacing()));
    i = std::clamp(i, 1, m);
    // Pin the top index to hi exactly; lo + m*spacing can overshoot by an ULP.
    double v = i == m ? hi : lo + i * spacing();
    if (integral) v = std::round(v);
    return v;
  }

  double hold_value() const {
    double v = hold.value_or(lo);
    if (integral) v = snap(v);
    return v;
  }

  std::vector<double> grid_values() const {
    std::vector<double> out;
    out.reserve(m);
    for (int i = 1; i <= m; ++i) {
      double v = i == m ? hi : lo + i * spacing();
      if (integral) v = std::round(v);
      out.push_back(v);
    }
    return out;
  }
};

// Desk defaults per transform kind. The two-parameter kind anchors its
// second slot at 24 degrees while the block count is optimized.
inline std::vector<SlotSpec> default_slots(transforms::Kind kind) {
  using transforms::Kind;
  switch (kind) {
    case Kind::kTranslation: return {{0.0, 220.0, 6, false, {}}};
    case Kind::kBlockShuffle: return {{1.0, 10.0, 9, true, {}}};
    case Kind::kRotation: return {{0.0, 160.0, 6, false, {}}};
    case Kind::kNoise: return {{0.0, 0.5, 25, false, {}}};
    case Kind::kResize: return {{0.1, 1.0, 9, false, {}}};
    case Kind::kAdmix: return {{0.08, 0.5, 21, false, {}}};
    case Kind::kSpectrum: return {{0.2, 0.9, 7, false, {}}};
    case Kind::kBsr: return {{0.0, 9.0, 9, true, {}}, {0.0, 160.0, 8, false, 24.0}};
    case Kind::kIdentity: break;
  }
  throw ConfigError("identity has no optimizable parameters");
}

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

struct OptimizeOptions {
  int refine_width = 2;       // +/- lattice neighbors examined after bisection
  double noise_floor = 1e-9;  // |score diff| below this counts as a tie
  bool cache_scores = false;  // memoize scores per z vector (deterministic tests)
  bool ternary = false;       // interior-point search instead of endpoint bisection
};

struct BisectStep {
  int slot = 0;
  double z_low = 0.0, z_high = 0.0;        // interval before the update
  double score_low = 0.0, score_high = 0.0;
  bool low_won = false;
  bool flagged = false;  // second consecutive step inside the noise floor
};

struct RefineStep {
  int slot = 0;
  double z = 0.0;
  double score = 0.0;
};

struct DPOResult {
  std::vector<double> best_z;
  double best_score = 0.0;              // score of the winning final candidate
  std::vector<double> provisional_z;    // z_low per slot, before refinement
  std::vector<BisectStep> trajectory;
  std::vector<RefineStep> refinement;
  int bisect_evals = 0;
  int refine_evals = 0;
  bool any_flagged = false;
};

namespace detail {

// Evaluation wrapper handling slot assembly, integral snapping, optional
// memoization, and call counting.
struct Evaluator {
  const ObjectiveFn& fn;
  const std::vector<SlotSpec>& slots;
  bool cache_scores;
  std::map<std::vector<double>, double> cache;
  int calls = 0;

  // Build the full z vector: finalized values before `active`, the candidate
  // at `active`, hold values after it.
  std::vector<double> assemble(const std::vector<double>& finalized, std::size_t active,
                               double candidate) const {
    std::vector<double> z(slots.size());
    for (std::size_t j = 0; j < slots.size(); ++j) {
      if (j < active)
        z[j] = finalized[j];
      else if (j == active)
        z[j] = slots[j].integral ? slots[j].snap(candidate) : candidate;
      else
        z[j] = slots[j].hold_value();
    }
    return z;
  }

  double score(const std::vector<double>& z) {
    if (cache_scores) {
      auto it = cache.find(z);
      if (it != cache.end()) return it->second;
    }
    ++calls;
    const double s = fn(z);
    if (cache_scores) cache[z] = s;
    return s;
  }
};

}  // namespace detail

struct GridSearchResult {
  std::vector<double> best_z;
  double best_score = 0.0;
  std::vector<std::vector<double>> points;  // lattice points in evaluation order
  std::vector<double> scores;
  int evals = 0;
};

// Exhaustive lattice search over all slots (cartesian product), the baseline
// the bisection is measured against. Ties go to the earliest (smallest) point.
inline GridSearchResult grid_search(const ObjectiveFn& fn, const std::vector<SlotSpec>& slots) {
  if (slots.empty()) throw ConfigError("grid_search needs at least one slot");
  for (const SlotSpec& s : slots) s.validate();
  detail::Evaluator ev{fn, slots, false, {}, 0};
  GridSearchResult res;
  std::vector<std::vector<double>> axes;
  for (const SlotSpec& s : slots) axes.push_back(s.grid_values());
  std::vector<std::size_t> idx(slots.size(), 0);
  while (true) {
    std::vector<double> z(slots.size());
    for (std::size_t j = 0; j < slots.size(); ++j) z[j] = axes[j][idx[j]];
    const double s = ev.score(z);
    res.points.push_back(z);
    res.scores.push_back(s);
    if (res.best_z.empty() || s > res.best_score) {
      res.best_z = z;
      res.best_score = s;
    }
    std::size_t j = slots.size();
    while (j-- > 0) {
      if (++idx[j] < axes[j].size()) break;
      idx[j] = 0;
      if (j == 0) {
        res.evals = ev.calls;
        return res;
      }
    }
  }
}

// Coordinate-wise endpoint bisection with local lattice refinement.
//
// Per slot, in order: start with the interval endpoints, score both fresh
// each step (earlier slots at their finalized optima, later slots at their
// hold values), and halve toward the winner — ties and differences inside
// the noise floor keep the low endpoint. After ceil(log2 m) steps the low
// endpoint is the provisional optimum; the +/-w lattice neighborhood around
// it is then scored and the best lattice point (ties toward smaller z) wins.
inline DPOResult bisect_optimize(const ObjectiveFn& fn, const std::vector<SlotSpec>& slots,
                                 const OptimizeOptions& opt = {}) {
  if (slots.empty()) throw ConfigError("bisect_optimize needs at least one slot");
  for (const SlotSpec& s : slots) s.validate();
  if (opt.refine_width < 0) throw ConfigError("refine width must be >= 0");
  if (opt.noise_floor < 0.0) throw ConfigError("noise floor must be >= 0");

  detail::Evaluator ev{fn, slots, opt.cache_scores, {}, 0};
  DPOResult res;
  res.best_z.resize(slots.size());
  res.provisional_z.resize(slots.size());

  for (std::size_t k = 0; k < slots.size(); ++k) {
    const SlotSpec& slot = slots[k];
    double z_low = slot.lo, z_high = slot.hi;
    const int steps = slot.bisect_steps();
    int consec_near = 0;
    const int calls_before = ev.calls;
    for (int step = 0; step < steps; ++step) {
      const double s_lo = ev.score(ev.assemble(res.best_z, k, z_low));
      const double s_hi = ev.score(ev.assemble(res.best_z, k, z_high));
      const bool near = std::abs(s_lo - s_hi) < opt.noise_floor;
      consec_near = near ? consec_near + 1 : 0;
      const bool low_won = s_lo >= s_hi || near;
      BisectStep bs{static_cast<int>(k), z_low, z_high, s_lo, s_hi, low_won, consec_near >= 2};
      res.trajectory.push_back(bs);
      if (bs.flagged) res.any_flagged = true;
      const double mid = 0.5 * (z_low + z_high);
      if (low_won)
        z_high = mid;
      else
        z_low = mid;
    }

    double provisional;
    if (opt.ternary) {
      // Interior-point alternative: probe the third points instead of the
      // endpoints; converges on any unimodal objective.
      z_low = slot.lo;
      z_high = slot.hi;
      for (int step = 0; step < steps; ++step) {
        const double m1 = z_low + (z_high - z_low) / 3.0;
        const double m2 = z_high - (z_high - z_low) / 3.0;
        const double s1 = ev.score(ev.assemble(res.best_z, k, m1));
        const double s2 = ev.score(ev.assemble(res.best_z, k, m2));
        const bool near = std::abs(s1 - s2) < opt.noise_floor;
        const bool low_won = s1 >= s2 || near;
        res.trajectory.push_back(
            {static_cast<int>(k), m1, m2, s1, s2, low_won, false});
        if (low_won)
          z_high = m2;
        else
          z_low = m1;
      }
      provisional = 0.5 * (z_low + z_high);
    } else {
      provisional = z_low;
    }
    res.provisional_z[k] = provisional;
    res.bisect_evals += ev.calls - calls_before;

    // Local refinement on the slot lattice around the provisional optimum.
    const int refine_before = ev.calls;
    const double spacing = slot.spacing();
    int i0 = static_cast<int>(std::llround((provisional - slot.lo) / spacing));
    i0 = std::clamp(i0, 1, slot.m);
    double best_z = 0.0, best_score = 0.0;
    bool first = true;
    for (int i = std::max(1, i0 - opt.refine_width);
         i <= std::min(slot.m, i0 + opt.refine_width); ++i) {
      double cand = slot.lo + i * spacing;
      if (slot.integral) cand = std::round(cand);
      const double s = ev.score(ev.assemble(res.best_z, k, cand));
      res.refinement.push_back({static_cast<int>(k), cand, s});
      if (first || s > best_score) {
        best_z = cand;
        best_score = s;
        first = false;
      }
    }
    res.refine_evals += ev.calls - refine_before;
    res.best_z[k] = best_z;
    res.best_score = best_score;
  }
  return res;
}

// The score Algorithm-style runs maximize: mean attack success over the
// validation targets for adversarial batches produced at strength z.
struct AsrObjectiveTemplate {
  transforms::Kind kind = transforms::Kind::kNoise;
  double epsilon = 16.0 / 255.0;
  int iterations = 10;
  double momentum = 1.0;
  int copies = 1;
  attack::Objective objective;
  std::uint64_t seed = 0;
  int workers = 1;
  std::shared_ptr<const Tensor> reference_pool;
  double spectrum_sigma = 16.0 / 255.0;
  // Fresh mode draws new adversarial sets per call (call-counter seeding);
  // when off, every call reuses the same seed and the objective is a pure
  // function of z.
  bool fresh_each_call = true;
};

// Binds the attack loop and scorer into an objective over z. The pool must
// outlive the returned function; images/labels are copied in.
inline ObjectiveFn make_asr_objective(const pool::ModelPool& pool, const Tensor& images,
                                      const std::vector<int>& labels,
                                      const AsrObjectiveTemplate& tpl) {
  if (images.rank() != 4 || images.dim(0) == 0)
    throw ConfigError("asr objective needs a non-empty [N,C,H,W] batch");
  if (pool.targets.empty()) throw ConfigError("asr objective needs validation targets");
  auto counter = std::make_shared<std::uint64_t>(0);
  const pool::ModelPool* pp = &pool;
  return [pp, images, labels, tpl, counter](const std::vector<double>& z) -> double {
    transforms::TransformSpec tspec;
    tspec.kind = tpl.kind;
    tspec.z = z;
    tspec.c = images.dim(1);
    tspec.h = images.dim(2);
    tspec.w = images.dim(3);
    tspec.reference_pool = tpl.reference_pool;
    tspec.spectrum_sigma = tpl.spectrum_sigma;

    attack::AttackConfig cfg;
    cfg.epsilon = tpl.epsilon;
    cfg.iterations = tpl.iterations;
    cfg.momentum = tpl.momentum;
    cfg.copies = tpl.copies;
    cfg.objective = tpl.objective;
    const std::uint64_t call = tpl.fresh_each_call ? (*counter)++ : 0;
    cfg.seed = rng::derive(tpl.seed, 0x6f626au /*"obj"*/, call);
    cfg.workers = tpl.workers;

    const attack::AttackResult ar =
        attack::run_attack(images, labels, {&pp->surrogate}, tspec, cfg);
    std::vector<const model::Model*> targets;
    for (const auto& m : pp->targets) targets.push_back(&m);
    const std::vector<double> asr =
        eval::attack_success_rate(targets, ar.snapshots.back(), labels, tpl.objective);
    double mean = 0.0;
    for (double v : asr) mean += v;
    return mean / asr.size();
  };
}

}  // namespace advlab::dpo
