#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advlab/dpo.hpp"
#include "advlab/errors.hpp"
#include "advlab/eval.hpp"
#include "advlab/transforms.hpp"

namespace advlab::report {

using json = nlohmann::ordered_json;

// One fixed float format everywhere so identical results give identical bytes.
inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

// Multi-parameter z rendered as a single CSV field: values joined by ';'.
inline std::string fmt_z(const std::vector<double>& z) {
  std::string out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) out += ';';
    out += fmt_double(z[i]);
  }
  return out;
}

// 64-bit values go through JSON as hex strings: double-typed JSON numbers
// cannot carry them exactly.
inline std::string hex_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

inline std::uint64_t parse_hex_u64(const std::string& s) {
  if (s.size() < 3 || s[0] != '0' || s[1] != 'x')
    throw FormatError("expected 0x-prefixed hex value, got '" + s + "'");
  return std::strtoull(s.c_str() + 2, nullptr, 16);
}

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("failed writing " + path);
}

// ---- sweep ----

// Long format: one row per (z, T, model) cell.
inline std::string sweep_csv(const eval::SweepResult& s) {
  std::string out = "kind,z,T,model,seed,asr\n";
  for (std::size_t zi = 0; zi < s.grid.size(); ++zi)
    for (std::size_t ti = 0; ti < s.budgets.size(); ++ti)
      for (std::size_t mi = 0; mi < s.model_tags.size(); ++mi) {
        out += transforms::kind_name(s.kind);
        out += ',' + fmt_z(s.grid[zi]);
        out += ',' + std::to_string(s.budgets[ti]);
        out += ',' + s.model_tags[mi];
        out += ',' + std::to_string(s.seed);
        out += ',' + fmt_double(s.asr[zi][ti][mi]);
        out += '\n';
      }
  return out;
}

inline json sweep_json(const eval::SweepResult& s) {
  json j;
  j["kind"] = transforms::kind_name(s.kind);
  j["grid"] = s.grid;
  j["budgets"] = s.budgets;
  j["models"] = s.model_tags;
  j["asr"] = s.asr;
  j["seed"] = hex_u64(s.seed);
  j["config_fingerprint"] = hex_u64(s.config_fingerprint);
  j["filter_benign"] = s.filter_benign;
  return j;
}

inline eval::SweepResult sweep_from_json(const json& j) {
  eval::SweepResult s;
  s.kind = transforms::kind_from_name(j.at("kind").get<std::string>());
  s.grid = j.at("grid").get<std::vector<std::vector<double>>>();
  s.budgets = j.at("budgets").get<std::vector<int>>();
  s.model_tags = j.at("models").get<std::vector<std::string>>();
  s.asr = j.at("asr").get<std::vector<std::vector<std::vector<double>>>>();
  s.seed = parse_hex_u64(j.at("seed").get<std::string>());
  s.config_fingerprint = parse_hex_u64(j.at("config_fingerprint").get<std::string>());
  s.filter_benign = j.at("filter_benign").get<bool>();
  if (s.asr.size() != s.grid.size())
    throw ConsistencyError("sweep json: asr table does not cover the grid");
  for (const auto& per_t : s.asr) {
    if (per_t.size() != s.budgets.size())
      throw ConsistencyError("sweep json: asr table does not cover the budgets");
    for (const auto& per_m : per_t)
      if (per_m.size() != s.model_tags.size())
        throw ConsistencyError("sweep json: asr table does not cover the models");
  }
  return s;
}

// ---- KL probe ----

inline std::string kl_csv(const std::vector<eval::KLProbeResult>& rows, std::uint64_t seed) {
  std::string out = "kind,z,samples,draws,seed,mean_kl,std_error\n";
  for (const auto& r : rows) {
    out += transforms::kind_name(r.kind);
    out += ',' + fmt_z(r.z);
    out += ',' + std::to_string(r.sample_count);
    out += ',' + std::to_string(r.draws_per_sample);
    out += ',' + std::to_string(seed);
    out += ',' + fmt_double(r.mean_kl);
    out += ',' + fmt_double(r.std_error);
    out += '\n';
  }
  return out;
}

inline json kl_json(const std::vector<eval::KLProbeResult>& rows, std::uint64_t seed) {
  json arr = json::array();
  for (const auto& r : rows) {
    json j;
    j["kind"] = transforms::kind_name(r.kind);
    j["z"] = r.z;
    j["samples"] = r.sample_count;
    j["draws"] = r.draws_per_sample;
    j["mean_kl"] = r.mean_kl;
    j["std_error"] = r.std_error;
    j["floored_events"] = r.floored_events;
    arr.push_back(j);
  }
  json top;
  top["seed"] = hex_u64(seed);
  top["probes"] = arr;
  return top;
}

inline std::vector<eval::KLProbeResult> kl_from_json(const json& top) {
  std::vector<eval::KLProbeResult> rows;
  for (const auto& j : top.at("probes")) {
    eval::KLProbeResult r;
    r.kind = transforms::kind_from_name(j.at("kind").get<std::string>());
    r.z = j.at("z").get<std::vector<double>>();
    r.sample_count = j.at("samples").get<int>();
    r.draws_per_sample = j.at("draws").get<int>();
    r.mean_kl = j.at("mean_kl").get<double>();
    r.std_error = j.at("std_error").get<double>();
    r.floored_events = j.at("floored_events").get<std::uint64_t>();
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---- optimizer ----

inline json dpo_json(const dpo::DPOResult& r, const std::vector<dpo::SlotSpec>& slots,
                     transforms::Kind kind, const std::string& mode) {
  json j;
  j["kind"] = transforms::kind_name(kind);
  j["mode"] = mode;
  json slot_arr = json::array();
  for (const auto& s : slots) {
    json sj;
    sj["lo"] = s.lo;
    sj["hi"] = s.hi;
    sj["m"] = s.m;
    sj["integral"] = s.integral;
    if (s.hold) sj["hold"] = *s.hold;
    slot_arr.push_back(sj);
  }
  j["slots"] = slot_arr;
  j["best_z"] = r.best_z;
  j["best_score"] = r.best_score;
  j["provisional_z"] = r.provisional_z;
  json traj = json::array();
  for (const auto& st : r.trajectory) {
    json tj;
    tj["slot"] = st.slot;
    tj["z_low"] = st.z_low;
    tj["z_high"] = st.z_high;
    tj["score_low"] = st.score_low;
    tj["score_high"] = st.score_high;
    tj["low_won"] = st.low_won;
    tj["flagged"] = st.flagged;
    traj.push_back(tj);
  }
  j["trajectory"] = traj;
  json ref = json::array();
  for (const auto& st : r.refinement) {
    json rj;
    rj["slot"] = st.slot;
    rj["z"] = st.z;
    rj["score"] = st.score;
    ref.push_back(rj);
  }
  j["refinement"] = ref;
  j["bisect_evals"] = r.bisect_evals;
  j["refine_evals"] = r.refine_evals;
  // Cost of sweeping each slot's lattice once instead of bisecting it.
  int baseline = 0;
  for (const auto& s : slots) baseline += s.m;
  j["grid_baseline_evals"] = baseline;
  j["any_flagged"] = r.any_flagged;
  return j;
}

inline json grid_json(const dpo::GridSearchResult& r, const std::vector<dpo::SlotSpec>& slots,
                      transforms::Kind kind) {
  json j;
  j["kind"] = transforms::kind_name(kind);
  j["mode"] = "grid";
  json slot_arr = json::array();
  for (const auto& s : slots) {
    json sj;
    sj["lo"] = s.lo;
    sj["hi"] = s.hi;
    sj["m"] = s.m;
    sj["integral"] = s.integral;
    slot_arr.push_back(sj);
  }
  j["slots"] = slot_arr;
  j["best_z"] = r.best_z;
  j["best_score"] = r.best_score;
  j["points"] = r.points;
  j["scores"] = r.scores;
  j["grid_evals"] = r.evals;
  return j;
}

// ---- pattern analytics over a finished sweep ----

inline json analyze_sweep(const eval::SweepResult& s) {
  json j;
  j["kind"] = transforms::kind_name(s.kind);
  j["config_fingerprint"] = hex_u64(s.config_fingerprint);
  if (s.budgets.size() >= 2) {
    const eval::TrajectoryResult tr = eval::optimal_z_trajectory(s);
    j["optimal_z_per_budget"] = tr.z_at_budget;
    j["non_decreasing"] = tr.non_decreasing;
  }
  json uni = json::array();
  for (std::size_t ti = 0; ti < s.budgets.size(); ++ti) {
    json u;
    u["T"] = s.budgets[ti];
    if (s.grid.size() >= 3) {
      std::vector<double> curve;
      for (std::size_t zi = 0; zi < s.grid.size(); ++zi) curve.push_back(s.mean_asr(zi, ti));
      const eval::Unimodality um = eval::unimodality_check(curve, 3);
      u["unimodal"] = um.unimodal;
      u["peak_index"] = um.peak_index;
    } else {
      u["unimodal"] = nullptr;
      u["peak_index"] = nullptr;
    }
    uni.push_back(u);
  }
  j["unimodality"] = uni;
  // Rank stability of z across budgets (reported, never asserted): Spearman
  // correlation between mean-ASR-over-models at the first and last budget.
  if (s.budgets.size() >= 2 && s.grid.size() >= 2) {
    std::vector<double> first, last;
    bool first_varies = false, last_varies = false;
    for (std::size_t zi = 0; zi < s.grid.size(); ++zi) {
      first.push_back(s.mean_asr(zi, 0));
      last.push_back(s.mean_asr(zi, s.budgets.size() - 1));
    }
    for (std::size_t i = 1; i < first.size(); ++i) {
      if (first[i] != first[0]) first_varies = true;
      if (last[i] != last[0]) last_varies = true;
    }
    if (first_varies && last_varies)
      j["rank_stability_first_vs_last"] = eval::spearman(first, last);
    else
      j["rank_stability_first_vs_last"] = nullptr;
  }
  return j;
}

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

}  // namespace advlab::report
