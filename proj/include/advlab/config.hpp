#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advlab/attack.hpp"
#include "advlab/dpo.hpp"
#include "advlab/errors.hpp"
#include "advlab/pool.hpp"
#include "advlab/report.hpp"
#include "advlab/train.hpp"
#include "advlab/transforms.hpp"

namespace advlab::config {

using json = nlohmann::ordered_json;

namespace detail {

// Strict parsing: a key the schema does not know is a config error, never a
// silent ignore.
inline void check_keys(const json& j, const std::string& section,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + item.key() + "' in config section '" + section + "'");
  }
}

inline std::uint64_t get_u64(const json& j, const std::string& where) {
  if (j.is_string()) return report::parse_hex_u64(j.get<std::string>());
  if (j.is_number_unsigned() || j.is_number_integer()) return j.get<std::uint64_t>();
  throw ConfigError(where + " must be an unsigned integer or 0x-hex string");
}

}  // namespace detail

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | idx
  int n = 2048;
  int h = 12, w = 12;
  int classes = 6;
  std::uint64_t seed = 7;
  std::string images, labels;  // idx paths

  void validate() const {
    if (source != "synthetic" && source != "idx")
      throw ConfigError("dataset.source must be 'synthetic' or 'idx', got '" + source + "'");
    if (source == "idx" && (images.empty() || labels.empty()))
      throw ConfigError("dataset.source 'idx' needs dataset.images and dataset.labels paths");
  }
};

struct PoolSection {
  pool::PoolConfig members;
  train::TrainConfig train{5, 32, 0.05, 0.9};
  std::string weights_dir;  // load instead of training when set
};

struct AttackSection {
  attack::AttackConfig cfg;  // seed/workers filled from the top level at run time
  int batch = 64;            // images taken from the head of the dataset
  bool save_adv = true;      // write checkpoint batches as float IDX
};

struct TransformSection {
  transforms::Kind kind = transforms::Kind::kNoise;
  std::vector<double> z{0.14};
  double spectrum_sigma = 16.0 / 255.0;
  int admix_pool = 32;  // held-out images used as admix partners
};

struct SweepSection {
  std::vector<std::vector<double>> grid;  // empty -> canonical grid
  std::vector<int> budgets{50};
  int batch = 2048;  // the whole default desk set; shrink for quick looks
  bool filter_benign = false;
};

struct DpoSection {
  std::string mode = "bisect";  // bisect | ternary | grid
  std::vector<dpo::SlotSpec> slots;  // empty -> defaults for the kind
  int refine_width = 2;
  double noise_floor = 1e-9;
  bool fresh = true;  // new adversarial sets per objective call
  int batch = 64;

  void validate() const {
    if (mode != "bisect" && mode != "ternary" && mode != "grid")
      throw ConfigError("dpo.mode must be bisect, ternary, or grid, got '" + mode + "'");
  }
};

struct KlSection {
  int samples = 50;
  int draws = 1;
  std::vector<std::vector<double>> zgrid;  // empty -> canonical grid for the kind
};

struct ReportSection {
  std::string input;  // finished sweep/kl JSON to analyze
};

struct RunConfig {
  DatasetConfig dataset;
  PoolSection pool;
  AttackSection attack;
  TransformSection transform;
  SweepSection sweep;
  DpoSection dpo;
  KlSection kl;
  ReportSection report;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out = ".";
  std::string run_id = "run";
};

namespace detail {

inline void parse_dataset(const json& j, DatasetConfig& d) {
  check_keys(j, "dataset", {"source", "n", "h", "w", "classes", "seed", "images", "labels"});
  if (j.contains("source")) d.source = j["source"].get<std::string>();
  if (j.contains("n")) d.n = j["n"].get<int>();
  if (j.contains("h")) d.h = j["h"].get<int>();
  if (j.contains("w")) d.w = j["w"].get<int>();
  if (j.contains("classes")) d.classes = j["classes"].get<int>();
  if (j.contains("seed")) d.seed = get_u64(j["seed"], "dataset.seed");
  if (j.contains("images")) d.images = j["images"].get<std::string>();
  if (j.contains("labels")) d.labels = j["labels"].get<std::string>();
  d.validate();
}

inline pool::ModelRef parse_model_ref(const json& j, const std::string& where) {
  check_keys(j, where, {"arch", "seed"});
  pool::ModelRef r;
  if (!j.contains("arch")) throw ConfigError(where + " needs an 'arch' field");
  r.arch = j["arch"].get<std::string>();
  if (j.contains("seed")) r.seed = get_u64(j["seed"], where + ".seed");
  return r;
}

inline void parse_pool(const json& j, PoolSection& p) {
  check_keys(j, "pool", {"surrogate", "targets", "train", "weights_dir"});
  if (j.contains("surrogate")) p.members.surrogate = parse_model_ref(j["surrogate"], "pool.surrogate");
  if (j.contains("targets")) {
    p.members.targets.clear();
    for (const auto& t : j["targets"]) p.members.targets.push_back(parse_model_ref(t, "pool.targets[]"));
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    check_keys(t, "pool.train", {"epochs", "batch", "lr", "momentum"});
    if (t.contains("epochs")) p.train.epochs = t["epochs"].get<int>();
    if (t.contains("batch")) p.train.batch = t["batch"].get<int>();
    if (t.contains("lr")) p.train.lr = t["lr"].get<double>();
    if (t.contains("momentum")) p.train.momentum = t["momentum"].get<double>();
  }
  if (j.contains("weights_dir")) p.weights_dir = j["weights_dir"].get<std::string>();
  p.members.validate();
  p.train.validate();
}

inline void parse_attack(const json& j, AttackSection& a) {
  check_keys(j, "attack",
             {"epsilon", "iterations", "momentum", "copies", "targeted", "target_label",
              "checkpoints", "batch", "save_adv"});
  if (j.contains("epsilon")) a.cfg.epsilon = j["epsilon"].get<double>();
  if (j.contains("iterations")) a.cfg.iterations = j["iterations"].get<int>();
  if (j.contains("momentum")) a.cfg.momentum = j["momentum"].get<double>();
  if (j.contains("copies")) a.cfg.copies = j["copies"].get<int>();
  if (j.contains("targeted")) a.cfg.objective.targeted = j["targeted"].get<bool>();
  if (j.contains("target_label")) a.cfg.objective.target_label = j["target_label"].get<int>();
  if (j.contains("checkpoints")) a.cfg.checkpoints = j["checkpoints"].get<std::vector<int>>();
  if (j.contains("batch")) a.batch = j["batch"].get<int>();
  if (j.contains("save_adv")) a.save_adv = j["save_adv"].get<bool>();
  if (a.batch <= 0) throw ConfigError("attack.batch must be positive");
}

inline void parse_transform(const json& j, TransformSection& t) {
  check_keys(j, "transform", {"kind", "z", "spectrum_sigma", "admix_pool"});
  if (j.contains("kind")) t.kind = transforms::kind_from_name(j["kind"].get<std::string>());
  if (j.contains("z")) t.z = j["z"].get<std::vector<double>>();
  if (!j.contains("z") && t.kind != transforms::Kind::kNoise) {
    // The default z only fits the default kind; other kinds must say.
    t.z.clear();
    if (transforms::slot_count(t.kind) == 1) t.z = {transforms::grid_for(t.kind, 0).lo};
    if (t.kind == transforms::Kind::kBsr)
      t.z = {transforms::grid_for(t.kind, 0).lo, transforms::grid_for(t.kind, 1).lo};
  }
  if (j.contains("spectrum_sigma")) t.spectrum_sigma = j["spectrum_sigma"].get<double>();
  if (j.contains("admix_pool")) t.admix_pool = j["admix_pool"].get<int>();
  if (t.admix_pool <= 0) throw ConfigError("transform.admix_pool must be positive");
}

inline void parse_sweep(const json& j, SweepSection& s) {
  check_keys(j, "sweep", {"grid", "budgets", "batch", "filter_benign"});
  if (j.contains("grid")) s.grid = j["grid"].get<std::vector<std::vector<double>>>();
  if (j.contains("budgets")) s.budgets = j["budgets"].get<std::vector<int>>();
  if (j.contains("batch")) s.batch = j["batch"].get<int>();
  if (j.contains("filter_benign")) s.filter_benign = j["filter_benign"].get<bool>();
  if (s.batch <= 0) throw ConfigError("sweep.batch must be positive");
  if (s.budgets.empty()) throw ConfigError("sweep.budgets must not be empty");
}

inline void parse_dpo(const json& j, DpoSection& d) {
  check_keys(j, "dpo",
             {"mode", "slots", "refine_width", "noise_floor", "fresh", "batch"});
  if (j.contains("mode")) d.mode = j["mode"].get<std::string>();
  if (j.contains("slots")) {
    d.slots.clear();
    for (const auto& sj : j["slots"]) {
      check_keys(sj, "dpo.slots[]", {"lo", "hi", "m", "integral", "hold"});
      dpo::SlotSpec s;
      if (!sj.contains("lo") || !sj.contains("hi") || !sj.contains("m"))
        throw ConfigError("dpo.slots[] entries need lo, hi, and m");
      s.lo = sj["lo"].get<double>();
      s.hi = sj["hi"].get<double>();
      s.m = sj["m"].get<int>();
      if (sj.contains("integral")) s.integral = sj["integral"].get<bool>();
      if (sj.contains("hold") && !sj["hold"].is_null()) s.hold = sj["hold"].get<double>();
      s.validate();
      d.slots.push_back(s);
    }
  }
  if (j.contains("refine_width")) d.refine_width = j["refine_width"].get<int>();
  if (j.contains("noise_floor")) d.noise_floor = j["noise_floor"].get<double>();
  if (j.contains("fresh")) d.fresh = j["fresh"].get<bool>();
  if (j.contains("batch")) d.batch = j["batch"].get<int>();
  if (d.batch <= 0) throw ConfigError("dpo.batch must be positive");
  d.validate();
}

inline void parse_kl(const json& j, KlSection& k) {
  check_keys(j, "kl", {"samples", "draws", "zgrid"});
  if (j.contains("samples")) k.samples = j["samples"].get<int>();
  if (j.contains("draws")) k.draws = j["draws"].get<int>();
  if (j.contains("zgrid")) k.zgrid = j["zgrid"].get<std::vector<std::vector<double>>>();
}

inline void parse_report(const json& j, ReportSection& r) {
  check_keys(j, "report", {"input"});
  if (j.contains("input")) r.input = j["input"].get<std::string>();
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  detail::check_keys(j, "(top level)",
                     {"dataset", "pool", "attack", "transform", "sweep", "dpo", "kl", "report",
                      "seed", "workers", "out", "run_id"});
  RunConfig c;
  if (j.contains("dataset")) detail::parse_dataset(j["dataset"], c.dataset);
  if (j.contains("pool")) detail::parse_pool(j["pool"], c.pool);
  if (j.contains("attack")) detail::parse_attack(j["attack"], c.attack);
  if (j.contains("transform")) detail::parse_transform(j["transform"], c.transform);
  if (j.contains("sweep")) detail::parse_sweep(j["sweep"], c.sweep);
  if (j.contains("dpo")) detail::parse_dpo(j["dpo"], c.dpo);
  if (j.contains("kl")) detail::parse_kl(j["kl"], c.kl);
  if (j.contains("report")) detail::parse_report(j["report"], c.report);
  if (j.contains("seed")) c.seed = detail::get_u64(j["seed"], "seed");
  if (j.contains("workers")) c.workers = j["workers"].get<int>();
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  if (j.contains("run_id")) c.run_id = j["run_id"].get<std::string>();
  if (c.workers <= 0) throw ConfigError("workers must be positive");
  if (c.run_id.empty()) throw ConfigError("run_id must not be empty");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Resolved-config echo for the manifest: every field the run actually used.
inline json config_echo(const RunConfig& c) {
  json j;
  j["run_id"] = c.run_id;
  j["seed"] = report::hex_u64(c.seed);
  j["workers"] = c.workers;
  j["out"] = c.out;
  {
    json d;
    d["source"] = c.dataset.source;
    if (c.dataset.source == "synthetic") {
      d["n"] = c.dataset.n;
      d["h"] = c.dataset.h;
      d["w"] = c.dataset.w;
      d["classes"] = c.dataset.classes;
      d["seed"] = report::hex_u64(c.dataset.seed);
    } else {
      d["images"] = c.dataset.images;
      d["labels"] = c.dataset.labels;
    }
    j["dataset"] = d;
  }
  {
    json p;
    p["surrogate"] = {{"arch", c.pool.members.surrogate.arch},
                      {"seed", report::hex_u64(c.pool.members.surrogate.seed)}};
    json tg = json::array();
    for (const auto& t : c.pool.members.targets)
      tg.push_back({{"arch", t.arch}, {"seed", report::hex_u64(t.seed)}});
    p["targets"] = tg;
    p["train"] = {{"epochs", c.pool.train.epochs},
                  {"batch", c.pool.train.batch},
                  {"lr", c.pool.train.lr},
                  {"momentum", c.pool.train.momentum}};
    if (!c.pool.weights_dir.empty()) p["weights_dir"] = c.pool.weights_dir;
    j["pool"] = p;
  }
  {
    json a;
    a["epsilon"] = c.attack.cfg.epsilon;
    a["iterations"] = c.attack.cfg.iterations;
    a["momentum"] = c.attack.cfg.momentum;
    a["copies"] = c.attack.cfg.copies;
    a["targeted"] = c.attack.cfg.objective.targeted;
    if (c.attack.cfg.objective.targeted) a["target_label"] = c.attack.cfg.objective.target_label;
    a["checkpoints"] = c.attack.cfg.effective_checkpoints();
    a["batch"] = c.attack.batch;
    a["save_adv"] = c.attack.save_adv;
    a["ensemble_fusion"] = "mean_loss";
    j["attack"] = a;
  }
  {
    json t;
    t["kind"] = transforms::kind_name(c.transform.kind);
    t["z"] = c.transform.z;
    if (c.transform.kind == transforms::Kind::kSpectrum)
      t["spectrum_sigma"] = c.transform.spectrum_sigma;
    if (c.transform.kind == transforms::Kind::kAdmix) t["admix_pool"] = c.transform.admix_pool;
    j["transform"] = t;
  }
  {
    json s;
    s["grid"] = c.sweep.grid;  // empty means the canonical grid for the kind
    s["budgets"] = c.sweep.budgets;
    s["batch"] = c.sweep.batch;
    s["filter_benign"] = c.sweep.filter_benign;
    j["sweep"] = s;
  }
  {
    json d;
    d["mode"] = c.dpo.mode;
    json slots = json::array();
    for (const auto& s : c.dpo.slots) {
      json sj = {{"lo", s.lo}, {"hi", s.hi}, {"m", s.m}, {"integral", s.integral}};
      sj["hold"] = s.hold ? json(*s.hold) : json(nullptr);
      slots.push_back(sj);
    }
    d["slots"] = slots;  // empty means the defaults for the kind
    d["refine_width"] = c.dpo.refine_width;
    d["noise_floor"] = c.dpo.noise_floor;
    d["fresh"] = c.dpo.fresh;
    d["batch"] = c.dpo.batch;
    j["dpo"] = d;
  }
  {
    json k;
    k["samples"] = c.kl.samples;
    k["draws"] = c.kl.draws;
    k["zgrid"] = c.kl.zgrid;  // empty means the canonical grid for the kind
    j["kl"] = k;
  }
  if (!c.report.input.empty()) j["report"] = {{"input", c.report.input}};
  return j;
}

}  // namespace advlab::config
