// Command-line front end: train surrogate/target pools, run transform-ensemble
// attacks, sweep transform strengths, optimize them by bisection, probe
// distribution shift, and analyze finished sweeps.

#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advlab/attack.hpp"
#include "advlab/config.hpp"
#include "advlab/dataset.hpp"
#include "advlab/dpo.hpp"
#include "advlab/errors.hpp"
#include "advlab/eval.hpp"
#include "advlab/model_io.hpp"
#include "advlab/pool.hpp"
#include "advlab/report.hpp"
#include "advlab/train.hpp"
#include "advlab/transforms.hpp"

namespace {

namespace fs = std::filesystem;
using advlab::Tensor;
using advlab::config::RunConfig;
using json = advlab::config::json;

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw advlab::IoError("cannot create output directory " + cfg.out + ": " + ec.message());
}

advlab::data::Dataset build_dataset(const RunConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.source == "idx") return advlab::data::load_idx(d.images, d.labels);
  return advlab::data::synth_dataset(d.n, d.h, d.w, d.classes, d.seed);
}

std::string weight_file(const advlab::pool::ModelRef& ref) {
  return ref.arch + "-" + std::to_string(ref.seed) + ".dpow";
}

advlab::model::Model load_member(const RunConfig& cfg, const advlab::pool::ModelRef& ref) {
  const std::string path = (fs::path(cfg.pool.weights_dir) / weight_file(ref)).string();
  advlab::model::Model m = advlab::io::load_model(path);
  if (m.arch != ref.arch || m.meta.seed != ref.seed)
    throw advlab::ConsistencyError(path + " holds " + m.arch + "#" +
                                   std::to_string(m.meta.seed) + ", expected " + ref.tag());
  return m;
}

// Either train the whole pool on the dataset or load it from saved weights.
advlab::pool::ModelPool get_pool(const RunConfig& cfg, const advlab::data::Dataset& d) {
  if (cfg.pool.weights_dir.empty())
    return advlab::pool::build_pool(d, cfg.pool.members, cfg.pool.train);
  cfg.pool.members.validate();
  advlab::pool::ModelPool pool{load_member(cfg, cfg.pool.members.surrogate), {}, {}};
  for (const auto& ref : cfg.pool.members.targets) {
    pool.targets.push_back(load_member(cfg, ref));
    pool.target_tags.push_back(ref.tag());
  }
  return pool;
}

advlab::model::Model get_surrogate(const RunConfig& cfg, const advlab::data::Dataset& d) {
  if (cfg.pool.weights_dir.empty())
    return advlab::pool::train_member(d, cfg.pool.members.surrogate, cfg.pool.train);
  return load_member(cfg, cfg.pool.members.surrogate);
}

// Admix partners come from held-out images just past the attacked batch, so a
// sample never mixes with itself.
std::shared_ptr<const Tensor> admix_pool_for(const advlab::data::Dataset& d, int batch,
                                             int want) {
  const int avail = d.size() - batch;
  if (avail <= 0)
    throw advlab::ConfigError("admix needs held-out partner images: dataset has " +
                              std::to_string(d.size()) + ", batch uses " + std::to_string(batch));
  const int count = std::min(want, avail);
  auto pool = std::make_shared<Tensor>(
      std::vector<int>{count, 1, d.height(), d.width()});
  const std::size_t per = static_cast<std::size_t>(d.height()) * d.width();
  std::copy(d.images.ptr() + per * static_cast<std::size_t>(batch),
            d.images.ptr() + per * static_cast<std::size_t>(batch + count), pool->ptr());
  return pool;
}

advlab::transforms::TransformSpec tspec_for(const RunConfig& cfg, const advlab::data::Dataset& d,
                                            int batch) {
  advlab::transforms::TransformSpec t;
  t.kind = cfg.transform.kind;
  t.z = cfg.transform.z;
  t.c = 1;
  t.h = d.height();
  t.w = d.width();
  t.spectrum_sigma = cfg.transform.spectrum_sigma;
  if (t.kind == advlab::transforms::Kind::kAdmix)
    t.reference_pool = admix_pool_for(d, batch, cfg.transform.admix_pool);
  return t;
}

void write_manifest(const RunConfig& cfg, const std::string& subcommand, const json& overrides,
                    const std::vector<std::string>& artifacts, const json& results) {
  json m;
  m["subcommand"] = subcommand;
  m["config"] = advlab::config::config_echo(cfg);
  m["overrides"] = overrides;
  json arts = json::array();
  for (const auto& a : artifacts) arts.push_back(a);
  m["artifacts"] = arts;
  m["results"] = results;
  advlab::report::write_text(out_path(cfg, cfg.run_id + ".manifest.json"),
                             advlab::report::json_text(m));
}

json model_summary(const advlab::model::Model& m) {
  json j;
  j["arch"] = m.arch;
  j["seed"] = advlab::report::hex_u64(m.meta.seed);
  j["epochs"] = m.meta.epochs;
  j["train_acc"] = m.meta.train_acc;
  j["fingerprint"] = advlab::report::hex_u64(m.fingerprint());
  return j;
}

int cmd_train(const RunConfig& cfg, const json& overrides) {
  ensure_out_dir(cfg);
  const advlab::data::Dataset d = build_dataset(cfg);
  const advlab::pool::ModelPool pool =
      advlab::pool::build_pool(d, cfg.pool.members, cfg.pool.train);

  std::vector<std::string> artifacts;
  json results;
  results["dataset_fingerprint"] = advlab::report::hex_u64(d.fingerprint());
  auto save_one = [&](const advlab::model::Model& m, const advlab::pool::ModelRef& ref) {
    const std::string name = weight_file(ref);
    advlab::io::save_model(m, out_path(cfg, name));
    artifacts.push_back(name);
    return model_summary(m);
  };
  results["surrogate"] = save_one(pool.surrogate, cfg.pool.members.surrogate);
  json tg = json::array();
  for (std::size_t i = 0; i < pool.targets.size(); ++i)
    tg.push_back(save_one(pool.targets[i], cfg.pool.members.targets[i]));
  results["targets"] = tg;

  write_manifest(cfg, "train", overrides, artifacts, results);
  std::printf("trained %zu models -> %s\n", pool.targets.size() + 1, cfg.out.c_str());
  return 0;
}

int cmd_attack(const RunConfig& cfg, const json& overrides) {
  ensure_out_dir(cfg);
  const advlab::data::Dataset d = build_dataset(cfg);
  if (cfg.attack.batch > d.size())
    throw advlab::ConfigError("attack.batch " + std::to_string(cfg.attack.batch) +
                              " exceeds dataset size " + std::to_string(d.size()));
  const advlab::pool::ModelPool pool = get_pool(cfg, d);
  const advlab::data::Dataset batch = d.take(cfg.attack.batch);
  const advlab::transforms::TransformSpec tspec = tspec_for(cfg, d, cfg.attack.batch);

  advlab::attack::AttackConfig acfg = cfg.attack.cfg;
  acfg.seed = cfg.seed;
  acfg.workers = cfg.workers;
  const advlab::attack::AttackResult ar = advlab::attack::run_attack(
      batch.images, batch.labels, {&pool.surrogate}, tspec, acfg);

  // There is no tolerance in the step rule, so this must come out zero.
  std::uint64_t violations = 0;
  const double eps = acfg.epsilon + 1e-12;
  for (const Tensor& snap : ar.snapshots)
    for (std::size_t i = 0; i < snap.numel(); ++i) {
      const double v = snap[i];
      if (!(v >= 0.0 && v <= 1.0) || std::fabs(v - batch.images[i]) > eps) ++violations;
    }

  std::vector<std::string> artifacts;
  if (cfg.attack.save_adv)
    for (std::size_t ci = 0; ci < ar.snapshots.size(); ++ci) {
      const std::string name =
          cfg.run_id + ".adv.t" + std::to_string(ar.checkpoint_epochs[ci]) + ".idx";
      advlab::data::save_idx_f64(ar.snapshots[ci], out_path(cfg, name));
      artifacts.push_back(name);
    }

  std::vector<const advlab::model::Model*> targets;
  for (const auto& m : pool.targets) targets.push_back(&m);
  json results;
  results["budget_violations"] = violations;
  results["momentum_fingerprint"] = advlab::report::hex_u64(ar.momentum_fingerprint);
  results["zero_l1_iterations"] = ar.diag.zero_l1_iterations;
  results["zero_sign_coordinates"] = ar.diag.zero_sign_coordinates;
  if (!targets.empty()) {
    json per_ck = json::array();
    for (std::size_t ci = 0; ci < ar.snapshots.size(); ++ci) {
      const std::vector<double> asr = advlab::eval::attack_success_rate(
          targets, ar.snapshots[ci], batch.labels, acfg.objective);
      json row;
      row["T"] = ar.checkpoint_epochs[ci];
      json by_model;
      for (std::size_t mi = 0; mi < asr.size(); ++mi) by_model[pool.target_tags[mi]] = asr[mi];
      row["asr"] = by_model;
      per_ck.push_back(row);
    }
    results["transfer"] = per_ck;
  }

  write_manifest(cfg, "attack", overrides, artifacts, results);
  std::printf("attack done: %zu checkpoints, budget violations %llu\n", ar.snapshots.size(),
              static_cast<unsigned long long>(violations));
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const json& overrides) {
  ensure_out_dir(cfg);
  const advlab::data::Dataset d = build_dataset(cfg);
  if (cfg.sweep.batch > d.size())
    throw advlab::ConfigError("sweep.batch " + std::to_string(cfg.sweep.batch) +
                              " exceeds dataset size " + std::to_string(d.size()));
  const advlab::pool::ModelPool pool = get_pool(cfg, d);
  const advlab::data::Dataset batch = d.take(cfg.sweep.batch);

  advlab::eval::SweepPlan plan;
  plan.kind = cfg.transform.kind;
  plan.grid = cfg.sweep.grid;
  plan.budgets = cfg.sweep.budgets;
  plan.epsilon = cfg.attack.cfg.epsilon;
  plan.momentum = cfg.attack.cfg.momentum;
  plan.copies = cfg.attack.cfg.copies;
  plan.objective = cfg.attack.cfg.objective;
  plan.seed = cfg.seed;
  plan.workers = cfg.workers;
  plan.spectrum_sigma = cfg.transform.spectrum_sigma;
  plan.filter_benign = cfg.sweep.filter_benign;
  if (plan.kind == advlab::transforms::Kind::kAdmix)
    plan.reference_pool = admix_pool_for(d, cfg.sweep.batch, cfg.transform.admix_pool);

  const advlab::eval::SweepResult sw = advlab::eval::run_sweep(pool, batch.images,
                                                               batch.labels, plan);
  const std::string csv_name = cfg.run_id + ".sweep.csv";
  const std::string json_name = cfg.run_id + ".sweep.json";
  advlab::report::write_text(out_path(cfg, csv_name), advlab::report::sweep_csv(sw));
  advlab::report::write_text(out_path(cfg, json_name),
                             advlab::report::json_text(advlab::report::sweep_json(sw)));

  json results;
  results["cells"] = sw.grid.size() * sw.budgets.size();
  results["config_fingerprint"] = advlab::report::hex_u64(sw.config_fingerprint);
  write_manifest(cfg, "sweep", overrides, {csv_name, json_name}, results);
  std::printf("sweep done: %zu grid points x %zu budgets -> %s\n", sw.grid.size(),
              sw.budgets.size(), csv_name.c_str());
  return 0;
}

int cmd_dpo(const RunConfig& cfg, const json& overrides) {
  ensure_out_dir(cfg);
  const advlab::data::Dataset d = build_dataset(cfg);
  if (cfg.dpo.batch > d.size())
    throw advlab::ConfigError("dpo.batch " + std::to_string(cfg.dpo.batch) +
                              " exceeds dataset size " + std::to_string(d.size()));
  const advlab::pool::ModelPool pool = get_pool(cfg, d);
  const advlab::data::Dataset batch = d.take(cfg.dpo.batch);

  const std::vector<advlab::dpo::SlotSpec> slots =
      cfg.dpo.slots.empty() ? advlab::dpo::default_slots(cfg.transform.kind) : cfg.dpo.slots;

  advlab::dpo::AsrObjectiveTemplate tpl;
  tpl.kind = cfg.transform.kind;
  tpl.epsilon = cfg.attack.cfg.epsilon;
  tpl.iterations = cfg.attack.cfg.iterations;
  tpl.momentum = cfg.attack.cfg.momentum;
  tpl.copies = cfg.attack.cfg.copies;
  tpl.objective = cfg.attack.cfg.objective;
  tpl.seed = cfg.seed;
  tpl.workers = cfg.workers;
  tpl.spectrum_sigma = cfg.transform.spectrum_sigma;
  tpl.fresh_each_call = cfg.dpo.fresh;
  if (tpl.kind == advlab::transforms::Kind::kAdmix)
    tpl.reference_pool = admix_pool_for(d, cfg.dpo.batch, cfg.transform.admix_pool);
  const advlab::dpo::ObjectiveFn fn =
      advlab::dpo::make_asr_objective(pool, batch.images, batch.labels, tpl);

  const std::string json_name = cfg.run_id + ".dpo.json";
  json results;
  if (cfg.dpo.mode == "grid") {
    const advlab::dpo::GridSearchResult gr = advlab::dpo::grid_search(fn, slots);
    advlab::report::write_text(
        out_path(cfg, json_name),
        advlab::report::json_text(advlab::report::grid_json(gr, slots, cfg.transform.kind)));
    results["best_z"] = gr.best_z;
    results["best_score"] = gr.best_score;
    results["grid_evals"] = gr.evals;
  } else {
    advlab::dpo::OptimizeOptions opt;
    opt.refine_width = cfg.dpo.refine_width;
    opt.noise_floor = cfg.dpo.noise_floor;
    opt.ternary = cfg.dpo.mode == "ternary";
    const advlab::dpo::DPOResult r = advlab::dpo::bisect_optimize(fn, slots, opt);
    advlab::report::write_text(out_path(cfg, json_name),
                               advlab::report::json_text(advlab::report::dpo_json(
                                   r, slots, cfg.transform.kind, cfg.dpo.mode)));
    results["best_z"] = r.best_z;
    results["best_score"] = r.best_score;
    results["bisect_evals"] = r.bisect_evals;
    results["refine_evals"] = r.refine_evals;
    int baseline = 0;
    for (const auto& s : slots) baseline += s.m;
    results["grid_baseline_evals"] = baseline;
    results["any_flagged"] = r.any_flagged;
  }

  write_manifest(cfg, "dpo", overrides, {json_name}, results);
  std::printf("dpo (%s) done -> %s\n", cfg.dpo.mode.c_str(), json_name.c_str());
  return 0;
}

int cmd_kl_probe(const RunConfig& cfg, const json& overrides) {
  ensure_out_dir(cfg);
  const advlab::data::Dataset d = build_dataset(cfg);
  const advlab::model::Model surrogate = get_surrogate(cfg, d);

  std::vector<std::vector<double>> zgrid = cfg.kl.zgrid;
  if (zgrid.empty()) {
    if (cfg.transform.kind == advlab::transforms::Kind::kIdentity)
      zgrid.push_back({});
    else
      zgrid = advlab::eval::canonical_grid(cfg.transform.kind);
  }

  std::vector<advlab::eval::KLProbeResult> rows;
  for (const auto& z : zgrid) {
    advlab::transforms::TransformSpec t;
    t.kind = cfg.transform.kind;
    t.z = z;
    t.c = 1;
    t.h = d.height();
    t.w = d.width();
    t.spectrum_sigma = cfg.transform.spectrum_sigma;
    if (t.kind == advlab::transforms::Kind::kAdmix)
      t.reference_pool = admix_pool_for(d, cfg.kl.samples, cfg.transform.admix_pool);
    rows.push_back(advlab::eval::kl_probe(surrogate, d, t, cfg.kl.samples, cfg.kl.draws,
                                          cfg.seed));
  }

  const std::string csv_name = cfg.run_id + ".kl.csv";
  const std::string json_name = cfg.run_id + ".kl.json";
  advlab::report::write_text(out_path(cfg, csv_name), advlab::report::kl_csv(rows, cfg.seed));
  advlab::report::write_text(out_path(cfg, json_name),
                             advlab::report::json_text(advlab::report::kl_json(rows, cfg.seed)));

  json results;
  results["probes"] = rows.size();
  results["surrogate"] = model_summary(surrogate);
  write_manifest(cfg, "kl-probe", overrides, {csv_name, json_name}, results);
  std::printf("kl-probe done: %zu grid points -> %s\n", rows.size(), csv_name.c_str());
  return 0;
}

int cmd_report(const RunConfig& cfg, const json& overrides, const std::string& input_arg) {
  ensure_out_dir(cfg);
  const std::string input = input_arg.empty() ? cfg.report.input : input_arg;
  if (input.empty())
    throw advlab::ConfigError("report needs a sweep JSON (positional argument or report.input)");
  std::ifstream in(input);
  if (!in) throw advlab::IoError("cannot open " + input);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw advlab::FormatError(input + " is not valid JSON: " + e.what());
  }
  advlab::eval::SweepResult sw;
  try {
    sw = advlab::report::sweep_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw advlab::FormatError(input + " is not a sweep result: " + e.what());
  }

  const json analysis = advlab::report::analyze_sweep(sw);
  const std::string json_name = cfg.run_id + ".report.json";
  advlab::report::write_text(out_path(cfg, json_name), advlab::report::json_text(analysis));

  json results;
  results["input"] = input;
  results["kind"] = advlab::transforms::kind_name(sw.kind);
  write_manifest(cfg, "report", overrides, {json_name}, results);
  std::printf("report done -> %s\n", json_name.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transform-ensemble adversarial transfer lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_flag;
  std::string seed_flag;
  int workers_flag = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed_flag, "override the run seed (decimal or 0x-hex)");
  app.add_option("--workers", workers_flag, "override the worker thread count");
  app.add_option("--out", out_flag, "override the output directory");

  CLI::App* sub_train = app.add_subcommand("train", "train the surrogate/target model pool");
  CLI::App* sub_attack = app.add_subcommand("attack", "run the transform-ensemble attack");
  CLI::App* sub_sweep = app.add_subcommand("sweep", "sweep transform strength against ASR");
  CLI::App* sub_dpo = app.add_subcommand("dpo", "optimize transform strength by bisection");
  CLI::App* sub_kl =
      app.add_subcommand("kl-probe", "measure transform-induced distribution shift");
  CLI::App* sub_report = app.add_subcommand("report", "analyze a finished sweep");
  std::string report_input;
  sub_report->add_option("input", report_input, "sweep JSON to analyze");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n\n%s", e.what(), app.help().c_str());
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = advlab::config::load_config(config_path);
    json overrides = json::object();
    if (app.count("--seed")) {
      cfg.seed = seed_flag.rfind("0x", 0) == 0
                     ? advlab::report::parse_hex_u64(seed_flag)
                     : static_cast<std::uint64_t>(std::stoull(seed_flag));
      overrides["seed"] = advlab::report::hex_u64(cfg.seed);
    }
    if (app.count("--workers")) {
      if (workers_flag <= 0) throw advlab::ConfigError("workers must be positive");
      cfg.workers = workers_flag;
      overrides["workers"] = cfg.workers;
    }
    if (app.count("--out")) {
      cfg.out = out_flag;
      overrides["out"] = cfg.out;
    }

    if (sub_train->parsed()) return cmd_train(cfg, overrides);
    if (sub_attack->parsed()) return cmd_attack(cfg, overrides);
    if (sub_sweep->parsed()) return cmd_sweep(cfg, overrides);
    if (sub_dpo->parsed()) return cmd_dpo(cfg, overrides);
    if (sub_kl->parsed()) return cmd_kl_probe(cfg, overrides);
    if (sub_report->parsed()) return cmd_report(cfg, overrides, report_input);
    std::fprintf(stderr, "no subcommand selected\n%s", app.help().c_str());
    return 2;
  } catch (const advlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const advlab::InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return 2;
  } catch (const advlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
