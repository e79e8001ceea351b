#include "advlab/config.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "advlab/errors.hpp"

namespace config = advlab::config;
namespace tf = advlab::transforms;
using config::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::ostringstream name;
    name << "advlab-config-" << ::getpid() << "-" << static_cast<const void*>(this);
    path = std::filesystem::temp_directory_path() / name.str();
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& n) const { return (path / n).string(); }
};

json full_doc() {
  return json::parse(R"({
    "seed": 42,
    "workers": 2,
    "out": "results",
    "run_id": "exp1",
    "dataset": {"source": "synthetic", "n": 128, "h": 12, "w": 12, "classes": 4, "seed": 9},
    "pool": {
      "surrogate": {"arch": "cnn-a", "seed": 1},
      "targets": [{"arch": "mlp2", "seed": 11}, {"arch": "cnn-b", "seed": 12}],
      "train": {"epochs": 3, "batch": 16, "lr": 0.05, "momentum": 0.8}
    },
    "attack": {"epsilon": 0.03137254901960784, "iterations": 20, "momentum": 1.0,
               "copies": 4, "checkpoints": [10, 20], "batch": 32, "save_adv": false},
    "transform": {"kind": "noise", "z": [0.2]},
    "sweep": {"grid": [[0.1], [0.2]], "budgets": [5, 50], "batch": 48, "filter_benign": true},
    "dpo": {"mode": "bisect", "slots": [{"lo": 0.0, "hi": 0.5, "m": 25}],
            "refine_width": 1, "noise_floor": 1e-8, "fresh": false, "batch": 24},
    "kl": {"samples": 30, "draws": 2, "zgrid": [[0.1], [0.3]]},
    "report": {"input": "exp0.sweep.json"}
  })");
}

}  // namespace

TEST(Config, EmptyDocumentYieldsDefaults) {
  const config::RunConfig c = config::parse_config(json::object());
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.workers, 1);
  EXPECT_EQ(c.out, ".");
  EXPECT_EQ(c.run_id, "run");
  EXPECT_EQ(c.dataset.source, "synthetic");
  EXPECT_EQ(c.dataset.n, 2048);
  EXPECT_EQ(c.dataset.h, 12);
  EXPECT_EQ(c.dataset.classes, 6);
  EXPECT_EQ(c.pool.members.surrogate.tag(), "cnn-a#1");
  ASSERT_EQ(c.pool.members.targets.size(), 4u);
  EXPECT_EQ(c.pool.members.targets[0].tag(), "mlp2#11");
  EXPECT_EQ(c.pool.members.targets[3].tag(), "cnn-a#21");
  EXPECT_EQ(c.pool.train.epochs, 5);
  EXPECT_EQ(c.transform.kind, tf::Kind::kNoise);
  EXPECT_EQ(c.transform.z, std::vector<double>{0.14});
  EXPECT_EQ(c.sweep.budgets, std::vector<int>{50});
  EXPECT_EQ(c.sweep.batch, 2048);
  EXPECT_EQ(c.dpo.mode, "bisect");
  EXPECT_TRUE(c.dpo.slots.empty());
  EXPECT_EQ(c.dpo.refine_width, 2);
  EXPECT_TRUE(c.dpo.fresh);
  EXPECT_EQ(c.kl.samples, 50);
  EXPECT_EQ(c.kl.draws, 1);
  EXPECT_DOUBLE_EQ(c.attack.cfg.epsilon, 16.0 / 255.0);
  EXPECT_EQ(c.attack.batch, 64);
  EXPECT_TRUE(c.attack.save_adv);
}

TEST(Config, FullDocumentParses) {
  const config::RunConfig c = config::parse_config(full_doc());
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.workers, 2);
  EXPECT_EQ(c.out, "results");
  EXPECT_EQ(c.run_id, "exp1");
  EXPECT_EQ(c.dataset.n, 128);
  EXPECT_EQ(c.dataset.classes, 4);
  EXPECT_EQ(c.dataset.seed, 9u);
  EXPECT_EQ(c.pool.members.targets.size(), 2u);
  EXPECT_EQ(c.pool.members.targets[1].tag(), "cnn-b#12");
  EXPECT_EQ(c.pool.train.epochs, 3);
  EXPECT_DOUBLE_EQ(c.pool.train.lr, 0.05);
  EXPECT_DOUBLE_EQ(c.attack.cfg.epsilon, 8.0 / 255.0);
  EXPECT_EQ(c.attack.cfg.iterations, 20);
  EXPECT_EQ(c.attack.cfg.copies, 4);
  EXPECT_EQ(c.attack.cfg.checkpoints, (std::vector<int>{10, 20}));
  EXPECT_FALSE(c.attack.save_adv);
  EXPECT_EQ(c.transform.z, std::vector<double>{0.2});
  EXPECT_EQ(c.sweep.grid.size(), 2u);
  EXPECT_TRUE(c.sweep.filter_benign);
  ASSERT_EQ(c.dpo.slots.size(), 1u);
  EXPECT_EQ(c.dpo.slots[0].m, 25);
  EXPECT_FALSE(c.dpo.slots[0].hold.has_value());
  EXPECT_EQ(c.dpo.refine_width, 1);
  EXPECT_FALSE(c.dpo.fresh);
  EXPECT_EQ(c.kl.zgrid.size(), 2u);
  EXPECT_EQ(c.report.input, "exp0.sweep.json");
}

TEST(Config, UnknownKeysAreNamedInTheError) {
  auto expect_unknown = [](json doc, const std::string& key) {
    try {
      config::parse_config(doc);
      FAIL() << "expected rejection of key " << key;
    } catch (const advlab::ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + key + "'"), std::string::npos) << e.what();
    }
  };
  expect_unknown(json::parse(R"({"sed": 1})"), "sed");
  expect_unknown(json::parse(R"({"dataset": {"count": 10}})"), "count");
  expect_unknown(json::parse(R"({"attack": {"eps": 0.1}})"), "eps");
  expect_unknown(json::parse(R"({"pool": {"train": {"rate": 0.1}}})"), "rate");
  expect_unknown(json::parse(R"({"dpo": {"slots": [{"lo": 0, "hi": 1, "m": 4, "snap": true}]}})"),
                 "snap");
  expect_unknown(json::parse(R"({"kl": {"nsamples": 5}})"), "nsamples");
}

TEST(Config, SeedsAcceptNumbersAndHexStrings) {
  EXPECT_EQ(config::parse_config(json::parse(R"({"seed": 7})")).seed, 7u);
  EXPECT_EQ(config::parse_config(json::parse(R"({"seed": "0x2a"})")).seed, 42u);
  EXPECT_EQ(config::parse_config(json::parse(R"({"seed": "0xffffffffffffffff"})")).seed,
            0xffffffffffffffffull);
  EXPECT_EQ(config::parse_config(json::parse(R"({"dataset": {"seed": "0x10"}})")).dataset.seed,
            16u);
  EXPECT_THROW(config::parse_config(json::parse(R"({"seed": true})")), advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"seed": "42"})")), advlab::FormatError);
}

TEST(Config, TransformDefaultsFollowTheKind) {
  // Without an explicit z, each kind starts at its canonical grid origin.
  auto z_for = [](const std::string& kind) {
    return config::parse_config(json::parse(R"({"transform": {"kind": ")" + kind + R"("}})"))
        .transform.z;
  };
  EXPECT_EQ(z_for("noise"), std::vector<double>{0.14});  // the section default survives
  EXPECT_EQ(z_for("rotation"), std::vector<double>{10.0});
  EXPECT_EQ(z_for("translation"), std::vector<double>{20.0});
  EXPECT_EQ(z_for("resize"), std::vector<double>{0.1});
  EXPECT_EQ(z_for("bsr"), (std::vector<double>{1.0, 20.0}));
  EXPECT_EQ(z_for("identity"), std::vector<double>{});
  EXPECT_THROW(config::parse_config(json::parse(R"({"transform": {"kind": "warp"}})")),
               advlab::ConfigError);
}

TEST(Config, SectionValidationFires) {
  EXPECT_THROW(config::parse_config(json::parse(R"({"workers": 0})")), advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"run_id": ""})")), advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"dataset": {"source": "csv"}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"dataset": {"source": "idx"}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"attack": {"batch": 0}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"sweep": {"budgets": []}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"sweep": {"batch": -1}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"dpo": {"mode": "anneal"}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"dpo": {"slots": [{"lo": 0}]}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"dpo": {"slots": [{"lo": 1, "hi": 0, "m": 4}]}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"transform": {"admix_pool": 0}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"kl": {"samples": "many"}})")),
               std::exception);
  // Pool integrity: duplicate target, and train hyperparameters out of range.
  EXPECT_THROW(config::parse_config(json::parse(
                   R"({"pool": {"surrogate": {"arch": "cnn-a", "seed": 1},
                       "targets": [{"arch": "cnn-a", "seed": 1}]}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"pool": {"train": {"momentum": 1.0}}})")),
               advlab::ConfigError);
  EXPECT_THROW(config::parse_config(json::parse(R"({"pool": {"targets": [{"seed": 3}]}})")),
               advlab::ConfigError);
}

TEST(Config, SlotsParseHoldNullAndValue) {
  const config::RunConfig with_null = config::parse_config(json::parse(
      R"({"dpo": {"slots": [{"lo": 0, "hi": 1, "m": 4, "hold": null}]}})"));
  EXPECT_FALSE(with_null.dpo.slots[0].hold.has_value());
  const config::RunConfig with_value = config::parse_config(json::parse(
      R"({"dpo": {"slots": [{"lo": 0, "hi": 160, "m": 8, "hold": 24.0},
                            {"lo": 0, "hi": 9, "m": 9, "integral": true}]}})"));
  ASSERT_EQ(with_value.dpo.slots.size(), 2u);
  ASSERT_TRUE(with_value.dpo.slots[0].hold.has_value());
  EXPECT_DOUBLE_EQ(*with_value.dpo.slots[0].hold, 24.0);
  EXPECT_TRUE(with_value.dpo.slots[1].integral);
}

TEST(Config, LoadConfigFileHandling) {
  TempDir tmp;
  EXPECT_THROW(config::load_config(tmp.file("missing.json")), advlab::IoError);
  {
    std::ofstream out(tmp.file("bad.json"));
    out << "{not json";
  }
  EXPECT_THROW(config::load_config(tmp.file("bad.json")), advlab::ConfigError);
  {
    std::ofstream out(tmp.file("good.json"));
    out << R"({"seed": 5, "run_id": "fromfile"})";
  }
  const config::RunConfig c = config::load_config(tmp.file("good.json"));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.run_id, "fromfile");
}

TEST(Config, EchoReflectsTheResolvedRun) {
  const config::RunConfig c = config::parse_config(full_doc());
  const json e = config::config_echo(c);
  EXPECT_EQ(e.at("run_id"), "exp1");
  EXPECT_EQ(e.at("seed").get<std::string>(), "0x000000000000002a");
  EXPECT_EQ(e.at("workers").get<int>(), 2);
  EXPECT_EQ(e.at("dataset").at("n").get<int>(), 128);
  EXPECT_EQ(e.at("pool").at("targets").size(), 2u);
  EXPECT_EQ(e.at("attack").at("checkpoints").get<std::vector<int>>(),
            (std::vector<int>{10, 20}));
  EXPECT_EQ(e.at("attack").at("ensemble_fusion"), "mean_loss");
  EXPECT_EQ(e.at("transform").at("kind"), "noise");
  // Kind-specific extras only appear for the kinds that use them.
  EXPECT_FALSE(e.at("transform").contains("spectrum_sigma"));
  config::RunConfig spec = c;
  spec.transform.kind = tf::Kind::kSpectrum;
  EXPECT_TRUE(config::config_echo(spec).at("transform").contains("spectrum_sigma"));
  EXPECT_TRUE(e.at("dpo").at("slots")[0].at("hold").is_null());
  EXPECT_EQ(e.at("report").at("input"), "exp0.sweep.json");
  // The default checkpoint list is resolved, not left implicit.
  const json de = config::config_echo(config::parse_config(json::object()));
  EXPECT_EQ(de.at("attack").at("checkpoints").get<std::vector<int>>(), std::vector<int>{10});
}
