#include "advlab/train.hpp"

#include <gtest/gtest.h>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/model.hpp"
#include "advlab/pool.hpp"

namespace data = advlab::data;
namespace model = advlab::model;
namespace train = advlab::train;

TEST(Train, ZeroEpochsLeavesParamsUntouched) {
  const data::Dataset d = data::synth_dataset(16, 8, 8, 3, 1);
  model::Model m = model::make_model("mlp2", 1, 8, 8, 3, 7);
  const std::uint64_t before = m.fingerprint();
  const train::TrainReport rep = train::train_sgd(m, d, {0, 8, 0.1, 0.9});
  EXPECT_EQ(m.fingerprint(), before);
  EXPECT_TRUE(rep.epoch_loss.empty());
  EXPECT_EQ(m.meta.epochs, 0);
}

TEST(Train, LearnsAboveChance) {
  const data::Dataset d = data::synth_dataset(192, 16, 16, 4, 5);
  model::Model m = model::make_model("mlp2", 1, 16, 16, 4, 3);
  const double before = train::accuracy(m, d);
  const train::TrainReport rep = train::train_sgd(m, d, {6, 32, 0.1, 0.9});
  EXPECT_GT(rep.train_acc, 0.7) << "started at " << before;
  EXPECT_GT(rep.train_acc, before);
  // Loss trends down over the run.
  EXPECT_LT(rep.epoch_loss.back(), rep.epoch_loss.front());
}

TEST(Train, IsDeterministicInSeed) {
  const data::Dataset d = data::synth_dataset(64, 8, 8, 3, 2);
  model::Model a = model::make_model("cnn-a", 1, 8, 8, 3, 9);
  model::Model b = model::make_model("cnn-a", 1, 8, 8, 3, 9);
  train::train_sgd(a, d, {3, 16, 0.1, 0.9});
  train::train_sgd(b, d, {3, 16, 0.1, 0.9});
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  model::Model c = model::make_model("cnn-a", 1, 8, 8, 3, 10);
  train::train_sgd(c, d, {3, 16, 0.1, 0.9});
  EXPECT_NE(a.fingerprint(), c.fingerprint());
}

TEST(Train, RecordsProvenance) {
  const data::Dataset d = data::synth_dataset(32, 8, 8, 2, 4);
  model::Model m = model::make_model("mlp2", 1, 8, 8, 2, 5);
  train::train_sgd(m, d, {2, 16, 0.05, 0.9});
  EXPECT_EQ(m.meta.epochs, 2);
  EXPECT_EQ(m.meta.data_fingerprint, d.fingerprint());
  EXPECT_GT(m.meta.train_acc, 0.0);
}

TEST(Train, RejectsBadConfigAndData) {
  const data::Dataset d = data::synth_dataset(16, 8, 8, 4, 1);
  model::Model m = model::make_model("mlp2", 1, 8, 8, 4, 1);
  EXPECT_THROW(train::train_sgd(m, d, {-1, 8, 0.1, 0.9}), advlab::ConfigError);
  EXPECT_THROW(train::train_sgd(m, d, {1, 0, 0.1, 0.9}), advlab::ConfigError);
  EXPECT_THROW(train::train_sgd(m, d, {1, 8, 0.0, 0.9}), advlab::ConfigError);
  EXPECT_THROW(train::train_sgd(m, d, {1, 8, 0.1, 1.0}), advlab::ConfigError);
  model::Model narrow = model::make_model("mlp2", 1, 8, 8, 2, 1);
  EXPECT_THROW(train::train_sgd(narrow, d, {1, 8, 0.1, 0.9}), advlab::ConsistencyError);
}

TEST(Train, PoolBuildsDistinctDeterministicMembers) {
  const data::Dataset d = data::synth_dataset(96, 8, 8, 3, 6);
  advlab::pool::PoolConfig pc;
  pc.surrogate = {"cnn-a", 1};
  pc.targets = {{"mlp2", 11}, {"cnn-a", 21}};
  const train::TrainConfig tc{2, 16, 0.1, 0.9};
  const advlab::pool::ModelPool p1 = advlab::pool::build_pool(d, pc, tc);
  const advlab::pool::ModelPool p2 = advlab::pool::build_pool(d, pc, tc);
  ASSERT_EQ(p1.targets.size(), 2u);
  EXPECT_EQ(p1.target_tags[0], "mlp2#11");
  EXPECT_EQ(p1.surrogate.fingerprint(), p2.surrogate.fingerprint());
  EXPECT_EQ(p1.targets[1].fingerprint(), p2.targets[1].fingerprint());
  // Same arch, different seed: different weights.
  EXPECT_NE(p1.surrogate.fingerprint(), p1.targets[1].fingerprint());
}

TEST(Train, PoolRejectsDuplicates) {
  advlab::pool::PoolConfig pc;
  pc.surrogate = {"cnn-a", 1};
  pc.targets = {{"cnn-a", 1}};
  EXPECT_THROW(pc.validate(), advlab::ConfigError);
  pc.targets = {{"mlp2", 3}, {"mlp2", 3}};
  EXPECT_THROW(pc.validate(), advlab::ConfigError);
}

TEST(Train, AllArchitecturesTrainAndPredict) {
  const data::Dataset d = data::synth_dataset(48, 16, 16, 3, 8);
  for (const std::string& arch : advlab::model::known_archs()) {
    model::Model m = model::make_model(arch, 1, 16, 16, 3, 2);
    EXPECT_NO_THROW(train::train_sgd(m, d, {1, 16, 0.05, 0.9})) << arch;
    const std::vector<int> pred = m.predict(d.images);
    ASSERT_EQ(pred.size(), static_cast<std::size_t>(d.size())) << arch;
    for (int p : pred) {
      ASSERT_GE(p, 0);
      ASSERT_LT(p, 3);
    }
  }
}
