#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advlab/dataset.hpp"
#include "advlab/errors.hpp"
#include "advlab/model.hpp"
#include "advlab/train.hpp"

namespace advlab::pool {

// A model identity: architecture plus init/training seed. Transfer results
// are only meaningful when the attacked models differ from the one that
// produced the gradients, so identities must be pairwise distinct.
struct ModelRef {
  std::string arch;
  std::uint64_t seed = 0;

  std::string tag() const { return arch + "#" + std::to_string(seed); }
  bool operator==(const ModelRef& o) const { return arch == o.arch && seed == o.seed; }
};

struct PoolConfig {
  ModelRef surrogate{"cnn-a", 1};
  std::vector<ModelRef> targets{{"mlp2", 11}, {"cnn-b", 12}, {"cnn-c", 13}, {"cnn-a", 21}};

  void validate() const {
    if (targets.empty()) throw ConfigError("model pool needs at least one target");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] == surrogate)
        throw ConfigError("target " + targets[i].tag() + " duplicates the surrogate");
      for (std::size_t j = i + 1; j < targets.size(); ++j)
        if (targets[i] == targets[j])
          throw ConfigError("duplicate target " + targets[i].tag());
    }
  }
};

// The white-box surrogate (gradient source) and the held-out black-box
// targets, all trained on the same dataset.
struct ModelPool {
  model::Model surrogate;
  std::vector<model::Model> targets;
  std::vector<std::string> target_tags;
};

inline model::Model train_member(const data::Dataset& d, const ModelRef& ref,
                                 const train::TrainConfig& tc) {
  model::Model m = model::make_model(ref.arch, 1, d.height(), d.width(), d.classes, ref.seed);
  train::train_sgd(m, d, tc);
  return m;
}

inline ModelPool build_pool(const data::Dataset& d, const PoolConfig& pc,
                            const train::TrainConfig& tc) {
  pc.validate();
  ModelPool pool{train_member(d, pc.surrogate, tc), {}, {}};
  for (const ModelRef& ref : pc.targets) {
    pool.targets.push_back(train_member(d, ref, tc));
    pool.target_tags.push_back(ref.tag());
  }
  return pool;
}

}  // namespace advlab::pool
