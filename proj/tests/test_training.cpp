#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "fixtures.hpp"
#include "splitface/checkpoint.hpp"
#include "splitface/error.hpp"
#include "splitface/rng.hpp"
#include "splitface/training.hpp"

using namespace splitface;
using namespace fixture;

namespace {

PredictorRanking random_ranking(int k, std::uint64_t seed) {
  Rng rng(seed);
  PredictorRanking r;
  for (int a = 0; a < k; ++a) {
    std::vector<int> order(kPredictorCount);
    std::iota(order.begin(), order.end(), 0);
    for (int i = kPredictorCount - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
    r.order.push_back(order);
    std::array<double, kPredictorCount> acc{};
    for (int pos = 0; pos < kPredictorCount; ++pos) acc[order[pos]] = 1.0 - pos / 100.0;
    r.accuracy.push_back(acc);
  }
  return r;
}

// Straight reading of the pruning rule: FULL and GP always, then the first
// d - 2 segments of each ranking.
AttributeMask prune_oracle(const PredictorRanking& r, int d) {
  std::array<std::set<int>, kPredictorCount> sets;
  for (std::size_t a = 0; a < r.order.size(); ++a) {
    sets[kFullPredictor].insert(int(a));
    sets[kGlobalPredictor].insert(int(a));
    std::vector<int> segs;
    for (int i : r.order[a])
      if (i != kFullPredictor && i != kGlobalPredictor) segs.push_back(i);
    for (int t = 0; t < d - 2; ++t) sets[segs[t]].insert(int(a));
  }
  AttributeMask m;
  for (int i = 0; i < kPredictorCount; ++i) m.attributes[i].assign(sets[i].begin(), sets[i].end());
  return m;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.width_scale = 1.0 / 32;
  c.batch_size = 4;
  c.eval_batch_size = 8;
  c.epochs_stage1 = 1;
  c.epochs_stage2 = 1;
  c.seed = 21;
  return c;
}

SplitFaceModel fresh_model(const Dataset& d, const TrainConfig& c) {
  ModelConfig mc;
  mc.num_attributes = d.annotations().num_attributes();
  mc.attribute_names = d.annotations().names;
  mc.width_scale = c.width_scale;
  mc.seed = c.seed;
  SplitFaceModel m(mc);
  const auto p = compute_priors(d.labels());
  m.priors().assign(p.begin(), p.end());
  return m;
}

}  // namespace

TEST_CASE("pruning keeps d predictors per attribute") {
  for (int d : {3, 7, 16}) {
    CAPTURE(d);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto r = random_ranking(40, seed);
      const auto m = prune_masks(r, d);
      CHECK(m == prune_oracle(r, d));
      for (int a = 0; a < 40; ++a) {
        CHECK(m.assigned_count(a) == d);
        CHECK(m.contains(kFullPredictor, a));
        CHECK(m.contains(kGlobalPredictor, a));
      }
    }
  }
  CHECK(prune_masks(random_ranking(5, 1), 16) == AttributeMask::full(5));
  CHECK_THROWS_AS(prune_masks(random_ranking(5, 1), 2), ConfigError);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.d = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.d = 17;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.partial_mix = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("ranking file round trip") {
  const auto dir = scratch("ranking");
  const std::vector<std::string> names = {"a", "b", "c"};
  const auto r = random_ranking(3, 4);
  write_ranking_file(dir / "r.csv", r, names);
  const auto back = read_ranking_file(dir / "r.csv", names);
  CHECK(back.order == r.order);
  CHECK(back.accuracy == r.accuracy);
  CHECK_THROWS_AS(read_ranking_file(dir / "none.csv", names), MissingInput);
}

TEST_CASE("ranking needs validation images") {
  ScoreMatrix empty;
  empty.num_attributes = 2;
  CHECK_THROWS_AS(rank_predictors(empty, {}, AttributeMask::full(2)), EmptyValidationSet);
}

TEST_CASE("checkpoints") {
  const Dataset d = load_dataset(small_dataset());
  const auto cfg = tiny_config();
  auto model = fresh_model(d, cfg);
  nn::AdamState<float> adam;
  train_epochs(model, adam, d, cfg, 1, 1);
  const CheckpointMeta meta{1, 1, cfg.seed};
  const auto bytes = serialize_checkpoint(model, &adam, meta);

  auto loaded = deserialize_checkpoint(bytes);
  CHECK(loaded.meta == meta);
  REQUIRE(loaded.adam);
  CHECK(loaded.adam->step == adam.step);
  CHECK(serialize_checkpoint(*loaded.model, &*loaded.adam, loaded.meta) == bytes);
  CHECK(loaded.model->attribute_names() == model.attribute_names());
  CHECK(loaded.model->priors() == model.priors());

  const auto items = d.indices(Split::test);
  const auto batch = assemble_batch(d, items);
  const auto a = model.infer(batch.input);
  const auto b = loaded.model->infer(batch.input);
  for (int i = 0; i < kPredictorCount; ++i) CHECK(a.scores[i] == b.scores[i]);

  SUBCASE("corruption") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x40;
    CHECK_THROWS_AS(deserialize_checkpoint(bad), CorruptCheckpoint);
    auto version = bytes;
    version[4] = 99;
    CHECK_THROWS_AS(deserialize_checkpoint(version), CorruptCheckpoint);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK_THROWS_AS(deserialize_checkpoint(magic), CorruptCheckpoint);
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 100);
    CHECK_THROWS_AS(deserialize_checkpoint(cut), CorruptCheckpoint);
    CHECK_THROWS_AS(load_checkpoint(scratch("ckpt") / "missing.ckpt"), MissingInput);
  }
  SUBCASE("file round trip and pruned heads") {
    const auto dir = scratch("ckpt");
    AttributeMask pruned = AttributeMask::full(6);
    pruned.attributes[2] = {0, 4};
    pruned.attributes[9] = {};
    model.prune_heads(pruned, &adam);
    save_checkpoint(dir / "c.ckpt", model, &adam, meta);
    auto back = load_checkpoint(dir / "c.ckpt");
    CHECK(back.model->mask() == pruned);
    save_checkpoint(dir / "c2.ckpt", *back.model, &*back.adam, back.meta);
    CHECK(slurp(dir / "c.ckpt") == slurp(dir / "c2.ckpt"));
    save_checkpoint(dir / "noadam.ckpt", model, nullptr, meta);
    CHECK(!load_checkpoint(dir / "noadam.ckpt").adam);
  }
}

TEST_CASE("training lowers the loss and is reproducible") {
  const Dataset d = load_dataset(small_dataset());
  auto cfg = tiny_config();
  cfg.flip_probability = 0;
  cfg.partial_mix = 0;
  cfg.segment_dropout = 0;
  cfg.learning_rate = 3e-3;

  auto run = [&] {
    auto m = fresh_model(d, cfg);
    nn::AdamState<float> adam;
    std::vector<std::string> lines;
    TrainHooks hooks;
    hooks.log = [&](const std::string& s) { lines.push_back(s); };
    auto h = train_epochs(m, adam, d, cfg, 1, 6, 1, hooks);
    return std::make_tuple(h, serialize_checkpoint(m, &adam, {1, 6, cfg.seed}), lines);
  };
  const auto [h1, bytes1, log1] = run();
  const auto [h2, bytes2, log2] = run();
  REQUIRE(h1.epochs.size() == 6);
  CHECK(h1.batch_losses.size() == 18);
  for (double l : h1.batch_losses) CHECK(std::isfinite(l));
  CHECK(h1.epochs.back().train_loss < h1.epochs.front().train_loss);
  CHECK(h1.batch_losses == h2.batch_losses);
  CHECK(bytes1 == bytes2);
  CHECK(log1 == log2);
  REQUIRE(!log1.empty());
  CHECK(log1.front().rfind("stage=1 epoch=1 split=train loss=", 0) == 0);
}

TEST_CASE("stage 2 trains pruned heads") {
  const Dataset d = load_dataset(small_dataset());
  const auto cfg = tiny_config();
  auto model = fresh_model(d, cfg);
  nn::AdamState<float> adam;
  train_stage1(model, adam, d, cfg);

  const auto val = d.indices(Split::val);
  const auto scores = score_dataset(model, d, val, cfg.eval_batch_size);
  CHECK(scores.rows.size() == val.size());
  const auto ranking = rank_predictors(scores, labels_of(d, val), model.mask());
  REQUIRE(ranking.order.size() == 6);
  for (const auto& o : ranking.order) CHECK(o.size() == kPredictorCount);

  const auto pruned = prune_masks(ranking, 3);
  train_stage2(model, adam, pruned, d, cfg);
  CHECK(model.mask() == pruned);
  const auto after = score_dataset(model, d, val, cfg.eval_batch_size);
  for (int i = 0; i < kPredictorCount; ++i)
    for (int a = 0; a < 6; ++a) CHECK(std::isnan(after.rows[0].scores[i][a]) == !pruned.contains(i, a));
}
