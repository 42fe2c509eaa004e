#include <doctest.h>

#include <fstream>
#include <set>

#include "malis/trainer.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace malis;

namespace {

/// Bottleneck value by threshold search: the largest edge weight w such that
/// i and j are connected using edges of weight >= w.
float bottleneck(const EdgeList& g, std::uint32_t i, std::uint32_t j) {
  std::set<float> weights;
  for (const auto& e : g.edges) weights.insert(e.weight);
  for (auto it = weights.rbegin(); it != weights.rend(); ++it) {
    EdgeList kept{g.node_count, {}};
    for (const auto& e : g.edges)
      if (e.weight >= *it) kept.edges.push_back(e);
    const auto comp = oracle::bfs_components(kept);
    if (comp[i] == comp[j]) return *it;
  }
  return -1.0f;
}

TrainConfig small_config(TrainMode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.arch = Architecture{2, 1, 2, 3};
  cfg.window = 6;
  cfg.iterations = 50;
  cfg.snapshot_every = 10;
  return cfg;
}

CorpusItem small_item(std::uint64_t seed, std::vector<std::uint32_t> dims, std::uint32_t n_seeds) {
  SynthConfig s;
  s.dims = std::move(dims);
  s.n_seeds = n_seeds;
  s.boundary_width = 1.0;
  s.seed = seed;
  return make_corpus(s, 1)[0];
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.learning_rate = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.window = cfg.arch.field_of_view() - 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.pretrain_iterations = cfg.iterations + 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  const auto item = small_item(1, {16, 16}, 3);
  cfg = TrainConfig{};
  cfg.iterations = 1;
  cfg.window = 32;
  CHECK_THROWS_AS(train(cfg, std::span(&item, 1)), ConfigError);
  CHECK_THROWS_AS(train(small_config(TrainMode::Standard), std::span<const CorpusItem>{}), ConfigError);
  CHECK(parse_train_mode("malis") == TrainMode::Malis);
  CHECK_THROWS(parse_train_mode("adam"));
}

TEST_CASE("pair sampler") {
  const auto row = oracle::row_labels({1, 1, 2, 2});
  Rng rng(1);
  int connected = 0;
  const int draws = 60000;
  for (int n = 0; n < draws; ++n) {
    const auto s = pair_sampler(row, rng, false);
    CHECK(s.i != s.j);
    CHECK(s.target == (row[s.i] == row[s.j] ? 1 : 0));
    connected += s.target;
  }
  // P(target 1) = 2/6, binomial sd about 0.002
  CHECK(std::abs(static_cast<double>(connected) / draws - 2.0 / 6.0) < 0.01);

  const auto single = oracle::row_labels({0, 4, 4, 4, 0});
  for (int n = 0; n < 100; ++n) {
    const auto s = pair_sampler(single, rng, true);
    CHECK(s.target == 1);
    CHECK(single[s.i] == 4);
    CHECK(single[s.j] == 4);
  }

  // mostly-disconnected window: 10 singleton labels and one pair
  const auto sparse = oracle::row_labels({1, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  int balanced = 0;
  for (int n = 0; n < 10000; ++n) balanced += pair_sampler(sparse, rng, true).target;
  CHECK(std::abs(balanced / 10000.0 - 0.5) < 0.05);

  CHECK_THROWS(pair_sampler(oracle::row_labels({0, 0, 3}), rng, false));
}

TEST_CASE("standard step") {
  const auto item = small_item(2, {12, 12}, 3);
  const TrainConfig cfg = small_config(TrainMode::Standard);
  const TrainingImage image(item.image, item.truth, cfg.arch.radius());

  SUBCASE("margin-satisfied sample leaves parameters unchanged") {
    // huge positive bias on both output maps: every affinity is ~1
    Params32 params(cfg.arch);
    params.flat()[params.bias_offset(0)] = 50.0f;
    params.flat()[params.bias_offset(0) + 1] = 50.0f;
    const Params32 before = params;
    Rng rng(3);
    int satisfied = 0;
    for (int n = 0; n < 50; ++n) {
      const auto step = standard_step(params, image, rng, cfg);
      if (step.target == 1) {
        ++satisfied;
        CHECK(step.loss == 0.0);
        CHECK_FALSE(step.updated);
      }
      params = before;
    }
    CHECK(satisfied > 0);
  }
  SUBCASE("fixed seed gives an identical trajectory") {
    Rng init(4);
    const Params32 start = Params32::random(cfg.arch, init);
    Params32 a = start, b = start;
    Rng ra(5), rb(5);
    for (int n = 0; n < 200; ++n) {
      const auto sa = standard_step(a, image, ra, cfg);
      const auto sb = standard_step(b, image, rb, cfg);
      CHECK(sa.edge_id == sb.edge_id);
    }
    CHECK(a == b);
  }
  SUBCASE("targets follow the groundtruth affinity") {
    Params32 params(cfg.arch);
    Rng rng(6);
    const auto gt = groundtruth_affinities(item.truth);
    for (int n = 0; n < 200; ++n) {
      const auto step = standard_step(params, image, rng, cfg);
      const auto d = static_cast<std::uint32_t>(step.edge_id / item.truth.shape().size());
      const std::size_t i = step.edge_id % item.truth.shape().size();
      CHECK(gt.valid(d, i));
      CHECK(step.target == static_cast<int>(gt.affinity(d, i)));
      CHECK(step.pixel_i == i);
      CHECK(step.pixel_j == i + item.truth.shape().stride(d));
    }
  }
}

TEST_CASE("single-edge toy problem converges") {
  // a 1x2 image has exactly one edge, between two different cells
  const Image image(Shape({1, 2}), {0.8f, 0.3f});
  const Segmentation truth(Shape({1, 2}), {1, 2});
  TrainConfig cfg;
  cfg.arch = Architecture{2, 1, 1, 1};
  cfg.window = 1;
  cfg.learning_rate = 0.1;
  const TrainingImage ti(image, truth, cfg.arch.radius());
  Rng rng(7);
  Params32 params = Params32::random(cfg.arch, rng);
  double loss = 1.0;
  int steps = 0;
  while (steps < 500) {
    const auto step = standard_step(params, ti, rng, cfg);
    ++steps;
    CHECK(step.target == 0);
    loss = loss_value(cfg.loss, 0, forward_patch(params, ti.padded.patch(0), 1));
    if (loss < 1e-3) break;
  }
  CHECK(loss < 1e-3);
  CHECK(steps <= 500);
}

TEST_CASE("MALIS step on a two-segment row selects the boundary edge") {
  // uniform row split into two segments at x = 4|5
  const std::uint32_t n = 9;
  std::vector<float> pixels(n, 0.8f);
  std::vector<std::uint32_t> labels(n);
  for (std::uint32_t x = 0; x < n; ++x) labels[x] = x < 5 ? 1 : 2;
  const Image image(Shape({1, n}), pixels);
  const Segmentation truth(Shape({1, n}), labels);

  TrainConfig cfg;
  cfg.arch = Architecture{2, 1, 1, 1};
  cfg.window = n;
  cfg.learning_rate = 0.05;
  const TrainingImage ti(image, truth, 0);
  Rng rng(8);
  Params32 params = Params32::random(cfg.arch, rng);
  const std::size_t boundary_edge = 1 * n + 4;
  int cross = 0;
  for (int it = 0; it < 100; ++it) {
    // every horizontal affinity is equal here, so ties are broken at random
    const auto g = forward_image(params, image);
    const auto step = malis_step(params, ti, rng, cfg);
    REQUIRE_FALSE(step.skipped);
    if (step.target == 0) {
      ++cross;
      // the maximin edge of a cross pair lies between the two pixels
      const std::uint32_t lo = std::min(step.pixel_i, step.pixel_j), hi = std::max(step.pixel_i, step.pixel_j);
      const std::size_t owner = step.edge_id % n;
      CHECK(owner >= lo);
      CHECK(owner < hi);
      CHECK(step.affinity == g.affinity(1, owner));
    }
  }
  CHECK(cross > 0);

  // with distinct pixel intensities the net can single out the boundary
  std::vector<float> varied(n, 0.9f);
  varied[4] = 0.1f;
  const Image contrast(Shape({1, n}), varied);
  const TrainingImage tc(contrast, truth, 0);
  // horizontal affinity at x reads pixel x only, so the dark pixel 4 owns the weakest link
  Params32 fixed(cfg.arch, {0.0f, 5.0f, 0.0f, -2.0f});
  const Params32 before = fixed;
  int selected = 0, cross_pairs = 0;
  for (int it = 0; it < 100; ++it) {
    fixed = before;
    const auto step = malis_step(fixed, tc, rng, cfg);
    if (step.target == 0 && step.pixel_i != 4 && step.pixel_j != 4) {
      ++cross_pairs;
      selected += step.edge_id == boundary_edge;
    }
  }
  CHECK(cross_pairs > 0);
  CHECK(selected == cross_pairs);

  // from a net that has not yet separated the segments, learning lowers the boundary affinity
  Params32 learned(cfg.arch, {0.0f, 1.0f, 0.0f, 0.0f});
  const double start = forward_image(learned, contrast).affinity(1, 4);
  for (int it = 0; it < 100; ++it) malis_step(learned, tc, rng, cfg);
  CHECK(forward_image(learned, contrast).affinity(1, 4) < start);
}

TEST_CASE("MALIS-selected edges are maximin edges") {
  std::mt19937_64 gen(9);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::uint32_t rows = std::uniform_int_distribution<std::uint32_t>(3, 6)(gen);
    const std::uint32_t cols = std::uniform_int_distribution<std::uint32_t>(3, 6)(gen);
    const auto truth = oracle::random_labels(gen, rows, cols, 3);
    std::vector<float> pixels(truth.shape().size());
    for (auto& p : pixels) p = std::uniform_real_distribution<float>(0.0f, 1.0f)(gen);
    const Image image(truth.shape(), pixels);
    TrainConfig cfg;
    cfg.arch = Architecture{2, 1, 2, 3};
    cfg.window = std::max(rows, cols);
    const TrainingImage ti(image, truth, cfg.arch.radius());
    Rng rng(trial);
    Params32 params = Params32::random(cfg.arch, rng);
    for (auto& w : params.flat()) w *= 4.0f;
    for (int step_no = 0; step_no < 5; ++step_no) {
      const auto edges = edge_list(forward_image(params, image));
      const auto step = malis_step(params, ti, rng, cfg);
      if (step.skipped) continue;
      CHECK(truth[step.pixel_i] != 0);
      CHECK(truth[step.pixel_j] != 0);
      CHECK(step.target == (truth[step.pixel_i] == truth[step.pixel_j] ? 1 : 0));
      CHECK(step.affinity == bottleneck(edges, step.pixel_i, step.pixel_j));
      const auto& e = edges.edges[std::find_if(edges.edges.begin(), edges.edges.end(), [&](const Edge& x) {
                                    return x.id == step.edge_id;
                                  }) - edges.edges.begin()];
      CHECK(e.weight == static_cast<float>(step.affinity));
      CHECK(oracle::is_maximin_edge(edges, step.pixel_i, step.pixel_j, e.u, e.v, e.weight));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("MALIS step with a satisfied margin does not update") {
  const auto item = small_item(3, {10, 10}, 2);
  TrainConfig cfg = small_config(TrainMode::Malis);
  cfg.window = 10;
  const TrainingImage ti(item.image, item.truth, cfg.arch.radius());
  Params32 params(cfg.arch);
  params.flat()[params.bias_offset(0)] = 50.0f;
  params.flat()[params.bias_offset(0) + 1] = 50.0f;
  const Params32 before = params;
  Rng rng(10);
  int seen = 0;
  for (int n = 0; n < 40; ++n) {
    const auto step = malis_step(params, ti, rng, cfg);
    if (step.target == 1) {
      ++seen;
      CHECK_FALSE(step.updated);
    }
    params = before;
  }
  CHECK(seen > 0);
}

TEST_CASE("training runs") {
  std::vector<CorpusItem> data;
  SynthConfig s;
  s.dims = {32, 32};
  s.n_seeds = 5;
  s.seed = 11;
  data = make_corpus(s, 2);

  SUBCASE("standard mode without pretraining equals the plain loop") {
    TrainConfig cfg;
    cfg.mode = TrainMode::Standard;
    cfg.iterations = 300;
    cfg.snapshot_every = 100;
    cfg.seed = 12;
    const auto result = train(cfg, data);

    Rng rng(cfg.seed);
    Params32 params = Params32::random(cfg.arch, rng);
    std::vector<TrainingImage> images;
    for (const auto& item : data) images.emplace_back(item.image, item.truth, cfg.arch.radius());
    for (std::uint64_t t = 0; t < cfg.iterations; ++t) {
      const auto& image = images[std::uniform_int_distribution<std::size_t>(0, images.size() - 1)(rng)];
      standard_step(params, image, rng, cfg);
    }
    CHECK(result.params == params);
    REQUIRE(result.log.size() == 3);
    CHECK(result.log[2].iteration == 300);
    CHECK(result.log[0].mode == TrainMode::Standard);
  }
  SUBCASE("same config twice is bit identical, including MALIS") {
    TrainConfig cfg;
    cfg.iterations = 60;
    cfg.pretrain_iterations = 20;
    cfg.snapshot_every = 20;
    const auto a = train(cfg, data);
    const auto b = train(cfg, data);
    CHECK(a.params == b.params);
    REQUIRE(a.log.size() == 3);
    CHECK(a.log[0].mode == TrainMode::Standard);
    CHECK(a.log[2].mode == TrainMode::Malis);
    for (std::size_t k = 0; k < a.log.size(); ++k) CHECK(a.log[k].mean_loss == b.log[k].mean_loss);
    cfg.seed = 2;
    CHECK_FALSE(train(cfg, data).params == a.params);
  }
  SUBCASE("window one past the field of view") {
    TrainConfig cfg;
    cfg.window = cfg.arch.field_of_view() + 1;
    cfg.iterations = 40;
    const auto result = train(cfg, data);
    CHECK(result.log.back().iteration == 40);
  }
  SUBCASE("initial parameters and snapshots") {
    TempDir dir;
    TrainConfig cfg;
    cfg.mode = TrainMode::Standard;
    cfg.iterations = 30;
    cfg.snapshot_every = 10;
    cfg.snapshot_dir = dir / "snaps";
    const Params32 zero(cfg.arch);
    const auto result = train(cfg, data, zero);
    CHECK(std::filesystem::exists(dir / "snaps" / "snapshot_000000010.mlwt"));
    CHECK(read_checkpoint(dir / "snaps" / "snapshot_000000030.mlwt") == result.params);
    cfg.arch.maps = 2;
    CHECK_THROWS_AS(train(cfg, data, zero), ConfigError);

    write_train_log(dir / "log.csv", result.log);
    std::ifstream in(dir / "log.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,mean_loss,mode,elapsed_s");
    std::getline(in, line);
    CHECK(line.rfind("10,", 0) == 0);
    CHECK(line.find(",standard,") != std::string::npos);
  }
}

TEST_CASE("desk-scale training lowers the loss") {
  SynthConfig s;
  s.seed = 13;
  const auto data = make_corpus(s, 4);
  TrainConfig cfg;
  cfg.mode = TrainMode::Standard;
  cfg.learning_rate = 0.2;
  cfg.iterations = 20000;
  cfg.snapshot_every = 2000;
  const auto standard = train(cfg, data);
  CHECK(standard.log.back().mean_loss < 0.5 * standard.log.front().mean_loss);

  cfg.mode = TrainMode::Malis;
  cfg.pretrain_iterations = 5000;
  const auto malis = train(cfg, data);
  CHECK(malis.skipped_iterations == 0);
  // the first MALIS record follows pretraining; compare it with the last one
  const auto first_malis = std::find_if(malis.log.begin(), malis.log.end(),
                                        [](const TrainRecord& r) { return r.mode == TrainMode::Malis; });
  REQUIRE(first_malis != malis.log.end());
  CHECK(malis.log.back().mean_loss <= first_malis->mean_loss);
}
