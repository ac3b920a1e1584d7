#include <doctest.h>

#include <cmath>

#include "salnet/autograd.hpp"
#include "salnet/checkpoint.hpp"
#include "salnet/train.hpp"
#include "test_util.hpp"

using namespace salnet;
using test::TempDir;

namespace {

ModelConfig tiny_config(double scale = 0.0625) {
  ModelConfig c;
  c.channel_scale = scale;
  return c;
}

// One in-memory sample: white square on black, mask marks the square.
Sample square_sample(int size) {
  ImageBuffer image, mask;
  test::make_square_fixture(size, size / 4, size / 4, size / 2, &image, &mask);
  Sample s;
  s.image = normalize(image);
  s.mask = gray_to_tensor(mask);
  return s;
}

}  // namespace

TEST_CASE("l1_loss: identity, constant offset, and a hand-computed case") {
  Rng rng(70);
  Tensor p = test::random_tensor(rng, 1, 1, 4, 4, 0.0f, 1.0f);
  CHECK(l1_loss(p, p) == 0.0);

  Tensor half(2, 1, 3, 3, 0.5f);
  Tensor ones(2, 1, 3, 3, 1.0f);
  CHECK(l1_loss(half, ones) == doctest::Approx(0.5));

  Tensor pred = Tensor::from(1, 1, 2, 2, {0.2f, 0.8f, 0.6f, 0.4f});
  Tensor gt = Tensor::from(1, 1, 2, 2, {0.0f, 1.0f, 1.0f, 0.0f});
  CHECK(l1_loss(pred, gt) == doctest::Approx(0.3).epsilon(1e-7));
}

TEST_CASE("l1_loss: bounded in [0,1] for gt in [0,1] and predictions in (0,1)") {
  Rng rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = test::random_tensor(rng, 1, 1, 5, 5, 1e-6f, 1.0f - 1e-6f);
    Tensor g = test::random_tensor(rng, 1, 1, 5, 5, 0.0f, 1.0f);
    const double loss = l1_loss(p, g);
    CHECK(loss >= 0.0);
    CHECK(loss <= 1.0);
  }
}

TEST_CASE("l1_loss: shape mismatch raises") {
  CHECK_THROWS_AS(l1_loss(Tensor(1, 1, 2, 2), Tensor(1, 1, 2, 3)), DimensionError);
}

TEST_CASE("l1_loss gradient: sign of the residual over pixel count") {
  Rng rng(72);
  Tensor pred = test::random_tensor(rng, 2, 1, 3, 3, 0.1f, 0.9f);
  Tensor gt(2, 1, 3, 3);
  for (std::int64_t i = 0; i < gt.size(); ++i) gt[i] = rng.uniform() < 0.5f ? 0.0f : 1.0f;

  Tape tape;
  Var vp = tape.leaf(pred);
  Var loss = l1_loss(tape, vp, gt);
  tape.run_backward(loss, Tensor(1, 1, 1, 1, 1.0f));
  Tensor g = tape.grad(vp);
  const float unit = 1.0f / static_cast<float>(pred.size());
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const float expect = pred[i] > gt[i] ? unit : (pred[i] < gt[i] ? -unit : 0.0f);
    CHECK(g[i] == expect);
    // Finite-difference cross-check away from the kink.
    Tensor bumped = pred;
    bumped[i] += 1e-3f;
    const double fd = (l1_loss(bumped, gt) - l1_loss(pred, gt)) / 1e-3;
    CHECK(std::abs(fd - expect) < 1e-3);
  }
}

TEST_CASE("adam: matches a scalar reference for 100 randomized steps") {
  Rng rng(73);
  const AdamConfig cfg{0.01f, 0.9f, 0.999f, 1e-8f};

  ParamStore store;
  store.add("w", Tensor(1, 1, 1, 1, 0.7f));
  AdamState adam(cfg);

  // Reference mirrors the storage contract: moments in double, the parameter
  // itself rounded to float32 after every step.
  float ref_p = 0.7f;
  double ref_m = 0.0, ref_v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const float g = rng.uniform(-2.0f, 2.0f);
    store.grad("w")[0] = g;
    adam.step(store);

    ref_m = cfg.beta1 * ref_m + (1.0 - cfg.beta1) * g;
    ref_v = cfg.beta2 * ref_v + (1.0 - cfg.beta2) * static_cast<double>(g) * g;
    const double m_hat = ref_m / (1.0 - std::pow(cfg.beta1, t));
    const double v_hat = ref_v / (1.0 - std::pow(cfg.beta2, t));
    ref_p = static_cast<float>(ref_p - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon));

    const double got = store.value("w")[0];
    CHECK(std::abs(got - ref_p) <= 1e-7 * std::max(1.0, std::abs(static_cast<double>(ref_p))));
  }
  CHECK(adam.step_count() == 100);
}

TEST_CASE("adam: zero gradient is a fixed point") {
  ParamStore store;
  store.add("w", Tensor(1, 2, 1, 1, 1.5f));
  AdamState adam(AdamConfig{0.1f, 0.9f, 0.999f, 1e-8f});
  for (int i = 0; i < 5; ++i) adam.step(store);
  CHECK(store.value("w")[0] == 1.5f);
  CHECK(store.value("w")[1] == 1.5f);
}

TEST_CASE("adam: bias-corrected first step moves by about lr in the gradient direction") {
  ParamStore store;
  store.add("w", Tensor(1, 1, 1, 1, 0.0f));
  store.grad("w")[0] = 0.37f;  // any nonzero gradient
  const float lr = 0.001f;
  AdamState adam(AdamConfig{lr, 0.9f, 0.999f, 1e-8f});
  adam.step(store);
  CHECK(store.value("w")[0] == doctest::Approx(-lr).epsilon(1e-3));
}

TEST_CASE("adam: frozen parameters stay bitwise untouched") {
  ParamStore store;
  store.add("frozen.w", Tensor(1, 1, 1, 1, 0.25f));
  store.add("live.w", Tensor(1, 1, 1, 1, 0.25f));
  store.freeze_prefix("frozen.");
  store.grad("frozen.w")[0] = 1.0f;
  store.grad("live.w")[0] = 1.0f;
  AdamState adam(AdamConfig{0.01f, 0.9f, 0.999f, 1e-8f});
  adam.step(store);
  CHECK(store.value("frozen.w")[0] == 0.25f);
  CHECK(store.value("live.w")[0] != 0.25f);
  CHECK(adam.moments1().count("frozen.w") == 0);
}

TEST_CASE("fit: empty dataset is a usage error") {
  auto [model, params] = Model::build(tiny_config(), 20);
  MemoryDataset empty({});
  CHECK_THROWS_AS(fit(model, params, empty, TrainConfig{}), UsageError);
}

TEST_CASE("fit: lr 0 leaves the loss sequence constant") {
  auto [model, params] = Model::build(tiny_config(), 21);
  MemoryDataset data({square_sample(32)});
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 1;
  cfg.adam.lr = 0.0f;
  auto log = fit(model, params, data, cfg);
  REQUIRE(log.size() == 5);
  for (const auto& r : log) CHECK(r.loss == log[0].loss);
}

TEST_CASE("fit: equal seeds give identical loss sequences") {
  auto run = [] {
    auto [model, params] = Model::build(tiny_config(), 22);
    MemoryDataset data({square_sample(32), square_sample(32)});
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 2;
    cfg.adam.lr = 1e-3f;
    cfg.shuffle_seed = 5;
    return fit(model, params, data, cfg);
  };
  auto a = run();
  auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].loss == b[i].loss);
}

TEST_CASE("fit: partial final batch is trained, not dropped") {
  auto [model, params] = Model::build(tiny_config(), 23);
  std::vector<Sample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(square_sample(32));
  MemoryDataset data(samples);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;  // 5 samples -> batches of 2, 2, 1
  auto log = fit(model, params, data, cfg);
  CHECK(log.size() == 3);
  CHECK(log.back().step == 3);
}

TEST_CASE("fit: single-sample training memorizes through the full backward path") {
  // 200 steps at lr 1e-3 move each weight by at most ~0.2, so the strongest
  // claim testable at this budget is steady descent; the no-activation
  // decoder variant must additionally beat the best constant predictor
  // (loss 0.25 for a quarter-area target), which requires genuinely spatial
  // learning. See the acceptance suite for the strict 0.05 target.
  MemoryDataset data({square_sample(32)});
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.adam.lr = 1e-3f;

  auto [model, params] = Model::build(tiny_config(1.0 / 16.0), 24);
  auto log = fit(model, params, data, cfg);
  REQUIRE(log.size() == 200);
  CHECK(log.back().loss < log.front().loss - 0.05f);

  ModelConfig flat = tiny_config(1.0 / 16.0);
  flat.decoder_relu = false;
  auto [model2, params2] = Model::build(flat, 104);
  auto log2 = fit(model2, params2, data, cfg);
  CHECK(log2.back().loss < 0.23f);
}

TEST_CASE("fit: resumed training matches uninterrupted training per step") {
  MemoryDataset data({square_sample(32)});
  TrainConfig half;
  half.epochs = 25;
  half.batch_size = 1;
  half.adam.lr = 1e-3f;

  // Uninterrupted: 50 steps.
  auto [model_a, params_a] = Model::build(tiny_config(), 25);
  TrainConfig full = half;
  full.epochs = 50;
  AdamState adam_a(full.adam);
  auto log_a = fit(model_a, params_a, data, full, &adam_a);

  // Interrupted: 25 steps, checkpoint with optimizer state, 25 more.
  auto [model_b, params_b] = Model::build(tiny_config(), 25);
  AdamState adam_b(half.adam);
  auto log_b1 = fit(model_b, params_b, data, half, &adam_b);
  TempDir dir("resume");
  save_checkpoint(params_b, model_b.config(), &adam_b, dir.file("mid.fcnw"));

  LoadedCheckpoint loaded = load_checkpoint(dir.file("mid.fcnw"));
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->step_count() == 25);
  Model model_c(loaded.config);
  auto log_b2 = fit(model_c, loaded.params, data, half, &*loaded.optimizer);

  REQUIRE(log_a.size() == 50);
  REQUIRE(log_b1.size() + log_b2.size() == 50);
  for (std::size_t i = 0; i < 25; ++i) {
    CHECK(std::abs(log_a[i].loss - log_b1[i].loss) <= 1e-6f);
    CHECK(std::abs(log_a[25 + i].loss - log_b2[i].loss) <= 1e-6f);
  }
}

TEST_CASE("fit: checkpoint cadence writes a loadable rolling checkpoint") {
  auto [model, params] = Model::build(tiny_config(), 26);
  MemoryDataset data({square_sample(32)});
  TempDir dir("cadence");
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 1;
  cfg.checkpoint_every = 2;
  cfg.checkpoint_path = dir.file("roll.fcnw");
  fit(model, params, data, cfg);
  LoadedCheckpoint loaded = load_checkpoint(dir.file("roll.fcnw"));
  for (const std::string& n : params.names()) {
    CHECK(bitwise_equal(loaded.params.value(n), params.value(n)));
  }
}

TEST_CASE("log_to_csv: six decimal places") {
  std::vector<StepRecord> log = {{1, 1, 0.5f}, {1, 2, 0.25f}};
  CHECK(log_to_csv(log) == "epoch,step,loss\n1,1,0.500000\n1,2,0.250000\n");
}
