#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ppgglu/model.hpp"
#include "ppgglu/rng.hpp"
#include "support/grad_check.hpp"

using namespace ppgglu;
namespace fs = std::filesystem;

namespace {

// small enough to keep gradient checks fast
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.window_len = 30;
  cfg.cnn_a = {3, 4};
  cfg.cnn_b = {5, 4};
  cfg.gru_layers = {8, 6};
  cfg.branch_fc = {8, 6, 4};
  cfg.seed = 21;
  return cfg;
}

std::vector<Window> random_batch(std::size_t count, std::size_t len,
                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Window> out;
  for (std::size_t i = 0; i < count; ++i) {
    Window w;
    w.glucose_mgdl = rng.uniform(80.0, 180.0);
    w.provenance = "rand" + std::to_string(i);
    for (std::size_t j = 0; j < len; ++j) w.values.push_back(rng.next_double());
    out.push_back(w);
  }
  return out;
}

}  // namespace

TEST_CASE("build validates config") {
  ModelConfig bad = tiny_config();
  bad.cnn_a.kernel = 4;
  CHECK_THROWS_AS(build(bad), InvalidConfig);
  bad = tiny_config();
  bad.gru_layers.clear();
  CHECK_THROWS_AS(build(bad), InvalidConfig);
  bad = tiny_config();
  bad.branch_fc = {0};
  CHECK_THROWS_AS(build(bad), InvalidConfig);
}

TEST_CASE("build is deterministic in the seed") {
  HybridModel m1 = build(tiny_config());
  HybridModel m2 = build(tiny_config());
  auto p1 = m1.parameters(), p2 = m2.parameters();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i]->values() == p2[i]->values());

  ModelConfig other = tiny_config();
  other.seed = 22;
  HybridModel m3 = build(other);
  CHECK(m3.parameters()[0]->values() != p1[0]->values());
}

TEST_CASE("default config parameter count matches the shape audit") {
  ModelConfig cfg;  // defaults: 300 window, 32 filters, gru 64/32, fc 64/32/16
  HybridModel model = build(cfg);

  // independent audit from the config arithmetic
  auto conv_branch = [](std::size_t k, std::size_t f) { return f * k + 3 * f; };
  auto fc_stack = [&](std::size_t in) {
    std::size_t n = 0;
    for (auto out : cfg.branch_fc) {
      n += in * out + out;
      in = out;
    }
    return n;
  };
  auto gru_layer = [](std::size_t in, std::size_t h) {
    return 3 * (in * h + h * h + h);
  };
  const std::size_t flat = cfg.cnn_a.filters * (cfg.window_len / 2);
  const std::size_t expected = conv_branch(5, 32) + conv_branch(11, 32) +
                               2 * fc_stack(flat) + gru_layer(1, 64) +
                               gru_layer(64, 32) + fc_stack(32) + (48 + 1);
  CHECK(model.parameter_count() == expected);
  CHECK(model.parameter_count() == 647201);  // frozen audit result

  // branch flatten length: filters * (window_len / 2) = 4800
  CHECK(flat == 4800);
}

TEST_CASE("flatten length follows window_len for any even window") {
  for (std::size_t w : {40u, 60u, 100u}) {
    ModelConfig cfg = tiny_config();
    cfg.window_len = w;
    HybridModel model = build(cfg);
    // parameters(): 8 conv tensors, then fc_a weights[0] at index 8
    CHECK(model.parameters()[8]->dim(0) == cfg.cnn_a.filters * (w / 2));
    auto preds = model.predict(random_batch(2, w, 3));
    CHECK(preds.size() == 2);
  }
}

TEST_CASE("forward shape contract and determinism") {
  HybridModel model = build(tiny_config());
  auto batch = random_batch(4, 30, 5);
  auto preds = model.predict(batch);
  REQUIRE(preds.size() == 4);
  for (double p : preds) CHECK(std::isfinite(p));

  // duplicate window in eval mode predicts identically
  auto dup = batch;
  dup.push_back(batch[1]);
  auto preds2 = model.predict(dup);
  CHECK(preds2[4] == preds2[1]);

  // wrong window length
  auto bad = random_batch(2, 31, 6);
  CHECK_THROWS_AS(model.predict(bad), ShapeMismatch);
}

TEST_CASE("eval forward is batch-order equivariant") {
  HybridModel model = build(tiny_config());
  auto batch = random_batch(6, 30, 7);
  auto preds = model.predict(batch);
  const std::vector<std::size_t> perm = {3, 0, 5, 1, 4, 2};
  std::vector<Window> shuffled;
  for (auto i : perm) shuffled.push_back(batch[i]);
  auto preds_perm = model.predict(shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i)
    CHECK(preds_perm[i] == preds[perm[i]]);
}

TEST_CASE("no dead branch: every parameter group receives gradient") {
  HybridModel model = build(tiny_config());
  auto batch = random_batch(4, 30, 8);
  Tensor targets({4, 1}, {100, 120, 140, 160});
  model.zero_grad();
  Tape tape;
  Tensor loss = mse_loss(&tape, model.forward(batch, &tape, true), targets);
  tape.backward(loss);
  for (Tensor* p : model.parameters()) {
    double norm = 0.0;
    for (double g : p->grad()) norm += g * g;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("full model gradients match finite differences on a slice") {
  HybridModel model = build(tiny_config());
  auto batch = random_batch(3, 30, 9);
  Tensor targets({3, 1}, {100, 130, 150});
  auto fwd = [&](Tape* t) {
    return mse_loss(t, model.forward(batch, t, true), targets);
  };
  auto params = model.parameters();
  // one coordinate from every kind of layer across all three branches
  std::vector<std::pair<Tensor*, std::size_t>> coords = {
      {params[0], 0},                        // conv A kernel
      {params[2], 1},                        // conv A gamma
      {params[4], 2},                        // conv B kernel
      {params[7], 3},                        // conv B beta
      {params[8], 5},                        // fc A weight
      {params[9], 0},                        // fc A bias
      {params[20], 1},                       // gru layer 1 W_z
      {params[26], 0},                       // gru layer 1 b_z
      {params[38], 2},                       // fc C weight
      {params[params.size() - 2], 0},        // head weight
  };
  auto res = gradcheck::check_slice(coords, [&] { model.zero_grad(); }, fwd);
  CHECK(res.checked == 10);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("save / load round trip") {
  const fs::path path = fs::temp_directory_path() / "ppgglu_model_test.bin";
  HybridModel model = build(tiny_config());
  auto batch = random_batch(3, 30, 10);
  // exercise the batchnorm running stats so they are non-trivial
  Tape tape;
  model.forward(batch, &tape, true);
  const auto before = model.predict(batch);

  model.save(path);
  HybridModel loaded = HybridModel::load(path);
  CHECK(loaded.predict(batch) == before);
  CHECK(loaded.config().window_len == 30);

  // truncation breaks the checksum
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 17);
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(HybridModel::load(path), ChecksumMismatch);

  // bumped version byte in the magic
  model.save(path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(7);
    f.put('2');  // PPGGLU01 -> PPGGLU02
  }
  CHECK_THROWS_AS(HybridModel::load(path), FormatVersionMismatch);
  fs::remove(path);
}
