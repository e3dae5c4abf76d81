#include <doctest.h>

#include <cmath>
#include <vector>

#include "protomoco/contrastive.hpp"
#include "protomoco/encoder.hpp"
#include "testutil.hpp"

using namespace protomoco;
using namespace protomoco::contrastive;
using augment::AugmentationSpec;
using augment::ImageTensor;
using Tensorf = Tensor<float>;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.height = 12;
  cfg.width = 12;
  cfg.conv1_filters = 4;
  cfg.conv1_kernel = 3;
  cfg.conv2_filters = 6;
  cfg.conv2_kernel = 2;  // 12 -> 10 -> 5 -> 4 -> 2
  cfg.embed_dim = 8;
  cfg.head_hidden = 16;
  cfg.proj_dim = 8;
  return cfg;
}

std::vector<ImageTensor> tiny_images(int count, int size, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<ImageTensor> out;
  for (int i = 0; i < count; ++i) {
    ImageTensor img(1, size, size);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    out.push_back(std::move(img));
  }
  return out;
}

bool params_identical(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  if (a.names() != b.names()) return false;
  for (const auto& name : a.names()) {
    const auto& wa = a.weight(name);
    const auto& wb = b.weight(name);
    if (!wa.same_shape(wb)) return false;
    for (std::size_t i = 0; i < wa.size(); ++i) {
      if (wa[i] != wb[i]) return false;
    }
  }
  return true;
}

double sup_diff(const ParameterSet<float>& a, const ParameterSet<float>& b) {
  double worst = 0;
  for (const auto& name : a.names()) {
    const auto& wa = a.weight(name);
    const auto& wb = b.weight(name);
    for (std::size_t i = 0; i < wa.size(); ++i) {
      worst = std::max(worst, std::fabs(double(wa[i]) - double(wb[i])));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("encoder registers deterministic He-initialized parameters") {
  Encoder<float> enc(tiny_config());
  ParameterSet<float> a, b;
  enc.init_params(a, 42);
  enc.init_params(b, 42);
  CHECK(params_identical(a, b));
  CHECK(a.contains("enc.conv1"));
  CHECK(a.contains("enc.conv2"));
  CHECK(a.contains("enc.dense"));
  CHECK(a.contains("head.w1"));
  CHECK(a.contains("head.w2"));
  CHECK(a.weight("enc.dense").shape() == std::vector<int>{8, 6 * 2 * 2});

  ParameterSet<float> c;
  enc.init_params(c, 43);
  CHECK_FALSE(params_identical(a, c));
}

TEST_CASE("encoder validates geometry at construction") {
  EncoderConfig bad = tiny_config();
  bad.conv1_kernel = 13;  // larger than input
  CHECK_THROWS_AS(Encoder<float>{bad}, DimensionError);

  EncoderConfig odd = tiny_config();
  odd.height = odd.width = 11;  // 11 -> 9, not divisible by 2
  CHECK_THROWS_AS(Encoder<float>{odd}, DimensionError);
}

TEST_CASE("embed produces a column embedding and matches embed_value") {
  Encoder<float> enc(tiny_config());
  ParameterSet<float> ps;
  enc.init_params(ps, 7);
  SplitMix64 rng(3);
  auto img = testutil::random_tensor<float>({1, 12, 12}, rng, 0.0, 1.0);

  Tape<float> tape;
  auto h = enc.embed(tape, img, ps);
  CHECK(h.value().shape() == std::vector<int>{8, 1});
  auto v = enc.embed_value(img, ps);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == h.value()[i]);

  CHECK_THROWS_AS(enc.embed_value(Tensorf({1, 10, 10}), ps), DimensionError);
}

TEST_CASE("mlp encoder variant embeds and trains the same way") {
  EncoderConfig cfg = tiny_config();
  cfg.kind = EncoderConfig::Kind::Mlp;
  cfg.mlp_hidden = 16;
  Encoder<float> enc(cfg);
  ParameterSet<float> ps;
  enc.init_params(ps, 11);
  CHECK(ps.contains("enc.fc1"));
  CHECK(ps.contains("enc.fc2"));
  SplitMix64 rng(5);
  auto img = testutil::random_tensor<float>({1, 12, 12}, rng, 0.0, 1.0);
  auto v = enc.embed_value(img, ps);
  CHECK(v.shape() == std::vector<int>{8, 1});
  CHECK(v.all_finite());
}

TEST_CASE("encoder gradients flow end to end through the projection head") {
  Encoder<float> enc(tiny_config());
  ParameterSet<float> ps;
  enc.init_params(ps, 19);
  SplitMix64 rng(23);
  auto img = testutil::random_tensor<float>({1, 12, 12}, rng, 0.0, 1.0);

  Tape<float> tape;
  auto h = enc.embed(tape, img, ps);
  auto z = project(h, tape.param("head.w1", ps), tape.param("head.w2", ps));
  auto loss = dot(z, z);
  ps.zero_grads();
  tape.backward(loss, ps);
  double conv1_grad = 0;
  for (std::size_t i = 0; i < ps.grad("enc.conv1").size(); ++i) {
    conv1_grad += std::fabs(ps.grad("enc.conv1")[i]);
  }
  CHECK(conv1_grad > 0.0);
}

TEST_CASE("warmup_queue fills deterministically from the key encoder") {
  Encoder<float> enc(tiny_config());
  MomentumPair<float> pair;
  enc.init_params(pair.theta_q, 1);
  enc.init_params(pair.theta_k, 1);
  auto images = tiny_images(10, 12, 55);
  PretrainConfig cfg;
  cfg.batch = 4;
  AugmentationSpec spec;

  KeyQueue<float> a(32), b(32);
  warmup_queue(images, enc, pair.theta_k, a, spec, cfg, 42);
  warmup_queue(images, enc, pair.theta_k, b, spec, cfg, 42);
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t d = 0; d < a.entries()[i].size(); ++d) {
      CHECK(a.entries()[i][d] == b.entries()[i][d]);
    }
  }
}

TEST_CASE("pretrain_epoch trains the query side and bounds the key drift") {
  Encoder<float> enc(tiny_config());
  MomentumPair<float> pair;
  pair.m = 0.999;
  enc.init_params(pair.theta_q, 2);
  enc.init_params(pair.theta_k, 3);  // distinct start, drift must stay bounded
  auto images = tiny_images(4, 12, 77);

  PretrainConfig cfg;
  cfg.batch = 4;  // one step per epoch
  cfg.queue_capacity = 8;
  cfg.sgd.learning_rate = 0.05;
  cfg.sgd.momentum = 0.9;
  cfg.sgd.weight_decay = 1e-4;
  AugmentationSpec spec;

  KeyQueue<float> queue(cfg.queue_capacity);
  warmup_queue(images, enc, pair.theta_k, queue, spec, cfg, 42);

  ParameterSet<float> q_before = pair.theta_q;
  ParameterSet<float> k_before = pair.theta_k;
  auto metrics = pretrain_epoch(images, enc, pair, queue, spec, cfg, 0, 42);

  CHECK(std::isfinite(metrics.mean_loss));
  CHECK(sup_diff(pair.theta_q, q_before) > 0.0);

  // Single momentum step: |dk| = (1-m) |q_after - k_before| in sup norm.
  const double bound = (1.0 - pair.m) * sup_diff(pair.theta_q, k_before);
  CHECK(sup_diff(pair.theta_k, k_before) <= bound + 1e-7);
}

TEST_CASE("m equal to one freezes the key encoder bit-exactly over an epoch") {
  Encoder<float> enc(tiny_config());
  MomentumPair<float> pair;
  pair.m = 1.0;
  enc.init_params(pair.theta_q, 2);
  enc.init_params(pair.theta_k, 2);
  auto images = tiny_images(8, 12, 88);

  PretrainConfig cfg;
  cfg.batch = 4;
  cfg.sgd.learning_rate = 0.05;
  AugmentationSpec spec;
  KeyQueue<float> queue(16);
  warmup_queue(images, enc, pair.theta_k, queue, spec, cfg, 1);

  ParameterSet<float> k_before = pair.theta_k;
  pretrain_epoch(images, enc, pair, queue, spec, cfg, 0, 1);
  CHECK(params_identical(pair.theta_k, k_before));
}

TEST_CASE("zero learning rate and frozen momentum change no parameter") {
  Encoder<float> enc(tiny_config());
  MomentumPair<float> pair;
  pair.m = 1.0;
  enc.init_params(pair.theta_q, 4);
  enc.init_params(pair.theta_k, 4);
  auto images = tiny_images(6, 12, 99);

  PretrainConfig cfg;
  cfg.batch = 3;
  cfg.sgd.learning_rate = 0.0;
  cfg.sgd.momentum = 0.0;
  cfg.sgd.weight_decay = 0.0;
  AugmentationSpec spec;
  KeyQueue<float> queue(8);

  ParameterSet<float> q_before = pair.theta_q;
  ParameterSet<float> k_before = pair.theta_k;
  pretrain_epoch(images, enc, pair, queue, spec, cfg, 0, 5);
  CHECK(params_identical(pair.theta_q, q_before));
  CHECK(params_identical(pair.theta_k, k_before));
}

TEST_CASE("pretrain_epoch is deterministic given config and seed") {
  auto run = [] {
    Encoder<float> enc(tiny_config());
    MomentumPair<float> pair;
    enc.init_params(pair.theta_q, 6);
    enc.init_params(pair.theta_k, 6);
    auto images = tiny_images(8, 12, 101);
    PretrainConfig cfg;
    cfg.batch = 4;
    cfg.sgd.learning_rate = 0.03;
    AugmentationSpec spec;
    KeyQueue<float> queue(16);
    warmup_queue(images, enc, pair.theta_k, queue, spec, cfg, 9);
    auto m0 = pretrain_epoch(images, enc, pair, queue, spec, cfg, 0, 9);
    auto m1 = pretrain_epoch(images, enc, pair, queue, spec, cfg, 1, 9);
    return std::make_tuple(m0.mean_loss, m1.mean_loss, pair.theta_q.weight("enc.dense"));
  };
  auto [l0a, l1a, wa] = run();
  auto [l0b, l1b, wb] = run();
  CHECK(l0a == l0b);
  CHECK(l1a == l1b);
  for (std::size_t i = 0; i < wa.size(); ++i) CHECK(wa[i] == wb[i]);
}
