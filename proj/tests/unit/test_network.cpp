#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dafc/network.hpp"
#include "helpers.hpp"

using namespace dafc;
using testing::random_tensor;

namespace {

ArchConfig tiny_blob(std::size_t k = 4) { return ArchConfig::tiny(1, 1, 16, k); }

void zero_biases(ModelParams& m) {
  for (auto& p : m.params) {
    const bool bias = p.name.ends_with(".bias") || p.name.ends_with(".beta");
    if (bias) p.value.fill(0.0);
  }
}

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dafc_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tiny preset parameter count matches the layer list") {
  Rng rng(0);
  const ModelParams m = build_model(tiny_blob(), rng);
  // Input 1×1×16, two 3×3 conv blocks of 8 channels with batchnorm, FC 128→32→16,
  // mirrored decoder, head 16→4.
  const std::size_t conv1 = 1 * 8 * 9 + 8 + 2 * 8;
  const std::size_t conv2 = 8 * 8 * 9 + 8 + 2 * 8;
  const std::size_t flat = 8 * 16;
  const std::size_t enc_fc = flat * 32 + 32 + 32 * 16 + 16;
  const std::size_t dec_fc = 16 * 32 + 32 + 32 * flat + flat;
  const std::size_t dec_conv = (8 * 8 * 9 + 8 + 2 * 8) + (8 * 1 * 9 + 1);
  const std::size_t head = 16 * 4 + 4;
  CHECK(m.trainable_count() == conv1 + conv2 + enc_fc + dec_fc + dec_conv + head);
  CHECK(m.trainable_count() == 10861);
  CHECK(m.centroids().shape() == Shape{4, 16});
  CHECK_FALSE(m.at("centroids").trainable);
}

TEST_CASE("building twice with the same seed gives identical bytes") {
  Rng a(0), b(0), c(1);
  const ModelParams ma = build_model(tiny_blob(), a);
  const ModelParams mb = build_model(tiny_blob(), b);
  const ModelParams mc = build_model(tiny_blob(), c);
  REQUIRE(ma.params.size() == mb.params.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < ma.params.size(); ++i) {
    const auto& x = ma.params[i].value.vec();
    const auto& y = mb.params[i].value.vec();
    CHECK(std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0);
    any_diff |= ma.params[i].value != mc.params[i].value;
  }
  CHECK(any_diff);
}

TEST_CASE("invalid architectures are rejected with every violation listed") {
  ArchConfig a = tiny_blob();
  a.bottleneck = 2;  // below k
  a.dropout = 1.5;
  try {
    a.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("bottleneck") != std::string::npos);
    CHECK(what.find("dropout") != std::string::npos);
  }
  Rng rng(0);
  CHECK_THROWS_AS(build_model(a, rng), ConfigError);
  CHECK_THROWS_AS(ArchConfig::from_preset("huge", 1, 28, 28, 10), ConfigError);
}

TEST_CASE("reference preset round-trips a 28x28 image") {
  Rng rng(3);
  ModelParams m = build_model(ArchConfig::reference(1, 28, 28, 4), rng);
  const Tensor x = random_tensor({2, 1, 28, 28}, rng, 0.0, 1.0);
  const Tensor z = encode_eval(m, x);
  CHECK(z.shape() == Shape{2, m.arch.bottleneck});
  CHECK(decode_eval(m, z).shape() == Shape{2, 1, 28, 28});
}

TEST_CASE("encode and decode check their input shapes") {
  Rng rng(0);
  ModelParams m = build_model(tiny_blob(), rng);
  Tape t;
  CHECK_THROWS_AS(encode(t, m, t.constant(Tensor({2, 1, 1, 15})), {}), ShapeError);
  CHECK_THROWS_AS(decode(t, m, t.constant(Tensor({2, 15})), {}), ShapeError);
  CHECK_THROWS_AS(cluster_head(t, m, t.constant(Tensor({2, 3}))), ShapeError);
}

TEST_CASE("bias-free networks map zero to zero") {
  Rng rng(5);
  ModelParams m = build_model(tiny_blob(), rng);
  zero_biases(m);
  const Tensor z = encode_eval(m, Tensor({3, 1, 1, 16}));
  for (double v : z.data()) CHECK(v == 0.0);
  const Tensor x = decode_eval(m, Tensor({3, 16}));
  for (double v : x.data()) CHECK(v == 0.0);
}

TEST_CASE("eval-mode passes are repeatable and train mode differs") {
  Rng rng(6);
  ArchConfig a = tiny_blob();
  a.dropout = 0.5;
  ModelParams m = build_model(a, rng);
  const Tensor x = random_tensor({8, 1, 1, 16}, rng, 0.0, 1.0);
  const Tensor z1 = encode_eval(m, x), z2 = encode_eval(m, x);
  CHECK(z1 == z2);
  CHECK(decode_eval(m, z1) == decode_eval(m, z2));

  Tape t;
  Rng drop(1);
  const Tensor zt = encode(t, m, t.constant(x), {Mode::train, &drop, {}}).value();
  CHECK(zt != z1);
  Tape t2;
  CHECK_THROWS(encode(t2, m, t2.constant(x), {Mode::train, nullptr, {}}));
}

TEST_CASE("cluster head examples") {
  Rng rng(7);
  ModelParams m = build_model(ArchConfig::tiny(1, 1, 16, 2), rng);
  SUBCASE("rows lie on the simplex for random inputs") {
    for (int trial = 0; trial < 100; ++trial) {
      const Tensor z = random_tensor({5, 16}, rng, -20, 20);
      CHECK(testing::rows_on_simplex(head_eval(m, z), 1e-9));
    }
  }
  SUBCASE("zero weights give uniform rows") {
    m.at("head.weight").value.fill(0.0);
    m.at("head.bias").value.fill(0.0);
    const Tensor y = head_eval(m, random_tensor({3, 16}, rng));
    for (double v : y.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("logits [2, 0]") {
    m.at("head.weight").value.fill(0.0);
    m.at("head.bias").value = Tensor({2}, {2.0, 0.0});
    const Tensor y = head_eval(m, Tensor({1, 16}));
    CHECK(y[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(0.1192).epsilon(1e-3));
  }
}

TEST_CASE("encoder and reconstruction gradients match finite differences") {
  Rng rng(8);
  ModelParams m = build_model(tiny_blob(), rng);
  const Tensor x = random_tensor({4, 1, 1, 16}, rng, 0.0, 1.0);

  auto loss_of = [&](bool full) {
    Tape t;
    const ForwardContext ctx{Mode::train, nullptr, {}};
    Var z = encode(t, m, t.constant(x), ctx);
    if (!full) return std::pair{t.backward(ops::sum_squares(z)), ops::sum_squares(z).value().item()};
    Var xh = decode(t, m, z, ctx);
    Var loss = ops::scale(ops::sum_squares(ops::sub(xh, t.constant(x))), 0.25);
    return std::pair{t.backward(loss), loss.value().item()};
  };

  for (bool full : {false, true}) {
    m.zero_grad();
    loss_of(full);
    std::vector<std::pair<Parameter*, std::size_t>> picks;
    while (picks.size() < 10) {
      Parameter& p = m.params[rng.index(m.params.size())];
      if (!p.trainable || p.grad.empty()) continue;
      if (!full && !p.name.starts_with("enc.")) continue;
      picks.emplace_back(&p, rng.index(p.value.size()));
    }
    std::vector<double> analytic;
    for (auto [p, i] : picks) analytic.push_back(p->grad[i]);
    for (std::size_t n = 0; n < picks.size(); ++n) {
      auto [p, i] = picks[n];
      const double h = 1e-5, saved = p->value[i];
      p->value[i] = saved + h;
      m.zero_grad();
      const double up = loss_of(full).second;
      p->value[i] = saved - h;
      m.zero_grad();
      const double down = loss_of(full).second;
      p->value[i] = saved;
      CHECK(testing::rel_error(analytic[n], (up - down) / (2 * h)) < 1e-4);
    }
  }
}

TEST_CASE("shapes survive the round trip for generated architectures") {
  Rng rng(9);
  int built = 0;
  for (int trial = 0; trial < 200 && built < 40; ++trial) {
    ArchConfig a;
    a.in_c = 1 + rng.index(2);
    a.in_h = 4 + rng.index(12);
    a.in_w = 4 + rng.index(12);
    const std::size_t blocks = rng.index(3);
    for (std::size_t b = 0; b < blocks; ++b) {
      ConvBlock c;
      c.channels = 2 + rng.index(4);
      c.filter = 2 + rng.index(2);
      c.stride = 1;
      c.padding = 1;
      c.norm = rng.bernoulli(0.5);
      c.pool = static_cast<PoolKind>(rng.index(3));
      a.encoder.push_back(c);
    }
    a.fc_widths = {8 + rng.index(8)};
    a.clusters = 2 + rng.index(3);
    a.bottleneck = a.clusters + rng.index(4);
    a.dropout = 0.0;
    try {
      a.validate();
    } catch (const ConfigError&) {
      continue;  // pooling shrank the image below a window
    }
    ModelParams m = build_model(a, rng);
    const std::size_t B = 1 + rng.index(3);
    const Tensor x = random_tensor({B, a.in_c, a.in_h, a.in_w}, rng);
    const Tensor z = encode_eval(m, x);
    CHECK(z.shape() == Shape{B, a.bottleneck});
    CHECK(decode_eval(m, z).shape() == x.shape());
    ++built;
  }
  CHECK(built >= 20);
}

TEST_CASE("pretraining") {
  SUBCASE("constant images are fitted") {
    Rng rng(10);
    ModelParams m = build_model(tiny_blob(), rng);
    const Tensor x({256, 1, 1, 16}, 0.3);
    RmsProp opt(1e-4);
    const auto traj = pretrain_autoencoder(m, x, {200, 32, 0, data::AugmentPolicy::none}, opt);
    REQUIRE(traj.size() == 200);
    for (double l : traj) CHECK(std::isfinite(l));
    CHECK(traj.back() < 1e-3);
  }
  SUBCASE("blob reconstruction improves and runs repeat exactly") {
    const auto ds = data::synth_blobs({4, 25, 16, 1.0, 10.0, 0});
    auto run = [&] {
      Rng rng(11);
      ModelParams m = build_model(tiny_blob(), rng);
      const Tensor before = decode_eval(m, encode_eval(m, ds.images));
      RmsProp opt(1e-3);
      auto traj = pretrain_autoencoder(m, ds.images, {15, 32, 4, data::AugmentPolicy::none}, opt);
      const Tensor after = decode_eval(m, encode_eval(m, ds.images));
      double e0 = 0, e1 = 0;
      for (std::size_t i = 0; i < ds.images.size(); ++i) {
        e0 += std::pow(before[i] - ds.images[i], 2);
        e1 += std::pow(after[i] - ds.images[i], 2);
      }
      CHECK(e1 < e0);
      return traj;
    };
    CHECK(run() == run());
  }
  SUBCASE("errors") {
    Rng rng(0);
    ModelParams m = build_model(tiny_blob(), rng);
    RmsProp opt;
    CHECK_THROWS(pretrain_autoencoder(m, Tensor(), {}, opt));
    CHECK_THROWS(pretrain_autoencoder(m, Tensor({4, 1, 1, 16}), {0, 4, 0, data::AugmentPolicy::none}, opt));
  }
}

TEST_CASE("checkpoints round-trip and reject damage") {
  Rng rng(12);
  ModelParams m = build_model(ArchConfig::reference(1, 28, 28, 4), rng);
  const auto path = temp_file("roundtrip.dafc");
  save_checkpoint(path, m, {{"extra.mu", Tensor({2, 4}, 0.25)}});
  const Checkpoint c = load_checkpoint(path);
  CHECK(c.model.arch == m.arch);
  REQUIRE(c.model.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(c.model.params[i].name == m.params[i].name);
    CHECK(c.model.params[i].value == m.params[i].value);
    CHECK(c.model.params[i].trainable == m.params[i].trainable);
  }
  REQUIRE(c.extra.size() == 1);
  CHECK(c.extra[0].name == "extra.mu");
  CHECK(c.extra[0].value == Tensor({2, 4}, 0.25));

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  auto write = [&](const std::string& name, const std::string& content) {
    const auto p = temp_file(name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("magic.dafc", bad_magic)), std::runtime_error);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(load_checkpoint(write("version.dafc", bad_version)), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(write("short.dafc", bytes.substr(0, bytes.size() - 3))), std::runtime_error);
  CHECK_THROWS(load_checkpoint(temp_file("missing.dafc")));
}
