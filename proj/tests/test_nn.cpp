#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sct/error.hpp"
#include "sct/io.hpp"
#include "sct/nn/adam.hpp"
#include "sct/nn/checkpoint.hpp"
#include "sct/nn/train.hpp"
#include "sct/nn/unet.hpp"
#include "sct/rng.hpp"

using namespace sct::nn;
namespace fs = std::filesystem;

namespace {

UNetConfig tiny(int depth, int base, int size, Variant v = Variant::DualFrame, BridgeCombine b = BridgeCombine::Add) {
  UNetConfig c;
  c.depth = depth;
  c.base_channels = base;
  c.input_size = size;
  c.variant = v;
  c.bridge = b;
  return c;
}

template <class T>
Tensor4<T> random_input(int n, int size, std::uint64_t seed) {
  sct::Rng rng(seed);
  Tensor4<T> x(n, 1, size, size);
  for (auto& v : x.data) v = static_cast<T>(rng.uniform());
  return x;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

// Hand count for one conv: kernel + bias (+ BN scale and shift).
std::size_t conv_count(int cin, int cout, int k, bool bn) {
  return static_cast<std::size_t>(cin) * cout * k * k + cout + (bn ? 2 * cout : 0);
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("sct_test_nn_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

sct::ImageGrid unit_image(int size, std::uint64_t seed) {
  sct::Rng rng(seed);
  sct::ImageGrid g(size, 1.0, sct::UnitTag::Normalized);
  for (auto& v : g.values) v = static_cast<float>(rng.uniform());
  return g;
}

// Pairs whose residual is a smooth function of the input, learnable by a small net.
std::vector<ResidualPair> toy_pairs(int count, int size, std::uint64_t seed) {
  std::vector<ResidualPair> out;
  for (int i = 0; i < count; ++i) {
    sct::ImageGrid full = unit_image(size, seed + i);
    sct::ImageGrid sparse = full;
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c)
        sparse.at(r, c) = std::clamp(full.at(r, c) + 0.1f * std::sin(0.8f * c + i), 0.0f, 1.0f);
    out.push_back(make_residual_pair(sparse, full, 64, "p" + std::to_string(i)));
  }
  return out;
}

}  // namespace

TEST_CASE("parameter counts") {
  // depth 1, base 1: enc 1->1, 1->1; bottleneck 1->2, 2->2; bridge 1x1 1->2;
  // decoder (2+1)->1, 1->1; final 1x1 1->1.
  const std::size_t manual = conv_count(1, 1, 3, true) + conv_count(1, 1, 3, true) + conv_count(1, 2, 3, true) +
                             conv_count(2, 2, 3, true) + conv_count(1, 2, 1, false) + conv_count(3, 1, 3, true) +
                             conv_count(1, 1, 3, true) + conv_count(1, 1, 1, false);
  CHECK(manual == 138);
  CHECK(count_params(tiny(1, 1, 4)) == manual);
  CHECK(conv_count(1, 1, 3, true) == 12);

  const auto p = init_unet<float>(tiny(4, 64, 512), 1);
  CHECK(p.learnable.size() == count_params(tiny(4, 64, 512)));

  for (int base : {4, 8, 16, 32}) {
    const double ratio = static_cast<double>(count_params(tiny(4, 2 * base, 64))) / count_params(tiny(4, base, 64));
    CAPTURE(base);
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.2);
  }
  // Standard variant has no bridges; concat bridges widen the decoder input.
  CHECK(count_params(tiny(1, 1, 4, Variant::Standard)) == manual - conv_count(1, 2, 1, false));
  CHECK(count_params(tiny(1, 1, 4, Variant::DualFrame, BridgeCombine::Concat)) ==
        manual - conv_count(1, 2, 1, false) - conv_count(3, 1, 3, true) + conv_count(4, 1, 3, true));

  const auto full_scale = count_params(tiny(4, 64, 512));
  MESSAGE("full-scale (depth 4, base 64) learnable parameters: " << full_scale << " (reference 21971584)");
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(tiny(4, 8, 100).validate(), sct::UsageError);
  CHECK_THROWS_AS(tiny(2, 0, 64).validate(), sct::UsageError);
  CHECK_THROWS_AS(init_unet<float>(tiny(3, 4, 36), 0), sct::UsageError);
  CHECK_THROWS_AS(variant_from_string("framelet"), sct::UsageError);
  const auto c = tiny(3, 4, 64, Variant::Standard, BridgeCombine::Concat);
  CHECK(UNetConfig::from_json(c.to_json()) == c);
}

TEST_CASE("init is deterministic and well formed") {
  const auto cfg = tiny(2, 4, 16);
  const auto a = init_unet<float>(cfg, 5), b = init_unet<float>(cfg, 5), c = init_unet<float>(cfg, 6);
  CHECK(a.learnable == b.learnable);
  CHECK(a.learnable != c.learnable);
  for (int i = 0; i < static_cast<int>(a.layout.convs.size()); ++i) {
    for (float v : a.bias(i)) CHECK(v == 0.0f);
    if (!a.layout.convs[i].bn) continue;
    for (float v : a.gamma(i)) CHECK(v == 1.0f);
    for (float v : a.beta(i)) CHECK(v == 0.0f);
    for (float v : a.running_mean(i)) CHECK(v == 0.0f);
    for (float v : a.running_var(i)) CHECK(v == 1.0f);
  }
  // He scaling: kernel variance close to 2 / fan_in for the widest layer.
  const int i = a.layout.bottleneck + 1;
  const auto w = a.weight(i);
  double ss = 0;
  for (float v : w) ss += static_cast<double>(v) * v;
  const double fan_in = a.layout.convs[i].cin * 9.0;
  CHECK(ss / w.size() == doctest::Approx(2.0 / fan_in).epsilon(0.15));
  a.validate();
}

TEST_CASE("whole-network gradients match finite differences") {
  struct Case {
    Variant v;
    BridgeCombine b;
  };
  for (const Case k : {Case{Variant::DualFrame, BridgeCombine::Add}, Case{Variant::DualFrame, BridgeCombine::Concat},
                       Case{Variant::Standard, BridgeCombine::Add}}) {
    CAPTURE(to_string(k.v));
    CAPTURE(to_string(k.b));
    auto params = init_unet<double>(tiny(1, 2, 8, k.v, k.b), 21);
    // Non-trivial BN affine parameters and biases so every path carries signal.
    sct::Rng rng(22);
    for (int i = 0; i < static_cast<int>(params.layout.convs.size()); ++i) {
      for (double& v : params.bias(i)) v = 0.1 * rng.normal();
      if (!params.layout.convs[i].bn) continue;
      for (double& v : params.gamma(i)) v = 1.0 + 0.2 * rng.normal();
      for (double& v : params.beta(i)) v = 0.3 * rng.normal();
    }
    const auto x = random_input<double>(2, 8, 23);
    Tensor4<double> r(2, 1, 8, 8);
    for (auto& v : r.data) v = rng.normal();

    UNetCache<double> cache;
    unet_forward(params, x, Mode::Train, &cache);
    const auto grads = unet_backward(params, cache, r);
    REQUIRE(grads.size() == params.learnable.size());

    auto loss = [&] {
      const auto y = unet_forward(params, x, Mode::Train);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += y.data[i] * r.data[i];
      return s;
    };
    const double h = 1e-5;
    double worst = 0;
    std::size_t worst_i = 0;
    double worst_fd = 0;
    for (std::size_t i = 0; i < params.learnable.size(); ++i) {
      const double keep = params.learnable[i];
      params.learnable[i] = keep + h;
      const double up = loss();
      params.learnable[i] = keep - h;
      const double down = loss();
      params.learnable[i] = keep;
      const double fd = (up - down) / (2 * h);
      // Both below the finite-difference noise floor: compare absolutely.
      if (std::max(std::abs(fd), std::abs(grads[i])) < 1e-7) {
        CHECK(std::abs(fd - grads[i]) < 1e-8);
        continue;
      }
      const double e = rel_err(fd, grads[i]);
      if (e > worst) worst = e, worst_i = i, worst_fd = (up - down) / (2 * h);
    }
    CAPTURE(worst_i);
    CAPTURE(worst_fd);
    CAPTURE(grads[worst_i]);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("backward identities") {
  auto params = init_unet<double>(tiny(2, 2, 8), 3);
  const auto x = random_input<double>(3, 8, 4);
  UNetCache<double> cache;
  unet_forward(params, x, Mode::Train, &cache);

  const auto zero = unet_backward(params, cache, Tensor4<double>(3, 1, 8, 8));
  for (double g : zero) CHECK(g == 0.0);

  sct::Rng rng(5);
  Tensor4<double> d(3, 1, 8, 8);
  double total = 0;
  for (auto& v : d.data) total += (v = rng.normal());
  const auto grads = unet_backward(params, cache, d);
  CHECK(grads[params.layout.convs[params.layout.final_conv].bias] == doctest::Approx(total).epsilon(1e-12));

  UNetCache<double> eval_cache;
  unet_forward(params, x, Mode::Eval, &eval_cache);
  CHECK_THROWS(unet_backward(params, eval_cache, d));
  auto other = init_unet<double>(tiny(1, 2, 8), 3);
  CHECK_THROWS(unet_backward(other, cache, d));
  CHECK_THROWS(unet_backward(params, cache, Tensor4<double>(2, 1, 8, 8)));
}

TEST_CASE("forward contracts") {
  auto params = init_unet<float>(tiny(4, 2, 64), 9);
  const auto x = random_input<float>(2, 64, 10);
  const auto y = unet_forward(params, x, Mode::Eval);
  CHECK(y.n == 2);
  CHECK(y.c == 1);
  CHECK(y.h == 64);
  CHECK(y.w == 64);
  CHECK(unet_forward(params, x, Mode::Eval).data == y.data);
  CHECK(unet_predict(params, x).data == y.data);

  const int f = params.layout.final_conv;
  for (float& v : params.weight(f)) v = 0.0f;
  const auto z = unet_forward(params, Tensor4<float>(1, 1, 64, 64), Mode::Eval);
  for (float v : z.data) CHECK(v == 0.0f);

  CHECK_THROWS_AS(unet_forward(params, Tensor4<float>(1, 1, 32, 32), Mode::Eval), sct::DataError);
  CHECK_THROWS_AS(unet_forward(params, Tensor4<float>(1, 2, 64, 64), Mode::Eval), sct::DataError);

  params.learnable[0] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(unet_forward(params, x, Mode::Eval), sct::NumericError);
}

TEST_CASE("train mode updates running statistics, eval mode does not") {
  auto params = init_unet<float>(tiny(2, 2, 16), 1);
  const auto before = params.buffers;
  const auto x = random_input<float>(2, 16, 2);
  unet_forward(params, x, Mode::Eval);
  CHECK(params.buffers == before);
  unet_forward(params, x, Mode::Train);
  CHECK(params.buffers != before);
}

TEST_CASE("mse loss") {
  Tensor4<double> a(2, 1, 4, 4), b(2, 1, 4, 4);
  sct::Rng rng(3);
  for (auto& v : a.data) v = rng.normal();
  auto same = mse_loss(a, a);
  CHECK(same.loss == 0.0);
  for (double g : same.grad.data) CHECK(g == 0.0);

  b = a;
  for (auto& v : b.data) v -= 1.0;
  CHECK(mse_loss(a, b).loss == doctest::Approx(1.0).epsilon(1e-15));

  for (auto& v : b.data) v = rng.normal();
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  const auto r = mse_loss(a, b);
  CHECK(std::abs(r.loss - s / 32.0) < 1e-12);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(r.grad.data[i] - 2.0 * (a.data[i] - b.data[i]) / 32.0) < 1e-12);
  CHECK_THROWS(mse_loss(a, Tensor4<double>(1, 1, 4, 4)));
}

TEST_CASE("adam") {
  SUBCASE("first step moves by lr in the direction opposite the gradient") {
    std::vector<double> p{1.0, -2.0, 0.5};
    const std::vector<double> g{3.0, -0.01, 250.0};
    AdamState<double> s;
    adam_step<double>(p, g, s, 1e-3);
    CHECK(p[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(-2.0 + 1e-3).epsilon(1e-6));
    CHECK(p[2] == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
    CHECK(s.step == 1);
  }
  SUBCASE("zero gradient on a fresh state leaves params unchanged; moments decay") {
    std::vector<double> p{1.0, 2.0};
    AdamState<double> s;
    adam_step<double>(p, std::vector<double>{0.0, 0.0}, s, 1e-3);
    CHECK(p == std::vector<double>{1.0, 2.0});

    adam_step<double>(p, std::vector<double>{1.0, -1.0}, s, 1e-3);
    const auto m = s.m, v = s.v;
    adam_step<double>(p, std::vector<double>{0.0, 0.0}, s, 1e-3);
    for (int i = 0; i < 2; ++i) {
      CHECK(s.m[i] == doctest::Approx(0.9 * m[i]).epsilon(1e-15));
      CHECK(s.v[i] == doctest::Approx(0.999 * v[i]).epsilon(1e-15));
    }
  }
  SUBCASE("two steps match a scalar trace") {
    const double g = 0.37, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double p = 1.25, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      p -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    }
    std::vector<double> q{1.25};
    AdamState<double> s;
    adam_step<double>(q, std::vector<double>{g}, s, lr);
    adam_step<double>(q, std::vector<double>{g}, s, lr);
    CHECK(std::abs(q[0] - p) < 1e-12);
  }
  SUBCASE("errors") {
    std::vector<double> p{1.0};
    AdamState<double> s;
    CHECK_THROWS_AS(adam_step<double>(p, std::vector<double>{NAN}, s, 1e-3), sct::NumericError);
    CHECK(p[0] == 1.0);
    CHECK_THROWS(adam_step<double>(p, std::vector<double>{1.0, 2.0}, s, 1e-3));
  }
}

TEST_CASE("residual pairs reproduce the full-view image exactly") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sparse = unit_image(16, 100 + seed);
    const auto full = unit_image(16, 200 + seed);
    const auto pair = make_residual_pair(sparse, full, 32);
    CHECK(pair.label.unit == sct::UnitTag::Residual);
    for (std::size_t i = 0; i < full.size(); ++i) {
      CHECK(pair.input.values[i] - pair.label.values[i] == quantize_unit(full.values[i]));
      CHECK(std::abs(pair.input.values[i] - sparse.values[i]) <= 0x1.0p-17f);
    }
    const auto post = subtract_residual(pair.input, pair.label);
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(post.values[i] == quantize_unit(full.values[i]));
  }
  sct::ImageGrid zero_res(16, 1.0, sct::UnitTag::Residual);
  const auto img = unit_image(16, 7);
  CHECK(subtract_residual(img, zero_res).values == img.values);
  CHECK_THROWS_AS(make_residual_pair(unit_image(16, 1), unit_image(8, 1), 16), sct::DataError);
  sct::ImageGrid hu(16, 1.0, sct::UnitTag::HU);
  CHECK_THROWS_AS(make_residual_pair(hu, unit_image(16, 1), 16), sct::DataError);
}

TEST_CASE("postprocess with a zero network returns the input") {
  auto params = init_unet<float>(tiny(2, 2, 16), 1);
  for (float& v : params.weight(params.layout.final_conv)) v = 0.0f;
  const auto img = unit_image(16, 3);
  CHECK(postprocess(img, params).values == img.values);
  CHECK_THROWS_AS(postprocess(unit_image(32, 3), params), sct::DataError);
}

TEST_CASE("training memorizes two pairs") {
  const auto pairs = toy_pairs(2, 16, 40);
  TrainConfig t;
  t.max_epochs = 200;
  t.patience = 200;
  t.batch_size = 2;
  t.lr0 = 3e-3;
  t.lr_decay = 1.0;
  t.seed = 1;
  std::vector<double> train_losses;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) { train_losses.push_back(r.train_loss); };
  const auto res = train(pairs, pairs, t, tiny(2, 4, 16), hooks);
  REQUIRE(res.history.size() == 200);
  CHECK_FALSE(res.stopped_early);
  MESSAGE("overfit loss " << train_losses.front() << " -> " << train_losses.back());
  CHECK(train_losses.back() < 0.01 * train_losses.front());
}

TEST_CASE("learning-rate schedule, early stop and best snapshot") {
  const auto pairs = toy_pairs(3, 16, 50);
  TrainConfig t;
  t.max_epochs = 5;
  t.patience = 5;
  t.batch_size = 2;
  const auto res = train(pairs, {pairs[0]}, t, tiny(2, 2, 16));
  REQUIRE(res.history.size() == 5);
  CHECK(std::abs(res.history[3].lr - 0.001 * std::exp(-0.3)) < 1e-12);
  CHECK(res.history[0].lr == 0.001);
  std::size_t argmin = 0;
  for (std::size_t i = 0; i < res.history.size(); ++i)
    if (res.history[i].val_loss < res.history[argmin].val_loss) argmin = i;
  CHECK(res.best_epoch == static_cast<int>(argmin));
  CHECK(evaluate_loss(res.best, {pairs[0]}) == doctest::Approx(res.best_val_loss).epsilon(1e-12));

  TrainConfig frozen = t;
  frozen.patience = 1;
  TrainHooks hooks;
  hooks.lr_override = [](int, double) { return 0.0; };
  hooks.freeze_running_stats = true;
  const auto stopped = train(pairs, {pairs[0]}, frozen, tiny(2, 2, 16), hooks);
  CHECK(stopped.stopped_early);
  CHECK(stopped.history.size() == 2);
  CHECK(stopped.history[1].val_loss == stopped.history[0].val_loss);
  CHECK(stopped.best_epoch == 0);
}

TEST_CASE("training is deterministic") {
  const auto pairs = toy_pairs(4, 16, 60);
  TrainConfig t;
  t.max_epochs = 3;
  t.batch_size = 3;
  t.seed = 77;
  t.patience = 3;
  const auto a = train(pairs, {pairs[1]}, t, tiny(2, 2, 16));
  const auto b = train(pairs, {pairs[1]}, t, tiny(2, 2, 16));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_loss == b.history[i].val_loss);
  }
  CHECK(a.best.learnable == b.best.learnable);
}

TEST_CASE("training errors") {
  const auto pairs = toy_pairs(2, 16, 70);
  TrainConfig t;
  CHECK_THROWS_AS(train({}, pairs, t, tiny(2, 2, 16)), sct::DataError);
  CHECK_THROWS_AS(train(pairs, {}, t, tiny(2, 2, 16)), sct::DataError);
  CHECK_THROWS_AS(train(pairs, pairs, t, tiny(2, 2, 32)), sct::DataError);
  TrainConfig bad = t;
  bad.patience = 40;
  CHECK_THROWS_AS(bad.validate(), sct::UsageError);
  bad = t;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), sct::UsageError);
  TrainConfig wild = t;
  wild.max_epochs = 2;
  wild.patience = 2;
  wild.lr0 = 1e30;
  CHECK_THROWS_AS(train(pairs, pairs, wild, tiny(2, 2, 16)), sct::NumericError);
}

TEST_CASE("checkpoint round trip and history csv") {
  const auto dir = temp_dir("ckpt");
  auto params = init_unet<float>(tiny(2, 3, 16, Variant::DualFrame, BridgeCombine::Concat), 8);
  unet_forward(params, random_input<float>(2, 16, 1), Mode::Train);
  CheckpointMeta meta;
  meta.epoch = 4;
  meta.val_loss = 0.125;
  meta.views = 64;
  save_checkpoint(dir / "m.ckpt", params, meta);
  const auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.params.cfg == params.cfg);
  CHECK(loaded.params.learnable == params.learnable);
  CHECK(loaded.params.buffers == params.buffers);
  CHECK(loaded.meta.epoch == 4);
  CHECK(loaded.meta.val_loss == 0.125);
  CHECK(loaded.meta.views == 64);

  auto bytes = sct::io::read_bytes(dir / "m.ckpt");
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "SCTLAB");
  bytes.pop_back();
  sct::io::write_bytes(dir / "short.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), sct::DataError);
  bytes[0] = 'X';
  sct::io::write_bytes(dir / "bad.ckpt", bytes);
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), sct::DataError);

  write_history_csv(dir / "h.csv", {{0, 1.5, 2.5, 0.001}, {1, 1.0, 2.0, 0.001 * std::exp(-0.1)}});
  const auto text = sct::io::read_text(dir / "h.csv");
  CHECK(text.rfind("epoch,train_loss,val_loss,lr\n0,1.5,2.5,0.001", 0) == 0);
  fs::remove_all(dir);
}
