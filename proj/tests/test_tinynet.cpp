#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "fixtures.hpp"
#include "metsyn/denoiser.hpp"
#include "metsyn/error.hpp"
#include "metsyn/parallel.hpp"
#include "metsyn/tinynet.hpp"
#include "oracles.hpp"

using namespace metsyn;
namespace fs = std::filesystem;

namespace {

Tensor4 random_tensor(int c, Index3 d, Rng &rng, double scale = 1.0) {
  Tensor4 t(c, d);
  for (auto &v : t.data) v = rng.normal() * scale;
  return t;
}

TinyNet random_net(std::vector<int> plan, std::uint64_t seed, bool relu = true) {
  TinyNet net(std::move(plan), relu);
  Rng rng(seed);
  std::vector<double> p(net.parameter_count());
  for (auto &v : p) v = rng.normal() * 0.3;
  net.set_parameters(p);
  return net;
}

bool close(double analytic, double numeric) {
  const double tol = std::max(1e-6, 1e-4 * std::max(std::abs(analytic), std::abs(numeric)));
  return std::abs(analytic - numeric) <= tol;
}

} // namespace

TEST_CASE("parameter layout and counts") {
  CHECK(TinyNet::expected_parameter_count({2, 8, 8, 1}) == 2 * 8 * 27 + 8 + 8 * 8 * 27 + 8 + 8 * 27 + 1);
  const TinyNet d = TinyNet::denoiser_default();
  CHECK(d.channel_plan() == std::vector<int>{2, 8, 8, 1});
  CHECK(d.parameter_count() == TinyNet::expected_parameter_count(d.channel_plan()));
  CHECK(TinyNet::segmenter_default().channel_plan() == std::vector<int>{1, 8, 16, 8, 1});
  CHECK(d.weight_offset(1) == 2 * 8 * 27 + 8);
  CHECK(d.bias_offset(0) == 2 * 8 * 27);
  CHECK_THROWS_AS(TinyNet({3}), InvalidArgument);
  CHECK_THROWS_AS(TinyNet({1, 0, 1}), InvalidArgument);
  TinyNet n({1, 1});
  CHECK_THROWS_AS(n.set_parameters(std::vector<double>(3)), InvalidArgument);
}

TEST_CASE("init draws He-normal weights and sets the output bias") {
  TinyNet a = TinyNet::segmenter_default(), b = TinyNet::segmenter_default();
  a.init(5, -3.0);
  b.init(5, -3.0);
  CHECK(a == b);
  b.init(6, -3.0);
  CHECK(!(a == b));
  const auto p = a.parameters();
  const std::size_t last = a.layer_count() - 1;
  CHECK(p[a.bias_offset(last)] == -3.0);
  for (std::size_t i = a.bias_offset(0); i < a.weight_offset(1); ++i) CHECK(p[i] == 0.0);
  // first layer: 8 * 27 weights, std sqrt(2 / 27)
  double ss = 0;
  for (std::size_t i = 0; i < a.bias_offset(0); ++i) ss += p[i] * p[i];
  const double sd = std::sqrt(ss / static_cast<double>(a.bias_offset(0)));
  CHECK(sd == doctest::Approx(std::sqrt(2.0 / 27.0)).epsilon(0.2));
}

TEST_CASE("zero weights give the bias and a centre delta is the identity") {
  Rng rng(1);
  const Tensor4 in = random_tensor(1, {5, 4, 3}, rng);
  TinyNet net({1, 1});
  std::vector<double> p(net.parameter_count(), 0.0);
  net.set_parameters(p);
  for (double v : net.forward(in).data) CHECK(v == 0.0);
  p[27] = 0.25;
  net.set_parameters(p);
  for (double v : net.forward(in).data) CHECK(v == 0.25);
  p[27] = 0.0;
  p[13] = 1.0;
  net.set_parameters(p);
  CHECK(net.forward(in).data == in.data);
}

TEST_CASE("forward matches a naive convolution") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    for (bool relu : {true, false}) {
      const std::vector<int> plan{2, 3, 2, 1};
      const TinyNet net = random_net(plan, seed, relu);
      Rng rng(seed + 10);
      const Tensor4 in = random_tensor(2, {5, 5, 5}, rng);
      const Tensor4 got = net.forward(in);
      const std::vector<double> params(net.parameters().begin(), net.parameters().end());
      const Tensor4 want = oracle::naive_forward(plan, relu, params, in);
      REQUIRE(got.data.size() == want.data.size());
      for (std::size_t i = 0; i < got.data.size(); ++i) CHECK(std::abs(got.data[i] - want.data[i]) <= 1e-12);
    }
  }
  CHECK_THROWS_AS(TinyNet({2, 1}).forward(Tensor4(1, {3, 3, 3})), InvalidArgument);
}

TEST_CASE("zero upstream gives zero gradients") {
  const TinyNet net = random_net({1, 4, 1}, 3);
  Rng rng(4);
  TinyNet::Activations acts;
  const Tensor4 out = net.forward(random_tensor(1, {4, 4, 4}, rng), acts);
  for (double g : net.backward(acts, Tensor4(out.channels, out.dims))) CHECK(g == 0.0);
}

TEST_CASE("backward agrees with central differences") {
  struct Case {
    std::vector<int> plan;
    LossKind loss;
  };
  const std::vector<Case> cases{{{1, 1}, LossKind::mse_eps},
                                {{2, 3, 1}, LossKind::mse_eps},
                                {{1, 2, 2, 1}, LossKind::dice_loss},
                                {{1, 3, 1}, LossKind::dice_loss}};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      TinyNet net = random_net(cases[c].plan, 100 * c + seed);
      Rng rng(7 + 100 * c + seed);
      const Tensor4 in = random_tensor(cases[c].plan.front(), {4, 4, 4}, rng);
      Tensor4 target(1, in.dims);
      for (auto &v : target.data)
        v = cases[c].loss == LossKind::mse_eps ? rng.normal() : (rng.uniform() < 0.3 ? 1.0 : 0.0);
      auto loss_of = [&](const TinyNet &n) {
        const Tensor4 o = n.forward(in);
        return cases[c].loss == LossKind::mse_eps ? mse_loss(o, target).loss
                                                  : dice_loss_with_logits(o, target).loss;
      };
      TinyNet::Activations acts;
      const Tensor4 out = net.forward(in, acts);
      const LossValue lv = cases[c].loss == LossKind::mse_eps ? mse_loss(out, target)
                                                              : dice_loss_with_logits(out, target);
      const auto g = net.backward(acts, lv.grad);
      const double h = 1e-5;
      int bad = 0;
      for (std::size_t i = 0; i < net.parameter_count(); ++i) {
        const double keep = net.parameters()[i];
        net.parameters()[i] = keep + h;
        const double up = loss_of(net);
        net.parameters()[i] = keep - h;
        const double dn = loss_of(net);
        net.parameters()[i] = keep;
        if (!close(g[i], (up - dn) / (2 * h))) ++bad;
      }
      CHECK(bad == 0);
    }
  }
}

TEST_CASE("loss values and gradients") {
  Tensor4 o(1, {2, 1, 1}), t(1, {2, 1, 1});
  o.data = {1.0, 3.0};
  t.data = {0.0, 1.0};
  const auto m = mse_loss(o, t);
  CHECK(m.loss == 2.5);
  CHECK(m.grad.data == std::vector<double>{1.0, 2.0});

  // logits 0 give p = 1/2 everywhere
  Tensor4 z(1, {4, 1, 1});
  Tensor4 g(1, {4, 1, 1});
  g.data = {1, 1, 0, 0};
  const auto d = dice_loss_with_logits(z, g);
  CHECK(d.loss == doctest::Approx(1.0 - (2.0 * 1.0 + 1.0) / (2.0 + 2.0 + 1.0)));

  Mask ref({4, 1, 1}, {1, 1, 1});
  ref[0] = ref[1] = 1;
  CHECK(dice_loss(std::vector<double>{1, 1, 0, 0}, ref) == 0.0);
  CHECK(dice_loss(std::vector<double>{0, 0, 1, 1}, ref) == doctest::Approx(1.0 - 1.0 / 5.0));
  Rng rng(2);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> p(4);
    for (auto &v : p) v = rng.uniform();
    const double l = dice_loss(p, ref);
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
  }
  CHECK_THROWS_AS(mse_loss(o, Tensor4(1, {3, 1, 1})), InvalidArgument);
}

TEST_CASE("optimizer updates") {
  std::vector<double> p{1.0};
  SgdMomentum sgd(1, 0.9);
  const std::vector<double> g{0.5};
  sgd.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5));
  sgd.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(1.0 - 0.05 - 0.1 * (0.9 * 0.5 + 0.5)));
  sgd.step(p, g, 0.1);
  CHECK(p[0] == doctest::Approx(1.0 - 0.05 - 0.095 - 0.1 * (0.9 * 0.95 + 0.5)));

  // bias-corrected Adam moves by about lr on every step of a constant gradient
  std::vector<double> q{0.0};
  Adam adam(1);
  for (int k = 1; k <= 3; ++k) {
    adam.step(q, std::vector<double>{-4.0}, 0.01);
    CHECK(q[0] == doctest::Approx(0.01 * k).epsilon(1e-6));
  }
}

TEST_CASE("training schedule, determinism and early stopping") {
  Rng rng(3);
  std::vector<TrainingPair> data;
  for (int i = 0; i < 10; ++i) {
    TrainingPair p{random_tensor(1, {4, 4, 4}, rng), Tensor4(1, {4, 4, 4})};
    for (std::size_t j = 0; j < p.target.data.size(); ++j) p.target.data[j] = 0.5 * p.input.data[j];
    data.push_back(p);
  }
  TinyNet net({1, 1}, false);
  net.init(1);
  TrainConfig cfg;
  cfg.optimizer = {OptimizerKind::adam, 0.01, 0.9, 0.9};
  cfg.epochs = 6;
  cfg.patience = 100;
  cfg.batch = 3;
  cfg.seed = 9;
  const TrainResult a = train(net, data, cfg);
  REQUIRE(a.history.size() == 6);
  for (int k = 0; k < 6; ++k) {
    CHECK(a.history[static_cast<std::size_t>(k)].epoch == k);
    CHECK(a.history[static_cast<std::size_t>(k)].lr == 0.01 * std::pow(0.9, k));
  }
  CHECK(a.best_val_loss < a.initial_val_loss);
  CHECK(evaluate_loss(a.net, data, LossKind::mse_eps) < evaluate_loss(net, data, LossKind::mse_eps));

  const TrainResult b = train(net, data, cfg);
  CHECK(a.net == b.net);
  CHECK(history_csv(a.history) == history_csv(b.history));
  set_max_threads(3);
  const TrainResult c = train(net, data, cfg);
  set_max_threads(1);
  CHECK(a.net == c.net);
  CHECK(history_csv(a.history).rfind("epoch,train_loss,val_loss,lr\n0,", 0) == 0);

  // find the validation entry the documented permutation picks, then make
  // it disagree with the training targets so no epoch can improve on it
  std::vector<TrainingPair> split;
  for (int i = 0; i < 5; ++i) {
    Tensor4 in(1, {3, 3, 3}, 1.0), tgt(1, {3, 3, 3}, 1.0);
    split.push_back({in, tgt});
  }
  std::vector<std::size_t> p5(5);
  std::iota(p5.begin(), p5.end(), std::size_t{0});
  Rng pr5(cfg.seed);
  for (std::size_t i = 4; i >= 1; --i) std::swap(p5[i], p5[pr5.below(i + 1)]);
  for (auto &v : split[p5[4]].target.data) v = -1.0;
  TinyNet zero({1, 1}, false);
  zero.set_parameters(std::vector<double>(zero.parameter_count(), 0.0));
  cfg.patience = 1;
  cfg.epochs = 10;
  const TrainResult s = train(zero, split, cfg);
  CHECK(s.early_stopped);
  CHECK(s.history.size() == 1);
  CHECK(s.best_epoch == -1);
  CHECK(s.net == zero);

  split[0].target.data[0] = std::nan("");
  CHECK_THROWS_AS(train(zero, split, cfg), NumericError);
  cfg.batch = 0;
  CHECK_THROWS_AS(train(zero, data, cfg), InvalidArgument);
}

TEST_CASE("segment thresholds logits at zero") {
  TinyNet net({1, 1});
  std::vector<double> p(net.parameter_count(), 0.0);
  p[13] = 1.0;
  net.set_parameters(p);
  Volume v({3, 2, 1}, {1, 1, 1});
  v[0] = -1.0f;
  v[1] = 0.0f;
  v[2] = 0.5f;
  const Mask m = segment(net, v);
  CHECK(m[0] == 0);
  CHECK(m[1] == 0);
  CHECK(m[2] == 1);
}

TEST_CASE("checkpoint round trip stores f32 parameters") {
  const TinyNet net = random_net({2, 4, 1}, 12);
  const fs::path dir = fs::temp_directory_path() / "metsyn_unit";
  fs::create_directories(dir);
  const fs::path p = dir / "net.ckpt";
  save_checkpoint(net, p, 12, 3);
  const TinyNet back = load_checkpoint(p);
  REQUIRE(back.channel_plan() == net.channel_plan());
  for (std::size_t i = 0; i < net.parameter_count(); ++i)
    CHECK(back.parameters()[i] == static_cast<double>(static_cast<float>(net.parameters()[i])));
  const fs::path p2 = dir / "net2.ckpt";
  save_checkpoint(back, p2, 12, 3);
  std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  std::ifstream in(p, std::ios::binary);
  std::string bytes{std::istreambuf_iterator<char>(in), {}};
  {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << bytes.substr(0, bytes.size() - 1);
  }
  CHECK_THROWS_AS(load_checkpoint(p), InputError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), InputError);
}

TEST_CASE("denoiser training halves the noise-prediction error") {
  const auto s = linear_schedule(200, 1e-4, 2e-3);
  std::vector<Volume> images;
  for (int i = 0; i < 4; ++i)
    images.push_back(standardize_intensities(make_healthy_femur(fixture::micro_spec(30 + static_cast<std::uint64_t>(i))).image).volume);
  DenoiserPairOptions opt;
  opt.count = 200;
  opt.patch = 16;
  opt.seed = 4;
  const auto pairs = make_denoiser_pairs(images, s, opt);
  REQUIRE(pairs.size() == 200);
  CHECK(pairs[0].input.channels == 2);
  CHECK(pairs[0].input.dims == Index3{16, 16, 16});
  const auto again = make_denoiser_pairs(images, s, opt);
  CHECK(pairs[17].target.data == again[17].target.data);

  // predicting zero noise scores the mean squared noise, about 1
  TinyNet zero = TinyNet::denoiser_default();
  zero.set_parameters(std::vector<double>(zero.parameter_count(), 0.0));
  const double baseline = evaluate_loss(zero, pairs, LossKind::mse_eps);
  CHECK(baseline == doctest::Approx(1.0).epsilon(0.05));

  TinyNet net = TinyNet::denoiser_default();
  net.init(7);
  TrainConfig cfg;
  cfg.optimizer = {OptimizerKind::adam, 5e-3, 0.9, 0.999};
  cfg.epochs = 20;
  cfg.patience = 5;
  cfg.batch = 8;
  cfg.seed = 8;
  const TrainResult r = train(net, pairs, cfg);
  MESSAGE("denoiser val mse " << r.best_val_loss << " vs baseline " << baseline);
  CHECK(r.best_val_loss <= 0.5 * baseline);

  const NetDenoiser d(r.net, s.T());
  const Volume eps = d.predict_noise(images[0], 100);
  CHECK(eps.dims() == images[0].dims());
  CHECK_THROWS_AS(NetDenoiser(TinyNet::segmenter_default(), 200), InvalidArgument);
}
