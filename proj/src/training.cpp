#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <json.hpp>

#include "metsyn/parallel.hpp"
#include "metsyn/rng.hpp"
#include "metsyn/tinynet.hpp"

namespace metsyn {

void TrainConfig::validate() const {
  if (!(optimizer.lr > 0.0) || !std::isfinite(optimizer.lr))
    throw InvalidArgument("learning rate must be > 0");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0))
    throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(optimizer.decay > 0.0 && optimizer.decay <= 1.0))
    throw InvalidArgument("decay must lie in (0, 1]");
  if (patience < 1) throw InvalidArgument("patience must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (batch < 1) throw InvalidArgument("batch must be >= 1");
}

TrainConfig TrainConfig::full_scale_denoiser() {
  TrainConfig c;
  c.optimizer = {OptimizerKind::adam, 1e-4, 0.9, 0.999};
  c.loss = LossKind::mse_eps;
  return c;
}

TrainConfig TrainConfig::full_scale_segmenter(bool synthetic_set) {
  TrainConfig c;
  c.optimizer = {OptimizerKind::sgd_momentum, 0.025, 0.9, synthetic_set ? 0.99 : 0.999};
  c.loss = LossKind::dice_loss;
  c.patience = 200;
  return c;
}

TrainConfig TrainConfig::full_scale_finetune() {
  TrainConfig c = full_scale_segmenter(false);
  c.optimizer.lr = 0.001;
  c.optimizer.decay = 1.0;
  c.patience = 25;
  return c;
}

namespace {

LossValue compute_loss(const Tensor4 &out, const Tensor4 &target, LossKind kind) {
  return kind == LossKind::mse_eps ? mse_loss(out, target) : dice_loss_with_logits(out, target);
}

double mean_loss(const TinyNet &net, const std::vector<TrainingPair> &data,
                 const std::vector<std::size_t> &idx, LossKind kind) {
  std::vector<double> losses(idx.size());
  parallel_for(idx.size(), [&](std::size_t i) {
    const auto &p = data[idx[i]];
    losses[i] = compute_loss(net.forward(p.input), p.target, kind).loss;
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(idx.size());
}

void require_finite(double v, const char *what, int epoch) {
  if (!std::isfinite(v))
    throw NumericError(std::string("training diverged: non-finite ") + what + " at epoch " +
                       std::to_string(epoch));
}

} // namespace

double evaluate_loss(const TinyNet &net, const std::vector<TrainingPair> &pairs, LossKind loss) {
  if (pairs.empty()) throw InvalidArgument("evaluate_loss: empty set");
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return mean_loss(net, pairs, idx, loss);
}

TrainResult train(const TinyNet &net, const std::vector<TrainingPair> &dataset,
                  const TrainConfig &cfg) {
  cfg.validate();
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  const std::size_t n = dataset.size();

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  {
    Rng rng(cfg.seed);
    for (std::size_t i = n - 1; i >= 1; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  }
  const std::size_t n_val = n / 5;
  std::vector<std::size_t> train_idx(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val_idx(perm.end() - static_cast<std::ptrdiff_t>(n_val), perm.end());
  if (val_idx.empty()) val_idx = train_idx;

  TrainResult res{net, {}, 0.0, 0.0, -1, false};
  TinyNet work = net;
  res.initial_val_loss = mean_loss(work, dataset, val_idx, cfg.loss);
  require_finite(res.initial_val_loss, "validation loss", -1);
  res.best_val_loss = res.initial_val_loss;

  const std::size_t np = work.parameter_count();
  Adam adam(cfg.optimizer.kind == OptimizerKind::adam ? np : 0);
  SgdMomentum sgd(cfg.optimizer.kind == OptimizerKind::sgd_momentum ? np : 0,
                  cfg.optimizer.momentum);

  int stale = 0;
  for (int k = 0; k < cfg.epochs; ++k) {
    const double lr = cfg.optimizer.lr * std::pow(cfg.optimizer.decay, k);
    {
      Rng rng(Rng::derive(cfg.seed, {1, static_cast<std::uint64_t>(k)}));
      for (std::size_t i = train_idx.size() - 1; i >= 1; --i)
        std::swap(train_idx[i], train_idx[rng.below(i + 1)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t b0 = 0; b0 < train_idx.size(); b0 += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t b1 = std::min(train_idx.size(), b0 + static_cast<std::size_t>(cfg.batch));
      const std::size_t bn = b1 - b0;
      std::vector<std::vector<double>> grads(bn);
      std::vector<double> losses(bn);
      parallel_for(bn, [&](std::size_t j) {
        const auto &p = dataset[train_idx[b0 + j]];
        TinyNet::Activations acts;
        const Tensor4 out = work.forward(p.input, acts);
        LossValue lv = compute_loss(out, p.target, cfg.loss);
        losses[j] = lv.loss;
        grads[j] = work.backward(acts, lv.grad);
      });
      std::vector<double> g(np, 0.0);
      for (std::size_t j = 0; j < bn; ++j) {
        epoch_loss += losses[j];
        for (std::size_t i = 0; i < np; ++i) g[i] += grads[j][i];
      }
      for (auto &v : g) v /= static_cast<double>(bn);
      if (cfg.optimizer.kind == OptimizerKind::adam)
        adam.step(work.parameters(), g, lr);
      else
        sgd.step(work.parameters(), g, lr);
    }
    epoch_loss /= static_cast<double>(train_idx.size());
    require_finite(epoch_loss, "training loss", k);
    const double val = mean_loss(work, dataset, val_idx, cfg.loss);
    require_finite(val, "validation loss", k);
    res.history.push_back({k, epoch_loss, val, lr});
    if (val < res.best_val_loss) {
      res.best_val_loss = val;
      res.best_epoch = k;
      res.net = work;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  return res;
}

std::string history_csv(const std::vector<EpochRecord> &history) {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto &r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.lr);
    out += buf;
  }
  return out;
}

Mask segment(const TinyNet &net, const Volume &image) {
  const Tensor4 out = net.forward(tensor_from_volume(image));
  Mask m(image.dims(), image.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = out.data[i] > 0.0 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const TinyNet &net, const std::filesystem::path &path, std::uint64_t seed,
                     int epoch) {
  nlohmann::json h = {{"format", "metsyn-tinynet"},
                      {"channels", net.channel_plan()},
                      {"relu", net.relu()},
                      {"seed", seed},
                      {"epoch", epoch},
                      {"parameter_count", net.parameter_count()},
                      {"dtype", "f32"},
                      {"byteorder", "little"}};
  std::string bytes = h.dump();
  bytes.push_back('\n');
  bytes.push_back('\0');
  const auto params = net.parameters();
  const std::size_t off = bytes.size();
  bytes.resize(off + params.size() * 4);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto u = std::bit_cast<std::uint32_t>(static_cast<float>(params[i]));
    for (int b = 0; b < 4; ++b) bytes[off + i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xFF);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

TinyNet load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto term = bytes.find(std::string("\n\0", 2));
  if (term == std::string::npos) throw InputError(path.string() + ": malformed checkpoint header");
  TinyNet net({1, 1});
  try {
    const auto h = nlohmann::json::parse(bytes.substr(0, term));
    if (h.at("format") != "metsyn-tinynet" || h.at("dtype") != "f32" ||
        h.at("byteorder") != "little")
      throw InputError(path.string() + ": unsupported checkpoint format");
    net = TinyNet(h.at("channels").get<std::vector<int>>(), h.at("relu").get<bool>());
    if (h.at("parameter_count").get<std::size_t>() != net.parameter_count())
      throw InputError(path.string() + ": parameter count does not match the channel plan");
  } catch (const nlohmann::json::exception &e) {
    throw InputError(path.string() + ": bad checkpoint header: " + e.what());
  } catch (const InvalidArgument &e) {
    throw InputError(path.string() + ": " + e.what());
  }
  const std::size_t off = term + 2;
  if (bytes.size() - off != net.parameter_count() * 4)
    throw InputError(path.string() + ": checkpoint payload size mismatch");
  std::vector<double> p(net.parameter_count());
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b)
      u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i * 4 + b])) << (8 * b);
    p[i] = std::bit_cast<float>(u);
    if (!std::isfinite(p[i])) throw InputError(path.string() + ": non-finite parameter");
  }
  net.set_parameters(p);
  return net;
}

} // namespace metsyn
