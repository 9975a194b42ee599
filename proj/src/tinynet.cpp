#include "metsyn/tinynet.hpp"

#include <algorithm>
#include <cmath>

#include "metsyn/rng.hpp"

namespace metsyn {

Tensor4::Tensor4(int c, Index3 d, double fill) : channels(c), dims(d) {
  if (c < 1) throw InvalidArgument("tensor needs at least one channel");
  data.assign(static_cast<std::size_t>(c) * voxels(), fill);
}

Tensor4 tensor_from_volume(const Volume &v) {
  Tensor4 t(1, v.dims());
  std::copy(v.data().begin(), v.data().end(), t.data.begin());
  return t;
}

Tensor4 tensor_from_mask(const Mask &m) {
  Tensor4 t(1, m.dims());
  std::copy(m.data().begin(), m.data().end(), t.data.begin());
  return t;
}

Tensor4 tensor_with_time_channel(const Volume &v, double time_fraction) {
  Tensor4 t(2, v.dims());
  std::copy(v.data().begin(), v.data().end(), t.data.begin());
  auto tc = t.channel(1);
  std::fill(tc.begin(), tc.end(), time_fraction);
  return t;
}

Volume tensor_channel_volume(const Tensor4 &t, int c, const Spacing3 &spacing) {
  if (c < 0 || c >= t.channels) throw InvalidArgument("tensor channel out of range");
  Volume v(t.dims, spacing);
  const auto src = t.channel(c);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(src[i]);
  return v;
}

namespace {

constexpr int kTaps = 27;

struct Range {
  std::int64_t lo, hi;
};

/// Output positions p along an axis of length n for which p + delta is in range.
Range valid(std::int64_t n, std::int64_t delta) {
  return {std::max<std::int64_t>(0, -delta), std::min(n, n - delta)};
}

void conv_forward(const Tensor4 &in, int cout, const double *w, const double *b, Tensor4 &out) {
  const auto &d = in.dims;
  const std::int64_t nx = d[0], nxy = d[0] * d[1];
  out = Tensor4(cout, d);
  for (int co = 0; co < cout; ++co) {
    double *o = out.channel(co).data();
    std::fill(o, o + out.voxels(), b[co]);
    for (int ci = 0; ci < in.channels; ++ci) {
      const double *src = in.channel(ci).data();
      const double *wk = w + (static_cast<std::size_t>(co) * in.channels + ci) * kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        const Range rz = valid(d[2], kz - 1);
        for (int ky = 0; ky < 3; ++ky) {
          const Range ry = valid(d[1], ky - 1);
          for (int kx = 0; kx < 3; ++kx) {
            const Range rx = valid(d[0], kx - 1);
            const double wv = wk[kz * 9 + ky * 3 + kx];
            const std::int64_t shift = (kz - 1) * nxy + (ky - 1) * nx + (kx - 1);
            for (std::int64_t z = rz.lo; z < rz.hi; ++z)
              for (std::int64_t y = ry.lo; y < ry.hi; ++y) {
                const std::int64_t row = z * nxy + y * nx;
                double *orow = o + row;
                const double *irow = src + row + shift;
                for (std::int64_t x = rx.lo; x < rx.hi; ++x) orow[x] += wv * irow[x];
              }
          }
        }
      }
    }
  }
}

/// Accumulates weight/bias gradients and, when grad_in is non-null, the input gradient.
void conv_backward(const Tensor4 &in, const Tensor4 &grad_out, const double *w, double *gw,
                   double *gb, Tensor4 *grad_in) {
  const auto &d = in.dims;
  const std::int64_t nx = d[0], nxy = d[0] * d[1];
  if (grad_in) *grad_in = Tensor4(in.channels, d);
  for (int co = 0; co < grad_out.channels; ++co) {
    const double *g = grad_out.channel(co).data();
    double sb = 0.0;
    for (std::size_t i = 0; i < grad_out.voxels(); ++i) sb += g[i];
    gb[co] += sb;
    for (int ci = 0; ci < in.channels; ++ci) {
      const double *src = in.channel(ci).data();
      double *gi = grad_in ? grad_in->channel(ci).data() : nullptr;
      const std::size_t base = (static_cast<std::size_t>(co) * in.channels + ci) * kTaps;
      for (int kz = 0; kz < 3; ++kz) {
        const Range rz = valid(d[2], kz - 1);
        for (int ky = 0; ky < 3; ++ky) {
          const Range ry = valid(d[1], ky - 1);
          for (int kx = 0; kx < 3; ++kx) {
            const Range rx = valid(d[0], kx - 1);
            const int tap = kz * 9 + ky * 3 + kx;
            const double wv = w[base + tap];
            const std::int64_t shift = (kz - 1) * nxy + (ky - 1) * nx + (kx - 1);
            double acc = 0.0;
            for (std::int64_t z = rz.lo; z < rz.hi; ++z)
              for (std::int64_t y = ry.lo; y < ry.hi; ++y) {
                const std::int64_t row = z * nxy + y * nx;
                const double *grow = g + row;
                const double *irow = src + row + shift;
                for (std::int64_t x = rx.lo; x < rx.hi; ++x) acc += grow[x] * irow[x];
                if (gi) {
                  double *girow = gi + row + shift;
                  for (std::int64_t x = rx.lo; x < rx.hi; ++x) girow[x] += wv * grow[x];
                }
              }
            gw[base + tap] += acc;
          }
        }
      }
    }
  }
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

} // namespace

// ---------------------------------------------------------------------------

TinyNet::TinyNet(std::vector<int> channel_plan, bool relu)
    : plan_(std::move(channel_plan)), relu_(relu) {
  if (plan_.size() < 2) throw InvalidArgument("channel plan needs at least two entries");
  for (int c : plan_)
    if (c < 1) throw InvalidArgument("channel counts must be >= 1");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < plan_.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(kTaps * plan_[l] * plan_[l + 1] + plan_[l + 1]);
  }
  params_.assign(off, 0.0);
}

TinyNet TinyNet::denoiser_default() { return TinyNet({2, 8, 8, 1}); }
TinyNet TinyNet::segmenter_default() { return TinyNet({1, 8, 16, 8, 1}); }

std::size_t TinyNet::expected_parameter_count(const std::vector<int> &plan) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < plan.size(); ++l)
    n += static_cast<std::size_t>(kTaps * plan[l] * plan[l + 1] + plan[l + 1]);
  return n;
}

std::size_t TinyNet::bias_offset(std::size_t layer) const {
  return offsets_.at(layer) + static_cast<std::size_t>(kTaps * plan_[layer] * plan_[layer + 1]);
}

void TinyNet::init(std::uint64_t seed, double output_bias) {
  Rng rng(seed);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double sd = std::sqrt(2.0 / (kTaps * plan_[l]));
    for (std::size_t i = offsets_[l]; i < bias_offset(l); ++i) params_[i] = sd * rng.normal();
    const std::size_t end = bias_offset(l) + static_cast<std::size_t>(plan_[l + 1]);
    const double b = l + 1 == layer_count() ? output_bias : 0.0;
    for (std::size_t i = bias_offset(l); i < end; ++i) params_[i] = b;
  }
}

void TinyNet::set_parameters(std::span<const double> p) {
  if (p.size() != params_.size()) throw InvalidArgument("parameter count mismatch");
  std::copy(p.begin(), p.end(), params_.begin());
}

Tensor4 TinyNet::forward(const Tensor4 &input) const {
  Activations acts;
  return forward(input, acts);
}

Tensor4 TinyNet::forward(const Tensor4 &input, Activations &acts) const {
  if (input.channels != plan_.front())
    throw InvalidArgument("input has " + std::to_string(input.channels) + " channels, net expects " +
                          std::to_string(plan_.front()));
  acts.inputs.clear();
  acts.pre.clear();
  acts.inputs.push_back(input);
  for (std::size_t l = 0; l < layer_count(); ++l) {
    Tensor4 pre;
    conv_forward(acts.inputs.back(), plan_[l + 1], params_.data() + offsets_[l],
                 params_.data() + bias_offset(l), pre);
    acts.pre.push_back(std::move(pre));
    if (l + 1 < layer_count()) {
      Tensor4 next = acts.pre.back();
      if (relu_)
        for (auto &v : next.data) v = v > 0.0 ? v : 0.0;
      acts.inputs.push_back(std::move(next));
    }
  }
  return acts.pre.back();
}

std::vector<double> TinyNet::backward(const Activations &acts, const Tensor4 &upstream) const {
  if (acts.pre.size() != layer_count()) throw InvalidArgument("backward without a forward pass");
  const Tensor4 &out = acts.pre.back();
  if (upstream.channels != out.channels || upstream.dims != out.dims)
    throw InvalidArgument("upstream gradient shape mismatch");
  std::vector<double> grad(params_.size(), 0.0);
  Tensor4 g = upstream;
  for (std::size_t l = layer_count(); l-- > 0;) {
    Tensor4 gin;
    conv_backward(acts.inputs[l], g, params_.data() + offsets_[l], grad.data() + offsets_[l],
                  grad.data() + bias_offset(l), l > 0 ? &gin : nullptr);
    if (l == 0) break;
    if (relu_) {
      const auto &pre = acts.pre[l - 1].data;
      for (std::size_t i = 0; i < gin.data.size(); ++i)
        if (!(pre[i] > 0.0)) gin.data[i] = 0.0;
    }
    g = std::move(gin);
  }
  return grad;
}

// ---------------------------------------------------------------------------

LossValue mse_loss(const Tensor4 &output, const Tensor4 &target) {
  if (output.data.size() != target.data.size()) throw InvalidArgument("mse_loss: shape mismatch");
  LossValue r{0.0, Tensor4(output.channels, output.dims)};
  const double n = static_cast<double>(output.data.size());
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double e = output.data[i] - target.data[i];
    r.loss += e * e;
    r.grad.data[i] = 2.0 * e / n;
  }
  r.loss /= n;
  return r;
}

LossValue dice_loss_with_logits(const Tensor4 &logits, const Tensor4 &target) {
  if (logits.data.size() != target.data.size())
    throw InvalidArgument("dice_loss: shape mismatch");
  const std::size_t n = logits.data.size();
  std::vector<double> p(n);
  double sp = 0.0, sg = 0.0, inter = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = sigmoid(logits.data[i]);
    sp += p[i];
    sg += target.data[i];
    inter += p[i] * target.data[i];
  }
  const double num = 2.0 * inter + kDiceSmoothing;
  const double den = sp + sg + kDiceSmoothing;
  LossValue r{1.0 - num / den, Tensor4(logits.channels, logits.dims)};
  for (std::size_t i = 0; i < n; ++i) {
    const double dldp = -(2.0 * target.data[i] * den - num) / (den * den);
    r.grad.data[i] = dldp * p[i] * (1.0 - p[i]);
  }
  return r;
}

double dice_loss(std::span<const double> probabilities, const Mask &reference) {
  if (probabilities.size() != reference.size()) throw InvalidArgument("dice_loss: grid mismatch");
  double sp = 0.0, sg = 0.0, inter = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    sp += probabilities[i];
    sg += reference[i];
    inter += probabilities[i] * reference[i];
  }
  return 1.0 - (2.0 * inter + kDiceSmoothing) / (sp + sg + kDiceSmoothing);
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
  }
}

void SgdMomentum::step(std::span<double> params, std::span<const double> grad, double lr) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    v_[i] = momentum_ * v_[i] + grad[i];
    params[i] -= lr * v_[i];
  }
}

} // namespace metsyn
