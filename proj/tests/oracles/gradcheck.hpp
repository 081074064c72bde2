#pragma once

// Central finite-difference checks of every layer's backward pass, in double.
// Each check builds L = sum(g * f(x)) for a fixed random upstream gradient g
// and compares analytic dL/dx and dL/dparam against (L(+h) - L(-h)) / 2h.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "colornet/layers.hpp"
#include "colornet/network.hpp"
#include "colornet/rng.hpp"

namespace gradcheck {

using colornet::Parameter;
using colornet::Rng;
using colornet::Tensor4;

inline constexpr double kStep = 1e-3;
// Whole-network step: small enough that ReLU / max-pool kinks rarely fall
// inside [-h, h], large enough that rounding stays far below the tolerance.
inline constexpr double kNetworkStep = 1e-6;

struct Result {
  std::string name;
  double max_rel = 0.0;
  std::size_t checked = 0;
  /// Coordinates whose step straddles a ReLU or max-pool kink (network check only).
  std::size_t kinks = 0;
};

inline double rel_error(double a, double n) {
  return std::fabs(a - n) / std::max(1e-6, std::fabs(a) + std::fabs(n));
}

inline Tensor4<double> random_tensor(Rng& rng, std::size_t n, std::size_t c, std::size_t h,
                                     std::size_t w, double lo = -1.0, double hi = 1.0) {
  Tensor4<double> t(n, c, h, w);
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

inline double dot(const Tensor4<double>& a, const Tensor4<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

/// Compares analytic gradients against finite differences of `loss` with
/// respect to every entry of `x` and of each parameter.
inline void compare(Result& r, const std::function<double()>& loss, std::vector<double>& target,
                    const std::vector<double>& analytic) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double keep = target[i];
    target[i] = keep + kStep;
    const double up = loss();
    target[i] = keep - kStep;
    const double down = loss();
    target[i] = keep;
    r.max_rel = std::max(r.max_rel, rel_error(analytic[i], (up - down) / (2 * kStep)));
    ++r.checked;
  }
}

template <typename Layer>
Result check_parametric(const std::string& name, Layer layer, Tensor4<double> x, Rng& rng) {
  Result r{name};
  const auto y = layer.forward(x);
  const auto g = random_tensor(rng, y.n, y.c, y.h, y.w);
  layer.weight.zero_grad();
  layer.bias.zero_grad();
  const auto dx = layer.backward(g);
  const auto dw = layer.weight.grad;
  const auto db = layer.bias.grad;
  auto loss = [&] { return dot(layer.forward(x), g); };
  compare(r, loss, x.values, dx.values);
  compare(r, loss, layer.weight.value, dw);
  compare(r, loss, layer.bias.value, db);
  return r;
}

inline Result check_conv(std::uint64_t seed) {
  Rng rng(seed);
  colornet::Conv2d<double> conv("conv", 3, 4, 3);
  for (auto& v : conv.weight.value) v = rng.uniform(-0.5, 0.5);
  for (auto& v : conv.bias.value) v = rng.uniform(-0.5, 0.5);
  return check_parametric("conv2d", conv, random_tensor(rng, 2, 3, 4, 4), rng);
}

inline Result check_dense(std::uint64_t seed) {
  Rng rng(seed);
  colornet::Dense<double> dense("dense", 12, 5);
  for (auto& v : dense.weight.value) v = rng.uniform(-0.5, 0.5);
  for (auto& v : dense.bias.value) v = rng.uniform(-0.5, 0.5);
  return check_parametric("dense", dense, random_tensor(rng, 3, 3, 2, 2), rng);
}

template <typename Fwd, typename Bwd>
Result check_plain(const std::string& name, Tensor4<double> x, Rng& rng, Fwd fwd, Bwd bwd) {
  Result r{name};
  const auto y = fwd(x);
  const auto g = random_tensor(rng, y.n, y.c, y.h, y.w);
  const auto dx = bwd(g);
  compare(r, [&] { return dot(fwd(x), g); }, x.values, dx.values);
  return r;
}

inline Result check_relu(std::uint64_t seed) {
  Rng rng(seed);
  auto x = random_tensor(rng, 2, 3, 3, 3);
  // Keep inputs away from the kink so the step never crosses zero.
  for (auto& v : x.values) v = (v < 0 ? -1.0 : 1.0) * (0.01 + std::fabs(v));
  colornet::Relu<double> relu;
  return check_plain("relu", x, rng, [&](const Tensor4<double>& t) { return relu.forward(t); },
                     [&](const Tensor4<double>& g) { return relu.backward(g); });
}

inline Result check_maxpool(std::uint64_t seed) {
  Rng rng(seed);
  Tensor4<double> x(2, 2, 4, 6);
  // Distinct values spaced well beyond the step so window maxima are stable.
  std::vector<double> grid(x.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = 0.05 * static_cast<double>(i);
  rng.shuffle(grid);
  x.values = grid;
  colornet::MaxPool2<double> pool;
  return check_plain("maxpool2", x, rng, [&](const Tensor4<double>& t) { return pool.forward(t); },
                     [&](const Tensor4<double>& g) { return pool.backward(g); });
}

inline Result check_dropout(std::uint64_t seed) {
  Rng rng(seed);
  colornet::Dropout<double> drop(0.4);
  // Re-seeding per call replays the same mask for every evaluation.
  auto fwd = [&](const Tensor4<double>& t) {
    Rng mask(seed + 1);
    return drop.forward(t, true, &mask);
  };
  return check_plain("dropout", random_tensor(rng, 2, 3, 2, 2), rng, fwd,
                     [&](const Tensor4<double>& g) { return drop.backward(g); });
}

inline Result check_softmax_ce(std::uint64_t seed) {
  Rng rng(seed);
  Result r{"softmax_cross_entropy"};
  auto logits = random_tensor(rng, 4, 6, 1, 1, -3.0, 3.0);
  std::vector<int> labels;
  for (int i = 0; i < 4; ++i) labels.push_back(static_cast<int>(rng.below(6)));
  const auto res = colornet::softmax_cross_entropy(logits, labels);
  compare(r, [&] { return colornet::softmax_cross_entropy(logits, labels).loss; }, logits.values,
          res.grad.values);
  return r;
}

/// Like compare(), but a coordinate whose one-sided slopes disagree has a
/// kink inside [-h, h]; it is counted instead of compared.
inline void compare_piecewise(Result& r, const std::function<double()>& loss,
                              std::vector<double>& target, const std::vector<double>& analytic,
                              double h) {
  const double base = loss();
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double keep = target[i];
    target[i] = keep + h;
    const double up = loss();
    target[i] = keep - h;
    const double down = loss();
    target[i] = keep;
    const double fwd = (up - base) / h, bwd = (base - down) / h;
    if (std::fabs(fwd - bwd) > 0.01 * (std::fabs(fwd) + std::fabs(bwd)) + 1e-6) {
      ++r.kinks;
      continue;
    }
    r.max_rel = std::max(r.max_rel, rel_error(analytic[i], (up - down) / (2 * h)));
    ++r.checked;
  }
}

/// Whole compact CNN in double with dropout active (fixed mask).
inline Result check_network(std::uint64_t seed) {
  Result r{"compact_cnn"};
  colornet::Topology topo;
  topo.in_channels = 3;
  topo.height = 8;
  topo.width = 8;
  topo.num_classes = 3;
  topo.filters1 = 3;
  topo.filters2 = 4;
  topo.dropout = 0.25;
  colornet::CompactCnn<double> net(topo, seed);
  Rng rng(seed ^ 0x5a5aULL);
  for (auto* p : net.parameters()) {
    if (!p->decay) {
      for (auto& v : p->value) v = rng.uniform(-0.1, 0.1);
    }
  }
  auto x = random_tensor(rng, 2, 3, 8, 8);
  const std::vector<int> labels{0, 2};
  auto loss = [&] {
    Rng mask(seed + 7);
    return colornet::softmax_cross_entropy(net.forward(x, true, &mask), labels).loss;
  };
  Rng mask(seed + 7);
  const auto res = colornet::softmax_cross_entropy(net.forward(x, true, &mask), labels);
  net.zero_grad();
  net.backward(res.grad);
  for (auto* p : net.parameters()) {
    const auto analytic = p->grad;
    compare_piecewise(r, loss, p->value, analytic, kNetworkStep);
  }
  return r;
}

inline std::vector<Result> run_all(std::uint64_t seed) {
  return {check_conv(seed),    check_dense(seed),      check_relu(seed),
          check_maxpool(seed), check_dropout(seed),    check_softmax_ce(seed),
          check_network(seed)};
}

}  // namespace gradcheck
