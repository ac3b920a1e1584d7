#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "salnet/autograd.hpp"
#include "salnet/rng.hpp"

// Seeded gradient-check problems covering every differentiable op. Inputs are
// shaped so central differences stay well conditioned: values are O(1), and
// kinked ops (relu, max-pool, the absolute loss) get inputs that keep every
// element at least 2*epsilon away from the kink.

namespace salnet {

template <typename T>
TensorT<T> rand_tensor(Rng& rng, int n, int c, int h, int w, float lo = -1.0f, float hi = 1.0f) {
  TensorT<T> t(n, c, h, w);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Random displacement with |d| in [0.5, 1.5] per element, so an L1 head gets
// residuals of mixed sign that epsilon-sized perturbations cannot flip.
template <typename T>
TensorT<T> displaced_target(Rng& rng, const TensorT<T>& base) {
  TensorT<T> t(base.n(), base.c(), base.h(), base.w());
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const float mag = rng.uniform(0.5f, 1.5f);
    t[i] = base[i] + static_cast<T>(rng.uniform() < 0.5 ? mag : -mag);
  }
  return t;
}

template <typename T>
GradCheckProblem<T> make_conv2d_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + static_cast<std::uint64_t>(variant));
  Conv2dSpec spec;
  const int ks[] = {3, 2, 1};
  spec.kernel_h = spec.kernel_w = ks[variant % 3];
  spec.stride = 1 + variant % 2;
  spec.padding = spec.kernel_h == 3 ? 1 : 0;
  const int n = 1 + variant % 2, cin = 1 + variant % 3, cout = 1 + (variant + 1) % 3;
  const int hw = 4 + variant % 3;

  GradCheckProblem<T> p;
  p.name = "conv2d[" + std::to_string(variant) + "]";
  p.param_names = {"input", "kernel", "bias"};
  p.params = {rand_tensor<T>(rng, n, cin, hw, hw),
              rand_tensor<T>(rng, cout, cin, spec.kernel_h, spec.kernel_w),
              rand_tensor<T>(rng, 1, cout, 1, 1)};
  TensorT<T> base = conv2d(p.params[0], p.params[1], p.params[2], spec);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [spec, target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, conv2d(t, v[0], v[1], v[2], spec), target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_transpose_conv2d_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 31 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, cin = 1 + variant % 3, cout = 1 + (variant + 2) % 3;
  const int hw = 2 + variant % 3;
  GradCheckProblem<T> p;
  p.name = "transpose_conv2d[" + std::to_string(variant) + "]";
  p.param_names = {"input", "kernel", "bias"};
  p.params = {rand_tensor<T>(rng, n, cin, hw, hw), rand_tensor<T>(rng, cin, cout, 2, 2),
              rand_tensor<T>(rng, 1, cout, 1, 1)};
  TensorT<T> base = transpose_conv2d(p.params[0], p.params[1], p.params[2]);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, transpose_conv2d(t, v[0], v[1], v[2]), target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_avg_pool_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 57 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, c = 1 + variant % 3, hw = 2 * (1 + variant % 3);
  GradCheckProblem<T> p;
  p.name = "avg_pool2d[" + std::to_string(variant) + "]";
  p.param_names = {"input"};
  p.params = {rand_tensor<T>(rng, n, c, hw, hw)};
  TensorT<T> base = avg_pool2d(p.params[0]);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, avg_pool2d(t, v[0]), target);
  };
  return p;
}

// Each 2x2 window gets offsets {0, 0.3, 0.6, 0.9} plus jitter in [0, 0.1], so
// window elements are separated by at least 0.2 and a perturbation of epsilon
// <= 0.05 can never change the argmax.
template <typename T>
GradCheckProblem<T> make_max_pool_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 83 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, c = 1 + variant % 3, hw = 2 * (1 + variant % 3);
  TensorT<T> x(n, c, hw, hw);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < hw; ++y)
        for (int xx = 0; xx < hw; ++xx) {
          const int slot = (y % 2) * 2 + (xx % 2);
          x.at(b, ch, y, xx) = static_cast<T>(0.3 * slot + rng.uniform(0.0f, 0.1f));
        }
  GradCheckProblem<T> p;
  p.name = "max_pool2d[" + std::to_string(variant) + "]";
  p.param_names = {"input"};
  p.params = {x};
  TensorT<T> base = max_pool2d(p.params[0]);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, max_pool2d(t, v[0]), target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_relu_problem(int variant, std::uint64_t seed, bool frozen = false) {
  Rng rng(seed * 1000 + 119 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, c = 1 + variant % 3, hw = 3 + variant % 3;
  TensorT<T> x(n, c, hw, hw);
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const float mag = rng.uniform(0.1f, 1.0f);
    x[i] = static_cast<T>(rng.uniform() < 0.5 ? mag : -mag);
  }
  GradCheckProblem<T> p;
  p.name = "relu[" + std::to_string(variant) + "]";
  p.param_names = {"input"};
  p.params = {x};
  p.frozen = {frozen};
  TensorT<T> base = relu(p.params[0]);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, relu(t, v[0]), target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_sigmoid_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 151 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, c = 1 + variant % 3, hw = 3 + variant % 3;
  GradCheckProblem<T> p;
  p.name = "sigmoid[" + std::to_string(variant) + "]";
  p.param_names = {"input"};
  p.params = {rand_tensor<T>(rng, n, c, hw, hw, -2.5f, 2.5f)};
  TensorT<T> base = sigmoid(p.params[0]);
  TensorT<T> target = displaced_target(rng, base);
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, sigmoid(t, v[0]), target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_batch_norm_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 187 + static_cast<std::uint64_t>(variant));
  const Mode mode = variant % 2 == 0 ? Mode::train : Mode::infer;
  const int n = 2, c = 1 + variant % 3, hw = 3 + variant % 3;
  GradCheckProblem<T> p;
  p.name = std::string("batch_norm[") + std::to_string(variant) + "," +
           (mode == Mode::train ? "train" : "infer") + "]";
  p.param_names = {"input", "gamma", "beta"};
  p.params = {rand_tensor<T>(rng, n, c, hw, hw), rand_tensor<T>(rng, 1, c, 1, 1, 0.5f, 1.5f),
              rand_tensor<T>(rng, 1, c, 1, 1, -0.5f, 0.5f)};
  TensorT<T> running_mean = rand_tensor<T>(rng, 1, c, 1, 1, -0.5f, 0.5f);
  TensorT<T> running_var = rand_tensor<T>(rng, 1, c, 1, 1, 0.5f, 1.5f);
  BatchNormResult<T> base = batch_norm(p.params[0], p.params[1], p.params[2], running_mean,
                                       running_var, mode);
  TensorT<T> target = displaced_target(rng, base.output);
  p.build = [target, running_mean, running_var, mode](TapeT<T>& t,
                                                      const std::vector<VarT<T>>& v) {
    auto bn = batch_norm(t, v[0], v[1], v[2], running_mean, running_var, mode);
    return l1_loss(t, bn.out, target);
  };
  return p;
}

template <typename T>
GradCheckProblem<T> make_l1_loss_problem(int variant, std::uint64_t seed) {
  Rng rng(seed * 1000 + 223 + static_cast<std::uint64_t>(variant));
  const int n = 1 + variant % 2, hw = 3 + variant % 3;
  TensorT<T> pred = rand_tensor<T>(rng, n, 1, hw, hw);
  TensorT<T> target = displaced_target(rng, pred);
  GradCheckProblem<T> p;
  p.name = "l1_loss[" + std::to_string(variant) + "]";
  p.param_names = {"prediction"};
  p.params = {pred};
  p.build = [target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, v[0], target);
  };
  return p;
}

// conv -> avg_pool -> sigmoid -> L1, the smallest end-to-end training graph.
template <typename T>
GradCheckProblem<T> make_tiny_model_problem(std::uint64_t seed) {
  Rng rng(seed * 1000 + 259);
  Conv2dSpec spec;
  spec.kernel_h = spec.kernel_w = 3;
  spec.stride = 1;
  spec.padding = 1;
  GradCheckProblem<T> p;
  p.name = "conv+avgpool+sigmoid+l1";
  p.param_names = {"input", "kernel", "bias"};
  p.params = {rand_tensor<T>(rng, 1, 2, 6, 6), rand_tensor<T>(rng, 3, 2, 3, 3),
              rand_tensor<T>(rng, 1, 3, 1, 1)};
  TensorT<T> target(1, 3, 3, 3);
  for (std::int64_t i = 0; i < target.size(); ++i) {
    target[i] = rng.uniform() < 0.5 ? T(0) : T(1);
  }
  p.build = [spec, target](TapeT<T>& t, const std::vector<VarT<T>>& v) {
    return l1_loss(t, sigmoid(t, avg_pool2d(t, conv2d(t, v[0], v[1], v[2], spec))), target);
  };
  return p;
}

// One problem per differentiable op per case index. The composite problem is
// not included: run it separately, with a looser tolerance in double (the
// epsilon^2 truncation of central differences through composed nonlinearities
// can exceed the per-op 1e-4).
template <typename T>
std::vector<GradCheckProblem<T>> standard_gradcheck_problems(int cases_per_op,
                                                             std::uint64_t seed) {
  std::vector<GradCheckProblem<T>> out;
  for (int k = 0; k < cases_per_op; ++k) {
    out.push_back(make_conv2d_problem<T>(k, seed));
    out.push_back(make_transpose_conv2d_problem<T>(k, seed));
    out.push_back(make_avg_pool_problem<T>(k, seed));
    out.push_back(make_max_pool_problem<T>(k, seed));
    out.push_back(make_relu_problem<T>(k, seed));
    out.push_back(make_sigmoid_problem<T>(k, seed));
    out.push_back(make_batch_norm_problem<T>(k, seed));
    out.push_back(make_l1_loss_problem<T>(k, seed));
  }
  return out;
}

}  // namespace salnet
