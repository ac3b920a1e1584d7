#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "salnet/ops.hpp"
#include "salnet/tensor.hpp"

// Reverse-mode differentiation over the kernel set in ops.hpp. A tape records
// one node per op output; backward walks the nodes in reverse creation order
// (a valid reverse topological order, since inputs always precede outputs).

namespace salnet {

template <typename T>
class TapeT;

template <typename T>
struct VarT {
  std::size_t id = static_cast<std::size_t>(-1);
};

using Var = VarT<float>;

template <typename T>
class TapeT {
 public:
  using BackwardFn = std::function<void(TapeT&, std::size_t)>;

  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // empty until backward reaches the node
    std::vector<std::size_t> parents;
    BackwardFn backward;  // null for leaves
  };

  VarT<T> leaf(TensorT<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr});
    return VarT<T>{nodes_.size() - 1};
  }

  VarT<T> emplace(TensorT<T> value, std::vector<std::size_t> parents, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, std::move(parents), std::move(fn)});
    return VarT<T>{nodes_.size() - 1};
  }

  const TensorT<T>& value(VarT<T> v) const { return nodes_[v.id].value; }

  // Zero tensor when backward did not reach the node.
  TensorT<T> grad(VarT<T> v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.empty()) return TensorT<T>(n.value.n(), n.value.c(), n.value.h(), n.value.w());
    return n.grad;
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

  void add_to_grad(std::size_t id, TensorT<T>&& contrib) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
      n.grad = std::move(contrib);
    } else {
      add_inplace(n.grad, contrib);
    }
  }

  // Grad buffers are reset on every call; two passes over the same tape with
  // the same seed produce identical gradients.
  void run_backward(VarT<T> out, const TensorT<T>& seed) {
    Node& o = nodes_[out.id];
    check_same_shape(o.value, seed, "backward seed");
    for (auto& n : nodes_) n.grad = TensorT<T>();
    o.grad = seed;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.grad.empty() && n.backward) n.backward(*this, i);
    }
  }

 private:
  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

template <typename T>
void backward(TapeT<T>& tape, VarT<T> out, const TensorT<T>& seed) {
  tape.run_backward(out, seed);
}

// Negative-control hook: when set, the relu backward rule is deliberately
// wrong so gradient checking must report a failure.
inline std::atomic<bool> g_corrupt_relu_backward{false};

template <typename T>
VarT<T> conv2d(TapeT<T>& tape, VarT<T> x, VarT<T> w, VarT<T> b, const Conv2dSpec& spec) {
  TensorT<T> out = conv2d(tape.value(x), tape.value(w), tape.value(b), spec);
  const int in_h = tape.value(x).h(), in_w = tape.value(x).w();
  const int cout = tape.value(w).n();
  return tape.emplace(std::move(out), {x.id, w.id, b.id},
                      [x, w, b, spec, in_h, in_w, cout](TapeT<T>& t, std::size_t self) {
                        const TensorT<T>& g = t.node(self).grad;
                        t.add_to_grad(x.id, conv2d_backward_input(g, t.value(w), spec, in_h, in_w));
                        t.add_to_grad(w.id, conv2d_backward_kernel(g, t.value(x), spec, cout));
                        t.add_to_grad(b.id, reduce_to_bias(g));
                      });
}

template <typename T>
VarT<T> transpose_conv2d(TapeT<T>& tape, VarT<T> x, VarT<T> w, VarT<T> b,
                         const TransposeConv2dSpec& spec = {}) {
  TensorT<T> out = transpose_conv2d(tape.value(x), tape.value(w), tape.value(b), spec);
  return tape.emplace(std::move(out), {x.id, w.id, b.id},
                      [x, w, b](TapeT<T>& t, std::size_t self) {
                        const TensorT<T>& g = t.node(self).grad;
                        t.add_to_grad(x.id, transpose_conv2d_backward_input(g, t.value(w)));
                        t.add_to_grad(w.id, transpose_conv2d_backward_kernel(g, t.value(x)));
                        t.add_to_grad(b.id, reduce_to_bias(g));
                      });
}

template <typename T>
VarT<T> avg_pool2d(TapeT<T>& tape, VarT<T> x) {
  TensorT<T> out = avg_pool2d(tape.value(x));
  const int in_h = tape.value(x).h(), in_w = tape.value(x).w();
  return tape.emplace(std::move(out), {x.id}, [x, in_h, in_w](TapeT<T>& t, std::size_t self) {
    t.add_to_grad(x.id, avg_pool2d_backward(t.node(self).grad, in_h, in_w));
  });
}

template <typename T>
VarT<T> max_pool2d(TapeT<T>& tape, VarT<T> x) {
  auto argmax = std::make_shared<std::vector<std::int64_t>>();
  TensorT<T> out = max_pool2d(tape.value(x), argmax.get());
  const int in_h = tape.value(x).h(), in_w = tape.value(x).w();
  return tape.emplace(std::move(out), {x.id},
                      [x, argmax, in_h, in_w](TapeT<T>& t, std::size_t self) {
                        t.add_to_grad(x.id,
                                      max_pool2d_backward(t.node(self).grad, *argmax, in_h, in_w));
                      });
}

template <typename T>
VarT<T> pool2d(TapeT<T>& tape, VarT<T> x, const Pool2dSpec& spec) {
  if (spec.window != 2 || spec.stride != 2) {
    throw ConfigError("pool2d supports window 2 / stride 2 only");
  }
  return spec.kind == PoolKind::average ? avg_pool2d(tape, x) : max_pool2d(tape, x);
}

template <typename T>
VarT<T> relu(TapeT<T>& tape, VarT<T> x) {
  TensorT<T> out = relu(tape.value(x));
  return tape.emplace(std::move(out), {x.id}, [x](TapeT<T>& t, std::size_t self) {
    TensorT<T> g = relu_backward(t.node(self).grad, t.value(x));
    if (g_corrupt_relu_backward.load()) {
      for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= T(1.25);
    }
    t.add_to_grad(x.id, std::move(g));
  });
}

template <typename T>
VarT<T> sigmoid(TapeT<T>& tape, VarT<T> x) {
  TensorT<T> out = sigmoid(tape.value(x));
  return tape.emplace(std::move(out), {x.id}, [x](TapeT<T>& t, std::size_t self) {
    t.add_to_grad(x.id, sigmoid_backward(t.node(self).grad, t.node(self).value));
  });
}

template <typename T>
struct BatchNormTraced {
  VarT<T> out;
  // Momentum-updated running stats (train mode only); the caller owns writing
  // them back to wherever the persistent stats live.
  TensorT<T> new_running_mean;
  TensorT<T> new_running_var;
};

template <typename T>
BatchNormTraced<T> batch_norm(TapeT<T>& tape, VarT<T> x, VarT<T> gamma, VarT<T> beta,
                              const TensorT<T>& running_mean, const TensorT<T>& running_var,
                              Mode mode, double momentum = 0.1, double epsilon = 1e-5) {
  BatchNormResult<T> r = batch_norm(tape.value(x), tape.value(gamma), tape.value(beta),
                                    running_mean, running_var, mode, momentum, epsilon);
  auto used_mean = std::make_shared<TensorT<T>>(std::move(r.used_mean));
  auto used_invstd = std::make_shared<TensorT<T>>(std::move(r.used_invstd));
  BatchNormTraced<T> traced;
  traced.new_running_mean = std::move(r.new_running_mean);
  traced.new_running_var = std::move(r.new_running_var);
  traced.out = tape.emplace(
      std::move(r.output), {x.id, gamma.id, beta.id},
      [x, gamma, beta, used_mean, used_invstd, mode](TapeT<T>& t, std::size_t self) {
        BatchNormGrads<T> g = batch_norm_backward(t.node(self).grad, t.value(x), t.value(gamma),
                                                  *used_mean, *used_invstd, mode);
        t.add_to_grad(x.id, std::move(g.input));
        t.add_to_grad(gamma.id, std::move(g.gamma));
        t.add_to_grad(beta.id, std::move(g.beta));
      });
  return traced;
}

template <typename T>
VarT<T> pad_replicate2d(TapeT<T>& tape, VarT<T> x, int top, int bottom, int left, int right) {
  TensorT<T> out = pad_replicate2d(tape.value(x), top, bottom, left, right);
  const int in_h = tape.value(x).h(), in_w = tape.value(x).w();
  return tape.emplace(std::move(out), {x.id},
                      [x, top, left, in_h, in_w](TapeT<T>& t, std::size_t self) {
                        t.add_to_grad(x.id, pad_replicate2d_backward(t.node(self).grad, top, left,
                                                                     in_h, in_w));
                      });
}

template <typename T>
VarT<T> crop2d(TapeT<T>& tape, VarT<T> x, int top, int left, int out_h, int out_w) {
  TensorT<T> out = crop2d(tape.value(x), top, left, out_h, out_w);
  const int in_h = tape.value(x).h(), in_w = tape.value(x).w();
  return tape.emplace(std::move(out), {x.id},
                      [x, top, left, in_h, in_w](TapeT<T>& t, std::size_t self) {
                        t.add_to_grad(x.id,
                                      crop2d_backward(t.node(self).grad, top, left, in_h, in_w));
                      });
}

// Scalar mean-absolute-difference head. The target is a constant, not a node.
// Subgradient at zero residual is defined as 0.
template <typename T>
VarT<T> l1_loss(TapeT<T>& tape, VarT<T> pred, const TensorT<T>& target) {
  const TensorT<T>& pv = tape.value(pred);
  check_same_shape(pv, target, "l1_loss");
  TensorT<T> out(1, 1, 1, 1, static_cast<T>(l1_loss_value(pv, target)));
  auto tgt = std::make_shared<TensorT<T>>(target);
  return tape.emplace(std::move(out), {pred.id}, [pred, tgt](TapeT<T>& t, std::size_t self) {
    const T seed = t.node(self).grad[0];
    const TensorT<T>& pv = t.value(pred);
    TensorT<T> g(pv.n(), pv.c(), pv.h(), pv.w());
    const T scale = seed / static_cast<T>(pv.size());
    for (std::int64_t i = 0; i < pv.size(); ++i) {
      const T r = pv[i] - (*tgt)[i];
      g[i] = r > T(0) ? scale : (r < T(0) ? -scale : T(0));
    }
    t.add_to_grad(pred.id, std::move(g));
  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradCheckReport {
  struct Entry {
    std::string param;
    double max_rel_err = 0.0;
    bool frozen = false;
  };
  std::string name;
  double epsilon = 0.0;
  double tolerance = 0.0;
  std::vector<Entry> entries;
  double worst = 0.0;  // max over non-frozen entries
  bool passed = true;  // frozen entries are reported but do not gate
};

// A scalar-valued graph over a set of leaf parameters. `build` must compose
// only ops from this header and return a (1,1,1,1)-shaped node.
template <typename T>
struct GradCheckProblem {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<TensorT<T>> params;
  std::vector<bool> frozen;  // optional, defaults to all-false
  std::function<VarT<T>(TapeT<T>&, const std::vector<VarT<T>>&)> build;
};

template <typename T>
double eval_scalar(const GradCheckProblem<T>& p, const std::vector<TensorT<T>>& params) {
  TapeT<T> tape;
  std::vector<VarT<T>> vars;
  vars.reserve(params.size());
  for (const auto& t : params) vars.push_back(tape.leaf(t));
  VarT<T> out = p.build(tape, vars);
  if (tape.value(out).size() != 1) {
    throw UsageError("grad_check: graph output must be scalar, got shape " +
                     tape.value(out).shape_str());
  }
  return static_cast<double>(tape.value(out)[0]);
}

// Central differences (f(th+eps) - f(th-eps)) / 2 eps per parameter element,
// compared against one analytic backward pass. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename T>
GradCheckReport grad_check(const GradCheckProblem<T>& p, double epsilon, double tolerance) {
  if (epsilon <= 0.0) throw UsageError("grad_check: epsilon must be > 0");
  GradCheckReport report;
  report.name = p.name;
  report.epsilon = epsilon;
  report.tolerance = tolerance;

  TapeT<T> tape;
  std::vector<VarT<T>> vars;
  for (const auto& t : p.params) vars.push_back(tape.leaf(t));
  VarT<T> out = p.build(tape, vars);
  if (tape.value(out).size() != 1) {
    throw UsageError("grad_check: graph output must be scalar, got shape " +
                     tape.value(out).shape_str());
  }
  tape.run_backward(out, TensorT<T>(1, 1, 1, 1, T(1)));

  std::vector<TensorT<T>> work = p.params;
  for (std::size_t i = 0; i < p.params.size(); ++i) {
    TensorT<T> analytic = tape.grad(vars[i]);
    double max_rel = 0.0;
    for (std::int64_t j = 0; j < work[i].size(); ++j) {
      const T saved = work[i][j];
      work[i][j] = static_cast<T>(static_cast<double>(saved) + epsilon);
      const double f_plus = eval_scalar(p, work);
      work[i][j] = static_cast<T>(static_cast<double>(saved) - epsilon);
      const double f_minus = eval_scalar(p, work);
      work[i][j] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      const double a = static_cast<double>(analytic[j]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
    GradCheckReport::Entry e;
    e.param = i < p.param_names.size() ? p.param_names[i] : "p" + std::to_string(i);
    e.max_rel_err = max_rel;
    e.frozen = i < p.frozen.size() && p.frozen[i];
    report.entries.push_back(e);
    if (!e.frozen) {
      report.worst = std::max(report.worst, max_rel);
      if (max_rel > tolerance) report.passed = false;
    }
  }
  return report;
}

}  // namespace salnet
