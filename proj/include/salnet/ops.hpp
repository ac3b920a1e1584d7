#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "salnet/error.hpp"
#include "salnet/parallel.hpp"
#include "salnet/tensor.hpp"

// Forward and backward numeric kernels on 4-D tensors. Every function here is
// a pure function of its arguments. Dot products accumulate in double and are
// stored back in the element type.

namespace salnet {

enum class Mode { train, infer };
enum class PoolKind { average, max };

struct Conv2dSpec {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 0;  // symmetric zero padding
};

// 2x2 kernels with stride 2 and no padding; each output pixel has exactly one
// source, so the op is an exact spatial doubling.
struct TransposeConv2dSpec {
  int kernel = 2;
  int stride = 2;
};

struct Pool2dSpec {
  PoolKind kind = PoolKind::average;
  int window = 2;
  int stride = 2;
};

// Sigmoid outputs are clamped into [kOutputClampLo, 1 - kOutputClampLo] so an
// absolute loss against binary targets never sits at its non-differentiable
// point.
inline constexpr double kOutputClampLo = 1e-7;

inline int conv_output_dim(int in, int k, int stride, int padding, const char* axis) {
  if (stride < 1) throw ConfigError("conv stride must be >= 1");
  if (padding < 0) throw ConfigError("conv padding must be >= 0");
  const int span = in + 2 * padding - k;
  const int out = span < 0 ? 0 : span / stride + 1;
  if (out < 1) {
    throw DimensionError(std::string("conv output ") + axis + " collapses to zero: input " +
                         std::to_string(in) + ", kernel " + std::to_string(k) + ", stride " +
                         std::to_string(stride) + ", padding " + std::to_string(padding));
  }
  return out;
}

template <typename T>
TensorT<T> zero_pad2d(const TensorT<T>& in, int pad) {
  TensorT<T> out(in.n(), in.c(), in.h() + 2 * pad, in.w() + 2 * pad);
  for (int n = 0; n < in.n(); ++n) {
    for (int c = 0; c < in.c(); ++c) {
      for (int y = 0; y < in.h(); ++y) {
        const T* src = &in.at(n, c, y, 0);
        T* dst = &out.at(n, c, y + pad, pad);
        std::copy(src, src + in.w(), dst);
      }
    }
  }
  return out;
}

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                     const Conv2dSpec& spec, int cout) {
  if (kernel.h() != spec.kernel_h || kernel.w() != spec.kernel_w) {
    throw DimensionError("conv2d: kernel tensor is " + std::to_string(kernel.h()) + "x" +
                         std::to_string(kernel.w()) + " but spec says " +
                         std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w));
  }
  (void)input;
  if (!bias.empty() && (bias.n() != 1 || bias.c() != cout || bias.h() != 1 || bias.w() != 1)) {
    throw DimensionError("conv2d: bias must be (1," + std::to_string(cout) + ",1,1), got " +
                         bias.shape_str());
  }
}

// out[n,co,y,x] = bias[co] + sum_{ci,dy,dx} in_padded[n,ci,y*s+dy,x*s+dx] * k[co,ci,dy,dx]
template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& bias,
                  const Conv2dSpec& spec) {
  if (kernel.c() != input.c()) {
    throw DimensionError("conv2d: kernel input-channel axis is " + std::to_string(kernel.c()) +
                         " but input has " + std::to_string(input.c()) + " channels");
  }
  const int cout = kernel.n();
  check_conv_args(input, kernel, bias, spec, cout);
  const int hout = conv_output_dim(input.h(), spec.kernel_h, spec.stride, spec.padding, "height");
  const int wout = conv_output_dim(input.w(), spec.kernel_w, spec.stride, spec.padding, "width");

  TensorT<T> padded;
  const TensorT<T>* src = &input;
  if (spec.padding > 0) {
    padded = zero_pad2d(input, spec.padding);
    src = &padded;
  }
  const int cin = input.c();
  const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride;

  TensorT<T> out(input.n(), cout, hout, wout);
  parallel_for(static_cast<std::int64_t>(input.n()) * cout, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / cout);
    const int co = static_cast<int>(idx % cout);
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias.at(0, co, 0, 0));
    for (int oy = 0; oy < hout; ++oy) {
      for (int ox = 0; ox < wout; ++ox) {
        double acc = b;
        for (int ci = 0; ci < cin; ++ci) {
          const T* krow = &kernel.at(co, ci, 0, 0);
          for (int dy = 0; dy < kh; ++dy) {
            const T* srow = &src->at(n, ci, oy * s + dy, ox * s);
            const T* kk = krow + dy * kw;
            for (int dx = 0; dx < kw; ++dx) {
              acc += static_cast<double>(srow[dx]) * static_cast<double>(kk[dx]);
            }
          }
        }
        out.at(n, co, oy, ox) = static_cast<T>(acc);
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> conv2d_backward_input(const TensorT<T>& grad_out, const TensorT<T>& kernel,
                                 const Conv2dSpec& spec, int in_h, int in_w) {
  const int cout = kernel.n(), cin = kernel.c();
  const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride, p = spec.padding;
  TensorT<T> gin(grad_out.n(), cin, in_h, in_w);
  parallel_for(grad_out.n(), [&](std::int64_t n) {
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < grad_out.h(); ++oy) {
        for (int ox = 0; ox < grad_out.w(); ++ox) {
          const double g = static_cast<double>(grad_out.at(static_cast<int>(n), co, oy, ox));
          for (int ci = 0; ci < cin; ++ci) {
            for (int dy = 0; dy < kh; ++dy) {
              const int iy = oy * s + dy - p;
              if (iy < 0 || iy >= in_h) continue;
              for (int dx = 0; dx < kw; ++dx) {
                const int ix = ox * s + dx - p;
                if (ix < 0 || ix >= in_w) continue;
                gin.at(static_cast<int>(n), ci, iy, ix) +=
                    static_cast<T>(g * static_cast<double>(kernel.at(co, ci, dy, dx)));
              }
            }
          }
        }
      }
    }
  });
  return gin;
}

template <typename T>
TensorT<T> conv2d_backward_kernel(const TensorT<T>& grad_out, const TensorT<T>& input,
                                  const Conv2dSpec& spec, int cout) {
  const int cin = input.c();
  const int kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride;
  TensorT<T> padded;
  const TensorT<T>* src = &input;
  if (spec.padding > 0) {
    padded = zero_pad2d(input, spec.padding);
    src = &padded;
  }
  TensorT<T> gk(cout, cin, kh, kw);
  parallel_for(static_cast<std::int64_t>(cout) * cin, [&](std::int64_t idx) {
    const int co = static_cast<int>(idx / cin);
    const int ci = static_cast<int>(idx % cin);
    for (int dy = 0; dy < kh; ++dy) {
      for (int dx = 0; dx < kw; ++dx) {
        double acc = 0.0;
        for (int n = 0; n < grad_out.n(); ++n) {
          for (int oy = 0; oy < grad_out.h(); ++oy) {
            const T* grow = &grad_out.at(n, co, oy, 0);
            const T* srow = &src->at(n, ci, oy * s + dy, dx);
            for (int ox = 0; ox < grad_out.w(); ++ox) {
              acc += static_cast<double>(grow[ox]) * static_cast<double>(srow[ox * s]);
            }
          }
        }
        gk.at(co, ci, dy, dx) = static_cast<T>(acc);
      }
    }
  });
  return gk;
}

template <typename T>
TensorT<T> reduce_to_bias(const TensorT<T>& grad_out) {
  TensorT<T> gb(1, grad_out.c(), 1, 1);
  for (int c = 0; c < grad_out.c(); ++c) {
    double acc = 0.0;
    for (int n = 0; n < grad_out.n(); ++n) {
      for (int y = 0; y < grad_out.h(); ++y) {
        const T* row = &grad_out.at(n, c, y, 0);
        for (int x = 0; x < grad_out.w(); ++x) acc += static_cast<double>(row[x]);
      }
    }
    gb.at(0, c, 0, 0) = static_cast<T>(acc);
  }
  return gb;
}

// Scatter-add semantics: in[n,ci,y,x] * k[ci,co,dy,dx] lands on out[n,co,2y+dy,2x+dx].
// Implemented in gather form, which is equivalent because contributions never
// overlap at kernel 2 / stride 2.
template <typename T>
TensorT<T> transpose_conv2d(const TensorT<T>& input, const TensorT<T>& kernel,
                            const TensorT<T>& bias, const TransposeConv2dSpec& spec = {}) {
  if (spec.kernel != 2 || spec.stride != 2) {
    throw ConfigError("transpose_conv2d supports kernel 2 / stride 2 only");
  }
  if (kernel.n() != input.c()) {
    throw DimensionError("transpose_conv2d: kernel input-channel axis is " +
                         std::to_string(kernel.n()) + " but input has " +
                         std::to_string(input.c()) + " channels");
  }
  if (kernel.h() != 2 || kernel.w() != 2) {
    throw DimensionError("transpose_conv2d: kernel must be 2x2, got " + kernel.shape_str());
  }
  const int cin = input.c(), cout = kernel.c();
  if (!bias.empty() && (bias.n() != 1 || bias.c() != cout || bias.h() != 1 || bias.w() != 1)) {
    throw DimensionError("transpose_conv2d: bias must be (1," + std::to_string(cout) +
                         ",1,1), got " + bias.shape_str());
  }
  TensorT<T> out(input.n(), cout, input.h() * 2, input.w() * 2);
  parallel_for(static_cast<std::int64_t>(input.n()) * cout, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / cout);
    const int co = static_cast<int>(idx % cout);
    const double b = bias.empty() ? 0.0 : static_cast<double>(bias.at(0, co, 0, 0));
    for (int oy = 0; oy < out.h(); ++oy) {
      const int y = oy >> 1, dy = oy & 1;
      for (int ox = 0; ox < out.w(); ++ox) {
        const int x = ox >> 1, dx = ox & 1;
        double acc = b;
        for (int ci = 0; ci < cin; ++ci) {
          acc += static_cast<double>(input.at(n, ci, y, x)) *
                 static_cast<double>(kernel.at(ci, co, dy, dx));
        }
        out.at(n, co, oy, ox) = static_cast<T>(acc);
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> transpose_conv2d_backward_input(const TensorT<T>& grad_out, const TensorT<T>& kernel) {
  const int cin = kernel.n(), cout = kernel.c();
  TensorT<T> gin(grad_out.n(), cin, grad_out.h() / 2, grad_out.w() / 2);
  parallel_for(static_cast<std::int64_t>(grad_out.n()) * cin, [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / cin);
    const int ci = static_cast<int>(idx % cin);
    for (int y = 0; y < gin.h(); ++y) {
      for (int x = 0; x < gin.w(); ++x) {
        double acc = 0.0;
        for (int co = 0; co < cout; ++co) {
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              acc += static_cast<double>(grad_out.at(n, co, 2 * y + dy, 2 * x + dx)) *
                     static_cast<double>(kernel.at(ci, co, dy, dx));
            }
          }
        }
        gin.at(n, ci, y, x) = static_cast<T>(acc);
      }
    }
  });
  return gin;
}

template <typename T>
TensorT<T> transpose_conv2d_backward_kernel(const TensorT<T>& grad_out, const TensorT<T>& input) {
  const int cin = input.c(), cout = grad_out.c();
  TensorT<T> gk(cin, cout, 2, 2);
  parallel_for(static_cast<std::int64_t>(cin) * cout, [&](std::int64_t idx) {
    const int ci = static_cast<int>(idx / cout);
    const int co = static_cast<int>(idx % cout);
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        double acc = 0.0;
        for (int n = 0; n < input.n(); ++n) {
          for (int y = 0; y < input.h(); ++y) {
            for (int x = 0; x < input.w(); ++x) {
              acc += static_cast<double>(input.at(n, ci, y, x)) *
                     static_cast<double>(grad_out.at(n, co, 2 * y + dy, 2 * x + dx));
            }
          }
        }
        gk.at(ci, co, dy, dx) = static_cast<T>(acc);
      }
    }
  });
  return gk;
}

template <typename T>
void check_pool_input(const TensorT<T>& input, const char* op) {
  if (input.h() % 2 != 0 || input.w() % 2 != 0) {
    throw DimensionError(std::string(op) + ": spatial dims must be even, got " +
                         input.shape_str());
  }
}

template <typename T>
TensorT<T> avg_pool2d(const TensorT<T>& input) {
  check_pool_input(input, "avg_pool2d");
  TensorT<T> out(input.n(), input.c(), input.h() / 2, input.w() / 2);
  parallel_for(static_cast<std::int64_t>(input.n()) * input.c(), [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / input.c());
    const int c = static_cast<int>(idx % input.c());
    for (int y = 0; y < out.h(); ++y) {
      for (int x = 0; x < out.w(); ++x) {
        const double acc = static_cast<double>(input.at(n, c, 2 * y, 2 * x)) +
                           static_cast<double>(input.at(n, c, 2 * y, 2 * x + 1)) +
                           static_cast<double>(input.at(n, c, 2 * y + 1, 2 * x)) +
                           static_cast<double>(input.at(n, c, 2 * y + 1, 2 * x + 1));
        out.at(n, c, y, x) = static_cast<T>(acc * 0.25);
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> avg_pool2d_backward(const TensorT<T>& grad_out, int in_h, int in_w) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), in_h, in_w);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        for (int x = 0; x < grad_out.w(); ++x) {
          const T g = static_cast<T>(static_cast<double>(grad_out.at(n, c, y, x)) * 0.25);
          gin.at(n, c, 2 * y, 2 * x) = g;
          gin.at(n, c, 2 * y, 2 * x + 1) = g;
          gin.at(n, c, 2 * y + 1, 2 * x) = g;
          gin.at(n, c, 2 * y + 1, 2 * x + 1) = g;
        }
      }
    }
  }
  return gin;
}

// argmax (when given) receives one flat input offset per output element;
// ties resolve to the first occurrence in row-major window order.
template <typename T>
TensorT<T> max_pool2d(const TensorT<T>& input, std::vector<std::int64_t>* argmax = nullptr) {
  check_pool_input(input, "max_pool2d");
  TensorT<T> out(input.n(), input.c(), input.h() / 2, input.w() / 2);
  if (argmax) argmax->assign(static_cast<std::size_t>(out.size()), 0);
  parallel_for(static_cast<std::int64_t>(input.n()) * input.c(), [&](std::int64_t idx) {
    const int n = static_cast<int>(idx / input.c());
    const int c = static_cast<int>(idx % input.c());
    for (int y = 0; y < out.h(); ++y) {
      for (int x = 0; x < out.w(); ++x) {
        T best = input.at(n, c, 2 * y, 2 * x);
        std::int64_t best_at = input.offset(n, c, 2 * y, 2 * x);
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const T v = input.at(n, c, 2 * y + dy, 2 * x + dx);
            if (v > best) {
              best = v;
              best_at = input.offset(n, c, 2 * y + dy, 2 * x + dx);
            }
          }
        }
        out.at(n, c, y, x) = best;
        if (argmax) (*argmax)[static_cast<std::size_t>(out.offset(n, c, y, x))] = best_at;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> max_pool2d_backward(const TensorT<T>& grad_out,
                               const std::vector<std::int64_t>& argmax, int in_h, int in_w) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), in_h, in_w);
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    gin[argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  }
  return gin;
}

template <typename T>
TensorT<T> pool2d(const TensorT<T>& input, const Pool2dSpec& spec) {
  if (spec.window != 2 || spec.stride != 2) {
    throw ConfigError("pool2d supports window 2 / stride 2 only");
  }
  return spec.kind == PoolKind::average ? avg_pool2d(input) : max_pool2d(input);
}

template <typename T>
T sigmoid_scalar(T x) {
  double v;
  if (x >= T(0)) {
    const double e = std::exp(-static_cast<double>(x));
    v = 1.0 / (1.0 + e);
  } else {
    const double e = std::exp(static_cast<double>(x));
    v = e / (1.0 + e);
  }
  v = std::min(1.0 - kOutputClampLo, std::max(kOutputClampLo, v));
  return static_cast<T>(v);
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& input) {
  TensorT<T> out(input.n(), input.c(), input.h(), input.w());
  for (std::int64_t i = 0; i < input.size(); ++i) out[i] = sigmoid_scalar(input[i]);
  return out;
}

template <typename T>
TensorT<T> sigmoid_backward(const TensorT<T>& grad_out, const TensorT<T>& output) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    gin[i] = grad_out[i] * output[i] * (T(1) - output[i]);
  }
  return gin;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& input) {
  TensorT<T> out(input.n(), input.c(), input.h(), input.w());
  for (std::int64_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& input) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), grad_out.h(), grad_out.w());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    gin[i] = input[i] > T(0) ? grad_out[i] : T(0);
  }
  return gin;
}

template <typename T>
struct BatchNormResult {
  TensorT<T> output;
  // Train mode only: running stats after the momentum update.
  TensorT<T> new_running_mean;
  TensorT<T> new_running_var;
  // Statistics actually used to normalize (batch stats in train mode, running
  // stats in infer mode); saved for the backward rule.
  TensorT<T> used_mean;
  TensorT<T> used_invstd;
};

// Normalizes each channel over (N, H, W). Population (biased) variance is
// used both for normalization and for the running-stat update.
template <typename T>
BatchNormResult<T> batch_norm(const TensorT<T>& input, const TensorT<T>& gamma,
                              const TensorT<T>& beta, const TensorT<T>& running_mean,
                              const TensorT<T>& running_var, Mode mode, double momentum = 0.1,
                              double epsilon = 1e-5) {
  const int C = input.c();
  for (const auto* v : {&gamma, &beta, &running_mean, &running_var}) {
    if (v->n() != 1 || v->c() != C || v->h() != 1 || v->w() != 1) {
      throw DimensionError("batch_norm: per-channel tensors must be (1," + std::to_string(C) +
                           ",1,1), got " + v->shape_str());
    }
  }
  BatchNormResult<T> r;
  r.output = TensorT<T>(input.n(), C, input.h(), input.w());
  r.used_mean = TensorT<T>(1, C, 1, 1);
  r.used_invstd = TensorT<T>(1, C, 1, 1);
  const std::int64_t m = static_cast<std::int64_t>(input.n()) * input.h() * input.w();

  if (mode == Mode::train) {
    r.new_running_mean = TensorT<T>(1, C, 1, 1);
    r.new_running_var = TensorT<T>(1, C, 1, 1);
  }
  for (int c = 0; c < C; ++c) {
    double mu, var;
    if (mode == Mode::train) {
      double acc = 0.0;
      for (int n = 0; n < input.n(); ++n)
        for (int y = 0; y < input.h(); ++y) {
          const T* row = &input.at(n, c, y, 0);
          for (int x = 0; x < input.w(); ++x) acc += static_cast<double>(row[x]);
        }
      mu = acc / static_cast<double>(m);
      double acc2 = 0.0;
      for (int n = 0; n < input.n(); ++n)
        for (int y = 0; y < input.h(); ++y) {
          const T* row = &input.at(n, c, y, 0);
          for (int x = 0; x < input.w(); ++x) {
            const double d = static_cast<double>(row[x]) - mu;
            acc2 += d * d;
          }
        }
      var = acc2 / static_cast<double>(m);
      r.new_running_mean.at(0, c, 0, 0) = static_cast<T>(
          (1.0 - momentum) * static_cast<double>(running_mean.at(0, c, 0, 0)) + momentum * mu);
      r.new_running_var.at(0, c, 0, 0) = static_cast<T>(
          (1.0 - momentum) * static_cast<double>(running_var.at(0, c, 0, 0)) + momentum * var);
    } else {
      mu = static_cast<double>(running_mean.at(0, c, 0, 0));
      var = static_cast<double>(running_var.at(0, c, 0, 0));
    }
    const double invstd = 1.0 / std::sqrt(var + epsilon);
    r.used_mean.at(0, c, 0, 0) = static_cast<T>(mu);
    r.used_invstd.at(0, c, 0, 0) = static_cast<T>(invstd);
    const double g = static_cast<double>(gamma.at(0, c, 0, 0));
    const double b = static_cast<double>(beta.at(0, c, 0, 0));
    for (int n = 0; n < input.n(); ++n) {
      for (int y = 0; y < input.h(); ++y) {
        const T* row = &input.at(n, c, y, 0);
        T* orow = &r.output.at(n, c, y, 0);
        for (int x = 0; x < input.w(); ++x) {
          orow[x] = static_cast<T>(g * ((static_cast<double>(row[x]) - mu) * invstd) + b);
        }
      }
    }
  }
  return r;
}

template <typename T>
struct BatchNormGrads {
  TensorT<T> input;
  TensorT<T> gamma;
  TensorT<T> beta;
};

// Train mode couples every input through the batch statistics:
//   dx = gamma*istd * (dy - mean(dy) - xhat*mean(dy*xhat))
// Infer mode treats the normalization as a fixed affine map.
template <typename T>
BatchNormGrads<T> batch_norm_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                                      const TensorT<T>& gamma, const TensorT<T>& used_mean,
                                      const TensorT<T>& used_invstd, Mode mode) {
  const int C = input.c();
  BatchNormGrads<T> g;
  g.input = TensorT<T>(input.n(), C, input.h(), input.w());
  g.gamma = TensorT<T>(1, C, 1, 1);
  g.beta = TensorT<T>(1, C, 1, 1);
  const double m = static_cast<double>(static_cast<std::int64_t>(input.n()) * input.h() * input.w());

  for (int c = 0; c < C; ++c) {
    const double mu = static_cast<double>(used_mean.at(0, c, 0, 0));
    const double istd = static_cast<double>(used_invstd.at(0, c, 0, 0));
    const double gam = static_cast<double>(gamma.at(0, c, 0, 0));
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < input.n(); ++n) {
      for (int y = 0; y < input.h(); ++y) {
        const T* xrow = &input.at(n, c, y, 0);
        const T* grow = &grad_out.at(n, c, y, 0);
        for (int x = 0; x < input.w(); ++x) {
          const double dy = static_cast<double>(grow[x]);
          const double xhat = (static_cast<double>(xrow[x]) - mu) * istd;
          sum_dy += dy;
          sum_dy_xhat += dy * xhat;
        }
      }
    }
    g.beta.at(0, c, 0, 0) = static_cast<T>(sum_dy);
    g.gamma.at(0, c, 0, 0) = static_cast<T>(sum_dy_xhat);
    const double mean_dy = sum_dy / m;
    const double mean_dy_xhat = sum_dy_xhat / m;
    for (int n = 0; n < input.n(); ++n) {
      for (int y = 0; y < input.h(); ++y) {
        const T* xrow = &input.at(n, c, y, 0);
        const T* grow = &grad_out.at(n, c, y, 0);
        T* orow = &g.input.at(n, c, y, 0);
        for (int x = 0; x < input.w(); ++x) {
          const double dy = static_cast<double>(grow[x]);
          if (mode == Mode::train) {
            const double xhat = (static_cast<double>(xrow[x]) - mu) * istd;
            orow[x] = static_cast<T>(gam * istd * (dy - mean_dy - xhat * mean_dy_xhat));
          } else {
            orow[x] = static_cast<T>(gam * istd * dy);
          }
        }
      }
    }
  }
  return g;
}

// Edge-replication padding (used by the model to reach multiple-of-32 sizes).
template <typename T>
TensorT<T> pad_replicate2d(const TensorT<T>& in, int top, int bottom, int left, int right) {
  TensorT<T> out(in.n(), in.c(), in.h() + top + bottom, in.w() + left + right);
  for (int n = 0; n < in.n(); ++n) {
    for (int c = 0; c < in.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        const int sy = std::clamp(y - top, 0, in.h() - 1);
        for (int x = 0; x < out.w(); ++x) {
          const int sx = std::clamp(x - left, 0, in.w() - 1);
          out.at(n, c, y, x) = in.at(n, c, sy, sx);
        }
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> pad_replicate2d_backward(const TensorT<T>& grad_out, int top, int left, int in_h,
                                    int in_w) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), in_h, in_w);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        const int sy = std::clamp(y - top, 0, in_h - 1);
        for (int x = 0; x < grad_out.w(); ++x) {
          const int sx = std::clamp(x - left, 0, in_w - 1);
          gin.at(n, c, sy, sx) += grad_out.at(n, c, y, x);
        }
      }
    }
  }
  return gin;
}

template <typename T>
TensorT<T> crop2d(const TensorT<T>& in, int top, int left, int out_h, int out_w) {
  if (top < 0 || left < 0 || top + out_h > in.h() || left + out_w > in.w()) {
    throw DimensionError("crop2d: window exceeds input " + in.shape_str());
  }
  TensorT<T> out(in.n(), in.c(), out_h, out_w);
  for (int n = 0; n < in.n(); ++n) {
    for (int c = 0; c < in.c(); ++c) {
      for (int y = 0; y < out_h; ++y) {
        const T* src = &in.at(n, c, y + top, left);
        std::copy(src, src + out_w, &out.at(n, c, y, 0));
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> crop2d_backward(const TensorT<T>& grad_out, int top, int left, int in_h, int in_w) {
  TensorT<T> gin(grad_out.n(), grad_out.c(), in_h, in_w);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      for (int y = 0; y < grad_out.h(); ++y) {
        const T* src = &grad_out.at(n, c, y, 0);
        std::copy(src, src + grad_out.w(), &gin.at(n, c, y + top, left));
      }
    }
  }
  return gin;
}

// Mean absolute pixel difference; the same formula serves as the training
// loss and as the MAE metric. Computed fully in double.
template <typename T>
double l1_loss_value(const TensorT<T>& prediction, const TensorT<T>& target) {
  check_same_shape(prediction, target, "l1_loss");
  double acc = 0.0;
  for (std::int64_t i = 0; i < prediction.size(); ++i) {
    acc += std::abs(static_cast<double>(prediction[i]) - static_cast<double>(target[i]));
  }
  return acc / static_cast<double>(prediction.size());
}

}  // namespace salnet
