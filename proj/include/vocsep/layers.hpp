// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Sequence layers on top of the tape: 1-D convolution, batch normalization,
// width-2 max pooling and GRU recurrences, plus parameter initializers.

#pragma once

#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>

#include "vocsep/tensor.hpp"

namespace vocsep::ag {

// Same-length 1-D cross-correlation.
//   x: [in_channels x time], kernel: [out_channels x in_channels x width],
//   bias: [out_channels] or undefined.
// Zero padding of floor((w-1)/2) on the left and ceil((w-1)/2) on the right.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias = {}) {
  detail::require_rank(x.shape(), 2, "conv1d input");
  detail::require_rank(kernel.shape(), 3, "conv1d kernel");
  const std::size_t cin = x.dim(0), time = x.dim(1);
  const std::size_t cout = kernel.dim(0), width = kernel.dim(2);
  if (kernel.dim(1) != cin) {
    throw ShapeError("conv1d: kernel " + shape_str(kernel.shape()) + " expects " +
                     std::to_string(kernel.dim(1)) + " input channels, got " + std::to_string(cin));
  }
  if (width == 0) throw ShapeError("conv1d: kernel width must be >= 1");
  const bool has_bias = bias.defined();
  if (has_bias && bias.size() != cout) throw ShapeError("conv1d: bias length must equal output channels");

  using Strided = Eigen::Map<const detail::RowMat<T>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  using StridedMut = Eigen::Map<detail::RowMat<T>, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
  const auto pad_left = static_cast<std::ptrdiff_t>((width - 1) / 2);
  const auto T_ = static_cast<std::ptrdiff_t>(time);

  // Valid output range for tap k: out[t] reads x[t + k - pad_left].
  struct Span {
    std::ptrdiff_t out_begin, in_begin, count;
  };
  auto tap_span = [=](std::size_t k) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(k) - pad_left;
    const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T_, T_ - shift);
    return Span{t0, t0 + shift, std::max<std::ptrdiff_t>(0, t1 - t0)};
  };

  std::vector<T> out(cout * time, T(0));
  {
    detail::ConstMatMap<T> X(x.data().data(), cin, time);
    detail::MatMap<T> Y(out.data(), cout, time);
    for (std::size_t k = 0; k < width; ++k) {
      const auto s = tap_span(k);
      if (s.count == 0) continue;
      Strided Wk(kernel.data().data() + k, cout, cin,
                 Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(cin * width, width));
      Y.middleCols(s.out_begin, s.count).noalias() += Wk * X.middleCols(s.in_begin, s.count);
    }
    if (has_bias) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data().data(), cout);
      Y.colwise() += b;
    }
  }

  std::vector<Tensor<T>> inputs{x, kernel};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result<T>(
      Shape{cout, time}, std::move(out), std::move(inputs),
      [=](Node<T>& self) {
        detail::ConstMatMap<T> G(self.grad.data(), cout, time);
        T* dx = detail::parent_grad(self, 0);
        T* dw = detail::parent_grad(self, 1);
        const T* xv = self.parents[0]->value.data();
        const T* wv = self.parents[1]->value.data();
        for (std::size_t k = 0; k < width; ++k) {
          const auto s = tap_span(k);
          if (s.count == 0) continue;
          if (dw) {
            detail::ConstMatMap<T> X(xv, cin, time);
            StridedMut dWk(dw + k, cout, cin, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(cin * width, width));
            dWk.noalias() += G.middleCols(s.out_begin, s.count) * X.middleCols(s.in_begin, s.count).transpose();
          }
          if (dx) {
            Strided Wk(wv + k, cout, cin, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(cin * width, width));
            detail::MatMap<T> dX(dx, cin, time);
            dX.middleCols(s.in_begin, s.count).noalias() += Wk.transpose() * G.middleCols(s.out_begin, s.count);
          }
        }
        if (has_bias) {
          if (T* db = detail::parent_grad(self, 2)) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(db, cout) += G.rowwise().sum();
          }
        }
      });
}

enum class NormMode { kTrain, kEval };

// Which axis of a rank-2 input holds the normalized channels.
enum class ChannelAxis { kRows, kCols };

template <typename T>
struct BatchNormParams {
  Tensor<T> weight;        // gamma, [channels]
  Tensor<T> bias;          // beta, [channels]
  Tensor<T> running_mean;  // [channels], no grad
  Tensor<T> running_var;   // [channels], no grad
  T eps = T(1e-5);
  T momentum = T(0.1);

  static BatchNormParams create(std::size_t channels, bool requires_grad = true) {
    return {Tensor<T>::full({channels}, T(1), requires_grad), Tensor<T>::full({channels}, T(0), requires_grad),
            Tensor<T>::full({channels}, T(0)), Tensor<T>::full({channels}, T(1))};
  }
};

// Train mode normalizes each channel by its batch statistics and updates the
// running estimates (unbiased variance, momentum 0.1). Eval mode uses the
// running estimates.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, BatchNormParams<T>& p, NormMode mode, ChannelAxis axis) {
  detail::require_rank(x.shape(), 2, "batchnorm");
  const std::size_t channels = axis == ChannelAxis::kRows ? x.dim(0) : x.dim(1);
  const std::size_t samples = axis == ChannelAxis::kRows ? x.dim(1) : x.dim(0);
  if (p.weight.size() != channels || p.bias.size() != channels || p.running_mean.size() != channels ||
      p.running_var.size() != channels) {
    throw ShapeError("batchnorm: parameters do not match " + std::to_string(channels) + " channels");
  }
  if (samples == 0) throw ShapeError("batchnorm: empty input");
  // Element (c, s) lives at c * cs + s * ss.
  const std::size_t cs = axis == ChannelAxis::kRows ? samples : 1;
  const std::size_t ss = axis == ChannelAxis::kRows ? 1 : channels;
  const T* xv = x.data().data();

  std::vector<T> mu(channels), inv_std(channels);
  if (mode == NormMode::kTrain) {
    auto rm = p.running_mean.data();
    auto rv = p.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      T m = T(0);
      for (std::size_t s = 0; s < samples; ++s) m += xv[c * cs + s * ss];
      m /= static_cast<T>(samples);
      T v = T(0);
      for (std::size_t s = 0; s < samples; ++s) {
        const T d = xv[c * cs + s * ss] - m;
        v += d * d;
      }
      const T unbiased = samples > 1 ? v / static_cast<T>(samples - 1) : T(0);
      v /= static_cast<T>(samples);
      mu[c] = m;
      inv_std[c] = T(1) / std::sqrt(v + p.eps);
      rm[c] = (T(1) - p.momentum) * rm[c] + p.momentum * m;
      rv[c] = (T(1) - p.momentum) * rv[c] + p.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mu[c] = p.running_mean.data()[c];
      inv_std[c] = T(1) / std::sqrt(p.running_var.data()[c] + p.eps);
    }
  }

  const T* gamma = p.weight.data().data();
  const T* beta = p.bias.data().data();
  std::vector<T> out(x.size());
  for (std::size_t c = 0; c < channels; ++c) {
    const T a = gamma[c] * inv_std[c];
    const T b = beta[c] - mu[c] * a;
    for (std::size_t s = 0; s < samples; ++s) out[c * cs + s * ss] = xv[c * cs + s * ss] * a + b;
  }

  const bool train = mode == NormMode::kTrain;
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, p.weight, p.bias},
      [=, mu = std::move(mu), inv_std = std::move(inv_std)](Node<T>& self) {
        const T* g = self.grad.data();
        const T* xs = self.parents[0]->value.data();
        const T* gam = self.parents[1]->value.data();
        T* dx = detail::parent_grad(self, 0);
        T* dgamma = detail::parent_grad(self, 1);
        T* dbeta = detail::parent_grad(self, 2);
        const T n = static_cast<T>(samples);
        for (std::size_t c = 0; c < channels; ++c) {
          T sum_g = T(0), sum_gx = T(0);
          for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = c * cs + s * ss;
            const T xhat = (xs[i] - mu[c]) * inv_std[c];
            sum_g += g[i];
            sum_gx += g[i] * xhat;
          }
          if (dgamma) dgamma[c] += sum_gx;
          if (dbeta) dbeta[c] += sum_g;
          if (!dx) continue;
          const T k = gam[c] * inv_std[c];
          for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t i = c * cs + s * ss;
            if (train) {
              const T xhat = (xs[i] - mu[c]) * inv_std[c];
              dx[i] += k * (g[i] - sum_g / n - xhat * sum_gx / n);
            } else {
              dx[i] += k * g[i];
            }
          }
        }
      });
}

// x: [channels x time]
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, BatchNormParams<T>& p, NormMode mode) {
  return batchnorm(x, p, mode, ChannelAxis::kRows);
}

// Stride-1, width-2 max pooling along time with the last frame replicated,
// so out[t] = max(x[t], x[t+1]) and the length is preserved. Ties go to the
// earlier index.
template <typename T>
Tensor<T> max_pool1d_width2(const Tensor<T>& x) {
  detail::require_rank(x.shape(), 2, "max_pool1d_width2");
  const std::size_t channels = x.dim(0), time = x.dim(1);
  if (time == 0) throw ShapeError("max_pool1d_width2: empty time axis");
  std::vector<T> out(x.size());
  std::vector<std::uint32_t> arg(x.size());
  const T* xv = x.data().data();
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < time; ++t) {
      const std::size_t i = c * time + t;
      const std::size_t j = t + 1 < time ? i + 1 : i;
      const bool right = xv[j] > xv[i];
      out[i] = right ? xv[j] : xv[i];
      arg[i] = static_cast<std::uint32_t>(right ? j : i);
    }
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    if (T* dx = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += self.grad[i];
    }
  });
}

// GRU weights with gate columns ordered [update z | reset r | candidate n].
template <typename T>
struct GruWeights {
  Tensor<T> w_input;      // [d_in x 3h]
  Tensor<T> w_recurrent;  // [h x 3h]
  Tensor<T> bias;         // [3h]

  std::size_t hidden() const { return w_recurrent.dim(0); }
};

// One recurrence step given the input projection x W + b ([n x 3h]).
template <typename T>
Tensor<T> gru_step(const Tensor<T>& input_projection, const Tensor<T>& h, const Tensor<T>& w_recurrent) {
  const std::size_t hd = w_recurrent.dim(0);
  if (input_projection.dim(1) != 3 * hd || h.dim(1) != hd || h.dim(0) != input_projection.dim(0)) {
    throw ShapeError("gru_step: inconsistent shapes " + shape_str(input_projection.shape()) + ", " +
                     shape_str(h.shape()) + ", " + shape_str(w_recurrent.shape()));
  }
  const auto hu = matmul(h, w_recurrent);
  const auto z = sigmoid(add(slice_cols(input_projection, 0, hd), slice_cols(hu, 0, hd)));
  const auto r = sigmoid(add(slice_cols(input_projection, hd, hd), slice_cols(hu, hd, hd)));
  const auto n = tanh(add(slice_cols(input_projection, 2 * hd, hd), mul(r, slice_cols(hu, 2 * hd, hd))));
  // h' = (1 - z) n + z h = n + z (h - n)
  return add(n, mul(z, sub(h, n)));
}

// z = σ(W_z x + U_z h + b_z); r = σ(W_r x + U_r h + b_r);
// n = tanh(W_n x + r ⊙ (U_n h) + b_n); h' = (1 - z) ⊙ n + z ⊙ h.
// x: [d_in] or [rows x d_in]; h: [h] or [rows x h].
template <typename T>
Tensor<T> gru_cell(const Tensor<T>& x, const Tensor<T>& h, const GruWeights<T>& w) {
  const bool vector_form = x.rank() == 1;
  const auto x2 = vector_form ? reshape(x, {1, x.dim(0)}) : x;
  const auto h2 = h.rank() == 1 ? reshape(h, {1, h.dim(0)}) : h;
  if (x2.dim(1) != w.w_input.dim(0)) {
    throw ShapeError("gru_cell: input width " + std::to_string(x2.dim(1)) + " but weights expect " +
                     std::to_string(w.w_input.dim(0)));
  }
  auto out = gru_step(add(matmul(x2, w.w_input), w.bias), h2, w.w_recurrent);
  return vector_form ? reshape(out, {out.dim(1)}) : out;
}

// Runs a GRU over the rows of x ([time x d_in]) from a zero state, forward or
// reversed in time; row t of the result is the state after consuming row t.
template <typename T>
Tensor<T> gru_sequence(const Tensor<T>& x, const GruWeights<T>& w, bool reverse) {
  const std::size_t time = x.dim(0);
  const auto projection = add(matmul(x, w.w_input), w.bias);
  Tensor<T> h(Shape{1, w.hidden()});
  std::vector<Tensor<T>> states(time);
  for (std::size_t i = 0; i < time; ++i) {
    const std::size_t t = reverse ? time - 1 - i : i;
    h = gru_step(slice_rows(projection, t, 1), h, w.w_recurrent);
    states[t] = h;
  }
  return concat_rows(states);
}

// [time x d_in] -> [time x 2h], forward states then backward states.
template <typename T>
Tensor<T> bidirectional_gru(const Tensor<T>& x, const GruWeights<T>& forward, const GruWeights<T>& backward) {
  return concat_cols<T>({gru_sequence(x, forward, false), gru_sequence(x, backward, true)});
}

// ---- initializers ----------------------------------------------------------

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the default for linear and conv layers
// in the PyTorch ecosystem (kaiming_uniform with a = sqrt(5)).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng, bool requires_grad = true) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> v(numel(shape));
  for (auto& e : v) e = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// [n x (blocks*n)] made of `blocks` independent orthogonal n x n blocks.
template <typename T>
Tensor<T> orthogonal_blocks(std::size_t n, std::size_t blocks, std::mt19937_64& rng, bool requires_grad = true) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(n * n * blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = dist(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
      if (r(j, j) < 0) q.col(j) *= -1.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        v[i * n * blocks + b * n + j] = static_cast<T>(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
  }
  return Tensor<T>(Shape{n, n * blocks}, std::move(v), requires_grad);
}

}  // namespace vocsep::ag
