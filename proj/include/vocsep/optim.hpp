// Copyright 2026 The vocsep Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <string>
#include <vector>

#include "vocsep/tensor.hpp"

namespace vocsep::ag {

// Adam with L2 weight decay folded into the gradient (g <- g + wd * theta)
// and bias-corrected moments.
template <typename T>
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
  };

  Adam(std::vector<Tensor<T>> params, Options options) : params_(std::move(params)), options_(options) {
    first_.reserve(params_.size());
    second_.reserve(params_.size());
    for (const auto& p : params_) {
      first_.emplace_back(p.size(), 0.0);
      second_.emplace_back(p.size(), 0.0);
    }
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!params_[i].has_grad()) {
        throw ConfigError("adam: parameter " + std::to_string(i) + " " + shape_str(params_[i].shape()) +
                          " has no gradient");
      }
    }
    ++steps_;
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto theta = params_[i].data();
      const auto grad = std::as_const(params_[i]).grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < theta.size(); ++j) {
        const double g = static_cast<double>(grad[j]) + options_.weight_decay * static_cast<double>(theta[j]);
        m[j] = b1 * m[j] + (1.0 - b1) * g;
        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        theta[j] = static_cast<T>(static_cast<double>(theta[j]) -
                                  options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  double learning_rate() const noexcept { return options_.learning_rate; }
  void set_learning_rate(double lr) noexcept { options_.learning_rate = lr; }
  std::size_t steps() const noexcept { return steps_; }
  const Options& options() const noexcept { return options_; }

 private:
  std::vector<Tensor<T>> params_;
  Options options_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t steps_ = 0;
};

// Reduce-on-plateau for a metric that should decrease. A call counts as an
// improvement only when the metric is strictly below the best seen so far.
class PlateauScheduler {
 public:
  struct Options {
    double factor = 0.9;
    std::size_t patience = 140;
    std::size_t cooldown = 10;
    double min_lr = 0.0;
  };

  PlateauScheduler(double initial_lr, Options options) : lr_(initial_lr), options_(options) {
    if (!(options.factor > 0.0 && options.factor < 1.0)) {
      throw ConfigError("plateau scheduler: factor must lie in (0, 1)");
    }
  }

  double step(double metric) {
    if (!std::isfinite(metric)) throw ConfigError("plateau scheduler: non-finite metric");
    if (metric < best_) {
      best_ = metric;
      bad_epochs_ = 0;
    } else {
      ++bad_epochs_;
    }
    if (cooldown_remaining_ > 0) {
      --cooldown_remaining_;
      bad_epochs_ = 0;
    }
    if (bad_epochs_ > options_.patience) {
      lr_ = std::max(lr_ * options_.factor, options_.min_lr);
      cooldown_remaining_ = options_.cooldown;
      bad_epochs_ = 0;
    }
    return lr_;
  }

  double learning_rate() const noexcept { return lr_; }
  double best_metric() const noexcept { return best_; }
  std::size_t epochs_since_improvement() const noexcept { return bad_epochs_; }
  std::size_t cooldown_remaining() const noexcept { return cooldown_remaining_; }
  const Options& options() const noexcept { return options_; }

 private:
  double lr_;
  Options options_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
  std::size_t cooldown_remaining_ = 0;
};

}  // namespace vocsep::ag
