// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

// Layers and the Adam optimizer on top of the autodiff tape.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "vt4s/autodiff.hpp"

namespace vt4s::nn {

using ad::Mat;
using ad::Parameter;
using ad::Tape;
using ad::Var;
using Rng = std::mt19937_64;

/// Binds parameters onto a tape. In training mode gradients flow into
/// Parameter::grad; otherwise parameters enter the tape as constants and are
/// never written, so inference on shared parameters is reentrant.
class Binder {
 public:
  Binder(Tape& tape, bool train) : tape_(&tape), train_(train) {}

  [[nodiscard]] Tape& tape() const { return *tape_; }
  [[nodiscard]] bool training() const { return train_; }
  Var operator()(const Parameter& p) const;

 private:
  Tape* tape_;
  bool train_;
};

Mat uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Mat normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

struct Linear {
  Parameter weight;  // [in x out]
  Parameter bias;    // [1 x out]

  Linear() = default;
  /// PyTorch-style init: U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  Var operator()(const Binder& b, Var x) const;
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
  [[nodiscard]] Eigen::Index in_dim() const { return weight.value.rows(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weight.value.cols(); }
};

struct LayerNorm {
  Parameter gamma;
  Parameter beta;

  LayerNorm() = default;
  LayerNorm(const std::string& name, Eigen::Index dim);

  Var operator()(const Binder& b, Var x) const;
  void collect(std::vector<Parameter*>& out);
  void collect(std::vector<const Parameter*>& out) const;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void zero_grad();
  /// One bias-corrected Adam update from the gradients currently accumulated.
  void step();
  [[nodiscard]] std::int64_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  std::int64_t t_ = 0;
};

/// True when every entry of every parameter is finite.
bool all_finite(const std::vector<const Parameter*>& params);

}  // namespace vt4s::nn
