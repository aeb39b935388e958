// Copyright 2026 The deepfactor Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Loss, exact gradients and time steppers for
//
//   L = 1/2 ||Sigma - W_N ... W_1||_F^2 + a/4 sum_j ||W_j W_j^H - W_{j+1}^H W_{j+1}||_F^2.
//
// Over C the gradient is d/dRe + i d/dIm (twice the conjugate Wirtinger
// derivative), so the same update W_j <- W_j - eta grad_j serves both fields.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "deepfactor/field.hpp"
#include "deepfactor/layers.hpp"
#include "deepfactor/linalg.hpp"

namespace dmf {

enum class Integrator { GD, FlowRK4 };

struct DynConfig {
  double reg_a = 0.0;
  double eta = 0.1;      // GD learning rate
  double step_h = 1e-3;  // RK4 step
  Integrator integrator = Integrator::GD;
  bool include_l_ori = true;  // false: regulariser-only dynamics

  static double default_step_h(double reg_a) { return std::min(1e-3, 0.1 / (1.0 + reg_a)); }

  double step_size() const { return integrator == Integrator::GD ? eta : step_h; }

  void validate() const {
    if (!(reg_a >= 0.0) || !std::isfinite(reg_a)) throw Error(Errc::ConfigInvalid, "DynConfig: a must be >= 0");
    if (!(step_size() > 0.0) || !std::isfinite(step_size())) {
      throw Error(Errc::ConfigInvalid, "DynConfig: step size must be positive");
    }
  }
};

template <FieldScalar S>
struct TargetSpec {
  Mat<S> matrix;
  bool reduced = false;

  static bool is_reduced(const Mat<S>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (i == j) {
          if (std::abs(std::imag(m(i, i))) > 1e-14 || std::real(m(i, i)) < 0.0) return false;
        } else if (std::abs(m(i, j)) >= 1e-14) {
          return false;
        }
      }
    }
    return true;
  }

  static TargetSpec from(Mat<S> m) {
    const bool r = is_reduced(m);
    return {std::move(m), r};
  }
  static TargetSpec identity(Eigen::Index d, double sigma1 = 1.0) {
    return from(Mat<S>(sigma1 * Mat<S>::Identity(d, d)));
  }
  static TargetSpec diagonal(const RealVec& v) { return from(diag<S>(v)); }
};

struct LossParts {
  double l_ori = 0.0;
  double l_reg = 0.0;
  double total = 0.0;
};

namespace detail {

template <FieldScalar S>
void require_compatible(const LayerStack<S>& st, const TargetSpec<S>& target) {
  st.validate();
  if (target.matrix.rows() != st.dim() || target.matrix.cols() != st.dim()) {
    throw Error(Errc::DimMismatch, "target and layers differ in dimension");
  }
}

}  // namespace detail

// W_N ... W_1 (descending index order).
template <FieldScalar S>
Mat<S> product(const LayerStack<S>& st) {
  Mat<S> w = st.layers.front();
  for (std::size_t j = 1; j < st.layers.size(); ++j) w = st.layers[j] * w;
  return w;
}

// Prefix / suffix products: right[j] = W_j ... W_1, left[j] = W_N ... W_j,
// with right[0] = left[N+1] = I.
template <FieldScalar S>
struct PartialProducts {
  std::vector<Mat<S>> right;
  std::vector<Mat<S>> left;

  explicit PartialProducts(const LayerStack<S>& st) {
    const std::size_t n = st.depth();
    const Eigen::Index d = st.dim();
    right.assign(n + 2, Mat<S>::Identity(d, d));
    left.assign(n + 2, Mat<S>::Identity(d, d));
    for (std::size_t j = 1; j <= n; ++j) right[j] = st.w(j) * right[j - 1];
    for (std::size_t j = n; j >= 1; --j) left[j] = left[j + 1] * st.w(j);
  }

  const Mat<S>& full() const { return right[right.size() - 2]; }
};

// Delta_{j,j+1} for j = 0..N; the boundary entries are zero.
template <FieldScalar S>
std::vector<Mat<S>> balance_deltas_padded(const LayerStack<S>& st) {
  const std::size_t n = st.depth();
  const Eigen::Index d = st.dim();
  std::vector<Mat<S>> deltas(n + 1, Mat<S>::Zero(d, d));
  for (std::size_t j = 1; j < n; ++j) {
    deltas[j] = st.w(j) * st.w(j).adjoint() - st.w(j + 1).adjoint() * st.w(j + 1);
  }
  return deltas;
}

template <FieldScalar S>
LossParts loss(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg) {
  detail::require_compatible(st, target);
  LossParts out;
  out.l_ori = 0.5 * (target.matrix - product(st)).squaredNorm();
  if (cfg.reg_a != 0.0) {
    double acc = 0.0;
    const auto deltas = balance_deltas_padded(st);
    for (const auto& dl : deltas) acc += dl.squaredNorm();
    out.l_reg = 0.25 * cfg.reg_a * acc;
  }
  out.total = (cfg.include_l_ori ? out.l_ori : 0.0) + out.l_reg;
  return out;
}

// grad_j = -W_{L,j+1}^H (Sigma - W) W_{R,j-1}^H + a (Delta_{j,j+1} W_j - W_j Delta_{j-1,j}).
template <FieldScalar S>
std::vector<Mat<S>> gradient(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg) {
  detail::require_compatible(st, target);
  const std::size_t n = st.depth();
  std::vector<Mat<S>> grads(n);
  if (cfg.include_l_ori) {
    const PartialProducts<S> pp(st);
    const Mat<S> residual = target.matrix - pp.full();
    for (std::size_t j = 1; j <= n; ++j) {
      grads[j - 1].noalias() = -(pp.left[j + 1].adjoint() * residual * pp.right[j - 1].adjoint());
    }
  } else {
    for (auto& g : grads) g = Mat<S>::Zero(st.dim(), st.dim());
  }
  if (cfg.reg_a != 0.0) {
    const auto deltas = balance_deltas_padded(st);
    for (std::size_t j = 1; j <= n; ++j) {
      grads[j - 1] += cfg.reg_a * (deltas[j] * st.w(j) - st.w(j) * deltas[j - 1]);
    }
  }
  return grads;
}

// Simultaneous update of every layer from gradients at the current point.
template <FieldScalar S>
LayerStack<S> gd_step(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg) {
  LayerStack<S> next = st;
  next.axpy(-cfg.eta, gradient(st, target, cfg));
  return next;
}

// Classical RK4 on dW_j/dt = -grad_j.
template <FieldScalar S>
LayerStack<S> flow_step_rk4(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg) {
  const double h = cfg.step_h;
  const auto k1 = gradient(st, target, cfg);
  LayerStack<S> probe = st;
  probe.axpy(-0.5 * h, k1);
  const auto k2 = gradient(probe, target, cfg);
  probe = st;
  probe.axpy(-0.5 * h, k2);
  const auto k3 = gradient(probe, target, cfg);
  probe = st;
  probe.axpy(-h, k3);
  const auto k4 = gradient(probe, target, cfg);
  LayerStack<S> next = st;
  for (std::size_t j = 0; j < st.depth(); ++j) {
    next.layers[j] -= (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
  }
  return next;
}

template <FieldScalar S>
LayerStack<S> step(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg) {
  return cfg.integrator == Integrator::GD ? gd_step(st, target, cfg) : flow_step_rk4(st, target, cfg);
}

template <FieldScalar S>
struct Reduction {
  TargetSpec<S> target;
  LayerStack<S> stack;
};

// Sigma = U diag(s) V^H  ->  Sigma' = diag(s), W_1 <- W_1 V, W_N <- U^H W_N.
template <FieldScalar S>
Reduction<S> reduce_target(const Mat<S>& sigma_general, const LayerStack<S>& st) {
  detail::require_compatible(st, TargetSpec<S>{sigma_general, false});
  const SvdResult<S> f = svd(sigma_general);
  LayerStack<S> out = st;
  out.w(1) = st.w(1) * f.v;
  out.w(st.depth()) = f.u.adjoint() * out.w(st.depth());
  return {TargetSpec<S>::diagonal(f.s), std::move(out)};
}

}  // namespace dmf
