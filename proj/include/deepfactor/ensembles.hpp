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

// Random matrix ensembles: Gaussian and Haar samplers, the two layer
// initialisation schemes, and analytic one-point eigenangle densities of the
// circular unitary / real ensembles.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "deepfactor/field.hpp"
#include "deepfactor/layers.hpp"
#include "deepfactor/linalg.hpp"
#include "deepfactor/rng.hpp"

namespace dmf {

enum class InitKind { RandomGaussian, BalancedGaussian };

struct InitScheme {
  InitKind kind = InitKind::BalancedGaussian;
  double epsilon = 0.05;
  // Unit-modulus layer signs/phases s_1..s_N; empty means all ones.
  std::vector<Complex> s_phases;

  void validate(FieldTag field, std::size_t n_layers) const {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw Error(Errc::ConfigInvalid, "InitScheme: epsilon must be positive");
    }
    if (s_phases.empty()) return;
    if (s_phases.size() != n_layers) {
      throw Error(Errc::ConfigInvalid, "InitScheme: need one phase per layer");
    }
    for (const Complex& s : s_phases) {
      if (std::abs(std::abs(s) - 1.0) > 1e-12) {
        throw Error(Errc::ConfigInvalid, "InitScheme: phases must have unit modulus");
      }
      if (field == FieldTag::Real && (s.imag() != 0.0)) {
        throw Error(Errc::ConfigInvalid, "InitScheme: real field needs phases in {+1,-1}");
      }
    }
  }

  template <FieldScalar S>
  S phase(std::size_t j) const {
    if (s_phases.empty()) return S(1.0);
    if constexpr (std::same_as<S, double>) {
      return s_phases[j - 1].real();
    } else {
      return s_phases[j - 1];
    }
  }
};

// Real: i.i.d. N(0,1). Complex: Re and Im i.i.d. N(0,1/2), so E|z|^2 = 1.
template <FieldScalar S>
Mat<S> gaussian_matrix(Eigen::Index d, SeededRng& rng) {
  if (d < 1) throw Error(Errc::DimMismatch, "gaussian_matrix: d must be >= 1");
  Mat<S> m(d, d);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index c = 0; c < d; ++c) {
    for (Eigen::Index r = 0; r < d; ++r) {
      if constexpr (std::same_as<S, double>) {
        m(r, c) = rng.normal();
      } else {
        const double re = rng.normal() * std::numbers::sqrt2 / 2.0;
        const double im = rng.normal() * std::numbers::sqrt2 / 2.0;
        m(r, c) = Complex(re, im);
      }
    }
  }
  return m;
}

// Haar sample on O(d) / U(d): Householder QR of a Gaussian matrix, with the
// columns of Q rephased by r_ii/|r_ii| so that R has a positive diagonal.
// Without the rephasing the distribution depends on the QR sign convention.
template <FieldScalar S>
Mat<S> haar_unitary(Eigen::Index d, SeededRng& rng) {
  const Mat<S> a = gaussian_matrix<S>(d, rng);
  Eigen::HouseholderQR<Mat<S>> qr(a);
  Mat<S> q = qr.householderQ() * Mat<S>::Identity(d, d);
  const Mat<S>& r = qr.matrixQR();
  for (Eigen::Index k = 0; k < d; ++k) q.col(k) *= unit_phase<S>(r(k, k));
  return q;
}

template <FieldScalar S>
struct BalancedParts {
  LayerStack<S> stack;
  Mat<S> g;
  std::vector<Mat<S>> q;  // Q_{0,1}, Q_{1,2}, ..., Q_{N,N+1}
};

namespace detail {

inline void require_depth(std::size_t n_layers, const char* who) {
  if (n_layers < 2) throw Error(Errc::ConfigInvalid, std::string(who) + ": n_layers must be >= 2");
}

// Stream layout shared by both schemes: index 0 for G, k+1 for Q_{k,k+1},
// 1000/1001 for the pinned-spectrum factors, 2000+j for random layer j.
inline constexpr std::uint64_t kStreamG = 0;
inline constexpr std::uint64_t kStreamQ = 1;
inline constexpr std::uint64_t kStreamPinLeft = 1000;
inline constexpr std::uint64_t kStreamPinRight = 1001;
inline constexpr std::uint64_t kStreamLayer = 2000;

template <FieldScalar S>
BalancedParts<S> assemble_balanced(const Mat<S>& g, std::size_t n_layers, const InitScheme& scheme,
                                   const SeededRng& rng) {
  const Eigen::Index d = g.rows();
  BalancedParts<S> parts;
  parts.g = g;
  parts.q.reserve(n_layers + 1);
  for (std::size_t k = 0; k <= n_layers; ++k) {
    SeededRng sub = rng.split(kStreamQ + k);
    parts.q.push_back(haar_unitary<S>(d, sub));
  }
  const Mat<S> gh = g.adjoint();
  std::vector<Mat<S>> ws;
  ws.reserve(n_layers);
  for (std::size_t j = 1; j <= n_layers; ++j) {
    const Mat<S>& core = (j % 2 == 1) ? g : gh;
    ws.push_back(scheme.phase<S>(j) * scheme.epsilon * parts.q[j] * core * parts.q[j - 1].adjoint());
  }
  parts.stack = LayerStack<S>(std::move(ws));
  return parts;
}

}  // namespace detail

// W_j = s_j eps Q_{j,j+1} G Q_{j-1,j}^H for odd j, with G^H for even j.
template <FieldScalar S>
BalancedParts<S> balanced_init_parts(Eigen::Index d, std::size_t n_layers, const InitScheme& scheme,
                                     const SeededRng& rng) {
  detail::require_depth(n_layers, "balanced_init");
  scheme.validate(field_of<S>, n_layers);
  SeededRng g_stream = rng.split(detail::kStreamG);
  return detail::assemble_balanced<S>(gaussian_matrix<S>(d, g_stream), n_layers, scheme, rng);
}

template <FieldScalar S>
LayerStack<S> balanced_init(Eigen::Index d, std::size_t n_layers, const InitScheme& scheme,
                            const SeededRng& rng) {
  return balanced_init_parts<S>(d, n_layers, scheme, rng).stack;
}

// Balanced init with G = Q_G diag(sv) P_G^H for Haar Q_G, P_G: every layer
// then has singular values eps * sv while staying exactly balanced.
template <FieldScalar S>
BalancedParts<S> balanced_init_pinned(const RealVec& sv, std::size_t n_layers, const InitScheme& scheme,
                                      const SeededRng& rng) {
  detail::require_depth(n_layers, "balanced_init_pinned");
  scheme.validate(field_of<S>, n_layers);
  const Eigen::Index d = sv.size();
  if (d < 1 || (sv.array() < 0.0).any()) {
    throw Error(Errc::ConfigInvalid, "balanced_init_pinned: singular values must be non-negative");
  }
  SeededRng left = rng.split(detail::kStreamPinLeft);
  SeededRng right = rng.split(detail::kStreamPinRight);
  const Mat<S> qg = haar_unitary<S>(d, left);
  const Mat<S> pg = haar_unitary<S>(d, right);
  return detail::assemble_balanced<S>(Mat<S>(qg * diag<S>(sv) * pg.adjoint()), n_layers, scheme, rng);
}

// Forces sign(det W) for a real balanced stack. Odd d flips s_N (W_N -> -W_N);
// even d, where that cannot change the sign, reflects W_N on the left along
// the first column of Q_{N,N+1}. Both keep W_N^H W_N, hence balance, intact.
inline void select_det_sign(BalancedParts<double>& parts, int sign) {
  if (sign != 1 && sign != -1) throw Error(Errc::ConfigInvalid, "select_det_sign: sign must be +1 or -1");
  LayerStack<double>& st = parts.stack;
  Mat<double> w = st.layers.back();
  for (auto it = st.layers.rbegin() + 1; it != st.layers.rend(); ++it) w = w * (*it);
  const double current = det_sign_or_phase<double>(w);
  if (current == 0.0 || current == sign) return;
  const Eigen::Index d = st.dim();
  if (d % 2 == 1) {
    st.layers.back() *= -1.0;
  } else {
    const Eigen::VectorXd q1 = parts.q.back().col(0);
    const Mat<double> reflect = Mat<double>::Identity(d, d) - 2.0 * q1 * q1.transpose();
    st.layers.back() = reflect * st.layers.back();
    parts.q.back().col(0) *= -1.0;
  }
}

// W_j i.i.d. eps * N(0,1)_F, each layer from its own substream.
template <FieldScalar S>
LayerStack<S> random_init(Eigen::Index d, std::size_t n_layers, const InitScheme& scheme,
                          const SeededRng& rng) {
  detail::require_depth(n_layers, "random_init");
  scheme.validate(field_of<S>, n_layers);
  std::vector<Mat<S>> ws;
  ws.reserve(n_layers);
  for (std::size_t j = 1; j <= n_layers; ++j) {
    SeededRng sub = rng.split(detail::kStreamLayer + j);
    ws.push_back(scheme.phase<S>(j) * scheme.epsilon * gaussian_matrix<S>(d, sub));
  }
  return LayerStack<S>(std::move(ws));
}

// sigma_min(W + (W W^H)^{1/2}). Zero iff the polar factor of W has eigenvalue -1.
template <FieldScalar S>
double main_term_seed_stat(const Mat<S>& w) {
  detail::require_finite(w, "main_term_seed_stat");
  const Mat<S> gram = w * w.adjoint();
  return norms<S>(Mat<S>(w + sqrt_psd<S>(gram))).sigma_min;
}

inline double cue_density(double /*theta*/, int d) { return d / (2.0 * std::numbers::pi); }

// One-point eigenangle density of SO(d) (CRE conditioned on det = 1),
// excluding the fixed eigenvalue +1 for odd d:
//   (1/2pi) (d - 1 + (-1)^d sin((d-1)|theta|) / sin|theta|).
// At removable points theta = k*pi the ratio is replaced by its limit.
inline double cre_density_det1(double theta, int d) {
  const double parity = (d % 2 == 0) ? 1.0 : -1.0;
  const double m = d - 1;
  const double t = std::abs(theta);
  const double s = std::sin(t);
  double ratio;
  if (std::abs(s) < 1e-8) {
    // sin(m t)/sin t -> m at t = 0 and (-1)^(m-1) m at t = pi.
    const bool near_pi = t > std::numbers::pi / 2.0;
    const double sign = (near_pi && static_cast<int>(m) % 2 == 0) ? -1.0 : 1.0;
    ratio = sign * m;
  } else {
    ratio = std::sin(m * t) / s;
  }
  return (m + parity * ratio) / (2.0 * std::numbers::pi);
}

// Eigenangles in (-pi, pi] of a unitary / orthogonal matrix, sorted ascending.
template <FieldScalar S>
std::vector<double> eigenangles(const Mat<S>& q) {
  detail::require_square(q, "eigenangles");
  if (!(unitarity_defect(q) < 1e-8)) throw Error(Errc::NotUnitary, "eigenangles: input is not unitary");
  const Mat<Complex> qc = q.template cast<Complex>();
  Eigen::ComplexEigenSolver<Mat<Complex>> solver(qc, false);
  std::vector<double> out;
  out.reserve(q.rows());
  for (Eigen::Index k = 0; k < q.rows(); ++k) {
    const Complex z = solver.eigenvalues()(k);
    if (std::abs(std::abs(z) - 1.0) > 1e-8) throw Error(Errc::NotUnitary, "eigenangles: eigenvalue off the unit circle");
    double a = std::arg(z);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dmf
