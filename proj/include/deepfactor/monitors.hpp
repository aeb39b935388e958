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

// Trajectory monitors: balance errors, the four-layer skew/main terms built
// from W_1' = W_2^{-1} W_3^H W_4^H, a continuity-tracked SVD of the product
// W = U diag(sigma_w)^N V^H and the quantities derived from it.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "deepfactor/dynamics.hpp"
#include "deepfactor/field.hpp"
#include "deepfactor/layers.hpp"
#include "deepfactor/linalg.hpp"

namespace dmf {

inline constexpr double kConditionGuard = 1e12;

template <FieldScalar S>
struct BalanceErrors {
  std::vector<Mat<S>> deltas;  // Delta_{1,2} ... Delta_{N-1,N}
  double e_delta = 0.0;
};

template <FieldScalar S>
BalanceErrors<S> balance_errors(const LayerStack<S>& st) {
  st.validate();
  BalanceErrors<S> out;
  double acc = 0.0;
  for (std::size_t j = 1; j < st.depth(); ++j) {
    out.deltas.push_back(st.w(j) * st.w(j).adjoint() - st.w(j + 1).adjoint() * st.w(j + 1));
    acc += out.deltas.back().squaredNorm();
  }
  out.e_delta = std::sqrt(acc);
  return out;
}

// W_2^{-1} W_3^H W_4^H via an LU solve; IllConditioned once cond(W_2) > 1e12.
template <FieldScalar S>
Mat<S> adjoint_partner(const LayerStack<S>& st) {
  st.validate();
  if (st.depth() != 4) throw Error(Errc::DimMismatch, "four-layer monitor called with N != 4");
  const RealVec s = singular_values<S>(st.w(2));
  const double smax = s(0), smin = s(s.size() - 1);
  if (!(smin > 0.0) || smax / smin > kConditionGuard) {
    throw Error(Errc::IllConditioned, "W_2 condition number exceeds 1e12");
  }
  const Mat<S> rhs = st.w(3).adjoint() * st.w(4).adjoint();
  return Eigen::PartialPivLU<Mat<S>>(st.w(2)).solve(rhs);
}

// ||W_1 - W_2^{-1} W_3^H W_4^H||_F
template <FieldScalar S>
double skew_error(const LayerStack<S>& st) {
  return (st.w(1) - adjoint_partner(st)).norm();
}

// sigma_min(W_1 + W_2^{-1} W_3^H W_4^H)
template <FieldScalar S>
double main_term_sigma_min(const LayerStack<S>& st) {
  return norms<S>(Mat<S>(st.w(1) + adjoint_partner(st))).sigma_min;
}

template <FieldScalar S>
struct SvdTrack {
  Mat<S> u;
  RealVec sigma_w;  // sigma_k(W)^{1/N}, in tracked column order
  Mat<S> v;
  bool aligned = false;
};

// Fresh SVD of w with sigma_w = s^{1/N}. Given a previous track, columns are
// permuted by greedy largest-|overlap| matching against prev.u and each pair
// (u_k, v_k) is multiplied by one unit scalar so Re(prev.u_k^H u_k) > 0,
// which leaves U diag(sigma_w^N) V^H unchanged. Degenerate clusters are
// scored by their projection norm, so ties resolve in index order.
template <FieldScalar S>
SvdTrack<S> track_svd(const Mat<S>& w, std::size_t n_layers, const SvdTrack<S>* prev = nullptr) {
  if (n_layers < 1) throw Error(Errc::DimMismatch, "track_svd: n_layers must be >= 1");
  const SvdResult<S> f = svd(w);
  const Eigen::Index d = w.rows();
  SvdTrack<S> out;
  out.sigma_w = f.s.array().pow(1.0 / static_cast<double>(n_layers));
  out.u = f.u;
  out.v = f.v;
  if (prev == nullptr || prev->u.rows() != d) return out;

  // Clusters of numerically equal singular values.
  std::vector<int> cluster(static_cast<std::size_t>(d), 0);
  for (Eigen::Index k = 1; k < d; ++k) {
    const bool tied = std::abs(f.s(k) - f.s(k - 1)) <= 1e-12 * (1.0 + f.s(0));
    cluster[static_cast<std::size_t>(k)] = cluster[static_cast<std::size_t>(k - 1)] + (tied ? 0 : 1);
  }
  Eigen::MatrixXd score(d, d);  // score(p, k): previous column p vs fresh column k
  const Mat<S> overlap = prev->u.adjoint() * f.u;
  for (Eigen::Index p = 0; p < d; ++p) {
    for (Eigen::Index k = 0; k < d; ++k) {
      double acc = 0.0;
      for (Eigen::Index m = 0; m < d; ++m) {
        if (cluster[static_cast<std::size_t>(m)] == cluster[static_cast<std::size_t>(k)]) acc += std::norm(overlap(p, m));
      }
      score(p, k) = std::sqrt(acc);
    }
  }
  std::vector<Eigen::Index> assign(static_cast<std::size_t>(d), -1);  // slot p <- fresh column
  std::vector<bool> used_prev(static_cast<std::size_t>(d), false), used_new(static_cast<std::size_t>(d), false);
  for (Eigen::Index round = 0; round < d; ++round) {
    double best = -1.0;
    Eigen::Index bp = 0, bk = 0;
    for (Eigen::Index p = 0; p < d; ++p) {
      if (used_prev[static_cast<std::size_t>(p)]) continue;
      for (Eigen::Index k = 0; k < d; ++k) {
        if (used_new[static_cast<std::size_t>(k)]) continue;
        if (score(p, k) > best + 1e-12) {
          best = score(p, k);
          bp = p;
          bk = k;
        }
      }
    }
    used_prev[static_cast<std::size_t>(bp)] = true;
    used_new[static_cast<std::size_t>(bk)] = true;
    assign[static_cast<std::size_t>(bp)] = bk;
  }
  for (Eigen::Index p = 0; p < d; ++p) {
    const Eigen::Index k = assign[static_cast<std::size_t>(p)];
    const S phase = conj_of<S>(unit_phase<S>(S(overlap(p, k))));
    out.u.col(p) = f.u.col(k) * phase;
    out.v.col(p) = f.v.col(k) * phase;
    out.sigma_w(p) = std::pow(f.s(k), 1.0 / static_cast<double>(n_layers));
  }
  out.aligned = true;
  return out;
}

struct UvTerms {
  RealVec half_sum_sv;  // sigma_k((U+V) diag(sigma_w) / 2), descending
  double skew_uv = 0.0;  // ||Sigma^{1/2} (U-V) diag(sigma_w)||_F^2
};

template <FieldScalar S>
RealVec half_sum_singular_values(const SvdTrack<S>& t) {
  return singular_values<S>(Mat<S>((t.u + t.v) * t.sigma_w.asDiagonal() / 2.0));
}

template <FieldScalar S>
UvTerms uv_terms(const SvdTrack<S>& t, const TargetSpec<S>& target) {
  if (!target.reduced) throw Error(Errc::NotReduced, "uv_terms: target must be diagonal, real and non-negative");
  UvTerms out;
  out.half_sum_sv = half_sum_singular_values(t);
  RealVec root(target.matrix.rows());
  for (Eigen::Index i = 0; i < root.size(); ++i) root(i) = std::sqrt(std::real(target.matrix(i, i)));
  out.skew_uv = (root.asDiagonal() * (t.u - t.v) * t.sigma_w.asDiagonal()).squaredNorm();
  return out;
}

// With P = ((U+V)/2) S ((U+V)/2)^H and E = ((U-V)/2) S ((U-V)/2)^H, checks
//   lambda_k(P) <= lambda_k(S) <= c_k (lambda_k(P) + ||E||_op),
// c_k = 2 for k < d and c_d = 1, with slack 1e-10 (1 + scale).
template <FieldScalar S>
bool eig_sandwich_check(const Mat<S>& u, const Mat<S>& v, const RealVec& s) {
  if (unitarity_defect(u) > 1e-8 || unitarity_defect(v) > 1e-8) {
    throw Error(Errc::NotUnitary, "eig_sandwich_check: U and V must be unitary");
  }
  if ((s.array() < 0.0).any()) throw Error(Errc::PreconditionViolated, "eig_sandwich_check: s must be >= 0");
  const Eigen::Index d = s.size();
  const Mat<S> plus = (u + v) / 2.0;
  const Mat<S> minus = (u - v) / 2.0;
  const Mat<S> sm = diag<S>(s);
  const Mat<S> p = plus * sm * plus.adjoint();
  const Mat<S> e = minus * sm * minus.adjoint();
  const RealVec lp = hermitian_eig<S>(p).values;
  const double e_op = op_norm<S>(e);
  RealVec ls = s;
  std::sort(ls.data(), ls.data() + d, std::greater<>());
  const double tol = 1e-10 * (1.0 + ls(0));
  for (Eigen::Index k = 0; k < d; ++k) {
    const double factor = (k + 1 < d) ? 2.0 : 1.0;
    if (lp(k) > ls(k) + tol) return false;
    if (ls(k) > factor * (lp(k) + e_op) + tol) return false;
  }
  return true;
}

struct LayerExtremes {
  double sig_max = 0.0;
  double sig_min = 0.0;
};

template <FieldScalar S>
LayerExtremes layer_extremes(const LayerStack<S>& st) {
  LayerExtremes out{0.0, std::numeric_limits<double>::infinity()};
  for (const auto& w : st.layers) {
    const RealVec s = singular_values<S>(w);
    out.sig_max = std::max(out.sig_max, s(0));
    out.sig_min = std::min(out.sig_min, s(s.size() - 1));
  }
  return out;
}

template <FieldScalar S>
struct TrajectoryRecord {
  long step = 0;
  double time = 0.0;
  double l_ori = 0.0;
  double l_reg = 0.0;
  double e_delta = 0.0;
  double sig_max = 0.0;
  double sig_min = 0.0;
  std::optional<double> skew_err;
  std::optional<double> main_sv_min;
  S det_ind = S(0.0);
  RealVec sigma_w;
  RealVec half_sum_sv;
  std::optional<double> skew_uv;
  std::vector<std::string> warnings;
};

template <FieldScalar S>
struct Recorded {
  TrajectoryRecord<S> record;
  SvdTrack<S> track;
};

// Assembles every monitor for one time slice. Guarded failures become
// absent values plus a warning string; nothing here throws for a valid stack.
template <FieldScalar S>
Recorded<S> record(long step, double time, const LayerStack<S>& st, const TargetSpec<S>& target,
                   const DynConfig& cfg, const SvdTrack<S>* prev) {
  Recorded<S> out;
  TrajectoryRecord<S>& r = out.record;
  r.step = step;
  r.time = time;
  const LossParts lp = loss(st, target, cfg);
  r.l_ori = lp.l_ori;
  r.l_reg = lp.l_reg;
  r.e_delta = balance_errors(st).e_delta;
  const LayerExtremes ex = layer_extremes(st);
  r.sig_max = ex.sig_max;
  r.sig_min = ex.sig_min;
  if (st.depth() == 4) {
    try {
      const Mat<S> partner = adjoint_partner(st);
      r.skew_err = (st.w(1) - partner).norm();
      r.main_sv_min = norms<S>(Mat<S>(st.w(1) + partner)).sigma_min;
    } catch (const Error& e) {
      r.warnings.emplace_back(e.what());
    }
  }
  const Mat<S> w = product(st);
  r.det_ind = det_sign_or_phase<S>(w);
  out.track = track_svd<S>(w, st.depth(), prev);
  r.sigma_w = out.track.sigma_w;
  r.half_sum_sv = half_sum_singular_values(out.track);
  try {
    r.skew_uv = uv_terms(out.track, target).skew_uv;
  } catch (const Error& e) {
    r.warnings.emplace_back(e.what());
  }
  return out;
}

}  // namespace dmf
