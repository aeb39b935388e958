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

// Field-generic dense linear algebra over double / std::complex<double>.
//
// Decompositions are delegated to Eigen (JacobiSVD, SelfAdjointEigenSolver,
// LU). What lives here is the canonicalisation on top: descending orders,
// PSD clamping, polar factors and the two perturbation identities used by
// the convergence analysis (square-root bound and the second-order inverse
// expansion).

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "deepfactor/field.hpp"

namespace dmf {

template <FieldScalar S>
struct SvdResult {
  Mat<S> u;
  RealVec s;  // non-increasing
  Mat<S> v;
};

template <FieldScalar S>
struct EigResult {
  RealVec values;  // non-increasing
  Mat<S> vectors;
};

template <FieldScalar S>
struct PolarResult {
  Mat<S> s;  // (m m^H)^{1/2}
  Mat<S> q;  // unitary
};

struct Norms {
  double fro = 0.0;
  double op = 0.0;
  double sigma_min = 0.0;
};

struct SqrtBound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

namespace detail {

template <FieldScalar S>
void require_square(const Mat<S>& m, const char* who) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw Error(Errc::DimMismatch, std::string(who) + ": expected a non-empty square matrix");
  }
}

template <FieldScalar S>
void require_finite(const Mat<S>& m, const char* who) {
  if (!m.allFinite()) throw Error(Errc::NonFinite, std::string(who) + ": matrix has NaN/Inf entries");
}

}  // namespace detail

template <FieldScalar S>
Mat<S> identity(Eigen::Index d) {
  return Mat<S>::Identity(d, d);
}

template <FieldScalar S>
Mat<S> diag(const RealVec& v) {
  Mat<S> m = Mat<S>::Zero(v.size(), v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) m(i, i) = S(v(i));
  return m;
}

template <FieldScalar S>
SvdResult<S> svd(const Mat<S>& m) {
  detail::require_square(m, "svd");
  detail::require_finite(m, "svd");
  Eigen::JacobiSVD<Mat<S>> solver(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  // JacobiSVD already sorts descending; the stable re-sort only pins the tie order.
  const RealVec& raw = solver.singularValues();
  std::vector<Eigen::Index> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return raw(a) > raw(b); });
  SvdResult<S> out{Mat<S>(m.rows(), m.cols()), RealVec(raw.size()), Mat<S>(m.rows(), m.cols())};
  for (Eigen::Index k = 0; k < raw.size(); ++k) {
    out.s(k) = raw(order[k]);
    out.u.col(k) = solver.matrixU().col(order[k]);
    out.v.col(k) = solver.matrixV().col(order[k]);
  }
  return out;
}

template <FieldScalar S>
RealVec singular_values(const Mat<S>& m) {
  detail::require_finite(m, "singular_values");
  Eigen::JacobiSVD<Mat<S>> solver(m);
  return solver.singularValues();
}

template <FieldScalar S>
double unitarity_defect(const Mat<S>& q) {
  return (q.adjoint() * q - Mat<S>::Identity(q.rows(), q.cols())).norm();
}

template <FieldScalar S>
double hermitian_defect(const Mat<S>& h) {
  return (h - h.adjoint()).norm();
}

template <FieldScalar S>
EigResult<S> hermitian_eig(const Mat<S>& h) {
  detail::require_square(h, "hermitian_eig");
  detail::require_finite(h, "hermitian_eig");
  if (hermitian_defect(h) > 1e-10 * (1.0 + h.norm())) {
    throw Error(Errc::NotHermitian, "hermitian_eig: ||h - h^H||_F exceeds tolerance");
  }
  const Mat<S> sym = (h + h.adjoint()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Mat<S>> solver(sym);
  const Eigen::Index d = h.rows();
  EigResult<S> out{RealVec(d), Mat<S>(d, d)};
  for (Eigen::Index k = 0; k < d; ++k) {
    out.values(k) = solver.eigenvalues()(d - 1 - k);
    out.vectors.col(k) = solver.eigenvectors().col(d - 1 - k);
  }
  return out;
}

template <FieldScalar S>
Norms norms(const Mat<S>& m) {
  detail::require_finite(m, "norms");
  const RealVec s = singular_values(m);
  return {m.norm(), s.size() ? s(0) : 0.0, s.size() ? s(s.size() - 1) : 0.0};
}

template <FieldScalar S>
double op_norm(const Mat<S>& m) {
  return norms(m).op;
}

// Principal square root of a Hermitian PSD matrix. Eigenvalues in
// [-1e-10 ||h||_op, 0) are treated as round-off and clamped to zero.
template <FieldScalar S>
Mat<S> sqrt_psd(const Mat<S>& h) {
  const EigResult<S> e = hermitian_eig(h);
  const double scale = e.values.size() ? std::max(std::abs(e.values(0)),
                                                 std::abs(e.values(e.values.size() - 1)))
                                       : 0.0;
  const double lam_min = e.values(e.values.size() - 1);
  if (lam_min < -1e-10 * scale) {
    throw Error(Errc::NotPSD, "sqrt_psd: lambda_min = " + std::to_string(lam_min));
  }
  RealVec root = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * root.asDiagonal() * e.vectors.adjoint();
}

// Right polar decomposition m = s q with s = (m m^H)^{1/2}.
template <FieldScalar S>
PolarResult<S> polar_right(const Mat<S>& m) {
  const SvdResult<S> f = svd(m);
  const double smax = f.s(0);
  const double smin = f.s(f.s.size() - 1);
  if (!(smin > 1e-13 * smax)) {
    throw Error(Errc::RankDeficient, "polar_right: sigma_min/sigma_max below 1e-13");
  }
  return {f.u * f.s.asDiagonal() * f.u.adjoint(), f.u * f.v.adjoint()};
}

template <FieldScalar S>
double lambda_min(const Mat<S>& h) {
  const EigResult<S> e = hermitian_eig(h);
  return e.values(e.values.size() - 1);
}

// Checks ||x^{1/2} - (x+delta)^{1/2}||_op <= ||delta||_op / (2 sqrt(lambda_min(x) - ||delta||_op)).
template <FieldScalar S>
SqrtBound sqrt_perturbation_bound(const Mat<S>& x, const Mat<S>& delta) {
  detail::require_square(x, "sqrt_perturbation_bound");
  if (x.rows() != delta.rows() || x.cols() != delta.cols()) {
    throw Error(Errc::DimMismatch, "sqrt_perturbation_bound: shape mismatch");
  }
  const double dnorm = delta.size() ? std::abs(hermitian_eig(delta).values.cwiseAbs().maxCoeff()) : 0.0;
  const double margin = lambda_min(x) - dnorm;
  if (!(margin >= 1e-10)) {
    throw Error(Errc::PreconditionViolated, "sqrt_perturbation_bound: x must dominate ||delta||_op I");
  }
  SqrtBound out;
  const Mat<S> xd = x + delta;
  out.lhs = op_norm<S>(sqrt_psd(x) - sqrt_psd(xd));
  out.rhs = dnorm / (2.0 * std::sqrt(margin));
  out.holds = out.lhs <= out.rhs + 1e-12;
  return out;
}

// Frobenius residual of the identity
//   (x+d)^{-1} = x^{-1} - x^{-1} d x^{-1} + x^{-1} d x^{-1} d (x+d)^{-1}.
template <FieldScalar S>
double inverse_perturbation_residual(const Mat<S>& x, const Mat<S>& delta) {
  detail::require_square(x, "inverse_perturbation_residual");
  if (x.rows() != delta.rows() || x.cols() != delta.cols()) {
    throw Error(Errc::DimMismatch, "inverse_perturbation_residual: shape mismatch");
  }
  const Mat<S> xd = x + delta;
  for (const Mat<S>* m : {&x, &xd}) {
    const RealVec s = singular_values(*m);
    if (!(s(s.size() - 1) > 1e-12 * s(0))) {
      throw Error(Errc::Singular, "inverse_perturbation_residual: operand is numerically singular");
    }
  }
  const Eigen::PartialPivLU<Mat<S>> lu_x(x);
  const Eigen::PartialPivLU<Mat<S>> lu_xd(xd);
  const Mat<S> xi = lu_x.inverse();
  const Mat<S> xdi = lu_xd.inverse();
  const Mat<S> first_order = xi - xi * delta * xi;
  const Mat<S> remainder = xi * delta * xi * delta * xdi;
  return (xdi - first_order - remainder).norm();
}

// Real field: sign of det (+1, -1, or 0). Complex field: det/|det| (or 0).
template <FieldScalar S>
S det_sign_or_phase(const Mat<S>& m) {
  detail::require_square(m, "det_sign_or_phase");
  // LU keeps the determinant as a product of pivots, so sign and phase
  // survive even when |det| underflows.
  const Eigen::PartialPivLU<Mat<S>> lu(m);
  const Mat<S>& packed = lu.matrixLU();
  S phase = S(lu.permutationP().determinant());
  double log_abs = 0.0;
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    const double r = std::abs(packed(i, i));
    if (r == 0.0) return S(0.0);
    log_abs += std::log(r);
    phase *= packed(i, i) / r;
  }
  if (log_abs < std::log(1e-300)) return S(0.0);
  if constexpr (std::same_as<S, double>) {
    return phase > 0 ? 1.0 : -1.0;
  } else {
    return phase / std::abs(phase);
  }
}

}  // namespace dmf
