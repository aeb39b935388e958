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

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "deepfactor/linalg.hpp"
#include "test_util.hpp"

namespace dmf {
namespace {

using testing::random_hermitian;
using testing::random_matrix;
using testing::random_unitary;

template <typename S>
class LinalgTyped : public ::testing::Test {};
TYPED_TEST_SUITE(LinalgTyped, testing::Fields);

RealVec vec(std::initializer_list<double> xs) {
  RealVec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TEST(Svd, IdentityHasUnitSingularValues) {
  const auto f = svd<double>(identity<double>(3));
  EXPECT_TRUE(f.s.isApprox(RealVec::Ones(3)));
}

TEST(Svd, DiagonalIsSortedDescending) {
  const auto f = svd<double>(diag<double>(vec({1.0, 2.0})));
  EXPECT_DOUBLE_EQ(f.s(0), 2.0);
  EXPECT_DOUBLE_EQ(f.s(1), 1.0);
}

TEST(Svd, RejectsNonFinite) {
  Mat<double> m = identity<double>(2);
  m(0, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    svd<double>(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonFinite);
  }
}

TYPED_TEST(LinalgTyped, SvdReconstructsRandomMatrix) {
  using S = TypeParam;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Mat<S> m = random_matrix<S>(5, seed);
    const auto f = svd<S>(m);
    EXPECT_LT((f.u * f.s.asDiagonal() * f.v.adjoint() - m).norm(), 1e-10 * (1.0 + m.norm()));
    EXPECT_LT(unitarity_defect<S>(f.u), 1e-12);
    EXPECT_LT(unitarity_defect<S>(f.v), 1e-12);
    for (Eigen::Index k = 1; k < 5; ++k) EXPECT_GE(f.s(k - 1), f.s(k));
  }
}

TYPED_TEST(LinalgTyped, SingularValuesMatchGramEigenvalues) {
  using S = TypeParam;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Mat<S> m = random_matrix<S>(6, seed + 100);
    const RealVec s = singular_values<S>(m);
    const RealVec lam = hermitian_eig<S>(Mat<S>(m.adjoint() * m)).values;
    for (Eigen::Index k = 0; k < 6; ++k) {
      EXPECT_NEAR(s(k), std::sqrt(std::max(lam(k), 0.0)), 1e-8 * (1.0 + s(0)));
    }
  }
}

TEST(HermitianEig, Diagonal) {
  const auto e = hermitian_eig<double>(diag<double>(vec({-1.0, 3.0})));
  EXPECT_DOUBLE_EQ(e.values(0), 3.0);
  EXPECT_DOUBLE_EQ(e.values(1), -1.0);
}

TEST(HermitianEig, Zero) {
  const auto e = hermitian_eig<Complex>(Mat<Complex>::Zero(4, 4));
  EXPECT_EQ(e.values, RealVec::Zero(4));
}

TYPED_TEST(LinalgTyped, HermitianEigTraceAndResidual) {
  using S = TypeParam;
  const Mat<S> h = random_hermitian<S>(5, 7);
  const auto e = hermitian_eig<S>(h);
  EXPECT_NEAR(std::real(h.trace()), e.values.sum(), 1e-10);
  EXPECT_LT((h * e.vectors - e.vectors * e.values.asDiagonal()).norm(), 1e-10 * (1.0 + h.norm()));
  EXPECT_LT(unitarity_defect<S>(e.vectors), 1e-12);
}

TEST(HermitianEig, RejectsNonHermitian) {
  Mat<double> m = identity<double>(3);
  m(0, 2) = 1.0;
  try {
    hermitian_eig<double>(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotHermitian);
  }
}

TYPED_TEST(LinalgTyped, PolarOfUnitaryIsItself) {
  using S = TypeParam;
  const Mat<S> q = random_unitary<S>(4, 3);
  const auto p = polar_right<S>(q);
  EXPECT_LT((p.s - identity<S>(4)).norm(), 1e-10);
  EXPECT_LT((p.q - q).norm(), 1e-10);
}

TEST(Polar, PsdDiagonalIsItsOwnFactor) {
  const Mat<double> m = diag<double>(vec({2.0, 5.0}));
  const auto p = polar_right<double>(m);
  EXPECT_LT((p.s - m).norm(), 1e-12);
  EXPECT_LT((p.q - identity<double>(2)).norm(), 1e-12);
}

TYPED_TEST(LinalgTyped, PolarReconstructsAndIsIdempotent) {
  using S = TypeParam;
  const Mat<S> m = random_matrix<S>(5, 11);
  const auto p = polar_right<S>(m);
  EXPECT_LT((p.s * p.q - m).norm(), 1e-10 * (1.0 + m.norm()));
  EXPECT_LT(unitarity_defect<S>(p.q), 1e-12);
  EXPECT_LT((p.s * p.s - m * m.adjoint()).norm(), 1e-10 * (1.0 + m.squaredNorm()));
  const auto again = polar_right<S>(Mat<S>(p.s * p.q));
  EXPECT_LT((again.s - p.s).norm(), 1e-10);
  EXPECT_LT((again.q - p.q).norm(), 1e-10);
}

TEST(Polar, RejectsRankDeficient) {
  try {
    polar_right<double>(diag<double>(vec({1.0, 0.0})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RankDeficient);
  }
}

TEST(SqrtPsd, IdentityAndDiagonal) {
  EXPECT_LT((sqrt_psd<double>(identity<double>(3)) - identity<double>(3)).norm(), 1e-14);
  EXPECT_LT((sqrt_psd<double>(diag<double>(vec({4.0, 9.0}))) - diag<double>(vec({2.0, 3.0}))).norm(), 1e-14);
}

TYPED_TEST(LinalgTyped, SqrtPsdSquaresBack) {
  using S = TypeParam;
  const Mat<S> a = random_matrix<S>(5, 5);
  const Mat<S> h = a * a.adjoint();
  const Mat<S> r = sqrt_psd<S>(h);
  EXPECT_LT((r * r - h).norm(), 1e-10 * (1.0 + h.norm()));
  EXPECT_GE(lambda_min<S>(r), -1e-12);
}

TEST(SqrtPsd, RejectsIndefinite) {
  try {
    sqrt_psd<double>(diag<double>(vec({1.0, -0.5})));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPSD);
  }
}

TEST(SqrtPsd, ClampsRoundoffNegatives) {
  const Mat<double> r = sqrt_psd<double>(diag<double>(vec({1.0, -1e-13})));
  EXPECT_DOUBLE_EQ(r(1, 1), 0.0);
}

TEST(SqrtPerturbation, ZeroDelta) {
  const auto b = sqrt_perturbation_bound<double>(diag<double>(vec({2.0, 3.0})), Mat<double>::Zero(2, 2));
  EXPECT_NEAR(b.lhs, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(b.rhs, 0.0);
  EXPECT_TRUE(b.holds);
}

TEST(SqrtPerturbation, ScalarCase) {
  const auto b = sqrt_perturbation_bound<double>(4.0 * identity<double>(2), 0.5 * identity<double>(2));
  EXPECT_NEAR(b.lhs, std::abs(2.0 - std::sqrt(4.5)), 1e-14);
  EXPECT_NEAR(b.rhs, 0.5 / (2.0 * std::sqrt(3.5)), 1e-14);
  EXPECT_TRUE(b.holds);
}

TEST(SqrtPerturbation, RejectsWhenDeltaDominates) {
  try {
    sqrt_perturbation_bound<double>(identity<double>(2), 2.0 * identity<double>(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::PreconditionViolated);
  }
}

TEST(InversePerturbation, ZeroAndCommuting) {
  const Mat<double> x = random_matrix<double>(4, 9) + 4.0 * identity<double>(4);
  EXPECT_NEAR(inverse_perturbation_residual<double>(x, Mat<double>::Zero(4, 4)), 0.0, 1e-14);
  EXPECT_NEAR(inverse_perturbation_residual<double>(identity<double>(3), 0.1 * identity<double>(3)), 0.0, 1e-15);
}

TEST(InversePerturbation, RejectsSingular) {
  try {
    inverse_perturbation_residual<double>(diag<double>(vec({1.0, 0.0})), Mat<double>::Zero(2, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::Singular);
  }
}

TEST(Norms, IdentityZeroDiagonal) {
  const Norms a = norms<double>(identity<double>(4));
  EXPECT_DOUBLE_EQ(a.fro, 2.0);
  EXPECT_DOUBLE_EQ(a.op, 1.0);
  EXPECT_DOUBLE_EQ(a.sigma_min, 1.0);
  const Norms z = norms<Complex>(Mat<Complex>::Zero(3, 3));
  EXPECT_EQ(z.fro, 0.0);
  EXPECT_EQ(z.op, 0.0);
  EXPECT_EQ(z.sigma_min, 0.0);
  const Norms d = norms<double>(diag<double>(vec({3.0, 4.0})));
  EXPECT_NEAR(d.fro, 5.0, 1e-15);
  EXPECT_NEAR(d.op, 4.0, 1e-15);
  EXPECT_NEAR(d.sigma_min, 3.0, 1e-15);
}

TYPED_TEST(LinalgTyped, NormOrdering) {
  using S = TypeParam;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Norms n = norms<S>(random_matrix<S>(5, seed));
    EXPECT_LE(n.sigma_min, n.op);
    EXPECT_LE(n.op, n.fro + 1e-14);
    EXPECT_LE(n.fro, std::sqrt(5.0) * n.op + 1e-14);
  }
}

TEST(DetSign, IdentityAndFlip) {
  EXPECT_EQ(det_sign_or_phase<double>(identity<double>(5)), 1.0);
  EXPECT_EQ(det_sign_or_phase<double>(diag<double>(vec({-1, 1, 1, 1, 1}))), -1.0);
}

TEST(DetSign, ReflectedHaarIsNegative) {
  Mat<double> q = random_unitary<double>(5, 21);
  if (det_sign_or_phase<double>(q) < 0) q.col(0) *= -1.0;
  const Eigen::VectorXd v = q.col(2);
  const Mat<double> reflect = identity<double>(5) - 2.0 * v * v.transpose();
  EXPECT_EQ(det_sign_or_phase<double>(Mat<double>(reflect * q)), -1.0);
}

TEST(DetSign, ComplexPhaseAndUnderflow) {
  Mat<Complex> m = identity<Complex>(2);
  m(0, 0) = Complex(0.0, 2.0);
  const Complex p = det_sign_or_phase<Complex>(m);
  EXPECT_NEAR(std::abs(p - Complex(0.0, 1.0)), 0.0, 1e-15);
  EXPECT_EQ(det_sign_or_phase<double>(Mat<double>(1e-200 * identity<double>(2))), 0.0);
  // Tiny but representable determinant keeps its sign.
  EXPECT_EQ(det_sign_or_phase<double>(Mat<double>(-1e-100 * identity<double>(1))), -1.0);
}

TYPED_TEST(LinalgTyped, RRhSpectrumEquality) {
  using S = TypeParam;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Mat<S> r = 0.5 * random_matrix<S>(4, seed + 300);
    const Mat<S> i = identity<S>(4);
    const RealVec a = hermitian_eig<S>(Mat<S>(i - r * r.adjoint())).values;
    const RealVec b = hermitian_eig<S>(Mat<S>(i - r.adjoint() * r)).values;
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
  }
}

}  // namespace
}  // namespace dmf
