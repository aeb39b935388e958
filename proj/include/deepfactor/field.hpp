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

// Scalar fields, matrix aliases and the error type shared by every module.

#pragma once

#include <complex>
#include <concepts>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace dmf {

enum class FieldTag { Real, Complex };

using Complex = std::complex<double>;

template <typename S>
concept FieldScalar = std::same_as<S, double> || std::same_as<S, Complex>;

template <FieldScalar S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using RealVec = Eigen::VectorXd;

template <FieldScalar S>
inline constexpr FieldTag field_of = std::same_as<S, double> ? FieldTag::Real : FieldTag::Complex;

inline std::string_view to_string(FieldTag f) {
  return f == FieldTag::Real ? "real" : "complex";
}

// Error codes; each maps onto an error named in a module contract.
enum class Errc {
  NonFinite,
  NotHermitian,
  RankDeficient,
  NotPSD,
  PreconditionViolated,
  Singular,
  DimMismatch,
  NotUnitary,
  IllConditioned,
  NotReduced,
  ConfigInvalid,
  Diverged,
  MalformedCSV,
};

inline std::string_view to_string(Errc e) {
  switch (e) {
    case Errc::NonFinite: return "NonFinite";
    case Errc::NotHermitian: return "NotHermitian";
    case Errc::RankDeficient: return "RankDeficient";
    case Errc::NotPSD: return "NotPSD";
    case Errc::PreconditionViolated: return "PreconditionViolated";
    case Errc::Singular: return "Singular";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::NotUnitary: return "NotUnitary";
    case Errc::IllConditioned: return "IllConditioned";
    case Errc::NotReduced: return "NotReduced";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::Diverged: return "Diverged";
    case Errc::MalformedCSV: return "MalformedCSV";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Unit-modulus scalar with the phase of z; zero maps to one.
template <FieldScalar S>
S unit_phase(S z) {
  const double r = std::abs(z);
  if (r == 0.0) return S(1.0);
  return z / r;
}

// std::conj promotes double to std::complex; this keeps the field.
template <FieldScalar S>
S conj_of(S z) {
  if constexpr (std::same_as<S, double>) {
    return z;
  } else {
    return std::conj(z);
  }
}

template <FieldScalar S>
bool all_finite(const Mat<S>& m) {
  return m.allFinite();
}

template <FieldScalar S>
Mat<S> adjoint(const Mat<S>& m) {
  return m.adjoint();
}

// Frobenius inner product Re<a, b> = Re tr(a^H b).
template <FieldScalar S>
double real_inner(const Mat<S>& a, const Mat<S>& b) {
  return std::real(a.cwiseProduct(b.conjugate()).sum());
}

}  // namespace dmf
