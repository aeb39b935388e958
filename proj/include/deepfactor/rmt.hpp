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

// Monte-Carlo validators for the initialisation statistics. Each validator
// draws sample i from rng.split(i), so results depend only on the seed.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "deepfactor/ensembles.hpp"
#include "deepfactor/stats.hpp"

namespace dmf {

struct ValidationResult {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  std::string relation;  // how statistic is compared against threshold
  bool pass = false;
  std::string csv;  // optional histogram table
};

struct RmtOptions {
  int d_cue = 5;
  int n_cue = 2000;
  int d_cre = 6;
  int n_cre = 5000;
  int d_products = 5;
  int n_layers_products = 4;
  int n_products = 10000;
  int d_quantile = 5;
  int n_quantile = 5000;
  int n_zero_mode = 5000;
  int n_invariance = 5000;
  int n_real_det = 10000;
  int bins = 20;
};

namespace rmt {

// Pooled CUE eigenangles against the flat density d/2pi, chi-square over `bins`.
inline std::vector<ValidationResult> cue_uniformity(int d, int n, int bins, const SeededRng& rng) {
  Histogram h(-std::numbers::pi, std::numbers::pi, static_cast<std::size_t>(bins));
  for (int i = 0; i < n; ++i) {
    SeededRng sub = rng.split(static_cast<std::uint64_t>(i));
    for (double a : eigenangles<Complex>(haar_unitary<Complex>(d, sub))) h.add(a);
  }
  const std::vector<double> expected(h.counts.size(), h.total / static_cast<double>(h.counts.size()));
  const ChiSquare chi = chi_square(h.counts, expected);
  double worst = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    worst = std::max(worst, std::abs(h.counts[k] / expected[k] - 1.0));
  }
  auto flat = [d](double t) { return cue_density(t, d); };
  const std::string csv = histogram_csv(h, n, flat);
  return {
      {"cue_chi2_uniformity_p", chi.p_value, 1e-3, ">", chi.p_value > 1e-3, csv},
      {"cue_max_bin_relative_deviation", worst, 0.05, "<", worst < 0.05, {}},
  };
}

// SO(d) eigenangles against the analytic density (both normalised to unit
// mass), L1 distance over bin averages. det=-1 draws are mapped into SO(d)
// by flipping one column, a measure-preserving bijection of the two cosets.
// For odd d the angle closest to 0 (the fixed eigenvalue +1) is dropped.
inline ValidationResult cre_density_l1(int d, int n, int bins, const SeededRng& rng) {
  Histogram h(-std::numbers::pi, std::numbers::pi, static_cast<std::size_t>(bins));
  for (int i = 0; i < n; ++i) {
    SeededRng sub = rng.split(static_cast<std::uint64_t>(i));
    Mat<double> q = haar_unitary<double>(d, sub);
    if (det_sign_or_phase<double>(q) < 0) q.col(0) *= -1.0;
    std::vector<double> angles = eigenangles<double>(q);
    if (d % 2 == 1) {
      auto fixed = std::min_element(angles.begin(), angles.end(),
                                    [](double a, double b) { return std::abs(a) < std::abs(b); });
      angles.erase(fixed);
    }
    for (double a : angles) h.add(a);
  }
  const double per_sample = (d % 2 == 0) ? d : d - 1;
  double l1 = 0.0;
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double a = h.bin_lo(k), b = h.bin_hi(k);
    const double analytic = simpson([d](double t) { return cre_density_det1(t, d); }, a, b, 200) / per_sample;
    const double empirical = h.counts[k] / h.total;
    l1 += std::abs(empirical - analytic);
  }
  auto dens = [d](double t) { return cre_density_det1(t, d); };
  return {"cre_det1_density_l1", l1, 0.05, "<", l1 < 0.05, histogram_csv(h, n, dens)};
}

// Fraction of eps-scaled real Gaussian products W_N...W_1 with det > 0.
inline ValidationResult product_det_sign(int d, int n_layers, int n, const SeededRng& rng) {
  const InitScheme scheme{InitKind::RandomGaussian, 1.0, {}};
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    const LayerStack<double> st = random_init<double>(d, static_cast<std::size_t>(n_layers), scheme,
                                                      rng.split(static_cast<std::uint64_t>(i)));
    Mat<double> w = st.layers.back();
    for (auto it = st.layers.rbegin() + 1; it != st.layers.rend(); ++it) w = w * (*it);
    if (det_sign_or_phase<double>(w) > 0) ++positive;
  }
  const double frac = static_cast<double>(positive) / n;
  return {"product_det_positive_fraction_dev", std::abs(frac - 0.5), 0.015, "<=", std::abs(frac - 0.5) <= 0.015, {}};
}

inline ValidationResult real_haar_det_fraction(int d, int n, const SeededRng& rng) {
  int positive = 0;
  for (int i = 0; i < n; ++i) {
    SeededRng sub = rng.split(static_cast<std::uint64_t>(i));
    if (det_sign_or_phase<double>(haar_unitary<double>(d, sub)) > 0) ++positive;
  }
  const double dev = std::abs(static_cast<double>(positive) / n - 0.5);
  return {"real_haar_det_positive_fraction_dev", dev, 0.015, "<=", dev <= 0.015, {}};
}

// Pr(sigma_min(I + Q) >= pi delta / d) >= 1 - delta - 0.02 on CUE(d).
inline std::vector<ValidationResult> haar_quantile(int d, int n, const std::vector<double>& deltas,
                                                   const SeededRng& rng) {
  std::vector<double> smin(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SeededRng sub = rng.split(static_cast<std::uint64_t>(i));
    const Mat<Complex> q = haar_unitary<Complex>(d, sub);
    smin[static_cast<std::size_t>(i)] = norms<Complex>(Mat<Complex>(Mat<Complex>::Identity(d, d) + q)).sigma_min;
  }
  std::vector<ValidationResult> out;
  for (double delta : deltas) {
    const double cut = std::numbers::pi * delta / d;
    const double frac =
        static_cast<double>(std::count_if(smin.begin(), smin.end(), [cut](double s) { return s >= cut; })) / n;
    out.push_back({"haar_quantile_delta_" + std::to_string(delta).substr(0, 4), frac, 1.0 - delta - 0.02, ">=",
                   frac >= 1.0 - delta - 0.02, {}});
  }
  return out;
}

// Every real Haar Q with det = -1 has sigma_min(Q + (QQ^T)^{1/2}) = sigma_min(I + Q) = 0.
inline ValidationResult real_det_minus_zero_mode(int d, int n, const SeededRng& rng) {
  double worst = 0.0;
  int seen = 0;
  for (int i = 0; i < n; ++i) {
    SeededRng sub = rng.split(static_cast<std::uint64_t>(i));
    const Mat<double> q = haar_unitary<double>(d, sub);
    if (det_sign_or_phase<double>(q) > 0) continue;
    ++seen;
    worst = std::max(worst, main_term_seed_stat<double>(q));
  }
  const bool ok = seen > 0 && worst <= 1e-10;
  return {"real_det_minus_sigma_min_max", worst, 1e-10, "<=", ok, {}};
}

// Re tr(U0 Q) and Re tr(Q) must share a distribution (two-sample KS, alpha = 0.001).
inline ValidationResult left_invariance(int d, int n, const SeededRng& rng) {
  SeededRng fixed_stream = rng.split(0xF1F1);
  const Mat<Complex> u0 = haar_unitary<Complex>(d, fixed_stream);
  std::vector<double> plain, shifted;
  plain.reserve(static_cast<std::size_t>(n));
  shifted.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SeededRng a = rng.split(2 * static_cast<std::uint64_t>(i));
    SeededRng b = rng.split(2 * static_cast<std::uint64_t>(i) + 1);
    plain.push_back(haar_unitary<Complex>(d, a).trace().real());
    shifted.push_back((u0 * haar_unitary<Complex>(d, b)).trace().real());
  }
  const double ks = ks_statistic(plain, shifted);
  const double crit = ks_critical(plain.size(), shifted.size(), 1e-3);
  return {"haar_left_invariance_ks", ks, crit, "<", ks < crit, {}};
}

}  // namespace rmt

// Runs every validator; stream k of `rng` feeds validator k.
inline std::vector<ValidationResult> rmt_validate(const RmtOptions& opt, const SeededRng& rng) {
  if (opt.n_cue < 100 || opt.n_cre < 100 || opt.n_products < 100 || opt.n_quantile < 100) {
    throw Error(Errc::ConfigInvalid, "rmt_validate: sample counts must be >= 100");
  }
  std::vector<ValidationResult> out;
  for (auto& r : rmt::cue_uniformity(opt.d_cue, opt.n_cue, opt.bins, rng.split(1))) out.push_back(std::move(r));
  out.push_back(rmt::cre_density_l1(opt.d_cre, opt.n_cre, opt.bins, rng.split(2)));
  out.push_back(rmt::product_det_sign(opt.d_products, opt.n_layers_products, opt.n_products, rng.split(3)));
  for (auto& r : rmt::haar_quantile(opt.d_quantile, opt.n_quantile, {0.1, 0.3}, rng.split(4))) {
    out.push_back(std::move(r));
  }
  out.push_back(rmt::real_det_minus_zero_mode(opt.d_quantile, opt.n_zero_mode, rng.split(5)));
  out.push_back(rmt::left_invariance(opt.d_cue, opt.n_invariance, rng.split(6)));
  out.push_back(rmt::real_haar_det_fraction(opt.d_quantile, opt.n_real_det, rng.split(7)));
  return out;
}

}  // namespace dmf
