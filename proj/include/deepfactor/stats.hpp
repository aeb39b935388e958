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

// Histograms and goodness-of-fit statistics used by the Monte-Carlo
// validators.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "deepfactor/field.hpp"

namespace dmf {

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> counts;
  double total = 0.0;  // number of values binned

  Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0.0) {}

  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  double bin_lo(std::size_t k) const { return lo + width() * static_cast<double>(k); }
  double bin_hi(std::size_t k) const { return lo + width() * static_cast<double>(k + 1); }

  // Half-open bins (lo, hi]; values on the boundary fall in the last bin.
  void add(double x) {
    auto k = static_cast<long>(std::ceil((x - lo) / width())) - 1;
    k = std::clamp<long>(k, 0, static_cast<long>(counts.size()) - 1);
    counts[static_cast<std::size_t>(k)] += 1.0;
    total += 1.0;
  }

  // Empirical density per unit of `per` (e.g. per sample rather than per value).
  double density(std::size_t k, double per) const { return counts[k] / (per * width()); }
};

// Composite Simpson integral of f over [a, b].
inline double simpson(const std::function<double(double)>& f, double a, double b, int intervals = 2000) {
  if (intervals % 2) ++intervals;
  const double h = (b - a) / intervals;
  double acc = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) acc += f(a + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

struct ChiSquare {
  double statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

inline ChiSquare chi_square(const std::vector<double>& observed, const std::vector<double>& expected) {
  ChiSquare out;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    const double diff = observed[k] - expected[k];
    out.statistic += diff * diff / expected[k];
  }
  out.dof = static_cast<double>(observed.size()) - 1.0;
  const boost::math::chi_squared dist(out.dof);
  out.p_value = boost::math::cdf(boost::math::complement(dist, out.statistic));
  return out;
}

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    best = std::max(best, std::abs(i / na - j / nb));
  }
  return best;
}

// Asymptotic two-sample KS critical value c(alpha) sqrt((n+m)/(n m)),
// c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) / (static_cast<double>(n) * static_cast<double>(m)));
}

// Least-squares line fit y = slope x + intercept with coefficient of determination.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

// One CSV table: bin_lo,bin_hi,empirical,analytic.
inline std::string histogram_csv(const Histogram& h, double per, const std::function<double(double)>& analytic) {
  std::ostringstream os;
  os.precision(17);
  os << "bin_lo,bin_hi,empirical,analytic\n";
  for (std::size_t k = 0; k < h.counts.size(); ++k) {
    const double a = h.bin_lo(k), b = h.bin_hi(k);
    os << a << ',' << b << ',' << h.density(k, per) << ',' << simpson(analytic, a, b, 200) / (b - a) << '\n';
  }
  return os.str();
}

}  // namespace dmf
