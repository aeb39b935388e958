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

// End-to-end acceptance checks. Prints one [PASS]/[FAIL] line per criterion
// and exits non-zero if any fails. Usage: acceptance [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "deepfactor/lab.hpp"
#include "deepfactor/rmt.hpp"
#include "deepfactor/stats.hpp"

namespace {

using namespace dmf;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  double worst = 0.0;
  for (FieldTag f : {FieldTag::Real, FieldTag::Complex}) {
    for (double a : {0.0, 1.0, 10.0}) {
      const GradcheckReport r = gradcheck(4, 4, f, a, 1);
      worst = std::max(worst, r.max_rel_err);
      o.require(r.pass, std::string(to_string(f)) + " a=" + num(a) + " err=" + num(r.max_rel_err));
    }
  }
  o.note("max rel err " + num(worst));
  return o;
}

template <FieldScalar S>
void flow_conservation_field(Outcome& o) {
  RunConfig c = preset_config("flow-balanced");
  c.field = field_of<S>;
  const Trajectory<S> t = run_trajectory<S>(c);
  double e_max = 0.0, l_rise = 0.0, skew_rise = 0.0;
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    const auto& r = t.records[i];
    e_max = std::max(e_max, r.e_delta);
    if (i == 0) continue;
    const auto& p = t.records[i - 1];
    l_rise = std::max(l_rise, r.l_ori - p.l_ori);
    if (r.skew_uv && p.skew_uv) skew_rise = std::max(skew_rise, *r.skew_uv - *p.skew_uv);
    else skew_rise = std::numeric_limits<double>::infinity();
  }
  const std::string f(to_string(field_of<S>));
  o.require(t.steps_run == c.steps || t.status == RunStatus::Converged, f + " run ended early");
  o.require(e_max < 1e-8, f + " e_delta " + num(e_max));
  o.require(l_rise <= 1e-10, f + " L_ori rise " + num(l_rise));
  o.require(skew_rise <= 1e-8, f + " skew_uv rise " + num(skew_rise));
  o.note(f + ": max e_delta " + num(e_max) + ", max L_ori rise " + num(l_rise) + ", max skew_uv rise " +
         num(skew_rise));
}

Outcome flow_conservation() {
  Outcome o;
  flow_conservation_field<double>(o);
  flow_conservation_field<Complex>(o);
  return o;
}

Outcome saddle_dichotomy() {
  Outcome o;
  RunConfig minus = preset_config("fig-h1");
  minus.det = -1;
  minus.record_stride = 1;
  const auto tm = run_trajectory<double>(minus);
  double half_max = 0.0;
  for (const auto& r : tm.records) half_max = std::max(half_max, r.half_sum_sv.minCoeff());
  const double l_final = tm.records.back().l_ori;
  o.require(l_final >= 0.5 - 1e-6, "det-1 final L_ori " + num(l_final));
  o.require(half_max < 1e-8, "det-1 half_sum_sv min " + num(half_max));
  o.note("det-1: L_ori " + num(l_final) + ", max_t min half_sum_sv " + num(half_max));

  RunConfig plus = preset_config("fig-h1");
  const auto tp = run_trajectory<double>(plus);
  o.require(tp.status == RunStatus::Converged && tp.steps_run <= 200000, "det+1 did not converge");
  o.note("det+1: converged at " + (tp.converged_step ? std::to_string(*tp.converged_step) : "never"));

  RunConfig cx = preset_config("fig-h1");
  cx.field = FieldTag::Complex;
  cx.det = 0;
  const auto tc = run_trajectory<Complex>(cx);
  o.require(tc.status == RunStatus::Converged && tc.steps_run <= 200000, "complex did not converge");
  o.note("complex: converged at " + (tc.converged_step ? std::to_string(*tc.converged_step) : "never"));
  return o;
}

Outcome convergence_probability() {
  Outcome o;
  RunConfig real = preset_config("sweep-random");
  const SweepResult r = sweep_convergence(real, 400);
  const double cond = r.conditional_fraction(1);
  o.require(r.fraction >= 0.42 && r.fraction <= 0.58, "real fraction " + num(r.fraction));
  o.require(cond >= 0.9, "real det>0 conditional " + num(cond));
  o.note("real " + std::to_string(r.n_converged) + "/400 = " + num(r.fraction) + ", det>0 " +
         std::to_string(r.n_det_pos_converged) + "/" + std::to_string(r.n_det_pos) + " = " + num(cond) +
         ", det<0 " + std::to_string(r.n_det_neg_converged) + "/" + std::to_string(r.n_det_neg));

  RunConfig cx = preset_config("sweep-random");
  cx.field = FieldTag::Complex;
  const SweepResult c = sweep_convergence(cx, 200);
  o.require(c.fraction >= 0.95, "complex fraction " + num(c.fraction));
  o.note("complex " + std::to_string(c.n_converged) + "/200 = " + num(c.fraction));
  return o;
}

Outcome rmt_suite() {
  Outcome o;
  const std::set<std::string> required = {"cue_chi2_uniformity_p", "cre_det1_density_l1",
                                          "product_det_positive_fraction_dev", "haar_quantile_delta_0.10",
                                          "haar_quantile_delta_0.30", "real_det_minus_sigma_min_max"};
  std::size_t seen = 0;
  for (const auto& r : rmt_validate(RmtOptions{}, SeededRng(1))) {
    const std::string line = r.name + " " + num(r.statistic) + " " + r.relation + " " + num(r.threshold);
    if (required.count(r.name)) {
      ++seen;
      o.require(r.pass, line);
      if (r.pass) o.note(line);
    } else {
      o.note("(informational) " + line + (r.pass ? " pass" : " fail"));
    }
  }
  o.require(seen == required.size(), "missing validators");
  return o;
}

template <FieldScalar S>
Mat<S> gaussian(Eigen::Index d, SeededRng& rng) {
  return gaussian_matrix<S>(d, rng);
}

template <FieldScalar S>
void property_suites_field(Outcome& o, SeededRng& rng, int n_sandwich, int n_sqrt, int n_inv, int n_rr) {
  const std::string f(to_string(field_of<S>));
  const Eigen::Index d = 5;
  int fails = 0;
  for (int i = 0; i < n_sandwich; ++i) {
    RealVec s(d);
    for (Eigen::Index k = 0; k < d; ++k) s(k) = 3.0 * rng.uniform();
    const Mat<S> u = haar_unitary<S>(d, rng);
    const Mat<S> v = haar_unitary<S>(d, rng);
    fails += !eig_sandwich_check<S>(u, v, s);
  }
  o.require(fails == 0, f + " sandwich failures " + std::to_string(fails));

  fails = 0;
  double worst_ratio = 0.0;
  for (int i = 0; i < n_sqrt; ++i) {
    const Mat<S> a = gaussian<S>(d, rng);
    const Mat<S> x = a * a.adjoint() + (0.5 + rng.uniform()) * Mat<S>::Identity(d, d);
    Mat<S> e = gaussian<S>(d, rng);
    e = (e + e.adjoint()).eval();
    const double target_norm = 0.9 * lambda_min<S>(x) * rng.uniform();
    e *= target_norm / op_norm<S>(e);
    const SqrtBound b = sqrt_perturbation_bound<S>(x, e);
    fails += !b.holds;
    if (b.rhs > 0) worst_ratio = std::max(worst_ratio, b.lhs / b.rhs);
  }
  o.require(fails == 0, f + " sqrt bound failures " + std::to_string(fails));

  double worst_inv = 0.0;
  for (int i = 0; i < n_inv; ++i) {
    const Mat<S> x = Mat<S>(2.0 * Mat<S>::Identity(d, d)) + gaussian<S>(d, rng) / std::sqrt(double(d));
    const Mat<S> e = 0.5 * rng.uniform() * gaussian<S>(d, rng) / std::sqrt(double(d));
    worst_inv = std::max(worst_inv, inverse_perturbation_residual<S>(x, e));
  }
  o.require(worst_inv < 1e-10, f + " inverse residual " + num(worst_inv));

  double worst_rr = 0.0;
  for (int i = 0; i < n_rr; ++i) {
    const Mat<S> r = gaussian<S>(d, rng);
    const Mat<S> id = Mat<S>::Identity(d, d);
    const RealVec l1 = hermitian_eig<S>(Mat<S>(id - r * r.adjoint())).values;
    const RealVec l2 = hermitian_eig<S>(Mat<S>(id - r.adjoint() * r)).values;
    worst_rr = std::max(worst_rr, (l1 - l2).cwiseAbs().maxCoeff() / (1.0 + r.squaredNorm()));
  }
  o.require(worst_rr < 1e-12, f + " RR^H spectrum gap " + num(worst_rr));
  o.note(f + ": sqrt lhs/rhs max " + num(worst_ratio) + ", inverse residual " + num(worst_inv) +
         ", spectrum gap " + num(worst_rr));
}

Outcome property_suites() {
  Outcome o;
  SeededRng rng(6);
  property_suites_field<double>(o, rng, 500, 500, 500, 250);
  property_suites_field<Complex>(o, rng, 500, 500, 500, 250);
  return o;
}

Outcome regulariser_only() {
  Outcome o;
  RunConfig c = preset_config("fig-h3");
  c.record_stride = 1;
  const auto t = run_trajectory<double>(c);
  double max_rise = 0.0, min_drop = 0.0;
  for (std::size_t i = 1; i < t.records.size(); ++i) {
    max_rise = std::max(max_rise, t.records[i].sig_max - t.records[i - 1].sig_max);
    min_drop = std::max(min_drop, t.records[i - 1].sig_min - t.records[i].sig_min);
  }
  o.require(max_rise <= 1e-6, "sig_max rise " + num(max_rise));
  o.require(min_drop <= 1e-6, "sig_min drop " + num(min_drop));
  std::vector<double> xs, ys;
  for (std::size_t i = t.records.size() / 2; i < t.records.size(); ++i) {
    const double l = t.records[i].l_reg;
    if (!(l > 0.0)) continue;
    xs.push_back(static_cast<double>(t.records[i].step));
    ys.push_back(std::log(l));
  }
  o.require(xs.size() > 10, "too few positive L_reg samples");
  const LineFit fit = fit_line(xs, ys);
  o.require(fit.slope < 0.0, "slope " + num(fit.slope));
  o.require(fit.r2 > 0.99, "R2 " + num(fit.r2));
  o.note("sig_max rise " + num(max_rise) + ", sig_min drop " + num(min_drop) + ", log L_reg slope " +
         num(fit.slope) + " R2 " + num(fit.r2) + ", final L_reg " + num(t.records.back().l_reg));
  return o;
}

template <FieldScalar S>
void reduction_field(Outcome& o, int n, std::uint64_t seed) {
  double worst_loss = 0.0, worst_delta = 0.0;
  DynConfig cfg;
  for (int i = 0; i < n; ++i) {
    SeededRng rng = SeededRng(seed).split(static_cast<std::uint64_t>(i));
    cfg.reg_a = 2.0 * rng.uniform();
    const Mat<S> sigma = gaussian<S>(5, rng);
    const auto st = random_init<S>(5, 4, InitScheme{InitKind::RandomGaussian, 0.8, {}}, rng.split(1));
    const Reduction<S> red = reduce_target(sigma, st);
    const double before = loss(st, TargetSpec<S>::from(sigma), cfg).total;
    const double after = loss(red.stack, red.target, cfg).total;
    worst_loss = std::max(worst_loss, std::abs(before - after) / (1.0 + before));
    const auto d0 = balance_deltas_padded(st);
    const auto d1 = balance_deltas_padded(red.stack);
    for (std::size_t j = 0; j < d0.size(); ++j) worst_delta = std::max(worst_delta, (d0[j] - d1[j]).norm());
  }
  const std::string f(to_string(field_of<S>));
  o.require(worst_loss < 1e-10, f + " loss change " + num(worst_loss));
  o.require(worst_delta < 1e-12, f + " delta change " + num(worst_delta));
  o.note(f + ": loss change " + num(worst_loss) + ", delta change " + num(worst_delta));
}

Outcome reduction_invariance() {
  Outcome o;
  reduction_field<double>(o, 50, 8);
  reduction_field<Complex>(o, 50, 9);
  return o;
}

template <FieldScalar S>
std::string csv_of(const RunConfig& c) {
  std::ostringstream os;
  write_trajectory_csv(os, c, run_trajectory<S>(c));
  return os.str();
}

Outcome reproducibility() {
  Outcome o;
  for (const auto& name : preset_names()) {
    RunConfig c = preset_config(name);
    std::string a, b;
    if (name == "sweep-random") {
      const int n = 16;
      std::ostringstream x, y;
      write_sweep_csv(x, c, sweep_convergence(c, n, 1));
      write_sweep_csv(y, c, sweep_convergence(c, n, lab_threads()));
      a = x.str();
      b = y.str();
    } else {
      a = csv_of<double>(c);
      b = csv_of<double>(c);
      if (name == "fig-h1" || name == "fig-h2") {
        c.field = FieldTag::Complex;
        c.det = 0;
        a += csv_of<Complex>(c);
        b += csv_of<Complex>(c);
      }
    }
    o.require(a == b && !a.empty(), name + " differs");
    o.note(name + " " + std::to_string(a.size()) + " bytes");
  }
  return o;
}

struct Criterion {
  int id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "gradient correctness", gradient_correctness},
      {2, "flow conservation", flow_conservation},
      {3, "saddle dichotomy", saddle_dichotomy},
      {4, "convergence probability", convergence_probability},
      {5, "random matrix suite", rmt_suite},
      {6, "matrix inequality suites", property_suites},
      {7, "regulariser-only dynamics", regulariser_only},
      {8, "target-reduction invariance", reduction_invariance},
      {9, "reproducibility", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %d: %s (%.1f s) %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title, secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
