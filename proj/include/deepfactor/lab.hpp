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

// Experiment driver: run configuration, trajectories, seed sweeps,
// gradient checks and the CSV / plot-script writers behind the CLI.

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "deepfactor/dynamics.hpp"
#include "deepfactor/ensembles.hpp"
#include "deepfactor/monitors.hpp"
#include "deepfactor/rmt.hpp"

namespace dmf {

inline constexpr double kDivergenceBound = 1e12;

enum class TargetKind { Identity, Diagonal, RandomGeneral };

// Shortest round-trip decimal; identical bits give identical text.
inline std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  double x = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(x)) {
    throw Error(Errc::ConfigInvalid, key + ": not a finite number: '" + v + "'");
  }
  return x;
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
  I x = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), x);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw Error(Errc::ConfigInvalid, key + ": not an integer: '" + v + "'");
  }
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(Errc::ConfigInvalid, key + ": expected true/false, got '" + v + "'");
}

inline std::string join(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += fmt_num(xs[i]);
  }
  return out;
}

}  // namespace detail

inline FieldTag parse_field(const std::string& v) {
  if (v == "real") return FieldTag::Real;
  if (v == "complex") return FieldTag::Complex;
  throw Error(Errc::ConfigInvalid, "field must be real or complex, got '" + v + "'");
}

inline int parse_det(const std::string& v) {
  if (v == "plus" || v == "+1" || v == "1") return 1;
  if (v == "minus" || v == "-1") return -1;
  if (v == "any" || v == "0") return 0;
  throw Error(Errc::ConfigInvalid, "det must be plus, minus or any, got '" + v + "'");
}

struct RunConfig {
  std::string preset;
  FieldTag field = FieldTag::Real;
  int d = 5;
  int n_layers = 4;
  TargetKind target = TargetKind::Identity;
  double sigma1 = 1.0;
  std::vector<double> target_diag;
  InitScheme init;
  std::vector<double> sigma_w0;  // pinned initial singular values of every layer / eps
  int det = 0;                   // +1 / -1 forces sign det(U^T V) on real balanced init
  DynConfig dyn;
  long steps = 200000;
  long record_stride = 1000;
  std::uint64_t seed = 1;
  double eps_conv = 1e-8;
  bool omit_l_ori = false;

  DynConfig dynamics() const {
    DynConfig c = dyn;
    c.include_l_ori = !omit_l_ori;
    return c;
  }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::ConfigInvalid, m); };
    if (d < 1) bad("d must be >= 1");
    if (n_layers < 2) bad("n_layers must be >= 2");
    if (steps < 1) bad("steps must be >= 1");
    if (record_stride < 1) bad("record_stride must be >= 1");
    if (!(eps_conv > 0.0)) bad("eps_conv must be positive");
    if (target == TargetKind::Diagonal && target_diag.size() != static_cast<std::size_t>(d)) {
      bad("target_diag needs exactly d entries");
    }
    if (!sigma_w0.empty()) {
      if (init.kind != InitKind::BalancedGaussian) bad("sigma_w0 requires init=balanced");
      if (sigma_w0.size() != static_cast<std::size_t>(d)) bad("sigma_w0 needs exactly d entries");
      for (double s : sigma_w0) {
        if (s < 0.0) bad("sigma_w0 entries must be >= 0");
      }
    }
    if (det != 0 && det != 1 && det != -1) bad("det must be -1, 0 or +1");
    if (det != 0 && (field != FieldTag::Real || init.kind != InitKind::BalancedGaussian)) {
      bad("det selection applies to real balanced init only");
    }
    init.validate(field, static_cast<std::size_t>(n_layers));
    dyn.validate();
  }

  // Effective configuration as key=value pairs, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("preset", preset.empty() ? "none" : preset);
    kv.emplace_back("field", std::string(to_string(field)));
    kv.emplace_back("d", std::to_string(d));
    kv.emplace_back("n_layers", std::to_string(n_layers));
    const char* tk = target == TargetKind::Identity ? "identity" : target == TargetKind::Diagonal ? "diag" : "random";
    kv.emplace_back("target", tk);
    kv.emplace_back("sigma1", fmt_num(sigma1));
    kv.emplace_back("target_diag", detail::join(target_diag));
    kv.emplace_back("init", init.kind == InitKind::BalancedGaussian ? "balanced" : "random");
    kv.emplace_back("epsilon", fmt_num(init.epsilon));
    std::string ph;
    for (std::size_t i = 0; i < init.s_phases.size(); ++i) {
      if (i) ph += ',';
      ph += fmt_num(init.s_phases[i].real()) + ":" + fmt_num(init.s_phases[i].imag());
    }
    kv.emplace_back("s_phases", ph);
    kv.emplace_back("sigma_w0", detail::join(sigma_w0));
    kv.emplace_back("det", det == 1 ? "plus" : det == -1 ? "minus" : "any");
    kv.emplace_back("a", fmt_num(dyn.reg_a));
    kv.emplace_back("integrator", dyn.integrator == Integrator::GD ? "gd" : "rk4");
    kv.emplace_back("eta", fmt_num(dyn.eta));
    kv.emplace_back("step_h", fmt_num(dyn.step_h));
    kv.emplace_back("steps", std::to_string(steps));
    kv.emplace_back("record_stride", std::to_string(record_stride));
    kv.emplace_back("seed", std::to_string(seed));
    kv.emplace_back("eps_conv", fmt_num(eps_conv));
    kv.emplace_back("omit_l_ori", omit_l_ori ? "true" : "false");
    return kv;
  }
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"fig-h1", "fig-h2", "fig-h3", "sweep-random", "flow-balanced"};
  return names;
}

// fig-h1/h2: pinned balanced init at eps = 0.05 under GD eta = 0.1.
// fig-h3: regulariser-only GD from random init; 4e4 steps keeps L_reg above
// the rounding floor so its log-linear decay stays measurable.
// sweep-random: random init convergence statistics.
// flow-balanced: RK4 conservation checks from balanced init.
inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "fig-h1" || name == "fig-h2") {
    c.init = {InitKind::BalancedGaussian, 0.05, {}};
    c.sigma_w0 = {1.0, 0.8, 0.6, 0.5, 0.9};
    c.dyn.reg_a = 0.1;
    c.dyn.eta = 0.1;
    c.steps = 200000;
    c.record_stride = 100;
    c.det = 1;
    if (name == "fig-h2") {
      c.target = TargetKind::Diagonal;
      c.target_diag = {2.00, 1.55, 1.10, 0.65, 0.20};
    }
  } else if (name == "fig-h3") {
    c.init = {InitKind::RandomGaussian, 1.0, {}};
    c.omit_l_ori = true;
    c.dyn.reg_a = 1.0;
    c.dyn.eta = 0.001;
    c.steps = 40000;
    c.record_stride = 20;
  } else if (name == "sweep-random") {
    c.init = {InitKind::RandomGaussian, 0.3, {}};
    c.dyn.reg_a = 20.0;
    c.dyn.eta = 0.01;
    c.steps = 200000;
    c.record_stride = 200000;
    c.seed = 1000;
  } else if (name == "flow-balanced") {
    c.init = {InitKind::BalancedGaussian, 0.05, {}};
    c.dyn.integrator = Integrator::FlowRK4;
    c.dyn.reg_a = 0.0;
    c.dyn.step_h = 1e-3;
    c.steps = 20000;
    c.record_stride = 1;
  } else {
    throw Error(Errc::ConfigInvalid, "unknown preset '" + name + "'");
  }
  return c;
}

inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "preset") {
    c.preset = value;
  } else if (key == "field") {
    c.field = parse_field(value);
  } else if (key == "d") {
    c.d = parse_int<int>(key, value);
  } else if (key == "n_layers") {
    c.n_layers = parse_int<int>(key, value);
  } else if (key == "target") {
    if (value == "identity") c.target = TargetKind::Identity;
    else if (value == "diag") c.target = TargetKind::Diagonal;
    else if (value == "random") c.target = TargetKind::RandomGeneral;
    else throw Error(Errc::ConfigInvalid, "target must be identity, diag or random");
  } else if (key == "sigma1") {
    c.sigma1 = parse_double(key, value);
  } else if (key == "target_diag" || key == "sigma_w0") {
    std::vector<double> xs;
    for (const auto& t : split_list(value)) xs.push_back(parse_double(key, t));
    (key == "target_diag" ? c.target_diag : c.sigma_w0) = std::move(xs);
  } else if (key == "init") {
    if (value == "balanced") c.init.kind = InitKind::BalancedGaussian;
    else if (value == "random") c.init.kind = InitKind::RandomGaussian;
    else throw Error(Errc::ConfigInvalid, "init must be balanced or random");
  } else if (key == "epsilon") {
    c.init.epsilon = parse_double(key, value);
  } else if (key == "s_phases") {
    c.init.s_phases.clear();
    for (const auto& t : split_list(value)) {
      const auto colon = t.find(':');
      if (colon == std::string::npos) {
        c.init.s_phases.emplace_back(parse_double(key, t), 0.0);
      } else {
        c.init.s_phases.emplace_back(parse_double(key, t.substr(0, colon)), parse_double(key, t.substr(colon + 1)));
      }
    }
  } else if (key == "det") {
    c.det = parse_det(value);
  } else if (key == "a") {
    c.dyn.reg_a = parse_double(key, value);
  } else if (key == "eta") {
    c.dyn.eta = parse_double(key, value);
  } else if (key == "step_h") {
    c.dyn.step_h = parse_double(key, value);
  } else if (key == "integrator") {
    if (value == "gd") c.dyn.integrator = Integrator::GD;
    else if (value == "rk4") c.dyn.integrator = Integrator::FlowRK4;
    else throw Error(Errc::ConfigInvalid, "integrator must be gd or rk4");
  } else if (key == "steps") {
    c.steps = parse_int<long>(key, value);
  } else if (key == "record_stride") {
    c.record_stride = parse_int<long>(key, value);
  } else if (key == "seed") {
    c.seed = parse_int<std::uint64_t>(key, value);
  } else if (key == "eps_conv") {
    c.eps_conv = parse_double(key, value);
  } else if (key == "omit_l_ori") {
    c.omit_l_ori = parse_bool(key, value);
  } else {
    throw Error(Errc::ConfigInvalid, "unknown key '" + key + "'");
  }
}

// Flat "key = value" lines; '#' starts a comment.
inline std::vector<std::pair<std::string, std::string>> parse_settings(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::ConfigInvalid, "line " + std::to_string(lineno) + ": expected key = value");
    }
    out.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return out;
}

// Preset (flag wins over the file's own preset key), then file settings.
inline RunConfig build_config(const std::string& preset_flag,
                              const std::vector<std::pair<std::string, std::string>>& settings) {
  std::string preset = preset_flag;
  if (preset.empty()) {
    for (const auto& [k, v] : settings) {
      if (k == "preset") preset = v;
    }
  }
  RunConfig c = preset.empty() ? RunConfig{} : preset_config(preset);
  for (const auto& [k, v] : settings) {
    if (k != "preset") apply_setting(c, k, v);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Trajectories

enum class RunStatus { Converged, BudgetExhausted, Diverged, Failed };

inline std::string_view to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::BudgetExhausted: return "budget_exhausted";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::Failed: return "failed";
  }
  return "unknown";
}

enum class RecordMode { Stride, Endpoints };

template <FieldScalar S>
struct Trajectory {
  std::vector<TrajectoryRecord<S>> records;
  RunStatus status = RunStatus::BudgetExhausted;
  long steps_run = 0;
  std::optional<long> converged_step;
  S det0 = S(0.0);
  bool target_reduced = false;  // a general target was rotated to diag(s)
  double wall_seconds = 0.0;
};

inline constexpr std::uint64_t kStreamTarget = 5000;

template <FieldScalar S>
Mat<S> make_target_matrix(const RunConfig& c) {
  switch (c.target) {
    case TargetKind::Identity:
      return c.sigma1 * Mat<S>::Identity(c.d, c.d);
    case TargetKind::Diagonal:
      return diag<S>(Eigen::Map<const RealVec>(c.target_diag.data(), c.d));
    case TargetKind::RandomGeneral: {
      SeededRng sub = SeededRng(c.seed).split(kStreamTarget);
      return gaussian_matrix<S>(c.d, sub);
    }
  }
  return {};
}

template <FieldScalar S>
LayerStack<S> make_initial_stack(const RunConfig& c) {
  const SeededRng rng(c.seed);
  const auto n = static_cast<std::size_t>(c.n_layers);
  if (c.init.kind == InitKind::RandomGaussian) return random_init<S>(c.d, n, c.init, rng);
  BalancedParts<S> parts = c.sigma_w0.empty()
                               ? balanced_init_parts<S>(c.d, n, c.init, rng)
                               : balanced_init_pinned<S>(Eigen::Map<const RealVec>(c.sigma_w0.data(), c.d), n,
                                                         c.init, rng);
  if constexpr (std::same_as<S, double>) {
    if (c.det != 0) select_det_sign(parts, c.det);
  }
  return parts.stack;
}

template <FieldScalar S>
bool diverged(const LayerStack<S>& st) {
  for (const auto& w : st.layers) {
    const double n = w.norm();
    if (!std::isfinite(n) || n > kDivergenceBound) return true;
  }
  return false;
}

// Runs cfg's dynamics. A record is taken at step 0, every record_stride
// steps and at the final step (Stride), or only at the two ends (Endpoints).
template <FieldScalar S>
Trajectory<S> run_trajectory(const RunConfig& cfg, RecordMode mode = RecordMode::Stride) {
  cfg.validate();
  if (field_of<S> != cfg.field) throw Error(Errc::ConfigInvalid, "field does not match the scalar type");
  const auto t0 = std::chrono::steady_clock::now();
  const DynConfig dyn = cfg.dynamics();
  const double h = dyn.step_size();

  TargetSpec<S> target = TargetSpec<S>::from(make_target_matrix<S>(cfg));
  LayerStack<S> st = make_initial_stack<S>(cfg);
  Trajectory<S> out;
  if (!target.reduced) {
    Reduction<S> r = reduce_target(target.matrix, st);
    target = std::move(r.target);
    st = std::move(r.stack);
    out.target_reduced = true;
  }
  out.det0 = det_sign_or_phase<S>(product(st));

  std::optional<SvdTrack<S>> track;
  auto take = [&](long k) {
    Recorded<S> rec = record<S>(k, k * h, st, target, dyn, track ? &*track : nullptr);
    track = std::move(rec.track);
    out.records.push_back(std::move(rec.record));
  };

  take(0);
  long k = 0;
  auto l_ori_now = [&] { return 0.5 * (target.matrix - product(st)).squaredNorm(); };
  if (l_ori_now() < cfg.eps_conv) {
    out.status = RunStatus::Converged;
    out.converged_step = 0;
  }
  while (!out.converged_step && k < cfg.steps) {
    st = step(st, target, dyn);
    ++k;
    if (diverged(st)) {
      out.status = RunStatus::Diverged;
      break;
    }
    if (l_ori_now() < cfg.eps_conv) {
      out.status = RunStatus::Converged;
      out.converged_step = k;
    }
    if (mode == RecordMode::Stride && k % cfg.record_stride == 0) take(k);
  }
  out.steps_run = k;
  const bool recordable = out.status != RunStatus::Diverged || st.finite();
  if (recordable && out.records.back().step != k) take(k);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// CSV

template <FieldScalar S>
std::vector<std::string> trajectory_columns(int d) {
  std::vector<std::string> cols = {"step",  "time",     "l_ori",       "l_reg",  "e_delta",
                                   "sig_max", "sig_min", "skew_err", "main_sv_min", "det_ind"};
  for (int i = 0; i < d; ++i) cols.push_back("sigma_w_" + std::to_string(i));
  for (int i = 0; i < d; ++i) cols.push_back("half_sum_sv_" + std::to_string(i));
  cols.push_back("skew_uv");
  return cols;
}

// det_ind: sign of det W for real runs, arg det W (radians) for complex runs.
template <FieldScalar S>
std::string det_ind_text(S v) {
  if constexpr (std::same_as<S, double>) {
    return v > 0 ? "1" : v < 0 ? "-1" : "0";
  } else {
    return v == Complex(0.0) ? "nan" : fmt_num(std::arg(v));
  }
}

template <FieldScalar S>
std::string csv_row(const TrajectoryRecord<S>& r) {
  auto opt = [](const std::optional<double>& x) { return x ? fmt_num(*x) : std::string("nan"); };
  std::string s = std::to_string(r.step);
  for (const std::string& f : {fmt_num(r.time), fmt_num(r.l_ori), fmt_num(r.l_reg), fmt_num(r.e_delta),
                               fmt_num(r.sig_max), fmt_num(r.sig_min), opt(r.skew_err), opt(r.main_sv_min),
                               det_ind_text<S>(r.det_ind)}) {
    s += ',';
    s += f;
  }
  for (Eigen::Index i = 0; i < r.sigma_w.size(); ++i) s += ',' + fmt_num(r.sigma_w(i));
  for (Eigen::Index i = 0; i < r.half_sum_sv.size(); ++i) s += ',' + fmt_num(r.half_sum_sv(i));
  s += ',' + opt(r.skew_uv);
  return s;
}

inline void write_metadata(std::ostream& os, const RunConfig& cfg, std::string_view kind) {
  os << "# deepfactor " << kind << " v1\n";
  os << "# prng=" << SeededRng::kAlgorithm << " seed=" << cfg.seed << "\n";
  for (const auto& [k, v] : cfg.echo()) os << "# " << k << "=" << v << "\n";
}

template <FieldScalar S>
void write_trajectory_csv(std::ostream& os, const RunConfig& cfg, const Trajectory<S>& t) {
  write_metadata(os, cfg, "trajectory");
  os << "# target_reduced=" << (t.target_reduced ? "true" : "false") << "\n";
  const auto cols = trajectory_columns<S>(cfg.d);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
  for (const auto& r : t.records) os << csv_row(r) << "\n";
}

template <FieldScalar S>
void write_summary(std::ostream& os, const RunConfig& cfg, const Trajectory<S>& t) {
  const TrajectoryRecord<S>& last = t.records.back();
  os << "status=" << to_string(t.status) << "\n";
  os << "steps_run=" << t.steps_run << "\n";
  os << "convergence_step=" << (t.converged_step ? std::to_string(*t.converged_step) : "none") << "\n";
  os << "det0=" << det_ind_text<S>(t.det0) << "\n";
  const auto cols = trajectory_columns<S>(cfg.d);
  std::vector<std::string> vals;
  std::istringstream row(csv_row(last));
  for (std::string v; std::getline(row, v, ',');) vals.push_back(v);
  for (std::size_t i = 0; i < cols.size() && i < vals.size(); ++i) os << "final." << cols[i] << "=" << vals[i] << "\n";
  for (const auto& w : last.warnings) os << "final.warning=" << w << "\n";
  os << "wall_seconds=" << t.wall_seconds << "\n";
  os << "prng=" << SeededRng::kAlgorithm << "\n";
  for (const auto& [k, v] : cfg.echo()) os << "config." << k << "=" << v << "\n";
}

// ---------------------------------------------------------------------------
// Sweeps

struct SeedOutcome {
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::Failed;
  std::string reason;
  int det0_sign = 0;  // real runs only
  long steps_run = 0;
  double final_l_ori = std::numeric_limits<double>::quiet_NaN();
  std::string final_row;
};

struct SweepResult {
  int n_seeds = 0;
  int n_converged = 0;
  double fraction = 0.0;
  std::vector<SeedOutcome> per_seed;
  // sign(det W(0)) cross-tab; real field only.
  int n_det_pos = 0, n_det_pos_converged = 0;
  int n_det_neg = 0, n_det_neg_converged = 0;

  double conditional_fraction(int sign) const {
    const int n = sign > 0 ? n_det_pos : n_det_neg;
    const int c = sign > 0 ? n_det_pos_converged : n_det_neg_converged;
    return n == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(c) / n;
  }
};

// Worker count: hardware threads, capped by LAB_THREADS when set.
inline unsigned lab_threads() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LAB_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return n;
}

template <FieldScalar S>
SeedOutcome run_seed(const RunConfig& cfg) {
  SeedOutcome o;
  o.seed = cfg.seed;
  try {
    const Trajectory<S> t = run_trajectory<S>(cfg, RecordMode::Endpoints);
    o.status = t.status;
    if constexpr (std::same_as<S, double>) o.det0_sign = t.det0 > 0 ? 1 : t.det0 < 0 ? -1 : 0;
    o.steps_run = t.steps_run;
    o.final_l_ori = t.records.back().l_ori;
    o.final_row = csv_row(t.records.back());
    if (t.status == RunStatus::Diverged) o.reason = "layer norm exceeded 1e12";
  } catch (const Error& e) {
    o.status = RunStatus::Failed;
    o.reason = e.what();
  }
  return o;
}

// Seed i runs with base.seed + i; outcomes are stored by index, so the
// result does not depend on the thread count or scheduling.
inline SweepResult sweep_convergence(const RunConfig& base, int n_seeds, unsigned threads = lab_threads()) {
  if (n_seeds < 1) throw Error(Errc::ConfigInvalid, "sweep: n_seeds must be >= 1");
  base.validate();
  SweepResult res;
  res.n_seeds = n_seeds;
  res.per_seed.resize(static_cast<std::size_t>(n_seeds));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_seeds; i = next++) {
      RunConfig c = base;
      c.seed = base.seed + static_cast<std::uint64_t>(i);
      res.per_seed[static_cast<std::size_t>(i)] =
          c.field == FieldTag::Real ? run_seed<double>(c) : run_seed<Complex>(c);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_seeds)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (const auto& o : res.per_seed) {
    const bool conv = o.status == RunStatus::Converged;
    res.n_converged += conv;
    if (o.det0_sign > 0) {
      ++res.n_det_pos;
      res.n_det_pos_converged += conv;
    } else if (o.det0_sign < 0) {
      ++res.n_det_neg;
      res.n_det_neg_converged += conv;
    }
  }
  res.fraction = static_cast<double>(res.n_converged) / n_seeds;
  return res;
}

inline void write_sweep_csv(std::ostream& os, const RunConfig& base, const SweepResult& r) {
  write_metadata(os, base, "sweep");
  os << "# n_seeds=" << r.n_seeds << " n_converged=" << r.n_converged << " fraction=" << fmt_num(r.fraction) << "\n";
  if (base.field == FieldTag::Real) {
    os << "# det_pos=" << r.n_det_pos << " det_pos_converged=" << r.n_det_pos_converged << " det_neg=" << r.n_det_neg
       << " det_neg_converged=" << r.n_det_neg_converged << "\n";
  }
  os << "seed,status,det0_sign,steps_run,final_l_ori,reason\n";
  for (const auto& o : r.per_seed) {
    std::string reason = o.reason;
    std::replace(reason.begin(), reason.end(), ',', ';');
    os << o.seed << ',' << to_string(o.status) << ',' << o.det0_sign << ',' << o.steps_run << ','
       << fmt_num(o.final_l_ori) << ',' << reason << "\n";
  }
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckReport {
  int d = 0;
  int n_layers = 0;
  FieldTag field = FieldTag::Real;
  double a = 0.0;
  double max_rel_err = 0.0;
  std::size_t components = 0;
  bool pass = false;
};

// Central differences of the total loss on every real coordinate (real and
// imaginary parts separately for complex entries). Relative error is
// |fd - an| / max(|fd|, |an|, 1).
template <FieldScalar S>
GradcheckReport gradcheck_stack(const LayerStack<S>& st, const TargetSpec<S>& target, const DynConfig& cfg,
                                double h = 1e-6) {
  const auto grads = gradient(st, target, cfg);
  GradcheckReport rep;
  rep.d = static_cast<int>(st.dim());
  rep.n_layers = static_cast<int>(st.depth());
  rep.field = field_of<S>;
  rep.a = cfg.reg_a;
  LayerStack<S> probe = st;
  auto total = [&] { return loss(probe, target, cfg).total; };
  auto check = [&](double fd, double an) {
    const double err = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    ++rep.components;
  };
  for (std::size_t j = 0; j < st.depth(); ++j) {
    for (Eigen::Index r = 0; r < st.dim(); ++r) {
      for (Eigen::Index c = 0; c < st.dim(); ++c) {
        const S orig = st.layers[j](r, c);
        const int parts = std::same_as<S, double> ? 1 : 2;
        for (int p = 0; p < parts; ++p) {
          S dir = S(1.0);
          if constexpr (!std::same_as<S, double>) dir = p == 0 ? Complex(1.0, 0.0) : Complex(0.0, 1.0);
          probe.layers[j](r, c) = orig + h * dir;
          const double up = total();
          probe.layers[j](r, c) = orig - h * dir;
          const double dn = total();
          probe.layers[j](r, c) = orig;
          const double an = p == 0 ? std::real(grads[j](r, c)) : std::imag(grads[j](r, c));
          check((up - dn) / (2.0 * h), an);
        }
      }
    }
  }
  rep.pass = rep.max_rel_err < 1e-6;
  return rep;
}

inline constexpr std::uint64_t kStreamGradTarget = 1;

// Random layers (entries of size ~0.5) against a random general target.
inline GradcheckReport gradcheck(int d, int n_layers, FieldTag field, double a, std::uint64_t seed) {
  if (d < 1 || d > 6) throw Error(Errc::ConfigInvalid, "gradcheck: d must be in [1, 6]");
  if (n_layers < 2) throw Error(Errc::ConfigInvalid, "gradcheck: n_layers must be >= 2");
  DynConfig cfg;
  cfg.reg_a = a;
  cfg.validate();
  const SeededRng rng(seed);
  const InitScheme scheme{InitKind::RandomGaussian, 0.5, {}};
  auto go = [&]<FieldScalar S>() {
    const LayerStack<S> st = random_init<S>(d, static_cast<std::size_t>(n_layers), scheme, rng);
    SeededRng ts = rng.split(kStreamGradTarget);
    return gradcheck_stack<S>(st, TargetSpec<S>::from(gaussian_matrix<S>(d, ts)), cfg);
  };
  return field == FieldTag::Real ? go.template operator()<double>() : go.template operator()<Complex>();
}

// ---------------------------------------------------------------------------
// RMT report

inline void write_rmt_report(std::ostream& os, const std::vector<ValidationResult>& results, std::uint64_t seed) {
  os << "# deepfactor rmt-report v1\n";
  os << "# prng=" << SeededRng::kAlgorithm << " seed=" << seed << "\n";
  os << "name,statistic,relation,threshold,verdict\n";
  for (const auto& r : results) {
    os << r.name << ',' << fmt_num(r.statistic) << ',' << r.relation << ',' << fmt_num(r.threshold) << ','
       << (r.pass ? "pass" : "fail") << "\n";
  }
}

// ---------------------------------------------------------------------------
// Plot scripts
//
// "deepfactor plot script v1" is line oriented:
//   data <csv path>             trajectory CSV the series read from
//   x <column>                  shared x column
//   figure <id>                 starts a figure, closed by "end"
//   title <text>
//   yscale log|linear
//   yfloor <value>              values below are drawn at the floor (log axes)
//   series <column> [group=<k>] [style=solid|dashed]
// Only columns named in the CSV header are ever referenced.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) out.push_back(detail::trim(cell));
    if (!l.empty() && l.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw Error(Errc::MalformedCSV, "row has " + std::to_string(row.size()) + " cells, header has " +
                                          std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw Error(Errc::MalformedCSV, "no header row");
  return t;
}

inline constexpr double kPlotFloor = 1e-16;

inline std::string emit_plots(const std::string& csv_text, const std::string& csv_path) {
  const CsvTable t = parse_csv(csv_text);
  if (t.rows.empty()) throw Error(Errc::MalformedCSV, "trajectory has no data rows");
  for (const char* need : {"step", "sig_max", "sig_min"}) {
    if (!t.column(need)) throw Error(Errc::MalformedCSV, std::string("missing column ") + need);
  }
  std::ostringstream os;
  os << "# deepfactor plot script v1\n";
  os << "data " << csv_path << "\n";
  os << "x step\n";

  std::vector<std::pair<std::string, std::string>> pairs;
  for (int i = 0;; ++i) {
    const std::string sw = "sigma_w_" + std::to_string(i);
    if (!t.column(sw)) break;
    const std::string hs = "half_sum_sv_" + std::to_string(i);
    pairs.emplace_back(sw, t.column(hs) ? hs : std::string());
  }
  if (!pairs.empty()) {
    os << "figure singular_values\n";
    os << "title Singular values of the product and of its half-sum term (log scale)\n";
    os << "yscale log\nyfloor " << fmt_num(kPlotFloor) << "\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      os << "series " << pairs[i].first << " group=" << i << " style=solid\n";
      if (!pairs[i].second.empty()) os << "series " << pairs[i].second << " group=" << i << " style=dashed\n";
    }
    os << "end\n";
  }
  os << "figure layer_extremes\n";
  os << "title Largest and smallest layer singular values (log scale)\n";
  os << "yscale log\nyfloor " << fmt_num(kPlotFloor) << "\n";
  os << "series sig_max\nseries sig_min\nend\n";
  if (t.column("main_sv_min")) {
    os << "figure main_term\n";
    os << "title Smallest singular value of the main term (log scale)\n";
    os << "yscale log\nyfloor " << fmt_num(kPlotFloor) << "\n";
    os << "series main_sv_min\nend\n";
  }
  return os.str();
}

}  // namespace dmf
