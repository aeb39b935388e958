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

// deepfactor_lab: command-line front end. Exit codes: 0 ok, 1 config or
// input error, 2 a run diverged, 3 a validation check failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "deepfactor/lab.hpp"

namespace fs = std::filesystem;
using namespace dmf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitValidation = 3;

struct CommonFlags {
  std::string config_path;
  std::string preset;
  std::string field;
  std::string det;
  std::vector<std::string> set;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "out";
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ConfigInvalid, "cannot write " + path.string());
  out << text;
}

RunConfig base_config(const CommonFlags& f, const std::string& default_preset = {}) {
  std::vector<std::pair<std::string, std::string>> settings;
  if (!f.config_path.empty()) settings = parse_settings(slurp(f.config_path));
  for (const auto& s : f.set) {
    for (auto& kv : parse_settings(s)) settings.push_back(std::move(kv));
  }
  std::string preset = f.preset;
  const bool file_has_preset =
      std::any_of(settings.begin(), settings.end(), [](const auto& kv) { return kv.first == "preset"; });
  if (preset.empty() && !file_has_preset) preset = default_preset;
  RunConfig c = build_config(preset, settings);
  if (!f.field.empty()) c.field = parse_field(f.field);
  if (!f.det.empty()) c.det = parse_det(f.det);
  if (f.seed_given) c.seed = f.seed;
  if (c.field == FieldTag::Complex && f.det.empty()) c.det = 0;
  return c;
}

void add_common(CLI::App* sub, CommonFlags& f, bool with_det) {
  sub->add_option("--config", f.config_path, "key = value configuration file");
  sub->add_option("--preset", f.preset, "named preset")
      ->check(CLI::IsMember(preset_names()));
  sub->add_option("--field", f.field, "real or complex")->check(CLI::IsMember({"real", "complex"}));
  if (with_det) sub->add_option("--det", f.det, "sign of det(U^T V) for real balanced init")->check(CLI::IsMember({"plus", "minus"}));
  sub->add_option("--set", f.set, "extra key=value setting (repeatable)");
  sub->add_option_function<std::uint64_t>("--seed", [&f](const std::uint64_t& s) {
    f.seed = s;
    f.seed_given = true;
  }, "PRNG seed");
  sub->add_option("--out", f.out, "output directory");
}

std::string stem_for(const RunConfig& c) {
  std::string s = c.preset.empty() ? "run" : c.preset;
  s += "_" + std::string(to_string(c.field));
  if (c.det == 1) s += "_det-plus";
  if (c.det == -1) s += "_det-minus";
  return s;
}

template <FieldScalar S>
int run_one(const RunConfig& c, const fs::path& out) {
  const Trajectory<S> t = run_trajectory<S>(c);
  const std::string stem = stem_for(c);
  std::ostringstream csv, summary;
  write_trajectory_csv(csv, c, t);
  write_summary(summary, c, t);
  spill(out / (stem + ".csv"), csv.str());
  spill(out / (stem + "_summary.txt"), summary.str());
  spill(out / (stem + ".plot"), emit_plots(csv.str(), stem + ".csv"));
  const auto& last = t.records.back();
  std::printf("%-34s %-16s steps=%ld l_ori=%s half_sum_min=%s wall=%.2fs\n", stem.c_str(),
              std::string(to_string(t.status)).c_str(), t.steps_run, fmt_num(last.l_ori).c_str(),
              fmt_num(last.half_sum_sv(last.half_sum_sv.size() - 1)).c_str(), t.wall_seconds);
  return t.status == RunStatus::Diverged ? kExitDiverged : kExitOk;
}

int cmd_run(const CommonFlags& f) {
  const RunConfig base = base_config(f);
  std::vector<RunConfig> variants;
  const bool figure = base.preset == "fig-h1" || base.preset == "fig-h2";
  if (figure && f.field.empty() && f.det.empty()) {
    for (int det : {1, -1}) {
      RunConfig c = base;
      c.field = FieldTag::Real;
      c.det = det;
      variants.push_back(c);
    }
    RunConfig c = base;
    c.field = FieldTag::Complex;
    c.det = 0;
    variants.push_back(c);
  } else {
    variants.push_back(base);
  }
  fs::create_directories(f.out);
  int rc = kExitOk;
  for (const auto& c : variants) {
    c.validate();
    const int r = c.field == FieldTag::Real ? run_one<double>(c, f.out) : run_one<Complex>(c, f.out);
    rc = std::max(rc, r);
  }
  return rc;
}

int cmd_sweep(const CommonFlags& f, int n_seeds) {
  const RunConfig base = base_config(f, "sweep-random");
  std::vector<FieldTag> fields;
  if (f.field.empty()) fields = {FieldTag::Real, FieldTag::Complex};
  else fields = {base.field};
  fs::create_directories(f.out);
  const unsigned threads = lab_threads();
  for (FieldTag field : fields) {
    RunConfig c = base;
    c.field = field;
    const int n = n_seeds > 0 ? n_seeds : (field == FieldTag::Real ? 400 : 200);
    const auto t0 = std::chrono::steady_clock::now();
    const SweepResult r = sweep_convergence(c, n, threads);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream csv;
    write_sweep_csv(csv, c, r);
    spill(fs::path(f.out) / ("sweep_" + std::string(to_string(field)) + ".csv"), csv.str());
    std::printf("sweep %-7s seeds=%d converged=%d fraction=%.4f", std::string(to_string(field)).c_str(), r.n_seeds,
                r.n_converged, r.fraction);
    if (field == FieldTag::Real) {
      std::printf(" | det>0: %d/%d (%.4f) det<0: %d/%d", r.n_det_pos_converged, r.n_det_pos,
                  r.conditional_fraction(1), r.n_det_neg_converged, r.n_det_neg);
    }
    std::printf(" | threads=%u wall=%.1fs\n", threads, wall);
  }
  return kExitOk;
}

int cmd_rmt(const CommonFlags& f, int d, int samples) {
  RmtOptions opt;
  if (d > 0) opt.d_cue = opt.d_products = opt.d_quantile = d;
  if (samples > 0) {
    opt.n_cue = opt.n_cre = opt.n_products = opt.n_quantile = samples;
    opt.n_zero_mode = opt.n_invariance = opt.n_real_det = samples;
  }
  const std::uint64_t seed = f.seed_given ? f.seed : 1;
  const auto results = rmt_validate(opt, SeededRng(seed));
  fs::create_directories(f.out);
  std::ostringstream report;
  write_rmt_report(report, results, seed);
  spill(fs::path(f.out) / "rmt_report.csv", report.str());
  bool ok = true;
  for (const auto& r : results) {
    std::printf("%-40s %s  statistic=%s %s %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                fmt_num(r.statistic).c_str(), r.relation.c_str(), fmt_num(r.threshold).c_str());
    if (!r.csv.empty()) spill(fs::path(f.out) / (r.name + "_histogram.csv"), r.csv);
    ok = ok && r.pass;
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_gradcheck(const CommonFlags& f, int d, int layers, std::vector<double> as) {
  std::vector<FieldTag> fields;
  if (f.field.empty()) fields = {FieldTag::Real, FieldTag::Complex};
  else fields = {parse_field(f.field)};
  if (as.empty()) as = {0.0, 1.0, 10.0};
  const std::uint64_t seed = f.seed_given ? f.seed : 1;
  bool ok = true;
  for (FieldTag field : fields) {
    for (double a : as) {
      const GradcheckReport r = gradcheck(d, layers, field, a, seed);
      std::printf("gradcheck d=%d N=%d %-7s a=%-5s components=%zu max_rel_err=%.3e %s\n", r.d, r.n_layers,
                  std::string(to_string(field)).c_str(), fmt_num(a).c_str(), r.components, r.max_rel_err,
                  r.pass ? "PASS" : "FAIL");
      ok = ok && r.pass;
    }
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_plots(const std::string& csv_path, std::string script_path) {
  if (script_path.empty()) script_path = csv_path + ".plot";
  const std::string rel = fs::path(csv_path).filename().string();
  spill(script_path, emit_plots(slurp(csv_path), rel));
  std::printf("wrote %s\n", script_path.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deepfactor_lab: deep matrix factorization dynamics experiments"};
  app.require_subcommand(1);

  CommonFlags run_f, sweep_f, rmt_f, grad_f;

  auto* run = app.add_subcommand("run", "run one scenario and write CSV, summary and plot script");
  add_common(run, run_f, true);

  auto* sweep = app.add_subcommand("sweep", "convergence fraction over seeds");
  add_common(sweep, sweep_f, false);
  int n_seeds = 0;
  sweep->add_option("--seeds", n_seeds, "number of seeds (default 400 real, 200 complex)")->check(CLI::PositiveNumber);

  auto* rmt_cmd = app.add_subcommand("rmt-validate", "Monte-Carlo checks of the initialisation statistics");
  rmt_cmd->add_option_function<std::uint64_t>("--seed", [&rmt_f](const std::uint64_t& s) {
    rmt_f.seed = s;
    rmt_f.seed_given = true;
  }, "PRNG seed");
  rmt_cmd->add_option("--out", rmt_f.out, "output directory");
  int rmt_d = 0, rmt_samples = 0;
  rmt_cmd->add_option("--d", rmt_d, "dimension for the CUE, product and quantile checks");
  rmt_cmd->add_option("--samples", rmt_samples, "sample count for every check")->check(CLI::Range(100, 100000000));

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the analytic gradient");
  grad->add_option("--field", grad_f.field, "real or complex (default both)")->check(CLI::IsMember({"real", "complex"}));
  grad->add_option_function<std::uint64_t>("--seed", [&grad_f](const std::uint64_t& s) {
    grad_f.seed = s;
    grad_f.seed_given = true;
  }, "PRNG seed");
  int grad_d = 4, grad_layers = 4;
  std::vector<double> grad_a;
  grad->add_option("--d", grad_d, "dimension (<= 6)");
  grad->add_option("--layers", grad_layers, "number of layers");
  grad->add_option("--a", grad_a, "regularisation strengths (default 0 1 10)");

  auto* plots = app.add_subcommand("plots", "write a plot script for a trajectory CSV");
  std::string plot_csv, plot_out;
  plots->add_option("csv", plot_csv, "trajectory CSV")->required();
  plots->add_option("--out", plot_out, "script path (default <csv>.plot)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_f);
    if (*sweep) return cmd_sweep(sweep_f, n_seeds);
    if (*rmt_cmd) return cmd_rmt(rmt_f, rmt_d, rmt_samples);
    if (*grad) return cmd_gradcheck(grad_f, grad_d, grad_layers, grad_a);
    if (*plots) return cmd_plots(plot_csv, plot_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == Errc::Diverged ? kExitDiverged : kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
