// lambshift: ensemble spectra of randomly placed two-level atoms.
//
//   lambshift run      --config cylinder.json --out out/cyl
//   lambshift scaling  --config scaling_density.json --out out/scaling
//   lambshift angles   --config sphere_angles.json --out out/angles
//   lambshift validate [--config small.json]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure budget
// exceeded (or invariant violations in `validate`), 1 anything else.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <numbers>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lambshift/analysis.hpp"
#include "lambshift/config_io.hpp"
#include "lambshift/ensemble.hpp"
#include "lambshift/error.hpp"
#include "lambshift/outputs.hpp"
#include "lambshift/random.hpp"

namespace fs = std::filesystem;
using namespace lambshift;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> configs;
  std::string checkpoint;
  bool quiet = false;
};

void add_common(CLI::App* app, CommonArgs& args, bool config_required) {
  auto* c = app->add_option("--config", args.config_path, "Run configuration (JSON, comments allowed)");
  if (config_required) c->required();
  app->add_option("--out", args.out_dir, "Output directory");
  app->add_option("--workers", args.workers, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app->add_option("--seed", args.seed, "Master seed (overrides the config)");
  app->add_option("--configs", args.configs, "Number of configurations (overrides the config)")
      ->check(CLI::PositiveNumber);
  app->add_option("--checkpoint", args.checkpoint, "Checkpoint file to resume from / write to");
  app->add_flag("--quiet", args.quiet, "No progress on stderr");
}

RunConfig load_with_overrides(const CommonArgs& args) {
  RunConfig c = load_config(args.config_path);
  if (args.seed) c.ensemble.master_seed = *args.seed;
  if (args.configs) c.ensemble.n_configs = *args.configs;
  if (args.workers > 0) c.ensemble.workers = args.workers;
  c.validate();
  return c;
}

EnsembleOptions ensemble_options(const CommonArgs& args, const fs::path& checkpoint = {}) {
  EnsembleOptions o;
  o.progress = !args.quiet;
  if (!checkpoint.empty()) o.checkpoint = checkpoint;
  return o;
}

RunMetadata start_metadata(const std::string& verb, const CommonArgs& args, int argc, char** argv) {
  RunMetadata m;
  m.verb = verb;
  m.config_path = args.config_path;
  m.command_line.assign(argv, argv + argc);
  m.started_at = utc_timestamp();
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path require_out(const CommonArgs& args) {
  if (args.out_dir.empty()) throw ConfigError("--out", "an output directory is required");
  return args.out_dir;
}

void print_peaks(const SpectrumCurve& curve, const PeakSettings& settings) {
  try {
    const PeakReport p = find_peaks(curve, settings);
    auto show = [](const char* name, const std::optional<Peak>& peak) {
      if (peak) {
        fmt::print("  {:<8} {:+8.3f} gamma0  (prominence {:.3g})\n", name, peak->position, peak->prominence);
      } else {
        fmt::print("  {:<8} absent\n", name);
      }
    };
    fmt::print("peaks at theta = {:.4g} rad:\n", curve.detection_angle);
    show("left", p.left);
    show("central", p.central);
    show("right", p.right);
  } catch (const AnalysisError& e) {
    fmt::print("peaks at theta = {:.4g} rad: {}\n", curve.detection_angle, e.what());
  }
}

int cmd_run(const CommonArgs& args, std::optional<int> dump_positions, int argc, char** argv) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetadata meta = start_metadata("run", args, argc, argv);
  const RunConfig config = load_with_overrides(args);
  const fs::path out = require_out(args);
  if (dump_positions) {
    if (*dump_positions < 0 || *dump_positions >= config.ensemble.n_configs) {
      throw ConfigError("--dump-positions", "index outside [0, n_configs)");
    }
    fs::create_directories(out);
    const auto seed = derive_seed(config.ensemble.master_seed, static_cast<std::uint64_t>(*dump_positions));
    write_positions_csv(sample_positions(config.geometry.resolve(), seed),
                        out / fmt::format("positions_{}.csv", *dump_positions));
  }
  const EnsembleResult result = run_ensemble(config, ensemble_options(args, args.checkpoint));
  meta.wall_seconds = seconds_since(t0);
  write_run_outputs(result, meta, out);
  print_peaks(result.forward, config.peaks);
  fmt::print("{} configurations, {} failed, {} spectral fallbacks; wrote {}\n", result.completed,
             result.failures.size(), result.fallback_count, out.string());
  return 0;
}

int cmd_scaling(const CommonArgs& args, int argc, char** argv) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetadata meta = start_metadata("scaling", args, argc, argv);
  const RunConfig config = load_with_overrides(args);
  if (!config.scaling) throw ConfigError("scaling", "the scaling verb needs a scaling section");
  const fs::path out = require_out(args);
  OutputDirectory dir(out);
  int point_index = 0;
  const ScalingTable table = scaling_sweep(config, [&](const RunConfig& c) {
    const fs::path sub = out / fmt::format("point_{}", point_index++);
    fs::path checkpoint;
    if (!args.checkpoint.empty()) checkpoint = sub.string() + ".checkpoint.json";
    const auto t_point = std::chrono::steady_clock::now();
    EnsembleResult r = run_ensemble(c, ensemble_options(args, checkpoint));
    RunMetadata m = meta;
    m.verb = "scaling-point";
    m.wall_seconds = seconds_since(t_point);
    write_run_outputs(r, m, sub);
    return r;
  });
  write_scaling_csv(table, dir.file("scaling.csv"));

  std::vector<double> od, left, central;
  for (const auto& row : table.rows) {
    fmt::print("{:<24} point {:<8.4g} OD {:8.3f}  N {:5d}  left {:>9}  central {:>9}{}\n", to_string(row.mode),
               row.point, row.od, row.atom_count,
               row.shift_left ? fmt::format("{:+.3f}", *row.shift_left) : "absent",
               row.shift_central ? fmt::format("{:+.3f}", *row.shift_central) : "absent",
               row.ok() ? "" : "  FAILED: " + row.error);
    if (row.shift_left && row.shift_central) {
      od.push_back(row.od);
      left.push_back(*row.shift_left);
      central.push_back(*row.shift_central);
    }
  }
  if (od.size() >= 2) {
    const LinearFit fl = linear_fit(od, left);
    const LinearFit fc = linear_fit(od, central);
    const std::string sl = fmt::format("shift_left = {:.6g} * OD + {:.6g}  (R^2 = {:.4f}, slope stderr {:.3g})",
                                       fl.slope, fl.intercept, fl.r_squared, fl.slope_stderr);
    const std::string sc = fmt::format("shift_central = {:.6g} * OD + {:.6g}  (R^2 = {:.4f}, slope stderr {:.3g})",
                                       fc.slope, fc.intercept, fc.r_squared, fc.slope_stderr);
    fmt::print("{}\n{}\n", sl, sc);
    meta.notes = {sl, sc};
  }
  meta.wall_seconds = seconds_since(t0);
  write_metadata(config, meta, nullptr, &table, dir.file("run_metadata.json"));
  dir.commit();
  return 0;
}

int cmd_angles(const CommonArgs& args, std::vector<double> angles, int argc, char** argv) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetadata meta = start_metadata("angles", args, argc, argv);
  const RunConfig config = load_with_overrides(args);
  if (angles.empty()) angles = config.analysis.angles;
  if (angles.empty()) angles = {0.0, std::numbers::pi / 15.0};
  const fs::path out = require_out(args);
  const EnsembleResult result = angular_sweep(config, angles, [&](const RunConfig& c) {
    return run_ensemble(c, ensemble_options(args, args.checkpoint));
  });
  meta.wall_seconds = seconds_since(t0);
  write_run_outputs(result, meta, out);
  const auto zero = result.forward.index_of(0.0);
  const double ref = zero ? result.forward.i_total[*zero] : 0.0;
  for (const auto& curve : result.angle_curves) {
    if (ref > 0.0) {
      fmt::print("theta = {:.4g} rad: I(Delta=0) / I_forward(Delta=0) = {:.4f}\n", curve.detection_angle,
                 curve.i_total[*zero] / ref);
    }
    print_peaks(curve, config.peaks);
  }
  return 0;
}

RunConfig default_validation_config() {
  RunConfig c;
  c.geometry.kind = GeometryInput::Kind::cylinder;
  c.geometry.unit = LengthUnit::lambda0;
  c.geometry.radius = 1.0;
  c.geometry.length = 3.0;
  c.geometry.atom_count = 50;
  c.ensemble.n_configs = 20;
  c.analysis.check_invariants = true;
  return c;
}

int cmd_validate(const CommonArgs& args, int argc, char** argv) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetadata meta = start_metadata("validate", args, argc, argv);
  RunConfig config = args.config_path.empty() ? default_validation_config() : load_config(args.config_path);
  if (args.seed) config.ensemble.master_seed = *args.seed;
  if (args.configs) config.ensemble.n_configs = *args.configs;
  if (args.workers > 0) config.ensemble.workers = args.workers;
  config.analysis.check_invariants = true;
  config.validate();
  const EnsembleResult result = run_ensemble(config, ensemble_options(args));
  const InvariantReport report = result.invariants.value_or(InvariantReport{});
  const InvariantLimits limits;
  const std::pair<const char*, std::pair<double, double>> rows[] = {
      {"matrix asymmetry", {report.matrix_asymmetry, limits.symmetry}},
      {"|trace M_R|", {report.trace_m_real, limits.trace}},
      {"diag M_I + 1/2", {report.imag_diagonal_error, limits.imag_diagonal}},
      {"R^T R - I", {report.orthonormality, limits.orthonormality}},
      {"eigen residual", {report.eigen_residual, limits.eigen_residual}},
      {"sum of energies", {report.energy_sum, limits.energy_sum}},
      {"Parseval", {report.parseval, limits.parseval}},
      {"reconstruction", {report.reconstruction, limits.reconstruction}},
      {"split identity", {report.split_identity, limits.split_identity}},
      {"solver residual", {report.solver_residual, limits.solver_residual}},
      {"spectral vs direct", {report.backend_agreement, limits.backend_agreement}},
  };
  fmt::print("invariant suite: N = {}, {} configurations\n", config.geometry.resolve().atom_count, result.completed);
  for (const auto& [name, v] : rows) {
    fmt::print("  {:<20} {:10.3e}  (limit {:.0e})  {}\n", name, v.first, v.second, v.first <= v.second ? "ok" : "FAIL");
  }
  const auto violations = invariant_violations(report, limits);
  meta.wall_seconds = seconds_since(t0);
  meta.notes = violations;
  if (!args.out_dir.empty()) write_run_outputs(result, meta, args.out_dir);
  if (!violations.empty() || !result.failures.empty()) {
    fmt::print("validation FAILED ({} violations, {} failed configurations)\n", violations.size(),
               result.failures.size());
    return kExitNumerical;
  }
  fmt::print("validation passed in {:.1f} s\n", meta.wall_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collective Lamb shift spectra of random atomic clouds (coupled-dipole model)"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version()));

  CommonArgs run_args, scaling_args, angles_args, validate_args;
  std::optional<int> dump_positions;
  std::vector<double> angles;

  auto* run = app.add_subcommand("run", "One ensemble run from a config file");
  add_common(run, run_args, true);
  run->add_option("--dump-positions", dump_positions, "Also write the positions of this configuration index");

  auto* scaling = app.add_subcommand("scaling", "Collective shift versus optical depth");
  add_common(scaling, scaling_args, true);

  auto* ang = app.add_subcommand("angles", "Spectra at several detection angles");
  add_common(ang, angles_args, true);
  ang->add_option("--angles", angles, "Detection angles in radians (default: config, else 0 and pi/15)");

  auto* validate = app.add_subcommand("validate", "Invariant suite on a small system");
  add_common(validate, validate_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_args, dump_positions, argc, argv);
    if (*scaling) return cmd_scaling(scaling_args, argc, argv);
    if (*ang) return cmd_angles(angles_args, angles, argc, argv);
    if (*validate) return cmd_validate(validate_args, argc, argv);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "configuration error: {}\n", e.what());
    return kExitConfig;
  } catch (const FailureBudgetExceeded& e) {
    fmt::print(stderr, "aborted: {}\n", e.what());
    for (const auto& f : e.failures()) fmt::print(stderr, "  configuration {}: {}\n", f.index, f.message);
    return kExitNumerical;
  } catch (const NumericalError& e) {
    fmt::print(stderr, "numerical error: {}\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
