#include "lambshift/outputs.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "lambshift/config_io.hpp"
#include "lambshift/error.hpp"
#include "lambshift/random.hpp"

#ifndef LAMBSHIFT_VERSION
#define LAMBSHIFT_VERSION "0.0.0"
#endif

namespace lambshift {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view version() { return LAMBSHIFT_VERSION; }

std::string format_double(double v) { return fmt::format("{}", v); }

namespace {

constexpr const char* kIncompleteMarker = "INCOMPLETE";

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::ofstream open_csv(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string angle_label(double theta) { return fmt::format("i_total_theta_{}[arb]", format_double(theta)); }

std::string csv_escape(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

}  // namespace

OutputDirectory::OutputDirectory(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  std::ofstream marker(dir_ / kIncompleteMarker);
  if (!marker) throw std::runtime_error("output directory " + dir_.string() + " is not writable");
  marker << "output still being written; files in this directory are partial\n";
}

void OutputDirectory::commit() { fs::remove(dir_ / kIncompleteMarker); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_spectrum_csv(const EnsembleResult& r, const fs::path& path) {
  auto out = open_csv(path);
  const SpectrumCurve& f = r.forward;
  const auto zero = f.index_of(0.0);
  const double ref = zero ? f.i_total[*zero] : 0.0;
  out << "delta[gamma0],i_total[arb],i_coherent[arb],i_incoherent[arb],excitation[arb],"
         "i_total_sem[arb],i_total_norm[1]";
  for (const auto& c : r.angle_curves) out << ',' << angle_label(c.detection_angle);
  out << '\n';
  for (std::size_t i = 0; i < f.size(); ++i) {
    out << format_double(f.detunings[i]) << ',' << format_double(f.i_total[i]) << ','
        << format_double(f.i_coherent[i]) << ',' << format_double(f.i_incoherent[i]) << ','
        << format_double(f.excitation[i]) << ',' << format_double(r.i_total_sem[i]) << ','
        << (ref > 0.0 ? format_double(f.i_total[i] / ref) : std::string());
    for (const auto& c : r.angle_curves) out << ',' << format_double(c.i_total[i]);
    out << '\n';
  }
}

void write_dos_csv(const EnergyHistogram& h, const fs::path& path) {
  auto out = open_csv(path);
  out << "eps_lo[gamma0],eps_hi[gamma0],eps_center[gamma0],count[states],density[1/gamma0]\n";
  for (int b = 0; b < h.edges.bin_count(); ++b) {
    out << format_double(h.edges.lower(b)) << ',' << format_double(h.edges.upper(b)) << ','
        << format_double(h.edges.center(b)) << ',' << h.counts[b] << ',' << format_double(h.density[b]) << '\n';
  }
}

void write_capability_csv(const EnsembleResult& r, const fs::path& path) {
  auto out = open_csv(path);
  out << "eps_lo[gamma0],eps_hi[gamma0],eps_center[gamma0],states[count],mean_capability[1]\n";
  if (!r.dos) return;
  const BinEdges& e = r.layout.energy_edges;
  for (int b = 0; b < e.bin_count(); ++b) {
    out << format_double(e.lower(b)) << ',' << format_double(e.upper(b)) << ',' << format_double(e.center(b))
        << ',' << r.dos->counts[b] << ',' << opt(r.capability_vs_energy[b]) << '\n';
  }
}

void write_fourier_map_csv(const FourierMap& map, const fs::path& path) {
  auto out = open_csv(path);
  out << "eps_center[gamma0],kf[k0],mean_abs_F[1]\n";
  for (int b = 0; b < map.edges.bin_count(); ++b) {
    const auto& row = map.rows[b];
    if (row.empty()) continue;
    for (std::size_t k = 0; k < row.size(); ++k) {
      out << format_double(map.edges.center(b)) << ',' << format_double(map.kf_grid[k]) << ','
          << format_double(row[k]) << '\n';
    }
  }
}

void write_spatial_order_csv(const FourierMap& map, double contrast_threshold, const fs::path& path) {
  auto out = open_csv(path);
  out << "eps_center[gamma0],kf_max[k0],contrast[1],ordered[bool]\n";
  const auto order = max_spatial_frequency(map, contrast_threshold);
  for (int b = 0; b < map.edges.bin_count(); ++b) {
    if (!order[b].kf_max) continue;
    out << format_double(map.edges.center(b)) << ',' << format_double(*order[b].kf_max) << ','
        << format_double(order[b].contrast) << ',' << (order[b].ordered ? 1 : 0) << '\n';
  }
}

void write_excitation_csv(const EnsembleResult& r, const fs::path& path) {
  auto out = open_csv(path);
  out << "delta[gamma0],eps_center[gamma0],mean_population[arb],population_per_config[arb]\n";
  const BinEdges& e = r.layout.energy_edges;
  for (const auto& h : r.excitation) {
    for (int b = 0; b < e.bin_count(); ++b) {
      out << format_double(h.detuning) << ',' << format_double(e.center(b)) << ',' << opt(h.mean_population[b])
          << ',' << format_double(h.population_per_config[b]) << '\n';
    }
  }
}

void write_peaks_csv(const EnsembleResult& r, const fs::path& path) {
  auto out = open_csv(path);
  out << "theta[rad],class,position[gamma0],height[arb],prominence[arb],note\n";
  std::vector<const SpectrumCurve*> curves{&r.forward};
  for (const auto& c : r.angle_curves) {
    if (c.detection_angle != 0.0) curves.push_back(&c);
  }
  for (const SpectrumCurve* c : curves) {
    const std::string theta = format_double(c->detection_angle);
    try {
      const PeakReport report = find_peaks(*c, r.config.peaks);
      const std::pair<const char*, const std::optional<Peak>*> rows[] = {
          {"left", &report.left}, {"central", &report.central}, {"right", &report.right}};
      for (const auto& [name, peak] : rows) {
        out << theta << ',' << name << ',';
        if (*peak) {
          out << format_double((*peak)->position) << ',' << format_double((*peak)->height) << ','
              << format_double((*peak)->prominence) << ",\n";
        } else {
          out << ",,,absent\n";
        }
      }
    } catch (const AnalysisError& e) {
      out << theta << ",none,,,," << csv_escape(e.what()) << '\n';
    }
  }
}

void write_scaling_csv(const ScalingTable& table, const fs::path& path) {
  auto out = open_csv(path);
  out << "mode,point,od[1],shift_left[gamma0],shift_central[gamma0],n_atoms,sigma_x[1/k],sigma_y[1/k],"
         "sigma_z[1/k],rho0[k^3],error\n";
  for (const auto& row : table.rows) {
    out << to_string(row.mode) << ',' << format_double(row.point) << ',' << format_double(row.od) << ','
        << opt(row.shift_left) << ',' << opt(row.shift_central) << ',' << row.atom_count << ','
        << format_double(row.sigma_x) << ',' << format_double(row.sigma_y) << ',' << format_double(row.sigma_z)
        << ',' << format_double(row.peak_density) << ',' << csv_escape(row.error) << '\n';
  }
}

void write_positions_csv(const AtomCloud& cloud, const fs::path& path) {
  auto out = open_csv(path);
  out << "index,x[1/k],y[1/k],z[1/k]\n";
  for (int i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    out << i << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z()) << '\n';
  }
}

void write_metadata(const RunConfig& config, const RunMetadata& meta, const EnsembleResult* result,
                    const ScalingTable* scaling, const fs::path& path) {
  ordered_json j;
  j["program"] = "lambshift";
  j["version"] = std::string(version());
  j["verb"] = meta.verb;
  j["config_path"] = meta.config_path;
  j["command_line"] = meta.command_line;
  j["started_at"] = meta.started_at;
  j["wall_seconds"] = meta.wall_seconds;
  j["master_seed"] = config.ensemble.master_seed;
  j["rng"] = std::string(kRngAlgorithm);
  j["atom_count"] = config.geometry.resolve().atom_count;
  j["config"] = ordered_json::parse(config_to_text(config));
  if (result) {
    ordered_json r;
    r["configs_completed"] = result->completed;
    r["fallback_count"] = result->fallback_count;
    r["max_validation_error"] = result->max_validation_error;
    ordered_json failures = ordered_json::array();
    for (const auto& f : result->failures) {
      failures.push_back({{"index", f.index}, {"seed", derive_seed(config.ensemble.master_seed, f.index)},
                          {"message", f.message}});
    }
    r["failures"] = failures;
    if (result->invariants) {
      const InvariantReport& v = *result->invariants;
      r["invariants"] = ordered_json{{"matrix_asymmetry", v.matrix_asymmetry},
                                     {"trace_m_real", v.trace_m_real},
                                     {"imag_diagonal_error", v.imag_diagonal_error},
                                     {"orthonormality", v.orthonormality},
                                     {"eigen_residual", v.eigen_residual},
                                     {"energy_sum", v.energy_sum},
                                     {"parseval", v.parseval},
                                     {"reconstruction", v.reconstruction},
                                     {"split_identity", v.split_identity},
                                     {"solver_residual", v.solver_residual},
                                     {"backend_agreement", v.backend_agreement}};
    }
    j["result"] = r;
  }
  if (scaling) {
    ordered_json rows = ordered_json::array();
    for (const auto& row : scaling->rows) {
      if (!row.ok()) rows.push_back({{"point", row.point}, {"error", row.error}});
    }
    j["scaling_failures"] = rows;
  }
  j["notes"] = meta.notes;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_run_outputs(const EnsembleResult& r, const RunMetadata& meta, const fs::path& dir) {
  OutputDirectory out(dir);
  write_spectrum_csv(r, out.file("spectrum.csv"));
  if (r.dos) write_dos_csv(*r.dos, out.file("dos.csv"));
  if (r.dos_fine) write_dos_csv(*r.dos_fine, out.file("dos_fine.csv"));
  if (r.dos) write_capability_csv(r, out.file("capability_vs_energy.csv"));
  if (r.fourier_map) {
    write_fourier_map_csv(*r.fourier_map, out.file("fourier_map.csv"));
    write_spatial_order_csv(*r.fourier_map, r.config.binning.order_contrast, out.file("spatial_order.csv"));
  }
  if (!r.excitation.empty()) write_excitation_csv(r, out.file("excitation_hist.csv"));
  write_peaks_csv(r, out.file("peaks.csv"));
  write_metadata(r.config, meta, &r, nullptr, out.file("run_metadata.json"));
  out.commit();
}

}  // namespace lambshift
