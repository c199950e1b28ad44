#include "lambshift/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <json.hpp>

#include "lambshift/config_io.hpp"
#include "lambshift/error.hpp"
#include "lambshift/linalg.hpp"
#include "lambshift/random.hpp"

namespace lambshift {

using nlohmann::json;

void InvariantReport::absorb(const InvariantReport& o) {
  matrix_asymmetry = std::max(matrix_asymmetry, o.matrix_asymmetry);
  trace_m_real = std::max(trace_m_real, o.trace_m_real);
  imag_diagonal_error = std::max(imag_diagonal_error, o.imag_diagonal_error);
  orthonormality = std::max(orthonormality, o.orthonormality);
  eigen_residual = std::max(eigen_residual, o.eigen_residual);
  energy_sum = std::max(energy_sum, o.energy_sum);
  parseval = std::max(parseval, o.parseval);
  reconstruction = std::max(reconstruction, o.reconstruction);
  split_identity = std::max(split_identity, o.split_identity);
  solver_residual = std::max(solver_residual, o.solver_residual);
  backend_agreement = std::max(backend_agreement, o.backend_agreement);
}

AccumulatorLayout make_layout(const RunConfig& config) {
  const GeometrySpec spec = config.geometry.resolve();
  AccumulatorLayout layout;
  layout.detunings = config.drive.combined_grid();
  layout.angle_count = static_cast<int>(config.analysis.angles.size());
  layout.modes = config.analysis.modes;
  layout.fourier = config.analysis.modes && config.analysis.fourier;
  if (layout.modes) layout.excitation_detunings = config.analysis.excitation_detunings;
  layout.energy_edges = BinEdges::uniform(config.binning.energy_min, config.binning.energy_max,
                                          config.binning.energy_width);
  layout.fine_dos_edges = BinEdges::uniform(config.binning.fine_dos_min, config.binning.fine_dos_max,
                                            config.binning.fine_dos_width);
  if (layout.fourier) layout.kf_grid = make_kf_grid(config.binning.kf_max, config.kf_step(spec));
  return layout;
}

EnsembleAccumulator::EnsembleAccumulator(AccumulatorLayout layout) : layout_(std::move(layout)) {
  const std::size_t k = layout_.detunings.size();
  sums_.i_total.resize(k);
  sums_.i_coherent.resize(k);
  sums_.i_incoherent.resize(k);
  sums_.excitation.resize(k);
  sums_.i_total_sq.resize(k);
  sums_.angle_total.assign(layout_.angle_count, std::vector<ExactSum>(k));
  const std::size_t bins = layout_.energy_edges.bin_count();
  sums_.dos_counts.assign(bins, 0);
  sums_.fine_dos_counts.assign(layout_.fine_dos_edges.bin_count(), 0);
  if (layout_.modes) {
    sums_.capability.resize(bins);
    sums_.population.assign(layout_.excitation_detunings.size(), std::vector<ExactSum>(bins));
    sums_.population_total.resize(layout_.excitation_detunings.size());
    sums_.population_energy.resize(layout_.excitation_detunings.size());
  }
  if (layout_.fourier) sums_.fourier.resize(bins * layout_.kf_grid.size());
}

void EnsembleAccumulator::add(const ConfigurationBundle& b) {
  const std::size_t k = layout_.detunings.size();
  if (b.i_total.size() != k || b.angle_total.size() != static_cast<std::size_t>(layout_.angle_count)) {
    throw AnalysisError("configuration bundle does not match accumulator layout");
  }
  ++config_count_;
  for (std::size_t i = 0; i < k; ++i) {
    sums_.i_total[i].add(b.i_total[i]);
    sums_.i_coherent[i].add(b.i_coherent[i]);
    sums_.i_incoherent[i].add(b.i_incoherent[i]);
    sums_.excitation[i].add(b.excitation[i]);
    sums_.i_total_sq[i].add(b.i_total[i] * b.i_total[i]);
  }
  for (int a = 0; a < layout_.angle_count; ++a) {
    for (std::size_t i = 0; i < k; ++i) sums_.angle_total[a][i].add(b.angle_total[a][i]);
  }
  if (b.fell_back) ++sums_.fallback_count;
  sums_.max_validation_error = std::max(sums_.max_validation_error, b.validation_error);
  if (b.invariants) {
    if (!sums_.invariants) sums_.invariants = InvariantReport{};
    sums_.invariants->absorb(*b.invariants);
  }

  if (!layout_.modes) return;
  const std::size_t n = b.energies.size();
  const std::size_t nk = layout_.kf_grid.size();
  if (b.capability.size() != n || (layout_.fourier && b.fourier_modulus.size() != n * nk) ||
      b.mode_population.size() != layout_.excitation_detunings.size()) {
    throw AnalysisError("configuration bundle mode data does not match accumulator layout");
  }
  const double lo = layout_.energy_edges.edges().front();
  const double fine_lo = layout_.fine_dos_edges.edges().front();
  for (std::size_t j = 0; j < n; ++j) {
    const double eps = b.energies[j];
    if (auto fb = layout_.fine_dos_edges.find(eps)) {
      ++sums_.fine_dos_counts[*fb];
    } else if (eps < fine_lo) {
      ++sums_.fine_dos_underflow;
    } else {
      ++sums_.fine_dos_overflow;
    }
    for (std::size_t e = 0; e < b.mode_population.size(); ++e) {
      const double p2 = b.mode_population[e][j];
      sums_.population_total[e].add(p2);
      sums_.population_energy[e].add(p2 * eps);
    }
    const auto bin = layout_.energy_edges.find(eps);
    if (!bin) {
      if (eps < lo) {
        ++sums_.dos_underflow;
      } else {
        ++sums_.dos_overflow;
      }
      continue;
    }
    ++sums_.dos_counts[*bin];
    sums_.capability[*bin].add(b.capability[j]);
    for (std::size_t e = 0; e < b.mode_population.size(); ++e) {
      sums_.population[e][*bin].add(b.mode_population[e][j]);
    }
    if (layout_.fourier) {
      for (std::size_t q = 0; q < nk; ++q) {
        sums_.fourier[*bin * nk + q].add(b.fourier_modulus[j * nk + q]);
      }
    }
  }
}

namespace {

template <typename T>
void add_elementwise(std::vector<T>& a, const std::vector<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

}  // namespace

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
  if (!(layout_ == other.layout_)) throw AnalysisError("cannot merge accumulators with different layouts");
  config_count_ += other.config_count_;
  Sums& s = sums_;
  const Sums& o = other.sums_;
  add_elementwise(s.i_total, o.i_total);
  add_elementwise(s.i_coherent, o.i_coherent);
  add_elementwise(s.i_incoherent, o.i_incoherent);
  add_elementwise(s.excitation, o.excitation);
  add_elementwise(s.i_total_sq, o.i_total_sq);
  for (std::size_t a = 0; a < s.angle_total.size(); ++a) add_elementwise(s.angle_total[a], o.angle_total[a]);
  add_elementwise(s.dos_counts, o.dos_counts);
  s.dos_underflow += o.dos_underflow;
  s.dos_overflow += o.dos_overflow;
  add_elementwise(s.fine_dos_counts, o.fine_dos_counts);
  s.fine_dos_underflow += o.fine_dos_underflow;
  s.fine_dos_overflow += o.fine_dos_overflow;
  add_elementwise(s.capability, o.capability);
  add_elementwise(s.fourier, o.fourier);
  for (std::size_t e = 0; e < s.population.size(); ++e) add_elementwise(s.population[e], o.population[e]);
  add_elementwise(s.population_total, o.population_total);
  add_elementwise(s.population_energy, o.population_energy);
  s.fallback_count += o.fallback_count;
  s.max_validation_error = std::max(s.max_validation_error, o.max_validation_error);
  if (o.invariants) {
    if (!s.invariants) s.invariants = InvariantReport{};
    s.invariants->absorb(*o.invariants);
  }
}

EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b) {
  EnsembleAccumulator out = a;
  out.merge(b);
  return out;
}

std::vector<std::optional<double>> bin_by_energy(std::span<const std::pair<double, double>> pairs,
                                                 const BinEdges& edges) {
  std::vector<double> sum(edges.bin_count(), 0.0);
  std::vector<std::size_t> count(edges.bin_count(), 0);
  for (const auto& [eps, value] : pairs) {
    if (auto b = edges.find(eps)) {
      sum[*b] += value;
      ++count[*b];
    }
  }
  std::vector<std::optional<double>> out(edges.bin_count());
  for (int b = 0; b < edges.bin_count(); ++b) {
    if (count[b] > 0) out[b] = sum[b] / static_cast<double>(count[b]);
  }
  return out;
}

EnsembleResult finalize(const EnsembleAccumulator& acc, const RunConfig& config) {
  const AccumulatorLayout& layout = acc.layout();
  const auto& s = acc.sums();
  const double n = static_cast<double>(acc.config_count());
  if (acc.config_count() == 0) throw AnalysisError("no configurations were accumulated");

  EnsembleResult r;
  r.config = config;
  r.layout = layout;
  r.completed = acc.config_count();
  r.fallback_count = static_cast<int>(s.fallback_count);
  r.max_validation_error = s.max_validation_error;
  r.invariants = s.invariants;

  const std::size_t k = layout.detunings.size();
  auto mean = [n](const std::vector<ExactSum>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i].value() / n;
    return out;
  };
  r.forward.detunings = layout.detunings;
  r.forward.i_total = mean(s.i_total);
  r.forward.i_coherent = mean(s.i_coherent);
  r.forward.i_incoherent = mean(s.i_incoherent);
  r.forward.excitation = mean(s.excitation);
  r.forward.detection_angle = 0.0;
  r.forward.azimuth = config.analysis.azimuth;
  r.i_total_sem.assign(k, 0.0);
  if (acc.config_count() > 1) {
    for (std::size_t i = 0; i < k; ++i) {
      const double m = r.forward.i_total[i];
      const double var = std::max(0.0, (s.i_total_sq[i].value() / n - m * m) * n / (n - 1.0));
      r.i_total_sem[i] = std::sqrt(var / n);
    }
  }
  for (int a = 0; a < layout.angle_count; ++a) {
    SpectrumCurve c;
    c.detunings = layout.detunings;
    c.i_total = mean(s.angle_total[a]);
    c.i_incoherent = r.forward.i_incoherent;
    c.excitation = r.forward.excitation;
    c.i_coherent.resize(k);
    for (std::size_t i = 0; i < k; ++i) c.i_coherent[i] = c.i_total[i] - c.i_incoherent[i];
    c.detection_angle = config.analysis.angles[a];
    c.azimuth = config.analysis.azimuth;
    r.angle_curves.push_back(std::move(c));
  }

  if (!layout.modes) return r;
  r.dos = histogram_from_counts(layout.energy_edges, s.dos_counts, s.dos_underflow, s.dos_overflow);
  r.dos_fine = histogram_from_counts(layout.fine_dos_edges, s.fine_dos_counts, s.fine_dos_underflow,
                                     s.fine_dos_overflow);
  const int bins = layout.energy_edges.bin_count();
  r.capability_vs_energy.assign(bins, std::nullopt);
  for (int b = 0; b < bins; ++b) {
    if (s.dos_counts[b] > 0) r.capability_vs_energy[b] = s.capability[b].value() / static_cast<double>(s.dos_counts[b]);
  }
  if (layout.fourier) {
    FourierMap map;
    map.edges = layout.energy_edges;
    map.kf_grid = layout.kf_grid;
    map.rows.assign(bins, {});
    const std::size_t nk = layout.kf_grid.size();
    for (int b = 0; b < bins; ++b) {
      if (s.dos_counts[b] == 0) continue;
      map.rows[b].resize(nk);
      for (std::size_t q = 0; q < nk; ++q) {
        map.rows[b][q] = s.fourier[b * nk + q].value() / static_cast<double>(s.dos_counts[b]);
      }
    }
    r.fourier_map = std::move(map);
  }
  for (std::size_t e = 0; e < layout.excitation_detunings.size(); ++e) {
    ExcitationHistogram h;
    h.detuning = layout.excitation_detunings[e];
    h.mean_population.assign(bins, std::nullopt);
    h.population_per_config.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) {
      const double total = s.population[e][b].value();
      h.population_per_config[b] = total / n;
      if (s.dos_counts[b] > 0) h.mean_population[b] = total / static_cast<double>(s.dos_counts[b]);
    }
    const double w = s.population_total[e].value();
    h.weighted_mean_energy = w > 0.0 ? s.population_energy[e].value() / w : 0.0;
    r.excitation.push_back(std::move(h));
  }
  return r;
}

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

const SteadyState* find_state(const SweepResult& sweep, double detuning) {
  for (const auto& st : sweep.states) {
    if (std::abs(st.detuning - detuning) <= 1e-9) return &st;
  }
  return nullptr;
}

}  // namespace

ConfigurationBundle run_single_configuration(const RunConfig& config, int index) {
  if (index < 0 || index >= config.ensemble.n_configs) {
    throw ConfigError("ensemble.n_configs", fmt::format("configuration index {} out of range", index));
  }
  const GeometrySpec spec = config.geometry.resolve();
  const double rabi = config.drive.rabi;
  ConfigurationBundle out;
  out.index = index;
  out.seed = derive_seed(config.ensemble.master_seed, static_cast<std::uint64_t>(index));

  const AtomCloud cloud = sample_positions(spec, out.seed);
  out.atom_count = cloud.size();
  out.resample_count = cloud.resample_count;
  const CouplingMatrices m = build_matrices(cloud);
  const Eigen::VectorXcd drive = drive_vector(cloud);
  const std::vector<double> grid = config.drive.combined_grid();

  const SweepResult sweep = spectrum_sweep(m, drive, rabi, grid, config.solver);
  out.backend = sweep.backend;
  out.fell_back = sweep.fell_back;
  out.fallback_reason = sweep.fallback_reason;
  out.validation_error = sweep.validation_error;

  const Eigen::VectorXcd forward = detection_phases(cloud, Vec3::UnitZ());
  std::vector<std::vector<Eigen::VectorXcd>> angle_phases;
  for (double theta : config.analysis.angles) {
    std::vector<Eigen::VectorXcd> phases;
    if (theta != 0.0) {
      for (const Vec3& n : detection_directions(theta, config.analysis.azimuth)) {
        phases.push_back(detection_phases(cloud, n));
      }
    }
    angle_phases.push_back(std::move(phases));
  }

  const std::size_t k = grid.size();
  out.i_total.resize(k);
  out.i_coherent.resize(k);
  out.i_incoherent.resize(k);
  out.excitation.resize(k);
  out.angle_total.assign(config.analysis.angles.size(), std::vector<double>(k));
  double split_error = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::VectorXcd& b = sweep.states[i].amplitudes;
    const double total = std::norm(scattered_amplitude(b, forward));
    const double incoherent = b.squaredNorm();
    out.i_total[i] = total;
    out.i_incoherent[i] = incoherent;
    out.i_coherent[i] = total - incoherent;
    out.excitation[i] = incoherent;
    const double scale = total + std::abs(out.i_coherent[i]) + incoherent;
    if (scale > 0.0) {
      split_error = std::max(split_error, std::abs(total - out.i_coherent[i] - incoherent) / scale);
    }
    for (std::size_t a = 0; a < angle_phases.size(); ++a) {
      if (angle_phases[a].empty()) {
        out.angle_total[a][i] = total;
        continue;
      }
      double sum = 0.0;
      for (const auto& ph : angle_phases[a]) sum += std::norm(scattered_amplitude(b, ph));
      out.angle_total[a][i] = sum / static_cast<double>(angle_phases[a].size());
    }
  }

  InvariantReport inv;
  inv.split_identity = split_error;
  inv.solver_residual = sweep.max_direct_residual;
  inv.backend_agreement = sweep.validation_error;

  if (config.analysis.modes) {
    const ModeBasis basis = diagonalize_real_part(m);
    const EmissionCapability cap = emission_capability(basis, cloud);
    out.energies.assign(basis.energies.data(), basis.energies.data() + basis.size());
    out.capability.assign(cap.capability.data(), cap.capability.data() + basis.size());
    if (config.analysis.fourier) {
      const std::vector<double> kf = make_kf_grid(config.binning.kf_max, config.kf_step(spec));
      const Eigen::MatrixXcd f = spatial_fourier(basis, cloud, kf);
      out.fourier_modulus.resize(static_cast<std::size_t>(basis.size()) * kf.size());
      for (int j = 0; j < basis.size(); ++j) {
        for (std::size_t q = 0; q < kf.size(); ++q) {
          out.fourier_modulus[j * kf.size() + q] = std::abs(f(j, static_cast<Eigen::Index>(q)));
        }
      }
    }
    for (double delta : config.analysis.excitation_detunings) {
      SteadyState solved;
      const SteadyState* state = find_state(sweep, delta);
      if (state == nullptr) {
        solved = solve_steady_state(m, drive, delta, rabi);
        inv.solver_residual = std::max(inv.solver_residual, relative_residual(m, drive, solved, rabi));
        state = &solved;
      }
      const Eigen::VectorXcd p = mode_excitations(basis, *state);
      out.mode_population.emplace_back(p.size());
      for (int j = 0; j < p.size(); ++j) out.mode_population.back()[j] = std::norm(p[j]);

      if (config.analysis.check_invariants) {
        const double bn = state->amplitudes.squaredNorm();
        if (bn > 0.0) inv.parseval = std::max(inv.parseval, std::abs(p.squaredNorm() - bn) / bn);
        const cdouble direct = scattered_amplitude(state->amplitudes, forward);
        const cdouble via_modes = (p.array() * cap.amplitude.array()).sum();
        const double denom = std::abs(direct);
        if (denom > 0.0) inv.reconstruction = std::max(inv.reconstruction, std::abs(via_modes - direct) / denom);
      }
    }
    if (config.analysis.check_invariants) {
      const int n = basis.size();
      inv.orthonormality = max_abs(basis.vectors.transpose() * basis.vectors - Eigen::MatrixXd::Identity(n, n));
      const double emax = n > 0 ? basis.energies.cwiseAbs().maxCoeff() : 0.0;
      if (emax > 0.0) {
        const Eigen::MatrixXd res = m.m_real * basis.vectors - basis.vectors * basis.energies.asDiagonal();
        inv.eigen_residual = res.colwise().norm().maxCoeff() / emax;
        inv.energy_sum = std::abs(basis.energies.sum()) / (n * emax);
      }
    }
  }

  if (config.analysis.check_invariants) {
    inv.matrix_asymmetry = std::max(max_abs(m.m_real - m.m_real.transpose()), max_abs(m.m_imag - m.m_imag.transpose()));
    inv.trace_m_real = std::abs(m.m_real.trace());
    inv.imag_diagonal_error = (m.m_imag.diagonal().array() + 0.5).abs().maxCoeff();
    out.invariants = inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json sums_to_json(const std::vector<ExactSum>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(s.serialize());
  return a;
}

std::vector<ExactSum> sums_from_json(const json& a) {
  std::vector<ExactSum> v;
  for (const auto& s : a) v.push_back(ExactSum::deserialize(s.get<std::string>()));
  return v;
}

json invariants_to_json(const InvariantReport& r) {
  return json{{"matrix_asymmetry", r.matrix_asymmetry}, {"trace_m_real", r.trace_m_real},
              {"imag_diagonal_error", r.imag_diagonal_error}, {"orthonormality", r.orthonormality},
              {"eigen_residual", r.eigen_residual}, {"energy_sum", r.energy_sum},
              {"parseval", r.parseval}, {"reconstruction", r.reconstruction},
              {"split_identity", r.split_identity}, {"solver_residual", r.solver_residual},
              {"backend_agreement", r.backend_agreement}};
}

InvariantReport invariants_from_json(const json& j) {
  InvariantReport r;
  r.matrix_asymmetry = j.at("matrix_asymmetry");
  r.trace_m_real = j.at("trace_m_real");
  r.imag_diagonal_error = j.at("imag_diagonal_error");
  r.orthonormality = j.at("orthonormality");
  r.eigen_residual = j.at("eigen_residual");
  r.energy_sum = j.at("energy_sum");
  r.parseval = j.at("parseval");
  r.reconstruction = j.at("reconstruction");
  r.split_identity = j.at("split_identity");
  r.solver_residual = j.at("solver_residual");
  r.backend_agreement = j.at("backend_agreement");
  return r;
}

json accumulator_to_json(const EnsembleAccumulator& acc) {
  const auto& s = acc.sums();
  json j;
  j["config_count"] = acc.config_count();
  j["i_total"] = sums_to_json(s.i_total);
  j["i_coherent"] = sums_to_json(s.i_coherent);
  j["i_incoherent"] = sums_to_json(s.i_incoherent);
  j["excitation"] = sums_to_json(s.excitation);
  j["i_total_sq"] = sums_to_json(s.i_total_sq);
  j["angle_total"] = json::array();
  for (const auto& a : s.angle_total) j["angle_total"].push_back(sums_to_json(a));
  j["dos_counts"] = s.dos_counts;
  j["dos_underflow"] = s.dos_underflow;
  j["dos_overflow"] = s.dos_overflow;
  j["fine_dos_counts"] = s.fine_dos_counts;
  j["fine_dos_underflow"] = s.fine_dos_underflow;
  j["fine_dos_overflow"] = s.fine_dos_overflow;
  j["capability"] = sums_to_json(s.capability);
  j["fourier"] = sums_to_json(s.fourier);
  j["population"] = json::array();
  for (const auto& p : s.population) j["population"].push_back(sums_to_json(p));
  j["population_total"] = sums_to_json(s.population_total);
  j["population_energy"] = sums_to_json(s.population_energy);
  j["fallback_count"] = s.fallback_count;
  j["max_validation_error"] = s.max_validation_error;
  if (s.invariants) j["invariants"] = invariants_to_json(*s.invariants);
  return j;
}

void accumulator_from_json(const json& j, EnsembleAccumulator& acc) {
  auto& s = acc.mutable_sums();
  auto load = [&](const char* key, std::vector<ExactSum>& dst) {
    auto v = sums_from_json(j.at(key));
    if (v.size() != dst.size()) throw AnalysisError(std::string("checkpoint layout mismatch in ") + key);
    dst = std::move(v);
  };
  acc.set_config_count(j.at("config_count").get<std::uint64_t>());
  load("i_total", s.i_total);
  load("i_coherent", s.i_coherent);
  load("i_incoherent", s.i_incoherent);
  load("excitation", s.excitation);
  load("i_total_sq", s.i_total_sq);
  if (j.at("angle_total").size() != s.angle_total.size()) throw AnalysisError("checkpoint layout mismatch in angle_total");
  for (std::size_t a = 0; a < s.angle_total.size(); ++a) s.angle_total[a] = sums_from_json(j["angle_total"][a]);
  s.dos_counts = j.at("dos_counts").get<std::vector<std::uint64_t>>();
  s.dos_underflow = j.at("dos_underflow");
  s.dos_overflow = j.at("dos_overflow");
  s.fine_dos_counts = j.at("fine_dos_counts").get<std::vector<std::uint64_t>>();
  s.fine_dos_underflow = j.at("fine_dos_underflow");
  s.fine_dos_overflow = j.at("fine_dos_overflow");
  load("capability", s.capability);
  load("fourier", s.fourier);
  if (j.at("population").size() != s.population.size()) throw AnalysisError("checkpoint layout mismatch in population");
  for (std::size_t e = 0; e < s.population.size(); ++e) s.population[e] = sums_from_json(j["population"][e]);
  load("population_total", s.population_total);
  load("population_energy", s.population_energy);
  s.fallback_count = j.at("fallback_count");
  s.max_validation_error = j.at("max_validation_error");
  if (j.contains("invariants")) s.invariants = invariants_from_json(j["invariants"]);
}

// Everything that influences the sums: the config minus scheduling knobs and
// the post-processing sections.
std::string fingerprint(const RunConfig& config) {
  auto j = nlohmann::ordered_json::parse(config_to_text(config));
  for (const char* key : {"n_configs", "workers", "checkpoint_every", "failure_budget"}) j["ensemble"].erase(key);
  j.erase("peaks");
  j.erase("scaling");
  return j.dump(2);
}

void write_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                      const EnsembleAccumulator& acc, int next_index,
                      const std::vector<ConfigurationFailure>& failures) {
  json j;
  j["format"] = "lambshift-checkpoint-1";
  j["fingerprint"] = fingerprint(config);
  j["next_index"] = next_index;
  j["failures"] = json::array();
  for (const auto& f : failures) j["failures"].push_back({{"index", f.index}, {"message", f.message}});
  j["accumulator"] = accumulator_to_json(acc);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out << j.dump();
  }
  std::filesystem::rename(tmp, path);
}

struct Resume {
  int next_index = 0;
  std::vector<ConfigurationFailure> failures;
};

std::optional<Resume> read_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                                      EnsembleAccumulator& acc) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  json j = json::parse(in);
  if (j.value("format", "") != "lambshift-checkpoint-1") throw ConfigError("checkpoint", "unrecognized checkpoint format");
  if (j.at("fingerprint").get<std::string>() != fingerprint(config)) {
    throw ConfigError("checkpoint", "checkpoint " + path.string() + " was written for a different configuration");
  }
  Resume r;
  r.next_index = j.at("next_index");
  if (r.next_index > config.ensemble.n_configs) {
    throw ConfigError("ensemble.n_configs", "checkpoint is ahead of the requested configuration count");
  }
  for (const auto& f : j.at("failures")) r.failures.push_back({f.at("index"), f.at("message")});
  accumulator_from_json(j.at("accumulator"), acc);
  return r;
}

std::string format_duration(double seconds) {
  const int s = static_cast<int>(seconds + 0.5);
  if (s >= 3600) return fmt::format("{}h{:02}m", s / 3600, (s % 3600) / 60);
  if (s >= 60) return fmt::format("{}m{:02}s", s / 60, s % 60);
  return fmt::format("{}s", s);
}

}  // namespace

EnsembleResult run_ensemble(const RunConfig& config, const EnsembleOptions& options) {
  config.validate();
  linalg::use_single_threaded_blas();
  const int n = config.ensemble.n_configs;
  const int workers = std::max(1, options.workers > 0 ? options.workers : config.ensemble.workers);
  const double allowed_failures = config.ensemble.failure_budget * n;

  EnsembleAccumulator acc(make_layout(config));
  std::vector<ConfigurationFailure> failures;
  int start = 0;
  if (options.checkpoint) {
    if (auto resume = read_checkpoint(*options.checkpoint, config, acc)) {
      start = resume->next_index;
      failures = std::move(resume->failures);
    }
  }

  struct Outcome {
    std::optional<ConfigurationBundle> bundle;
    std::string error;
  };
  std::mutex mutex;
  std::condition_variable ready_cv;
  std::map<int, Outcome> ready;
  std::atomic<int> next{start};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const int index = next.fetch_add(1);
      if (index >= n) return;
      Outcome outcome;
      try {
        outcome.bundle = run_single_configuration(config, index);
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
      {
        std::lock_guard lock(mutex);
        ready.emplace(index, std::move(outcome));
      }
      ready_cv.notify_one();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);

  const auto t0 = std::chrono::steady_clock::now();
  auto last_report = t0;
  std::optional<std::string> abort_reason;
  auto shutdown = [&] {
    stop = true;
    for (auto& t : pool) {
      if (t.joinable()) t.join();
    }
  };
  try {
    for (int expected = start; expected < n; ++expected) {
      Outcome outcome;
      {
        std::unique_lock lock(mutex);
        ready_cv.wait(lock, [&] { return ready.count(expected) > 0; });
        auto node = ready.extract(expected);
        outcome = std::move(node.mapped());
      }
      if (outcome.bundle) {
        acc.add(*outcome.bundle);
        if (options.on_bundle) options.on_bundle(*outcome.bundle);
      } else {
        failures.push_back({expected, outcome.error});
        if (options.progress) fmt::print(stderr, "[lambshift] configuration {} failed: {}\n", expected, outcome.error);
        if (static_cast<double>(failures.size()) > allowed_failures) {
          abort_reason = fmt::format("{} of {} configurations failed (budget {:.1f}%)", failures.size(), n,
                                     100.0 * config.ensemble.failure_budget);
          stop = true;
          break;
        }
      }
      const int done = expected + 1;
      if (options.checkpoint && config.ensemble.checkpoint_every > 0 &&
          (done % config.ensemble.checkpoint_every == 0 || done == n)) {
        write_checkpoint(*options.checkpoint, config, acc, done, failures);
      }
      if (options.progress) {
        const auto now = std::chrono::steady_clock::now();
        const double since = std::chrono::duration<double>(now - last_report).count();
        if (since >= 10.0 || done == n) {
          const double elapsed = std::chrono::duration<double>(now - t0).count();
          const double rate = (done - start) / std::max(elapsed, 1e-9);
          fmt::print(stderr, "[lambshift] {}/{} configurations, elapsed {}, ETA {}\n", done, n,
                     format_duration(elapsed), format_duration((n - done) / std::max(rate, 1e-12)));
          last_report = now;
        }
      }
    }
  } catch (...) {
    shutdown();
    throw;
  }
  shutdown();
  if (abort_reason) throw FailureBudgetExceeded(*abort_reason, failures);

  EnsembleResult result = finalize(acc, config);
  result.failures = std::move(failures);
  return result;
}

}  // namespace lambshift
