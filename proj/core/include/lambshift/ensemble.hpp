#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lambshift/error.hpp"
#include "lambshift/exact_sum.hpp"
#include "lambshift/modes.hpp"
#include "lambshift/run_config.hpp"
#include "lambshift/scattering.hpp"

namespace lambshift {

/// Worst-case violations of the per-configuration invariants (all zero-based
/// "errors": smaller is better).
struct InvariantReport {
  double matrix_asymmetry = 0.0;       // max |M - M^T| over both parts
  double trace_m_real = 0.0;           // |trace M_R|
  double imag_diagonal_error = 0.0;    // max |diag M_I + 1/2|
  double orthonormality = 0.0;         // max |R^T R - I|
  double eigen_residual = 0.0;         // max_j |M_R R_j - eps_j R_j| / max|eps|
  double energy_sum = 0.0;             // |sum eps| / (N max|eps|)
  double parseval = 0.0;               // relative
  double reconstruction = 0.0;         // relative
  double split_identity = 0.0;         // relative
  double solver_residual = 0.0;        // relative residual of direct solves
  double backend_agreement = 0.0;      // spectral vs direct, relative

  void absorb(const InvariantReport& other);
  bool operator==(const InvariantReport&) const = default;
};

/// Everything one configuration contributes to the ensemble.
struct ConfigurationBundle {
  int index = 0;
  std::uint64_t seed = 0;
  int atom_count = 0;
  std::uint64_t resample_count = 0;
  SolverTag backend = SolverTag::direct;
  bool fell_back = false;
  std::string fallback_reason;
  double validation_error = 0.0;

  // Per detuning of the combined grid.
  std::vector<double> i_total;
  std::vector<double> i_coherent;
  std::vector<double> i_incoherent;
  std::vector<double> excitation;
  /// angle_total[a][k]: intensity at analysis.angles[a].
  std::vector<std::vector<double>> angle_total;

  // Mode analysis (empty when disabled).
  std::vector<double> energies;
  std::vector<double> capability;
  /// fourier_modulus[j * K + k] = |F_j(kf_k)|.
  std::vector<double> fourier_modulus;
  /// mode_population[e][j] = |p_j|^2 at analysis.excitation_detunings[e].
  std::vector<std::vector<double>> mode_population;

  std::optional<InvariantReport> invariants;

  bool operator==(const ConfigurationBundle&) const = default;
};

/// Metadata fixing the layout of an accumulator; merging requires equality.
struct AccumulatorLayout {
  std::vector<double> detunings;
  int angle_count = 0;
  std::vector<double> excitation_detunings;
  BinEdges energy_edges;
  BinEdges fine_dos_edges;
  std::vector<double> kf_grid;
  bool modes = false;
  bool fourier = false;

  bool operator==(const AccumulatorLayout&) const = default;
};

AccumulatorLayout make_layout(const RunConfig& config);

/// Running sums over configurations. All floating-point sums are exact, so
/// the finalized averages do not depend on how configurations were grouped.
class EnsembleAccumulator {
 public:
  EnsembleAccumulator() = default;
  explicit EnsembleAccumulator(AccumulatorLayout layout);

  void add(const ConfigurationBundle& bundle);
  /// Throws AnalysisError when layouts differ.
  void merge(const EnsembleAccumulator& other);

  const AccumulatorLayout& layout() const { return layout_; }
  std::uint64_t config_count() const { return config_count_; }

  bool operator==(const EnsembleAccumulator&) const = default;

  // Raw state; exposed for finalization and checkpointing.
  struct Sums {
    std::vector<ExactSum> i_total, i_coherent, i_incoherent, excitation, i_total_sq;
    std::vector<std::vector<ExactSum>> angle_total;
    std::vector<std::uint64_t> dos_counts;  // per energy bin
    std::uint64_t dos_underflow = 0, dos_overflow = 0;
    std::vector<std::uint64_t> fine_dos_counts;
    std::uint64_t fine_dos_underflow = 0, fine_dos_overflow = 0;
    std::vector<ExactSum> capability;  // per energy bin
    std::vector<ExactSum> fourier;     // [bin * K + k]
    std::vector<std::vector<ExactSum>> population;  // [detuning][bin]
    std::vector<ExactSum> population_total;         // [detuning], all states
    std::vector<ExactSum> population_energy;        // [detuning], sum |p|^2 eps
    // Diagnostics; sums and maxima, so also grouping-independent.
    std::uint64_t fallback_count = 0;
    double max_validation_error = 0.0;
    std::optional<InvariantReport> invariants;
    bool operator==(const Sums&) const = default;
  };
  const Sums& sums() const { return sums_; }
  Sums& mutable_sums() { return sums_; }
  void set_config_count(std::uint64_t n) { config_count_ = n; }

 private:
  AccumulatorLayout layout_;
  std::uint64_t config_count_ = 0;
  Sums sums_;
};

EnsembleAccumulator merge_accumulators(const EnsembleAccumulator& a, const EnsembleAccumulator& b);

/// Mean of the values falling in each bin; unpopulated bins are nullopt.
std::vector<std::optional<double>> bin_by_energy(std::span<const std::pair<double, double>> pairs,
                                                 const BinEdges& edges);

struct ConfigurationFailure {
  int index = 0;
  std::string message;
};

/// Excitation histogram at one probe detuning.
struct ExcitationHistogram {
  double detuning = 0.0;
  std::vector<std::optional<double>> mean_population;  // per state in bin
  std::vector<double> population_per_config;           // bin total / n_configs
  /// |p|^2-weighted mean energy over all states.
  double weighted_mean_energy = 0.0;
};

struct EnsembleResult {
  RunConfig config;
  AccumulatorLayout layout;
  std::uint64_t completed = 0;
  std::vector<ConfigurationFailure> failures;
  int fallback_count = 0;
  double max_validation_error = 0.0;

  SpectrumCurve forward;                  // raw ensemble mean
  std::vector<double> i_total_sem;        // standard error of the mean
  std::vector<SpectrumCurve> angle_curves;  // one per analysis angle (raw)

  std::optional<EnergyHistogram> dos;
  std::optional<EnergyHistogram> dos_fine;
  std::vector<std::optional<double>> capability_vs_energy;
  std::optional<FourierMap> fourier_map;
  std::vector<ExcitationHistogram> excitation;

  std::optional<InvariantReport> invariants;
};

EnsembleResult finalize(const EnsembleAccumulator& acc, const RunConfig& config);

ConfigurationBundle run_single_configuration(const RunConfig& config, int index);

struct EnsembleOptions {
  /// Overrides config.ensemble.workers when positive.
  int workers = 0;
  /// Checkpoint file; resumed from when it exists and matches the config.
  std::optional<std::filesystem::path> checkpoint;
  bool progress = false;
  /// Called in canonical index order with each reduced bundle.
  std::function<void(const ConfigurationBundle&)> on_bundle;
};

/// Raised when more than the configured fraction of configurations fail.
class FailureBudgetExceeded : public NumericalError {
 public:
  FailureBudgetExceeded(const std::string& what, std::vector<ConfigurationFailure> failures)
      : NumericalError(what), failures_(std::move(failures)) {}
  const std::vector<ConfigurationFailure>& failures() const { return failures_; }

 private:
  std::vector<ConfigurationFailure> failures_;
};

EnsembleResult run_ensemble(const RunConfig& config, const EnsembleOptions& options = {});

}  // namespace lambshift
