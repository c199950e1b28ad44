#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lambshift/analysis.hpp"
#include "lambshift/ensemble.hpp"
#include "lambshift/geometry.hpp"

namespace lambshift {

/// Library version string.
std::string_view version();

/// Shortest text that reads back bit-identically.
std::string format_double(double v);

/// Output directory that carries an INCOMPLETE marker until commit().
class OutputDirectory {
 public:
  explicit OutputDirectory(std::filesystem::path dir);
  const std::filesystem::path& path() const { return dir_; }
  std::filesystem::path file(const std::string& name) const { return dir_ / name; }
  void commit();

 private:
  std::filesystem::path dir_;
};

/// Details about the invocation recorded next to the results.
struct RunMetadata {
  std::string verb;
  std::string config_path;
  std::vector<std::string> command_line;
  std::string started_at;  // UTC, ISO 8601
  double wall_seconds = 0.0;
  std::vector<std::string> notes;
};

std::string utc_timestamp();

void write_spectrum_csv(const EnsembleResult& result, const std::filesystem::path& path);
void write_dos_csv(const EnergyHistogram& hist, const std::filesystem::path& path);
void write_capability_csv(const EnsembleResult& result, const std::filesystem::path& path);
void write_fourier_map_csv(const FourierMap& map, const std::filesystem::path& path);
void write_spatial_order_csv(const FourierMap& map, double contrast_threshold, const std::filesystem::path& path);
void write_excitation_csv(const EnsembleResult& result, const std::filesystem::path& path);

/// One row per peak class and curve (forward plus each analysis angle).
/// Curves whose peaks could not be extracted are listed with their reason.
void write_peaks_csv(const EnsembleResult& result, const std::filesystem::path& path);

void write_scaling_csv(const ScalingTable& table, const std::filesystem::path& path);

void write_positions_csv(const AtomCloud& cloud, const std::filesystem::path& path);

/// run_metadata.json: version, seeds, RNG algorithm, full config echo, wall
/// time, failures and numerical diagnostics.
void write_metadata(const RunConfig& config, const RunMetadata& meta, const EnsembleResult* result,
                    const ScalingTable* scaling, const std::filesystem::path& path);

/// All files for one ensemble run (spectrum, DOS, modes, peaks, metadata).
void write_run_outputs(const EnsembleResult& result, const RunMetadata& meta, const std::filesystem::path& dir);

}  // namespace lambshift
