#include "lambshift/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lambshift/error.hpp"

namespace lambshift {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Reads fields of one JSON object, remembering which keys were consumed so
// that leftovers can be reported.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(node_.at(key), join(path_, key));
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(node_.at(key), join(path_, key));
  }

  std::optional<Section> child(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return std::nullopt;
    return Section(node_.at(key), join(path_, key));
  }

  std::string raw_path(const std::string& key) const { return join(path_, key); }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

 private:
  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ConfigError(path, "expected a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      const auto x = v.get<std::int64_t>();
      if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
        throw ConfigError(path, "integer out of range");
      }
      return static_cast<T>(x);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
      std::vector<double> out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::array<double, 3>>) {
      if (!v.is_array() || v.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
      std::array<double, 3> out{};
      for (std::size_t i = 0; i < 3; ++i) out[i] = convert<double>(v[i], path + "[" + std::to_string(i) + "]");
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config field type");
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename E>
E parse_enum(const std::string& text, const std::string& path,
             std::initializer_list<std::pair<const char*, E>> names) {
  std::string allowed;
  for (const auto& [name, value] : names) {
    if (text == name) return value;
    allowed += allowed.empty() ? name : std::string(", ") + name;
  }
  throw ConfigError(path, "unknown value '" + text + "' (expected one of: " + allowed + ")");
}

void read_grid(Section& parent, const std::string& key, DetuningGrid& grid) {
  if (auto s = parent.child(key)) {
    s->read("min", grid.min);
    s->read("max", grid.max);
    s->read("step", grid.step);
    s->finish();
  }
}

void read_geometry(Section& s, GeometryInput& g) {
  std::string kind = "cylinder";
  std::string unit = "inverse_k";
  s.read("kind", kind);
  s.read("unit", unit);
  g.kind = parse_enum<GeometryInput::Kind>(kind, s.raw_path("kind"),
                                           {{"cylinder", GeometryInput::Kind::cylinder},
                                            {"gaussian", GeometryInput::Kind::gaussian}});
  g.unit = parse_enum<LengthUnit>(unit, s.raw_path("unit"),
                                  {{"inverse_k", LengthUnit::inverse_k}, {"lambda0", LengthUnit::lambda0}});
  s.read("radius", g.radius);
  s.read("length", g.length);
  s.read("sigma", g.sigma);
  s.read("atom_count", g.atom_count);
  s.read("density", g.density);
  s.read("peak_density", g.peak_density);
  s.read("exclusion_radius", g.exclusion_radius);
  s.finish();
}

RunConfig from_json(const json& root) {
  RunConfig c;
  Section top(root, "");
  if (auto s = top.child("geometry")) read_geometry(*s, c.geometry);
  if (auto s = top.child("drive")) {
    s->read("rabi", c.drive.rabi);
    read_grid(*s, "coarse", c.drive.coarse);
    read_grid(*s, "fine", c.drive.fine);
    s->finish();
  }
  if (auto s = top.child("ensemble")) {
    s->read("n_configs", c.ensemble.n_configs);
    s->read("master_seed", c.ensemble.master_seed);
    s->read("workers", c.ensemble.workers);
    s->read("checkpoint_every", c.ensemble.checkpoint_every);
    s->read("failure_budget", c.ensemble.failure_budget);
    s->finish();
  }
  if (auto s = top.child("solver")) {
    std::string backend = std::string(to_string(c.solver.backend));
    s->read("backend", backend);
    c.solver.backend = parse_enum<SweepBackend>(backend, s->raw_path("backend"),
                                                {{"auto", SweepBackend::automatic},
                                                 {"direct", SweepBackend::direct},
                                                 {"spectral", SweepBackend::spectral}});
    s->read("spectral_min_points", c.solver.spectral_min_points);
    s->read("validation_points", c.solver.validation_points);
    s->read("validation_tolerance", c.solver.validation_tolerance);
    s->read("max_condition", c.solver.max_condition);
    s->finish();
  }
  if (auto s = top.child("analysis")) {
    s->read("modes", c.analysis.modes);
    s->read("fourier", c.analysis.fourier);
    s->read("angles", c.analysis.angles);
    std::string azimuth = std::string(to_string(c.analysis.azimuth));
    s->read("azimuth", azimuth);
    c.analysis.azimuth = parse_enum<Azimuth>(azimuth, s->raw_path("azimuth"),
                                             {{"yz_plane", Azimuth::yz_plane}, {"average16", Azimuth::average16}});
    s->read("excitation_detunings", c.analysis.excitation_detunings);
    s->read("check_invariants", c.analysis.check_invariants);
    s->finish();
  }
  if (auto s = top.child("binning")) {
    s->read("energy_min", c.binning.energy_min);
    s->read("energy_max", c.binning.energy_max);
    s->read("energy_width", c.binning.energy_width);
    s->read("fine_dos_min", c.binning.fine_dos_min);
    s->read("fine_dos_max", c.binning.fine_dos_max);
    s->read("fine_dos_width", c.binning.fine_dos_width);
    s->read("kf_max", c.binning.kf_max);
    s->read("kf_step", c.binning.kf_step);
    s->read("order_contrast", c.binning.order_contrast);
    s->finish();
  }
  if (auto s = top.child("peaks")) {
    s->read("prominence_fraction", c.peaks.prominence_fraction);
    s->read("central_window", c.peaks.central_window);
    s->read("fine_window", c.peaks.fine_window);
    s->read("fit_points", c.peaks.fit_points);
    s->read("roughness_limit", c.peaks.roughness_limit);
    s->finish();
  }
  if (auto s = top.child("scaling")) {
    ScalingSettings sc;
    std::string mode = std::string(to_string(sc.mode));
    s->read("mode", mode);
    sc.mode = parse_enum<ScalingMode>(mode, s->raw_path("mode"),
                                      {{"fixed_density_vary_size", ScalingMode::fixed_density_vary_size},
                                       {"fixed_size_vary_density", ScalingMode::fixed_size_vary_density}});
    s->read("points", sc.points);
    s->read("peak_density", sc.peak_density);
    s->read("aspect", sc.aspect);
    s->finish();
    c.scaling = sc;
  }
  top.finish();
  c.validate();
  return c;
}

ordered_json grid_json(const DetuningGrid& g) {
  return ordered_json{{"min", g.min}, {"max", g.max}, {"step", g.step}};
}

template <typename T>
void put_optional(ordered_json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end(), nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.what());
  }
  return from_json(root);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_text(const RunConfig& c) {
  ordered_json geometry;
  geometry["kind"] = c.geometry.kind == GeometryInput::Kind::cylinder ? "cylinder" : "gaussian";
  geometry["unit"] = std::string(to_string(c.geometry.unit));
  geometry["radius"] = c.geometry.radius;
  geometry["length"] = c.geometry.length;
  geometry["sigma"] = c.geometry.sigma;
  put_optional(geometry, "atom_count", c.geometry.atom_count);
  put_optional(geometry, "density", c.geometry.density);
  put_optional(geometry, "peak_density", c.geometry.peak_density);
  put_optional(geometry, "exclusion_radius", c.geometry.exclusion_radius);

  ordered_json root;
  root["geometry"] = geometry;
  root["drive"] = ordered_json{{"rabi", c.drive.rabi},
                               {"coarse", grid_json(c.drive.coarse)},
                               {"fine", grid_json(c.drive.fine)}};
  root["ensemble"] = ordered_json{{"n_configs", c.ensemble.n_configs},
                                  {"master_seed", c.ensemble.master_seed},
                                  {"workers", c.ensemble.workers},
                                  {"checkpoint_every", c.ensemble.checkpoint_every},
                                  {"failure_budget", c.ensemble.failure_budget}};
  root["solver"] = ordered_json{{"backend", std::string(to_string(c.solver.backend))},
                                {"spectral_min_points", c.solver.spectral_min_points},
                                {"validation_points", c.solver.validation_points},
                                {"validation_tolerance", c.solver.validation_tolerance},
                                {"max_condition", c.solver.max_condition}};
  root["analysis"] = ordered_json{{"modes", c.analysis.modes},
                                  {"fourier", c.analysis.fourier},
                                  {"angles", c.analysis.angles},
                                  {"azimuth", std::string(to_string(c.analysis.azimuth))},
                                  {"excitation_detunings", c.analysis.excitation_detunings},
                                  {"check_invariants", c.analysis.check_invariants}};
  ordered_json binning{{"energy_min", c.binning.energy_min},
                       {"energy_max", c.binning.energy_max},
                       {"energy_width", c.binning.energy_width},
                       {"fine_dos_min", c.binning.fine_dos_min},
                       {"fine_dos_max", c.binning.fine_dos_max},
                       {"fine_dos_width", c.binning.fine_dos_width},
                       {"kf_max", c.binning.kf_max}};
  put_optional(binning, "kf_step", c.binning.kf_step);
  binning["order_contrast"] = c.binning.order_contrast;
  root["binning"] = binning;
  root["peaks"] = ordered_json{{"prominence_fraction", c.peaks.prominence_fraction},
                               {"central_window", c.peaks.central_window},
                               {"fine_window", c.peaks.fine_window},
                               {"fit_points", c.peaks.fit_points},
                               {"roughness_limit", c.peaks.roughness_limit}};
  if (c.scaling) {
    root["scaling"] = ordered_json{{"mode", std::string(to_string(c.scaling->mode))},
                                   {"points", c.scaling->points},
                                   {"peak_density", c.scaling->peak_density},
                                   {"aspect", c.scaling->aspect}};
  }
  return root.dump(2) + "\n";
}

}  // namespace lambshift
