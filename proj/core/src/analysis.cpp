#include "lambshift/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "lambshift/error.hpp"

namespace lambshift {

double optical_depth(int atom_count, double sigma_x, double sigma_y) {
  return 3.0 * atom_count / (2.0 * sigma_x * sigma_y);
}

std::vector<Peak> local_peaks(std::span<const double> x, std::span<const double> y, double min_prominence) {
  const std::size_t n = y.size();
  std::vector<Peak> out;
  if (x.size() != n) throw AnalysisError("local_peaks: x and y differ in length");
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(y[i] > y[i - 1])) continue;
    // Walk across a plateau.
    std::size_t j = i;
    while (j + 1 < n && y[j + 1] == y[i]) ++j;
    if (j + 1 >= n || !(y[j + 1] < y[i])) continue;

    double left_min = y[i];
    for (std::size_t k = i; k-- > 0;) {
      if (y[k] > y[i]) break;
      left_min = std::min(left_min, y[k]);
    }
    double right_min = y[i];
    for (std::size_t k = j + 1; k < n; ++k) {
      if (y[k] > y[i]) break;
      right_min = std::min(right_min, y[k]);
    }
    const double prominence = y[i] - std::max(left_min, right_min);
    if (prominence >= min_prominence) out.push_back({x[i], y[i], prominence, i});
    i = j;
  }
  return out;
}

std::pair<double, double> refine_quadratic(std::span<const double> x, std::span<const double> y,
                                           std::size_t i, int points) {
  const std::size_t n = x.size();
  const std::size_t m = std::min<std::size_t>(points, n);
  std::size_t lo = i >= m / 2 ? i - m / 2 : 0;
  lo = std::min(lo, n - m);
  // Centre and scale the abscissa for conditioning.
  const double x0 = x[i];
  double scale = 0.0;
  for (std::size_t k = lo; k < lo + m; ++k) scale = std::max(scale, std::abs(x[k] - x0));
  if (m < 3 || scale == 0.0) return {x[i], y[i]};
  Eigen::MatrixXd a(m, 3);
  Eigen::VectorXd b(m);
  for (std::size_t k = 0; k < m; ++k) {
    const double t = (x[lo + k] - x0) / scale;
    a(k, 0) = t * t;
    a(k, 1) = t;
    a(k, 2) = 1.0;
    b(k) = y[lo + k];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  if (!(c(0) < 0.0)) return {x[i], y[i]};
  const double t = -c(1) / (2.0 * c(0));
  const double tmin = (x[lo] - x0) / scale;
  const double tmax = (x[lo + m - 1] - x0) / scale;
  if (t < tmin || t > tmax) return {x[i], y[i]};
  return {x0 + t * scale, c(0) * t * t + c(1) * t + c(2)};
}

PeakReport find_peaks(const SpectrumCurve& curve, const PeakSettings& settings) {
  const std::vector<double>& x = curve.detunings;
  const std::vector<double>& y = curve.i_total;
  if (x.size() < 3 || y.size() != x.size()) throw AnalysisError("find_peaks: need at least 3 samples");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw AnalysisError("find_peaks: detunings must increase");
  }
  PeakReport report;
  report.global_max = *std::max_element(y.begin(), y.end());
  if (!(report.global_max > 0.0)) throw AnalysisError("find_peaks: curve has no positive values");
  double variation = 0.0;
  for (std::size_t i = 1; i < y.size(); ++i) variation += std::abs(y[i] - y[i - 1]);
  report.roughness = variation / report.global_max;
  if (report.roughness >= settings.roughness_limit) {
    throw AnalysisError("find_peaks: curve too rough (total variation / max = " +
                        std::to_string(report.roughness) + "); average over more configurations");
  }

  const double threshold = settings.prominence_fraction * report.global_max;
  const std::vector<Peak> candidates = local_peaks(x, y, threshold);
  auto refined = [&](Peak p) {
    const auto [pos, height] = refine_quadratic(x, y, p.index, settings.fit_points);
    p.position = pos;
    p.height = height;
    return p;
  };

  const Peak* central = nullptr;
  auto consider_central = [&](double window) {
    for (const Peak& p : candidates) {
      if (std::abs(p.position) > window) continue;
      if (central == nullptr || std::abs(p.position) < std::abs(central->position)) central = &p;
    }
  };
  consider_central(settings.fine_window);
  if (central == nullptr) consider_central(settings.central_window);

  const Peak* left = nullptr;
  const Peak* right = nullptr;
  // Side peaks lie on either side of the central peak. Without one, they lie
  // outside the central window.
  const double lo = central ? central->position : -settings.central_window;
  const double hi = central ? central->position : settings.central_window;
  for (const Peak& p : candidates) {
    if (p.position < lo) {
      if (left == nullptr || p.prominence > left->prominence) left = &p;
    } else if (p.position > hi) {
      if (right == nullptr || p.prominence > right->prominence) right = &p;
    }
  }
  if (left) report.left = refined(*left);
  if (central) report.central = refined(*central);
  if (right) report.right = refined(*right);
  return report;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw AnalysisError("linear_fit: need at least 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw AnalysisError("linear_fit: x values are all equal");
  LinearFit fit;
  fit.points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.slope_stderr = n > 2 ? std::sqrt(ss_res / static_cast<double>(n - 2) / sxx) : 0.0;
  return fit;
}

RunConfig scaling_point_config(const RunConfig& base, const ScalingSettings& scaling, double point) {
  RunConfig c = base;
  c.scaling.reset();
  c.geometry.kind = GeometryInput::Kind::gaussian;
  c.geometry.atom_count.reset();
  c.geometry.density.reset();
  if (scaling.mode == ScalingMode::fixed_density_vary_size) {
    const auto& a = scaling.aspect;
    c.geometry.sigma = {point, point * a[1] / a[0], point * a[2] / a[0]};
    c.geometry.peak_density = scaling.peak_density;
  } else {
    c.geometry.peak_density = point;
  }
  return c;
}

ScalingTable scaling_sweep(const RunConfig& base, const EnsembleRunner& runner) {
  if (!base.scaling) throw ConfigError("scaling", "scaling settings are required");
  const ScalingSettings& scaling = *base.scaling;
  ScalingTable table;
  for (double point : scaling.points) {
    ScalingRow row;
    row.mode = scaling.mode;
    row.point = point;
    try {
      const RunConfig c = scaling_point_config(base, scaling, point);
      const GeometrySpec spec = c.geometry.resolve();
      const auto& g = std::get<GaussianEllipsoid>(spec.shape);
      row.atom_count = spec.atom_count;
      row.sigma_x = g.sigma_x;
      row.sigma_y = g.sigma_y;
      row.sigma_z = g.sigma_z;
      row.peak_density = peak_density(g, spec.atom_count);
      row.od = optical_depth(spec.atom_count, g.sigma_x, g.sigma_y);
      const EnsembleResult result = runner ? runner(c) : run_ensemble(c);
      const PeakReport peaks = find_peaks(result.forward, c.peaks);
      row.shift_left = peaks.collective_shift_left();
      row.shift_central = peaks.collective_shift_central();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

EnsembleResult angular_sweep(const RunConfig& base, std::span<const double> angles, const EnsembleRunner& runner) {
  RunConfig c = base;
  c.analysis.angles.assign(angles.begin(), angles.end());
  c.validate();
  return runner ? runner(c) : run_ensemble(c);
}

std::vector<std::string> invariant_violations(const InvariantReport& r, const InvariantLimits& l) {
  std::vector<std::string> out;
  auto check = [&](const char* name, double value, double limit) {
    if (!(value <= limit)) out.push_back(std::string(name) + " = " + std::to_string(value) + " exceeds " + std::to_string(limit));
  };
  check("matrix_asymmetry", r.matrix_asymmetry, l.symmetry);
  check("trace_m_real", r.trace_m_real, l.trace);
  check("imag_diagonal_error", r.imag_diagonal_error, l.imag_diagonal);
  check("orthonormality", r.orthonormality, l.orthonormality);
  check("eigen_residual", r.eigen_residual, l.eigen_residual);
  check("energy_sum", r.energy_sum, l.energy_sum);
  check("parseval", r.parseval, l.parseval);
  check("reconstruction", r.reconstruction, l.reconstruction);
  check("split_identity", r.split_identity, l.split_identity);
  check("solver_residual", r.solver_residual, l.solver_residual);
  check("backend_agreement", r.backend_agreement, l.backend_agreement);
  return out;
}

double histogram_peak_position(const EnergyHistogram& hist) {
  const auto& d = hist.density;
  if (d.empty()) throw AnalysisError("histogram_peak_position: empty histogram");
  const std::size_t i = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  const double c = hist.edges.center(static_cast<int>(i));
  if (i == 0 || i + 1 >= d.size()) return c;
  const double denom = d[i - 1] - 2.0 * d[i] + d[i + 1];
  if (!(denom < 0.0)) return c;
  const double offset = 0.5 * (d[i - 1] - d[i + 1]) / denom;
  return c + offset * hist.edges.width(static_cast<int>(i));
}

}  // namespace lambshift
