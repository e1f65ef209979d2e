#pragma once

// Slice-wise mode evolution along a converter and the two-segment detection
// efficiency built from it.
//
// Each slice contributes k(z) = 2 pi n'/lambda and the amplitude attenuation
// alpha(z) = 2 pi n''/lambda. Between slices alpha is taken piecewise linear,
// so the power survival between any two positions is exp(-2 * integral alpha),
// which is exactly the trapezoid rule at the slice positions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "snspd/detail/parallel.hpp"
#include "snspd/errors.hpp"
#include "snspd/geometry.hpp"
#include "snspd/mode_solver.hpp"

namespace snspd {

struct Slice {
  double z = 0.0;
  double k = 0.0;      // 1/m
  double alpha = 0.0;  // 1/m, amplitude attenuation
  std::complex<double> n_eff;
};

/// Power transmissions across the abrupt tips of the detector and PIC tapers.
struct TipTransmissions {
  double t_det_sq = 0.995;
  double t_pic_sq = 0.925;

  void validate() const {
    require(t_det_sq > 0.0 && t_det_sq <= 1.0, ErrorKind::InvalidArgument,
            "t_det_sq must be in (0, 1]");
    require(t_pic_sq > 0.0 && t_pic_sq <= 1.0, ErrorKind::InvalidArgument,
            "t_pic_sq must be in (0, 1]");
  }
};

/// Two-segment efficiency from the segment survivals and tip transmissions.
inline double detection_efficiency(double a1_sq, double a2_sq, const TipTransmissions& tips) {
  tips.validate();
  require(a1_sq >= 0.0 && a1_sq <= 1.0 && a2_sq >= 0.0 && a2_sq <= 1.0,
          ErrorKind::InvalidArgument, "segment survivals must lie in [0, 1]");
  return tips.t_det_sq * (1.0 - a1_sq) + tips.t_det_sq * tips.t_pic_sq * a1_sq * (1.0 - a2_sq);
}

class AbsorptionProfile {
 public:
  AbsorptionProfile() = default;

  AbsorptionProfile(double wavelength, std::vector<Slice> slices)
      : wavelength_(wavelength), slices_(std::move(slices)) {
    require(slices_.size() >= 2, ErrorKind::InvalidArgument, "profile needs >= 2 slices");
    cumulative_.assign(slices_.size(), 0.0);
    phase_.assign(slices_.size(), 0.0);
    survival_.assign(slices_.size(), 1.0);
    for (std::size_t j = 0; j < slices_.size(); ++j) {
      const auto& s = slices_[j];
      require(std::isfinite(s.z) && std::isfinite(s.alpha) && std::isfinite(s.k),
              ErrorKind::InvalidArgument, "non-finite slice data");
      require(s.alpha >= 0.0, ErrorKind::InvalidArgument,
              "negative attenuation at z = " + std::to_string(s.z));
      if (j == 0) continue;
      const auto& p = slices_[j - 1];
      require(s.z > p.z, ErrorKind::InvalidArgument, "slice positions must strictly increase");
      const double h = s.z - p.z;
      cumulative_[j] = cumulative_[j - 1] + 0.5 * (p.alpha + s.alpha) * h;
      phase_[j] = phase_[j - 1] + 0.5 * (p.k + s.k) * h;
      survival_[j] = std::exp(-2.0 * cumulative_[j]);
    }
  }

  double wavelength() const { return wavelength_; }
  const std::vector<Slice>& slices() const { return slices_; }
  const std::vector<double>& survival() const { return survival_; }
  double z_begin() const { return slices_.front().z; }
  double z_end() const { return slices_.back().z; }

  /// Integral of alpha from the first slice to z.
  double attenuation_integral(double z) const {
    const std::size_t j = locate(z);
    const auto& a = slices_[j];
    if (j + 1 == slices_.size()) return cumulative_[j];
    const auto& b = slices_[j + 1];
    const double h = b.z - a.z;
    const double s = std::clamp(z - a.z, 0.0, h);
    return cumulative_[j] + a.alpha * s + 0.5 * (b.alpha - a.alpha) * s * s / h;
  }

  /// |A(z)|^2 relative to the first slice.
  double survival_at(double z) const { return std::exp(-2.0 * attenuation_integral(z)); }

  /// |A|^2 accumulated over [a, b].
  double survival_between(double a, double b) const {
    require(a <= b, ErrorKind::InvalidArgument, "survival_between needs a <= b");
    return std::exp(-2.0 * (attenuation_integral(b) - attenuation_integral(a)));
  }

  /// Accumulated phase (integral of k) at the slice positions.
  const std::vector<double>& phase() const { return phase_; }

  /// |ODE(n) - ODE(n/2)| from the build, NaN if not computed.
  double convergence_estimate() const { return convergence_; }
  void set_convergence_estimate(double v) { convergence_ = v; }

  /// Number of distinct mode solves behind the slices (after memoization).
  std::size_t distinct_solves() const { return distinct_solves_; }
  void set_distinct_solves(std::size_t n) { distinct_solves_ = n; }

 private:
  std::size_t locate(double z) const {
    const double span = z_end() - z_begin();
    const double slack = kZTolerance * std::max(std::abs(z_end()), span);
    if (!(z >= z_begin() - slack && z <= z_end() + slack)) {
      std::ostringstream os;
      os << "z = " << z << " m outside the profile [" << z_begin() << ", " << z_end() << "] m";
      fail(ErrorKind::OutOfRange, os.str());
    }
    auto it = std::upper_bound(slices_.begin(), slices_.end(), z,
                               [](double v, const Slice& s) { return v < s.z; });
    if (it == slices_.begin()) return 0;
    return static_cast<std::size_t>(std::distance(slices_.begin(), it) - 1);
  }

  double wavelength_ = 0.0;
  std::vector<Slice> slices_;
  std::vector<double> cumulative_;
  std::vector<double> phase_;
  std::vector<double> survival_;
  double convergence_ = std::numeric_limits<double>::quiet_NaN();
  std::size_t distinct_solves_ = 0;
};

/// Two-segment efficiency: hairpin over [z1, z2] with the PIC present, then
/// [z2, z_end] on the detector waveguide alone.
inline double compute_ode(const AbsorptionProfile& profile, double z1, double z2,
                          const TipTransmissions& tips, std::optional<double> z_end = {}) {
  const double end = z_end.value_or(profile.z_end());
  if (!(z1 < z2)) fail(ErrorKind::InvalidArgument, "compute_ode needs z1 < z2");
  require(z2 <= end, ErrorKind::InvalidArgument, "compute_ode needs z2 <= end");
  const double a1 = profile.survival_between(z1, z2);
  const double a2 = profile.survival_between(z2, end);
  return detection_efficiency(a1, a2, tips);
}

/// Memoizes fundamental-mode solves by rasterized cross-section content.
/// Thread-safe; identical rasters (e.g. every slice past the PIC tip, or taper
/// widths that snap to the same cells) are solved once.
class ModeCache {
 public:
  std::optional<std::complex<double>> find(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }
  void insert(const std::string& key, std::complex<double> n_eff) {
    std::lock_guard lock(mutex_);
    entries_.emplace(key, n_eff);
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::complex<double>> entries_;
};

namespace detail {

/// Exact byte key of a raster plus everything else that feeds the operator.
inline std::string raster_key(const Raster& r, double wavelength, const SolverOptions& opt) {
  std::string key;
  auto put = [&key](const auto& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    key.append(p, p + sizeof(v));
  };
  put(r.nx);
  put(r.ny);
  put(r.dx);
  put(r.dy);
  put(wavelength);
  put(static_cast<int>(opt.polarization));
  put(static_cast<int>(opt.boundary_x));
  put(static_cast<int>(opt.boundary_y));
  put(opt.residual_tol);
  put(opt.require_guided);
  // Run-length encoded permittivity map.
  std::size_t p = 0;
  while (p < r.size()) {
    const auto e = r.eps[p];
    std::size_t q = p + 1;
    while (q < r.size() && r.eps[q] == e) ++q;
    put(e);
    put(q - p);
    p = q;
  }
  return key;
}

}  // namespace detail

struct ProfileOptions {
  SolverOptions solver;
  TipTransmissions tips;
  unsigned threads = 1;
  /// Shared across builds when set; otherwise a private cache is used.
  std::shared_ptr<ModeCache> cache;
};

/// Slice positions: n_slices uniform points over [z1, end], with z2 added
/// when it does not already coincide with one.
inline std::vector<double> slice_positions(const Segmentation& seg, int n_slices) {
  require(n_slices >= 2, ErrorKind::InvalidArgument, "n_slices must be >= 2");
  const double a = seg.z1;
  const double b = seg.end();
  require(b > a, ErrorKind::InvalidArgument, "empty hairpin extent");
  const double h = (b - a) / (n_slices - 1);
  std::vector<double> z(static_cast<std::size_t>(n_slices));
  for (int i = 0; i < n_slices; ++i) z[static_cast<std::size_t>(i)] = a + i * h;
  z.back() = b;
  const double snap = 1e-9 * h;
  bool has_z2 = false;
  for (auto& v : z) {
    if (std::abs(v - seg.z2) <= snap) {
      v = seg.z2;
      has_z2 = true;
    }
  }
  if (!has_z2 && seg.z2 < b) z.insert(std::upper_bound(z.begin(), z.end(), seg.z2), seg.z2);
  return z;
}

/// Evaluates `slice_at(z)` at every position (possibly in parallel) and
/// assembles the profile in position order.
inline AbsorptionProfile assemble_profile(double wavelength, const std::vector<double>& z,
                                          const std::function<Slice(double)>& slice_at,
                                          unsigned threads = 1) {
  std::vector<Slice> slices(z.size());
  detail::for_each_index(z.size(), threads, [&](std::size_t i) {
    try {
      slices[i] = slice_at(z[i]);
      slices[i].z = z[i];
    } catch (const Error& e) {
      std::ostringstream os;
      os << "at z = " << z[i] << " m: " << e.message();
      throw Error(e.kind(), os.str());
    }
  });
  return AbsorptionProfile(wavelength, std::move(slices));
}

namespace detail {

/// ODE of the profile thinned to every other uniform node (z2 and the end kept).
inline double half_resolution_ode(const AbsorptionProfile& fine, const Segmentation& seg,
                                  int n_slices, const TipTransmissions& tips) {
  const auto& s = fine.slices();
  const double h = (seg.end() - seg.z1) / (n_slices - 1);
  std::vector<Slice> coarse;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double t = (s[j].z - seg.z1) / h;
    const long long i = std::llround(t);
    const bool uniform_even = std::abs(t - static_cast<double>(i)) < 1e-6 && i % 2 == 0;
    if (uniform_even || j + 1 == s.size() || s[j].z == seg.z2) coarse.push_back(s[j]);
  }
  const AbsorptionProfile half(fine.wavelength(), std::move(coarse));
  return compute_ode(half, seg.z1, seg.z2, tips, seg.end());
}

}  // namespace detail

/// Fundamental mode of the converter cross-section at z, memoized in `cache`.
inline Slice converter_slice(const ConverterGeometry& geom, double wavelength, double z,
                             const SolverOptions& solver, ModeCache& cache) {
  const CrossSection cs = cross_section_at(geom, z);
  const Raster r = cs.rasterize(wavelength);
  const std::string key = detail::raster_key(r, wavelength, solver);
  std::complex<double> n_eff;
  if (auto hit = cache.find(key)) {
    n_eff = *hit;
  } else {
    n_eff = solve_modes(cs, wavelength, 1, solver).front().n_eff;
    cache.insert(key, n_eff);
  }
  const double k0 = free_space_wavenumber(wavelength);
  return {z, k0 * n_eff.real(), k0 * -n_eff.imag(), n_eff};
}

/// Mode-solves the converter at `n_slices` uniform positions over
/// [z1, z2 + dz2] (plus z2) and integrates the survival.
inline AbsorptionProfile build_absorption_profile(const ConverterGeometry& geom, double wavelength,
                                                  int n_slices, const ProfileOptions& opt = {}) {
  geom.validate();
  opt.tips.validate();
  auto cache = opt.cache ? opt.cache : std::make_shared<ModeCache>();
  const std::size_t before = cache->size();
  const auto z = slice_positions(geom.segmentation, n_slices);
  auto profile = assemble_profile(
      wavelength, z,
      [&](double zi) { return converter_slice(geom, wavelength, zi, opt.solver, *cache); },
      opt.threads);
  profile.set_distinct_solves(cache->size() - before);
  const auto& seg = geom.segmentation;
  const double fine = compute_ode(profile, seg.z1, seg.z2, opt.tips, seg.end());
  profile.set_convergence_estimate(std::abs(fine - detail::half_resolution_ode(profile, seg, n_slices, opt.tips)));
  return profile;
}

struct ConvergedOde {
  double ode = 0.0;
  int n_slices = 0;
  double last_change = 0.0;
  AbsorptionProfile profile;
  std::vector<std::pair<int, double>> history;  // (n_slices, ODE)
};

/// Doubles the slice count from 8 until successive ODEs differ by less than tol.
inline ConvergedOde ode_convergence(const ConverterGeometry& geom, double wavelength, double tol,
                                    ProfileOptions opt = {}) {
  require(std::isfinite(tol) && tol > 0.0, ErrorKind::InvalidArgument, "tol must be > 0");
  if (!opt.cache) opt.cache = std::make_shared<ModeCache>();
  const auto& seg = geom.segmentation;
  ConvergedOde out;
  int n = 8;
  out.profile = build_absorption_profile(geom, wavelength, n, opt);
  double prev = compute_ode(out.profile, seg.z1, seg.z2, opt.tips, seg.end());
  out.history.emplace_back(n, prev);
  while (true) {
    n *= 2;
    if (n > 1024) {
      std::ostringstream os;
      os << "ODE did not settle to " << tol << " by 1024 slices (last change "
         << out.last_change << ")";
      fail(ErrorKind::NonConvergence, os.str());
    }
    auto profile = build_absorption_profile(geom, wavelength, n, opt);
    const double cur = compute_ode(profile, seg.z1, seg.z2, opt.tips, seg.end());
    out.history.emplace_back(n, cur);
    out.last_change = std::abs(cur - prev);
    out.profile = std::move(profile);
    if (out.last_change < tol) {
      out.ode = cur;
      out.n_slices = n;
      return out;
    }
    prev = cur;
  }
}

/// Scales an absorbed-energy sweep so the aligned (0 degree) point maps to
/// `aligned_ode`. Output is sorted by angle.
inline std::vector<std::pair<double, double>> normalize_rotation_sweep(
    std::vector<std::pair<double, double>> sweep, double aligned_ode) {
  require(std::isfinite(aligned_ode) && aligned_ode >= 0.0 && aligned_ode <= 1.0,
          ErrorKind::InvalidArgument, "aligned ODE must lie in [0, 1]");
  std::stable_sort(sweep.begin(), sweep.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    require(std::isfinite(sweep[i].first) && std::isfinite(sweep[i].second),
            ErrorKind::InvalidArgument, "non-finite sweep entry");
    require(sweep[i].second >= 0.0, ErrorKind::InvalidArgument, "absorbed energy must be >= 0");
    if (i > 0) {
      require(sweep[i].first != sweep[i - 1].first, ErrorKind::InvalidArgument,
              "duplicate angle " + std::to_string(sweep[i].first));
    }
  }
  auto aligned = std::find_if(sweep.begin(), sweep.end(),
                              [](const auto& p) { return p.first == 0.0; });
  if (aligned == sweep.end()) {
    fail(ErrorKind::MissingAlignedPoint, "rotation sweep has no 0 degree entry");
  }
  const double u0 = aligned->second;
  require(u0 > 0.0, ErrorKind::InvalidArgument, "absorbed energy at 0 degrees must be > 0");
  for (auto& p : sweep) p.second = aligned_ode * p.second / u0;
  return sweep;
}

/// APPROXIMATE rotation model: each angle rebuilds the profile with the
/// detector stack shifted rigidly by (z - pivot) tan(theta). Ignores mode
/// conversion and tilt of the cross-section, so it cannot show the TM0
/// excitation seen in full 3D propagation.
inline std::vector<std::pair<double, double>> approximate_rotation_sweep(
    ConverterGeometry geom, double wavelength, const std::vector<double>& angles_deg,
    int n_slices, ProfileOptions opt = {}) {
  if (!opt.cache) opt.cache = std::make_shared<ModeCache>();
  // A common window so every angle sees identical padding.
  double widest = 0.0;
  for (double a : angles_deg) {
    auto g = geom;
    g.rotation_deg = a;
    g.validate();
    widest = std::max(widest, g.max_lateral_offset());
  }
  std::vector<std::pair<double, double>> out;
  for (double a : angles_deg) {
    auto g = geom;
    g.rotation_deg = a;
    g.grid.padding_x = geom.grid.padding_x + (widest - g.max_lateral_offset());
    const auto profile = build_absorption_profile(g, wavelength, n_slices, opt);
    const auto& seg = g.segmentation;
    out.emplace_back(a, compute_ode(profile, seg.z1, seg.z2, opt.tips, seg.end()));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

}  // namespace snspd
