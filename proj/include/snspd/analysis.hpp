#pragma once

// Detector figures of merit from bench traces.

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "snspd/calibration.hpp"
#include "snspd/errors.hpp"

namespace snspd {

/// Tolerance, in counts, on rate * integration_time being an integer.
inline constexpr double kCountGranularityTol = 1e-6;

inline void check_granularity(double rate, double integration_time, const std::string& what) {
  const double counts = rate * integration_time;
  const double nearest = std::round(counts);
  if (std::abs(counts - nearest) > kCountGranularityTol * std::max(1.0, nearest)) {
    std::ostringstream os;
    os << what << " " << rate << " Hz is not a whole number of counts in " << integration_time
       << " s (" << counts << " counts)";
    fail(ErrorKind::GranularityViolation, os.str());
  }
}

inline double rate_from_counts(long long counts, double integration_time) {
  require(counts >= 0, ErrorKind::InvalidArgument, "counts must be >= 0");
  require(integration_time > 0.0, ErrorKind::InvalidArgument, "integration time must be > 0");
  return static_cast<double>(counts) / integration_time;
}

struct CountPoint {
  double bias = 0.0;         // A
  double photon_rate = 0.0;  // Hz, counts under illumination
  double dark_rate = 0.0;    // Hz
};

class CountTrace {
 public:
  CountTrace(double integration_time, std::vector<CountPoint> points)
      : integration_time_(integration_time), points_(std::move(points)) {
    require(std::isfinite(integration_time_) && integration_time_ > 0.0,
            ErrorKind::InvalidArgument, "integration_time must be > 0");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const auto& p = points_[i];
      require(std::isfinite(p.bias), ErrorKind::InvalidArgument, "bias must be finite");
      if (i > 0) {
        require(p.bias > points_[i - 1].bias, ErrorKind::InvalidArgument,
                "bias must be strictly increasing");
      }
      require(std::isfinite(p.photon_rate) && p.photon_rate >= 0.0 &&
                  std::isfinite(p.dark_rate) && p.dark_rate >= 0.0,
              ErrorKind::InvalidArgument, "count rates must be finite and >= 0");
      std::ostringstream at;
      at << "at bias " << p.bias << " A:";
      check_granularity(p.photon_rate, integration_time_, at.str() + " photon rate");
      check_granularity(p.dark_rate, integration_time_, at.str() + " dark rate");
    }
  }

  double integration_time() const { return integration_time_; }
  const std::vector<CountPoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

  /// Index of the point at `bias`; BiasNotFound if none matches.
  std::size_t index_of(double bias) const {
    double spacing = std::abs(bias);
    for (std::size_t i = 1; i < points_.size(); ++i) {
      spacing = std::min(spacing, points_[i].bias - points_[i - 1].bias);
    }
    const double tol = 1e-6 * (spacing > 0.0 ? spacing : 1.0);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (std::abs(points_[i].bias - bias) <= tol) return i;
    }
    std::ostringstream os;
    os << "bias " << bias << " A not in the trace";
    fail(ErrorKind::BiasNotFound, os.str());
  }

 private:
  double integration_time_;
  std::vector<CountPoint> points_;
};

struct EfficiencyReport {
  double ode = 0.0;
  double ode_sigma = 0.0;
  double bias = 0.0;
  double wavelength = 0.0;
  double photon_rate = 0.0;
  double dark_rate = 0.0;
  double sigma_counts = 0.0;
  PhotonFlux flux;
  std::vector<double> neighbour_biases;  // the seven points behind sigma_counts
};

/// Indices of the `count` points nearest to `bias`, including the point
/// itself, ties resolved toward lower bias. Returned in bias order.
inline std::vector<std::size_t> nearest_points(const CountTrace& trace, double bias,
                                               std::size_t count) {
  std::vector<std::size_t> idx(trace.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& p = trace.points();
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::abs(p[a].bias - bias);
    const double db = std::abs(p[b].bias - bias);
    if (da != db) return da < db;
    return p[a].bias < p[b].bias;
  });
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Dark-subtracted counts over photon flux at one bias point, with the count
/// scatter of the seven nearest points and the flux uncertainty in quadrature.
inline EfficiencyReport extract_ode(const CountTrace& trace, double at_bias,
                                    const PhotonFlux& flux, double wavelength = 0.0) {
  constexpr std::size_t kNeighbours = 7;
  if (trace.size() < kNeighbours) {
    fail(ErrorKind::InsufficientPoints, "trace has " + std::to_string(trace.size()) +
                                            " points; at least 7 are needed");
  }
  require(std::isfinite(flux.phi) && flux.phi > 0.0, ErrorKind::InvalidArgument,
          "photon flux must be > 0");
  require(std::isfinite(flux.sigma) && flux.sigma >= 0.0, ErrorKind::InvalidArgument,
          "flux sigma must be >= 0");
  const std::size_t i = trace.index_of(at_bias);
  const auto& pt = trace.points()[i];

  EfficiencyReport r;
  r.bias = pt.bias;
  r.wavelength = wavelength;
  r.photon_rate = pt.photon_rate;
  r.dark_rate = pt.dark_rate;
  r.flux = flux;
  r.ode = (pt.photon_rate - pt.dark_rate) / flux.phi;
  if (r.ode > 1.0 && r.ode <= 1.0 + 1e-9) r.ode = 1.0;  // flux round-off
  if (!(r.ode >= 0.0 && r.ode <= 1.0)) {
    std::ostringstream os;
    os << "ODE " << r.ode << " outside [0, 1]: counts and flux are inconsistent";
    fail(ErrorKind::InvalidArgument, os.str());
  }

  std::vector<double> rates;
  for (std::size_t j : nearest_points(trace, pt.bias, kNeighbours)) {
    rates.push_back(trace.points()[j].photon_rate);
    r.neighbour_biases.push_back(trace.points()[j].bias);
  }
  r.sigma_counts = sample_stddev(rates);
  const double count_term = pt.photon_rate > 0.0 ? r.sigma_counts / pt.photon_rate : 0.0;
  const double flux_term = flux.sigma / flux.phi;
  r.ode_sigma = r.ode * std::hypot(count_term, flux_term);
  return r;
}

struct PlateauOptions {
  double flatness = 0.05;  // max neighbour step relative to the interval mean
  std::size_t min_points = 3;
  double dark_margin = 10.0;  // interval mean rate over mean dark rate
};

struct BiasInterval {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Longest contiguous run of flat, well-above-dark count rates. Ties go to
/// the run at higher bias.
inline std::optional<BiasInterval> detect_plateau(const CountTrace& trace,
                                                  const PlateauOptions& opt = {}) {
  if (trace.size() < 5) {
    fail(ErrorKind::InsufficientPoints, "plateau detection needs at least 5 points");
  }
  require(opt.min_points >= 2, ErrorKind::InvalidArgument, "min_points must be >= 2");
  const auto& p = trace.points();
  const std::size_t n = p.size();
  std::optional<BiasInterval> best;
  for (std::size_t a = 0; a < n; ++a) {
    double sum_rate = 0.0;
    double sum_dark = 0.0;
    double max_step = 0.0;
    for (std::size_t b = a; b < n; ++b) {
      sum_rate += p[b].photon_rate;
      sum_dark += p[b].dark_rate;
      if (b > a) max_step = std::max(max_step, std::abs(p[b].photon_rate - p[b - 1].photon_rate));
      const std::size_t len = b - a + 1;
      if (len < opt.min_points) continue;
      const double mean_rate = sum_rate / static_cast<double>(len);
      const double mean_dark = sum_dark / static_cast<double>(len);
      if (!(mean_rate > opt.dark_margin * mean_dark) || mean_rate <= 0.0) continue;
      if (max_step > opt.flatness * mean_rate) continue;
      const std::size_t best_len = best ? best->last - best->first + 1 : 0;
      if (len >= best_len) best = BiasInterval{p[a].bias, p[b].bias, a, b};
    }
  }
  return best;
}

struct IVPoint {
  double bias = 0.0;     // A
  double voltage = 0.0;  // V
};

inline constexpr double kDefaultSwitchThreshold = 50e-6;  // V

/// Bias of the last superconducting point before the first |V| >= threshold.
inline double switching_current(const std::vector<IVPoint>& iv,
                                 double v_threshold = kDefaultSwitchThreshold) {
  require(std::isfinite(v_threshold) && v_threshold > 0.0, ErrorKind::InvalidArgument,
          "voltage threshold must be > 0");
  for (std::size_t i = 1; i < iv.size(); ++i) {
    require(iv[i].bias > iv[i - 1].bias, ErrorKind::InvalidArgument,
            "IV bias must be strictly increasing");
  }
  for (std::size_t i = 0; i < iv.size(); ++i) {
    if (std::abs(iv[i].voltage) >= v_threshold) {
      if (i == 0) {
        fail(ErrorKind::NoSwitch,
             "trace is already above the voltage threshold at its first point (switch at origin)");
      }
      return iv[i - 1].bias;
    }
  }
  std::ostringstream os;
  os << "voltage never reaches " << v_threshold << " V";
  fail(ErrorKind::NoSwitch, os.str());
}

struct LinearityFit {
  double slope = 0.0;  // decades of rate per decade of attenuation
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points_used = 0;
};

/// Least squares of log10(rate) against -dB/10; points at or below
/// `rate_floor` are ignored.
inline LinearityFit linearity_fit(const std::vector<std::pair<double, double>>& db_rate,
                                  double rate_floor = 0.0) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [db, rate] : db_rate) {
    require(std::isfinite(db) && std::isfinite(rate), ErrorKind::InvalidArgument,
            "linearity data must be finite");
    if (rate > rate_floor) {
      x.push_back(-db / 10.0);
      y.push_back(std::log10(rate));
    }
  }
  if (x.size() < 3) {
    fail(ErrorKind::InsufficientPoints, "linearity fit needs >= 3 points above the rate floor");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 1e-24 * std::max(1.0, mx * mx) * n)) {
    fail(ErrorKind::DegenerateFit, "all attenuation settings are equal");
  }
  LinearityFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.points_used = x.size();
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

struct JitterHistogram {
  double bin_width = 0.0;  // s
  double t0 = 0.0;         // left edge of the first bin
  std::vector<double> counts;
};

struct JitterFit {
  double fwhm = 0.0;  // s
  double sigma = 0.0;
  double center = 0.0;
  double amplitude = 0.0;
  double background = 0.0;
  bool resolution_limited = false;
  std::string warning;
};

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

namespace detail {

struct GaussianResidual {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::vector<double>* t;
  const std::vector<double>* y;
  const std::vector<double>* w;

  int inputs() const { return 4; }
  int values() const { return static_cast<int>(t->size()); }

  // Parameters: amplitude, center, sigma, background. Times in units of the
  // bin width keep the problem well scaled.
  int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double u = ((*t)[i] - p(1)) / p(2);
      r(static_cast<Eigen::Index>(i)) = (*w)[i] * (p(0) * std::exp(-0.5 * u * u) + p(3) - (*y)[i]);
    }
    return 0;
  }

  int df(const Eigen::VectorXd& p, Eigen::MatrixXd& J) const {
    for (std::size_t i = 0; i < t->size(); ++i) {
      const double u = ((*t)[i] - p(1)) / p(2);
      const double g = std::exp(-0.5 * u * u);
      const auto r = static_cast<Eigen::Index>(i);
      J(r, 0) = (*w)[i] * g;
      J(r, 1) = (*w)[i] * p(0) * g * u / p(2);
      J(r, 2) = (*w)[i] * p(0) * g * u * u / p(2);
      J(r, 3) = (*w)[i];
    }
    return 0;
  }
};

}  // namespace detail

/// Gaussian plus flat background fitted by Levenberg-Marquardt with Poisson
/// weights; FWHM = 2 sqrt(2 ln 2) sigma. Histograms with fewer than five
/// non-empty bins cannot constrain the fit and are reported as
/// resolution-limited (FWHM bounded by the occupied span).
inline JitterFit jitter_fwhm(const JitterHistogram& h) {
  require(std::isfinite(h.bin_width) && h.bin_width > 0.0, ErrorKind::InvalidArgument,
          "bin width must be > 0");
  std::size_t nonempty = 0;
  double total = 0.0;
  for (double c : h.counts) {
    require(std::isfinite(c) && c >= 0.0, ErrorKind::InvalidArgument,
            "histogram counts must be >= 0");
    if (c > 0.0) ++nonempty;
    total += c;
  }
  if (total <= 0.0) fail(ErrorKind::FitFailure, "histogram is empty");

  // Work in bin units.
  std::vector<double> t(h.counts.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) + 0.5;

  if (nonempty < 5) {
    JitterFit f;
    f.resolution_limited = true;
    f.fwhm = h.bin_width * static_cast<double>(nonempty);
    double m = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) m += t[i] * h.counts[i];
    f.center = h.t0 + m / total * h.bin_width;
    f.amplitude = *std::max_element(h.counts.begin(), h.counts.end());
    std::ostringstream os;
    os << "only " << nonempty << " non-empty bin(s): width below the " << h.bin_width
       << " s bin resolution, FWHM is an upper bound";
    f.warning = os.str();
    return f;
  }

  // Moment-based start.
  const double bg0 = *std::min_element(h.counts.begin(), h.counts.end());
  double s0 = 0.0;
  double s1 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double c = h.counts[i] - bg0;
    s0 += c;
    s1 += c * t[i];
  }
  const double mean = s0 > 0.0 ? s1 / s0 : t[t.size() / 2];
  double s2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s2 += (h.counts[i] - bg0) * (t[i] - mean) * (t[i] - mean);
  const double sd0 = std::max(s0 > 0.0 ? std::sqrt(s2 / s0) : 1.0, 0.3);

  std::vector<double> w(h.counts.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::sqrt(std::max(h.counts[i], 1.0));

  detail::GaussianResidual fn{&t, &h.counts, &w};
  Eigen::VectorXd p(4);
  p << *std::max_element(h.counts.begin(), h.counts.end()) - bg0, mean, sd0, bg0;
  Eigen::LevenbergMarquardt<detail::GaussianResidual> lm(fn);
  lm.parameters.maxfev = 2000;
  lm.parameters.xtol = 1e-12;
  lm.parameters.ftol = 1e-12;
  const auto status = lm.minimize(p);

  Eigen::VectorXd res(static_cast<Eigen::Index>(t.size()));
  fn(p, res);
  const double chi2 = res.squaredNorm();
  const double dof = std::max<double>(1.0, static_cast<double>(t.size()) - 4.0);
  const double sigma = std::abs(p(2));
  const bool sane = std::isfinite(chi2) && std::isfinite(sigma) && sigma > 0.0 && p(0) > 0.0 &&
                    p(1) >= 0.0 && p(1) <= static_cast<double>(t.size());
  const bool ok_status = status == Eigen::LevenbergMarquardtSpace::RelativeReductionTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::RelativeErrorTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::RelativeErrorAndReductionTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::CosinusTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::XtolTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::FtolTooSmall ||
                         status == Eigen::LevenbergMarquardtSpace::GtolTooSmall;
  if (!sane || !ok_status) {
    std::ostringstream os;
    os << "Gaussian fit failed (status " << static_cast<int>(status) << ", reduced chi2 "
       << chi2 / dof << ", amplitude " << p(0) << ", center bin " << p(1) << ", sigma bins "
       << p(2) << ", background " << p(3) << ")";
    fail(ErrorKind::FitFailure, os.str());
  }

  JitterFit f;
  f.sigma = sigma * h.bin_width;
  f.fwhm = kFwhmPerSigma * f.sigma;
  f.center = h.t0 + p(1) * h.bin_width;
  f.amplitude = p(0);
  f.background = p(3);
  return f;
}

struct ExtinctionResult {
  double db = 0.0;
  bool lower_bound = false;  // uncoupled rate was zero; db uses the 1/T floor
  std::string text;
};

/// 10 log10(coupled / uncoupled). A zero uncoupled rate gives a lower bound at
/// the counter floor 1 / integration_time.
inline ExtinctionResult extinction_ratio(double coupled_rate, double uncoupled_rate,
                                         std::optional<double> integration_time = {}) {
  require(std::isfinite(coupled_rate) && coupled_rate > 0.0, ErrorKind::InvalidArgument,
          "coupled rate must be > 0");
  require(std::isfinite(uncoupled_rate) && uncoupled_rate >= 0.0, ErrorKind::InvalidArgument,
          "uncoupled rate must be >= 0");
  ExtinctionResult r;
  std::ostringstream os;
  if (uncoupled_rate > 0.0) {
    r.db = 10.0 * std::log10(coupled_rate / uncoupled_rate);
    os << r.db << " dB";
  } else {
    if (!integration_time) {
      fail(ErrorKind::DegenerateDenominator,
           "uncoupled rate is zero and no integration time is given for the counter floor");
    }
    require(*integration_time > 0.0, ErrorKind::InvalidArgument, "integration time must be > 0");
    r.lower_bound = true;
    r.db = 10.0 * std::log10(coupled_rate * *integration_time);
    os << "> " << r.db << " dB";
  }
  r.text = os.str();
  return r;
}

/// Dark count rate at one bias point.
inline double dark_count_rate(const CountTrace& trace, double bias) {
  const auto& p = trace.points()[trace.index_of(bias)];
  check_granularity(p.dark_rate, trace.integration_time(), "dark rate");
  return p.dark_rate;
}

}  // namespace snspd
