#pragma once

// Off-chip loss chain and the photon flux delivered to the detector.

#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snspd/errors.hpp"
#include "snspd/units.hpp"

namespace snspd {

/// Laser power and the attenuation between the laser and the on-chip detector.
/// Only the fiber chain carries uncertainty by default; the optional per-stage
/// sigmas are added in quadrature.
struct LossBudget {
  double p_in = 0.0;          // W
  double wavelength = 0.0;    // m
  double db_fiber = 0.0;      // laser to fiber facet
  double db_coupler = 0.0;    // PIC facet
  double db_attenuator = 0.0;
  double db_fiber_sigma = 0.0;
  double db_extra = 0.0;  // e.g. an on-chip coupler, 0 when tuned to its optimum
  std::optional<double> db_coupler_sigma;
  std::optional<double> db_attenuator_sigma;

  double total_db() const { return db_fiber + db_coupler + db_attenuator + db_extra; }

  double total_sigma_db() const {
    const double c = db_coupler_sigma.value_or(0.0);
    const double a = db_attenuator_sigma.value_or(0.0);
    return std::sqrt(db_fiber_sigma * db_fiber_sigma + c * c + a * a);
  }

  void validate() const {
    require(std::isfinite(p_in) && p_in > 0.0, ErrorKind::InvalidArgument, "p_in must be > 0");
    require(std::isfinite(wavelength) && wavelength > 0.0, ErrorKind::InvalidArgument,
            "wavelength must be > 0");
    auto non_negative = [](double v, const char* what) {
      require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidArgument,
              std::string(what) + " must be finite and >= 0 dB");
    };
    non_negative(db_fiber, "db_fiber");
    non_negative(db_coupler, "db_coupler");
    non_negative(db_attenuator, "db_attenuator");
    non_negative(db_fiber_sigma, "db_fiber_sigma");
    non_negative(db_extra, "db_extra");
    if (db_coupler_sigma) non_negative(*db_coupler_sigma, "db_coupler_sigma");
    if (db_attenuator_sigma) non_negative(*db_attenuator_sigma, "db_attenuator_sigma");
  }
};

struct PhotonFlux {
  double phi = 0.0;    // photons / s
  double sigma = 0.0;  // photons / s
};

inline PhotonFlux photon_flux(const LossBudget& b) {
  b.validate();
  PhotonFlux f;
  f.phi = b.p_in / photon_energy(b.wavelength) * std::pow(10.0, -b.total_db() / 10.0);
  f.sigma = f.phi * std::numbers::ln10 / 10.0 * b.total_sigma_db();
  return f;
}

/// Per-facet insertion loss from a loopback measurement, assuming both facets
/// contribute equally.
inline double facet_loss_from_loopback(double loopback_total_db, double db_fiber_in,
                                       double db_fiber_out) {
  require(std::isfinite(loopback_total_db) && std::isfinite(db_fiber_in) &&
              std::isfinite(db_fiber_out),
          ErrorKind::InvalidArgument, "loopback losses must be finite");
  const double facets = loopback_total_db - db_fiber_in - db_fiber_out;
  if (facets < 0.0) {
    std::ostringstream os;
    os << "loopback total " << loopback_total_db << " dB is below the fiber losses "
       << db_fiber_in << " + " << db_fiber_out << " dB";
    fail(ErrorKind::NegativeLoss, os.str());
  }
  return facets / 2.0;
}

inline double chain_db(const std::vector<double>& stages) {
  for (double s : stages) {
    require(std::isfinite(s), ErrorKind::InvalidArgument, "loss stage must be finite");
  }
  return std::accumulate(stages.begin(), stages.end(), 0.0);
}

}  // namespace snspd
