#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "snspd/errors.hpp"

namespace snspd {

/// Complex refractive index n - i k. Passive media have k >= 0.
struct ComplexIndex {
  double n = 1.0;
  double k = 0.0;

  /// Relative permittivity (n - i k)^2 under the exp(-i beta z) convention.
  std::complex<double> permittivity() const {
    const std::complex<double> index(n, -k);
    return index * index;
  }

  friend bool operator==(const ComplexIndex&, const ComplexIndex&) = default;
};

struct DispersionPoint {
  double wavelength = 0.0;  // m
  double n = 1.0;
  double k = 0.0;
};

/// A named medium with a tabulated dispersion n(lambda), k(lambda).
///
/// Lookup interpolates linearly between knots and refuses to extrapolate.
class Material {
 public:
  Material() = default;

  Material(std::string name, std::vector<DispersionPoint> table)
      : name_(std::move(name)), table_(std::move(table)) {
    require(!table_.empty(), ErrorKind::InvalidArgument,
            "material '" + name_ + "' has an empty dispersion table");
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const auto& p = table_[i];
      require(std::isfinite(p.wavelength) && p.wavelength > 0.0 && std::isfinite(p.n) &&
                  std::isfinite(p.k),
              ErrorKind::InvalidArgument, "material '" + name_ + "' has a non-finite entry");
      require(p.k >= 0.0, ErrorKind::InvalidArgument,
              "material '" + name_ + "' has k < 0 (gain media are not supported)");
      if (i > 0) {
        require(p.wavelength > table_[i - 1].wavelength, ErrorKind::InvalidArgument,
                "material '" + name_ + "' wavelengths must be strictly increasing");
      }
    }
  }

  /// Non-dispersive medium; valid at any wavelength in [lo, hi].
  static Material constant(std::string name, double n, double k = 0.0, double lo = 1e-7,
                           double hi = 1e-4) {
    return Material(std::move(name), {{lo, n, k}, {hi, n, k}});
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<DispersionPoint>& table() const noexcept { return table_; }

  double min_wavelength() const { return table_.front().wavelength; }
  double max_wavelength() const { return table_.back().wavelength; }

  bool is_absorbing_at(double wavelength) const;

  friend bool operator==(const Material& a, const Material& b) {
    if (a.name_ != b.name_ || a.table_.size() != b.table_.size()) return false;
    for (std::size_t i = 0; i < a.table_.size(); ++i) {
      const auto& p = a.table_[i];
      const auto& q = b.table_[i];
      if (p.wavelength != q.wavelength || p.n != q.n || p.k != q.k) return false;
    }
    return true;
  }

 private:
  std::string name_;
  std::vector<DispersionPoint> table_;
};

inline ComplexIndex material_at(const Material& material, double wavelength) {
  const auto& table = material.table();
  require(!table.empty(), ErrorKind::InvalidArgument, "material has no dispersion data");
  if (!(wavelength >= table.front().wavelength && wavelength <= table.back().wavelength)) {
    fail(ErrorKind::OutOfRange, "wavelength " + std::to_string(wavelength) +
                                    " m outside the dispersion table of '" + material.name() +
                                    "'");
  }
  auto it = std::lower_bound(
      table.begin(), table.end(), wavelength,
      [](const DispersionPoint& p, double w) { return p.wavelength < w; });
  if (it->wavelength == wavelength) return {it->n, it->k};
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double t = (wavelength - lo.wavelength) / (hi.wavelength - lo.wavelength);
  return {lo.n + t * (hi.n - lo.n), lo.k + t * (hi.k - lo.k)};
}

inline bool Material::is_absorbing_at(double wavelength) const {
  return material_at(*this, wavelength).k > 0.0;
}

/// Built-in media for the silicon/silicon-nitride hybrid converter.
///
/// The NbTiN entry is a placeholder in the range reported for thin NbTiN films
/// near 1550 nm. Replace it with measured constants for quantitative work.
namespace materials {

inline Material vacuum() { return Material::constant("vacuum", 1.0); }

inline Material silicon() {
  return Material("si", {{1.20e-6, 3.519, 0.0},
                         {1.30e-6, 3.504, 0.0},
                         {1.40e-6, 3.491, 0.0},
                         {1.50e-6, 3.481, 0.0},
                         {1.60e-6, 3.473, 0.0},
                         {1.70e-6, 3.466, 0.0}});
}

inline Material silicon_dioxide() {
  return Material("sio2", {{1.20e-6, 1.4485, 0.0},
                           {1.30e-6, 1.4469, 0.0},
                           {1.40e-6, 1.4458, 0.0},
                           {1.50e-6, 1.4446, 0.0},
                           {1.60e-6, 1.4436, 0.0},
                           {1.70e-6, 1.4425, 0.0}});
}

inline Material silicon_nitride() {
  return Material("sin", {{1.20e-6, 2.004, 0.0},
                          {1.30e-6, 2.001, 0.0},
                          {1.40e-6, 1.999, 0.0},
                          {1.50e-6, 1.997, 0.0},
                          {1.60e-6, 1.995, 0.0},
                          {1.70e-6, 1.994, 0.0}});
}

inline Material nbtin_placeholder() {
  return Material("nbtin", {{1.20e-6, 4.40, 5.00},
                            {1.30e-6, 4.65, 5.25},
                            {1.40e-6, 4.90, 5.50},
                            {1.50e-6, 5.10, 5.70},
                            {1.55e-6, 5.20, 5.80},
                            {1.60e-6, 5.30, 5.90},
                            {1.70e-6, 5.50, 6.10}});
}

inline std::vector<Material> defaults() {
  return {vacuum(), silicon(), silicon_dioxide(), silicon_nitride(), nbtin_placeholder()};
}

}  // namespace materials

}  // namespace snspd
