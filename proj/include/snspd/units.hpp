#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "snspd/errors.hpp"

namespace snspd {

// CODATA 2018 exact values.
inline constexpr double kPlanck = 6.62607015e-34;      // J s
inline constexpr double kSpeedOfLight = 299792458.0;  // m / s

inline constexpr double kMicro = 1e-6;
inline constexpr double kNano = 1e-9;

constexpr double photon_energy(double wavelength_m) {
  return kPlanck * kSpeedOfLight / wavelength_m;
}

constexpr double free_space_wavenumber(double wavelength_m) {
  return 2.0 * std::numbers::pi / wavelength_m;
}

/// Physical dimension expected when parsing a quantity string.
enum class Dimension { Length, Power, Current, Voltage, Time, Frequency };

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::string_view base_symbol(Dimension d) {
  switch (d) {
    case Dimension::Length: return "m";
    case Dimension::Power: return "W";
    case Dimension::Current: return "A";
    case Dimension::Voltage: return "V";
    case Dimension::Time: return "s";
    case Dimension::Frequency: return "Hz";
  }
  return "";
}

inline bool prefix_scale(std::string_view prefix, double& scale) {
  struct Entry {
    std::string_view symbol;
    double scale;
  };
  static constexpr std::array<Entry, 9> table{{{"", 1.0},
                                               {"k", 1e3},
                                               {"M", 1e6},
                                               {"m", 1e-3},
                                               {"u", 1e-6},
                                               {"\xC2\xB5", 1e-6},  // micro sign
                                               {"\xCE\xBC", 1e-6},  // greek mu
                                               {"n", 1e-9},
                                               {"p", 1e-12}}};
  for (const auto& e : table) {
    if (e.symbol == prefix) {
      scale = e.scale;
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Parses "1.57um", "220 nm", "7.1uA", "0.1 s" or a bare number (already SI).
/// The result is always in the SI base unit of `dim`.
inline double parse_quantity(std::string_view text, Dimension dim) {
  const std::string_view s = detail::trim(text);
  double value = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || !std::isfinite(value)) {
    fail(ErrorKind::Config, "cannot parse quantity '" + std::string(text) + "'");
  }
  std::string_view unit = detail::trim(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
  if (unit.empty()) return value;

  const std::string_view base = detail::base_symbol(dim);
  if (unit.size() < base.size() || unit.substr(unit.size() - base.size()) != base) {
    fail(ErrorKind::Config, "quantity '" + std::string(text) + "' has unit incompatible with '" +
                                std::string(base) + "'");
  }
  double scale = 1.0;
  if (!detail::prefix_scale(unit.substr(0, unit.size() - base.size()), scale)) {
    fail(ErrorKind::Config, "unknown unit prefix in '" + std::string(text) + "'");
  }
  return value * scale;
}

}  // namespace snspd
