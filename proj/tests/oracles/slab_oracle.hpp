#pragma once

// Closed-form reference for the fundamental TE mode of a symmetric slab.
// Independent of the finite-difference solver.

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

struct SlabMode {
  double n_eff = 0.0;
  double power_in_core = 0.0;  // fraction of integral |E|^2 inside the core
  double confinement = 0.0;    // (n_core / n_eff) * power_in_core, the modal-loss factor
};

/// Even TE0 root of kappa tan(kappa a) = gamma, a = thickness / 2.
inline SlabMode symmetric_slab_te0(double n_core, double n_clad, double thickness,
                                   double wavelength) {
  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double a = thickness / 2.0;
  auto f = [&](double n) {
    const double kappa = k0 * std::sqrt(n_core * n_core - n * n);
    const double gamma = k0 * std::sqrt(n * n - n_clad * n_clad);
    return kappa * std::tan(kappa * a) - gamma;
  };
  // TE0 lies where kappa a in (0, pi/2); bracket accordingly.
  double lo = n_clad;
  const double kappa_cap = (std::numbers::pi / 2.0) / a;
  const double n_cap_sq = n_core * n_core - (kappa_cap / k0) * (kappa_cap / k0);
  if (n_cap_sq > lo * lo) lo = std::sqrt(n_cap_sq) + 1e-15;
  double hi = n_core - 1e-15;
  double flo = f(lo);
  if (flo * f(hi) > 0.0) throw std::runtime_error("slab oracle: no bracket");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  SlabMode m;
  m.n_eff = 0.5 * (lo + hi);
  const double kappa = k0 * std::sqrt(n_core * n_core - m.n_eff * m.n_eff);
  const double gamma = k0 * std::sqrt(m.n_eff * m.n_eff - n_clad * n_clad);
  const double core = a + std::sin(2.0 * kappa * a) / (2.0 * kappa);
  const double c = std::cos(kappa * a);
  const double tails = c * c / gamma;
  m.power_in_core = core / (core + tails);
  m.confinement = n_core / m.n_eff * m.power_in_core;
  return m;
}

/// Even TM0 root of kappa tan(kappa a) = (n_core / n_clad)^2 gamma.
inline double symmetric_slab_tm0(double n_core, double n_clad, double thickness,
                                 double wavelength) {
  const double k0 = 2.0 * std::numbers::pi / wavelength;
  const double a = thickness / 2.0;
  const double ratio = (n_core * n_core) / (n_clad * n_clad);
  auto f = [&](double n) {
    const double kappa = k0 * std::sqrt(n_core * n_core - n * n);
    const double gamma = k0 * std::sqrt(n * n - n_clad * n_clad);
    return kappa * std::tan(kappa * a) - ratio * gamma;
  };
  double lo = n_clad;
  const double kappa_cap = (std::numbers::pi / 2.0) / a;
  const double n_cap_sq = n_core * n_core - (kappa_cap / k0) * (kappa_cap / k0);
  if (n_cap_sq > lo * lo) lo = std::sqrt(n_cap_sq) + 1e-15;
  double hi = n_core - 1e-15;
  double flo = f(lo);
  if (flo * f(hi) > 0.0) throw std::runtime_error("slab oracle: no TM bracket");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Lowest eigenvalue of the 1D discrete Dirichlet Laplacian on `cells`
/// interior points with spacing h: -(4/h^2) sin^2(pi / (2 (cells + 1))).
inline double dirichlet_laplacian_lowest(int cells, double h) {
  const double s = std::sin(std::numbers::pi / (2.0 * (cells + 1)));
  return -4.0 / (h * h) * s * s;
}

}  // namespace oracle
