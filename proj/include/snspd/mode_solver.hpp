#pragma once

// Finite-difference eigenmode solver for 2D dielectric/absorbing cross-sections.
//
// Discretizes the semi-vectorial Helmholtz operator on the cell-centred grid
// of a CrossSection. For TE-like modes the dominant field is Ex and the
// x-derivative carries the continuity of eps*Ex across vertical interfaces;
// TM-like swaps the roles of x and y. The eigenproblem
//
//     L psi + k0^2 eps psi = beta^2 psi
//
// is solved in units of k0^2 (eigenvalue n_eff^2) by Krylov-Schur iteration on
// (A - sigma)^{-1}, with sigma just below the largest dielectric index squared.
// The forward field is exp(-i beta z) with beta = k0 (n' - i n''), n'' >= 0.
//
// This is a semi-vectorial model; full-vector coupling between Ex and Ey at
// high-contrast corners is not represented.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "snspd/cross_section.hpp"
#include "snspd/detail/krylov_schur.hpp"
#include "snspd/errors.hpp"
#include "snspd/units.hpp"

namespace snspd {

enum class Polarization { TE, TM };

inline std::string_view to_string(Polarization p) { return p == Polarization::TE ? "TE" : "TM"; }

/// Wall condition at the edge of the computational window.
/// ZeroField is a perfect-conductor wall; ZeroSlope is a symmetry (magnetic)
/// wall, useful for structures invariant along one axis.
enum class Boundary { ZeroField, ZeroSlope };

struct SolverOptions {
  Polarization polarization = Polarization::TE;
  Boundary boundary_x = Boundary::ZeroField;
  Boundary boundary_y = Boundary::ZeroField;
  double residual_tol = 1e-8;
  int krylov_dim = 0;
  int max_restarts = 300;
  /// Throw NoGuidedMode unless the leading mode lies above the light line.
  bool require_guided = true;
  /// For a single mode on a grid mirror-symmetric about x = 0, solve only the
  /// x-even half problem (zero-slope wall on the axis). The fundamental mode of
  /// a symmetric guide is even, so this halves the unknowns without changing it.
  bool use_mirror_symmetry = true;
};

struct FieldGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double dy = 0.0;
  double x_min = 0.0;
  double y_min = 0.0;
  std::vector<std::complex<double>> values;  // row-major, index j * nx + i

  const std::complex<double>& operator()(std::size_t i, std::size_t j) const {
    return values[j * nx + i];
  }
  double x_center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * dx; }
  double y_center(std::size_t j) const { return y_min + (static_cast<double>(j) + 0.5) * dy; }
};

struct ModeSolution {
  double wavelength = 0.0;
  std::complex<double> n_eff;  // n' - i n''
  FieldGrid field;             // sum |E|^2 dx dy = 1
  Polarization polarization = Polarization::TE;
  int mode_index = 0;
  bool guided = false;
  double light_line = 0.0;  // background cladding index used for the guided label
  double residual = 0.0;    // ||(H - beta^2) psi|| / (|beta^2| ||psi||)
  int restarts = 0;

  double n_real() const { return n_eff.real(); }
  double n_loss() const { return -n_eff.imag(); }
};

namespace detail {

using SparseC = Eigen::SparseMatrix<std::complex<double>, Eigen::ColMajor, int>;

/// Helmholtz operator scaled by 1/k0^2 (eigenvalues are n_eff^2).
inline SparseC assemble_operator(const Raster& r, double wavelength, const SolverOptions& opt,
                                 Boundary x_low, Boundary x_high) {
  using cplx = std::complex<double>;
  const double k0 = free_space_wavenumber(wavelength);
  const double cx = 1.0 / (k0 * k0 * r.dx * r.dx);
  const double cy = 1.0 / (k0 * k0 * r.dy * r.dy);
  const bool weighted_x = opt.polarization == Polarization::TE;

  std::vector<Eigen::Triplet<cplx, int>> trip;
  trip.reserve(r.size() * 5);

  auto idx = [&](std::size_t i, std::size_t j) { return static_cast<int>(r.at(i, j)); };

  for (std::size_t j = 0; j < r.ny; ++j) {
    for (std::size_t i = 0; i < r.nx; ++i) {
      const int p = idx(i, j);
      const cplx e = r.eps[static_cast<std::size_t>(p)];
      cplx diag = e;

      // One axis carries d/du[(1/eps) d(eps psi)/du], the other a plain Laplacian.
      auto couple = [&](bool has_neighbour, int q, double c, bool weighted, Boundary wall) {
        if (has_neighbour) {
          if (weighted) {
            const cplx en = r.eps[static_cast<std::size_t>(q)];
            const cplx sum = e + en;
            if (std::abs(sum) < 1e-12 * (std::abs(e) + std::abs(en))) {
              fail(ErrorKind::InvalidArgument,
                   "permittivity sum vanishes across an interface; semi-vectorial "
                   "stencil undefined");
            }
            trip.emplace_back(p, q, c * 2.0 * en / sum);
            diag -= c * 2.0 * e / sum;
          } else {
            trip.emplace_back(p, q, cplx(c, 0.0));
            diag -= c;
          }
        } else if (wall == Boundary::ZeroField) {
          diag -= c;  // ghost cell holds zero field and the same permittivity
        }
      };

      couple(i > 0, i > 0 ? idx(i - 1, j) : -1, cx, weighted_x, x_low);
      couple(i + 1 < r.nx, i + 1 < r.nx ? idx(i + 1, j) : -1, cx, weighted_x, x_high);
      couple(j > 0, j > 0 ? idx(i, j - 1) : -1, cy, !weighted_x, opt.boundary_y);
      couple(j + 1 < r.ny, j + 1 < r.ny ? idx(i, j + 1) : -1, cy, !weighted_x, opt.boundary_y);
      trip.emplace_back(p, p, diag);
    }
  }
  const int n = static_cast<int>(r.size());
  SparseC A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

inline SparseC assemble_operator(const Raster& r, double wavelength, const SolverOptions& opt) {
  return assemble_operator(r, wavelength, opt, opt.boundary_x, opt.boundary_x);
}

/// True when the permittivity map is unchanged by x -> -x and the axis sits
/// on a cell edge.
inline bool mirror_symmetric(const Raster& r) {
  if (r.nx % 2 != 0) return false;
  const double x_max = r.x_min + static_cast<double>(r.nx) * r.dx;
  if (std::abs(x_max + r.x_min) > 1e-6 * r.dx) return false;
  for (std::size_t j = 0; j < r.ny; ++j) {
    for (std::size_t i = 0; i < r.nx / 2; ++i) {
      if (r.eps[r.at(i, j)] != r.eps[r.at(r.nx - 1 - i, j)]) return false;
    }
  }
  return true;
}

/// Right half (x > 0) of a mirror-symmetric raster.
inline Raster right_half(const Raster& r) {
  Raster h;
  h.nx = r.nx / 2;
  h.ny = r.ny;
  h.dx = r.dx;
  h.dy = r.dy;
  h.x_min = 0.0;
  h.y_min = r.y_min;
  h.region.resize(h.size());
  h.eps.resize(h.size());
  h.index.resize(h.size());
  for (std::size_t j = 0; j < r.ny; ++j) {
    for (std::size_t i = 0; i < h.nx; ++i) {
      const std::size_t src = r.at(i + h.nx, j);
      const std::size_t dst = h.at(i, j);
      h.region[dst] = r.region[src];
      h.eps[dst] = r.eps[src];
      h.index[dst] = r.index[src];
    }
  }
  return h;
}

/// Even extension of a half-grid vector back onto the full grid.
inline Eigen::VectorXcd mirror_to_full(const Eigen::VectorXcd& half, const Raster& full) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(full.size()));
  const std::size_t hn = full.nx / 2;
  for (std::size_t j = 0; j < full.ny; ++j) {
    for (std::size_t i = 0; i < hn; ++i) {
      const auto val = half(static_cast<Eigen::Index>(j * hn + i));
      v(static_cast<Eigen::Index>(full.at(hn + i, j))) = val;
      v(static_cast<Eigen::Index>(full.at(hn - 1 - i, j))) = val;
    }
  }
  return v;
}

/// Largest refractive index among cells with Re(eps) > 0. Metallic cells
/// (Re(eps) < 0) do not support bound modes near their index.
inline double dielectric_index_max(const Raster& r) {
  double best = 0.0;
  bool any = false;
  for (std::size_t p = 0; p < r.size(); ++p) {
    if (r.eps[p].real() > 0.0) {
      best = std::max(best, r.index[p].n);
      any = true;
    }
  }
  if (!any) {
    for (const auto& idx : r.index) best = std::max(best, idx.n);
  }
  return best;
}

inline double relative_residual(const SparseC& A, const Eigen::VectorXcd& v,
                                std::complex<double> lambda) {
  const Eigen::VectorXcd r = A * v - lambda * v;
  return r.norm() / (std::abs(lambda) * v.norm());
}

}  // namespace detail

/// Up to `n_modes` eigenmodes sorted by descending Re(n_eff).
inline std::vector<ModeSolution> solve_modes(const CrossSection& cs, double wavelength,
                                             int n_modes, const SolverOptions& opt = {}) {
  using cplx = std::complex<double>;
  require(n_modes >= 1, ErrorKind::InvalidArgument, "n_modes must be >= 1");
  require(std::isfinite(wavelength) && wavelength > 0.0, ErrorKind::InvalidArgument,
          "wavelength must be positive");

  const Raster full = cs.rasterize(wavelength);
  const bool halved = opt.use_mirror_symmetry && n_modes == 1 && detail::mirror_symmetric(full);
  const Raster r = halved ? detail::right_half(full) : full;
  const detail::SparseC A =
      halved ? detail::assemble_operator(r, wavelength, opt, Boundary::ZeroSlope, opt.boundary_x)
             : detail::assemble_operator(r, wavelength, opt);
  const double n_top = detail::dielectric_index_max(r);
  const double n_shift = n_top - 1e-4;
  const cplx sigma(n_shift * n_shift, 0.0);

  detail::SparseC shifted = A;
  for (int k = 0; k < shifted.outerSize(); ++k) {
    for (detail::SparseC::InnerIterator it(shifted, k); it; ++it) {
      if (it.row() == it.col()) it.valueRef() -= sigma;
    }
  }
  Eigen::SparseLU<detail::SparseC, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(shifted);
  lu.factorize(shifted);
  if (lu.info() != Eigen::Success) {
    fail(ErrorKind::ConvergenceFailure, "sparse LU of the shifted operator failed: " +
                                            lu.lastErrorMessage());
  }

  const bool lossless =
      std::all_of(r.eps.begin(), r.eps.end(), [](const cplx& e) { return e.imag() == 0.0; });

  std::vector<double> weight(r.size());
  for (std::size_t p = 0; p < r.size(); ++p) weight[p] = std::max(r.eps[p].real(), 1.0);

  detail::KrylovOptions kopt;
  kopt.nev = n_modes;
  kopt.ncv = opt.krylov_dim;
  kopt.max_restarts = opt.max_restarts;
  kopt.tol = 1e-13;
  auto apply = [&](const auto& x) -> Eigen::VectorXcd {
    Eigen::VectorXcd in = x;
    return lu.solve(in);
  };
  const auto kr = detail::krylov_schur(static_cast<Eigen::Index>(r.size()),
                                       detail::seeded_start(weight), apply, kopt);

  // Guided means above the background (outer cladding) index. Modes between
  // that and a denser substrate index are leaky in an open structure but
  // bound in the closed window.
  const double cladding = material_at(cs.background(), wavelength).n;
  std::vector<ModeSolution> modes;
  std::ostringstream diag;
  diag << std::setprecision(3);
  for (std::size_t c = 0; c < kr.theta.size(); ++c) {
    const cplx lambda = sigma + 1.0 / kr.theta[c];
    Eigen::VectorXcd v = kr.vectors.col(static_cast<Eigen::Index>(c));
    const double res = detail::relative_residual(A, v, lambda);
    if (halved) v = detail::mirror_to_full(v, full);
    diag << " [mode " << c << ": residual " << res << ", ritz estimate " << kr.estimates[c]
         << "]";
    if (!(res <= opt.residual_tol)) continue;

    // Deterministic phase: largest component real and positive.
    Eigen::Index peak = 0;
    v.cwiseAbs2().maxCoeff(&peak);
    v *= std::abs(v(peak)) / v(peak);
    const double norm = std::sqrt(v.squaredNorm() * r.dx * r.dy);
    v /= norm;

    ModeSolution m;
    m.wavelength = wavelength;
    m.n_eff = std::sqrt(lambda);
    if (m.n_eff.real() < 0.0) m.n_eff = -m.n_eff;
    // A real operator has real eigenvalues; drop round-off so n'' is exactly 0.
    // Otherwise clear round-off gain well below any physical loss.
    if (lossless || (m.n_eff.imag() > 0.0 && m.n_eff.imag() < 1e-12 * m.n_eff.real())) {
      m.n_eff = {m.n_eff.real(), 0.0};
    }
    m.polarization = opt.polarization;
    m.light_line = cladding;
    m.guided = m.n_eff.real() > cladding;
    m.residual = res;
    m.restarts = kr.restarts;
    m.field = {full.nx, full.ny, full.dx, full.dy, full.x_min, full.y_min,
               std::vector<cplx>(v.data(), v.data() + v.size())};
    modes.push_back(std::move(m));
  }

  if (modes.empty()) {
    fail(ErrorKind::ConvergenceFailure,
         "no eigenpair reached residual " + std::to_string(opt.residual_tol) + " after " +
             std::to_string(kr.restarts) + " restarts and " + std::to_string(kr.applications) +
             " operator applications;" + diag.str());
  }

  std::stable_sort(modes.begin(), modes.end(), [](const ModeSolution& a, const ModeSolution& b) {
    return a.n_eff.real() > b.n_eff.real();
  });
  if (opt.require_guided) {
    std::erase_if(modes, [](const ModeSolution& m) { return !m.guided; });
    if (modes.empty()) {
      fail(ErrorKind::NoGuidedMode, "no eigenvalue above the cladding light line n = " +
                                        std::to_string(cladding));
    }
  }
  for (std::size_t i = 0; i < modes.size(); ++i) modes[i].mode_index = static_cast<int>(i);
  return modes;
}

/// Amplitude attenuation rate alpha = 2 pi n'' / lambda (power decays as exp(-2 alpha L)).
inline double modal_absorption(const ModeSolution& mode) {
  return free_space_wavenumber(mode.wavelength) * mode.n_loss();
}

inline double modal_propagation_constant(const ModeSolution& mode) {
  return free_space_wavenumber(mode.wavelength) * mode.n_real();
}

namespace detail {

inline void check_same_grid(const ModeSolution& mode, const Raster& r) {
  require(mode.field.nx == r.nx && mode.field.ny == r.ny, ErrorKind::InvalidArgument,
          "mode field and cross-section grids differ");
}

}  // namespace detail

/// Share of the absorbed power sum(Im eps |E|^2) that falls in cells of `region`.
inline double absorbed_fraction_by_region(const ModeSolution& mode, const CrossSection& cs,
                                          const Material& region) {
  const Raster r = cs.rasterize(mode.wavelength);
  detail::check_same_grid(mode, r);
  bool present = region == cs.background();
  for (const auto& rect : cs.rects()) present = present || rect.material == region;
  require(present, ErrorKind::InvalidArgument,
          "material '" + region.name() + "' does not appear in the cross-section");

  double part = 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < r.size(); ++p) {
    const double w = std::abs(r.eps[p].imag()) * std::norm(mode.field.values[p]);
    total += w;
    if (cs.region_material(r.region[p]) == region) part += w;
  }
  if (!(total > 0.0)) {
    fail(ErrorKind::DegenerateDenominator, "structure absorbs nothing (Im eps |E|^2 sums to 0)");
  }
  return part / total;
}

/// Attenuation rate from the absorbed-energy overlap integral,
/// alpha = k0 * sum(|Im eps| |E|^2) / (2 n' sum |E|^2). First-order in the loss;
/// an independent route to compare against modal_absorption.
inline double overlap_absorption(const ModeSolution& mode, const CrossSection& cs) {
  const Raster r = cs.rasterize(mode.wavelength);
  detail::check_same_grid(mode, r);
  double absorbed = 0.0;
  double power = 0.0;
  for (std::size_t p = 0; p < r.size(); ++p) {
    const double e2 = std::norm(mode.field.values[p]);
    absorbed += std::abs(r.eps[p].imag()) * e2;
    power += e2;
  }
  return free_space_wavenumber(mode.wavelength) * absorbed / (2.0 * mode.n_real() * power);
}

/// CSV grid dump: x_m,y_m,re_e,im_e, x fastest.
inline void write_field_csv(const ModeSolution& mode, std::ostream& os) {
  const auto& f = mode.field;
  os << "x_m,y_m,re_e,im_e\n";
  os << std::setprecision(10);
  for (std::size_t j = 0; j < f.ny; ++j) {
    for (std::size_t i = 0; i < f.nx; ++i) {
      const auto& v = f(i, j);
      os << f.x_center(i) << ',' << f.y_center(j) << ',' << v.real() << ',' << v.imag() << '\n';
    }
  }
}

}  // namespace snspd
