#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "snspd/errors.hpp"
#include "snspd/material.hpp"

namespace snspd {

struct Domain {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

struct Rect {
  double x0 = 0.0;
  double x1 = 0.0;
  double y0 = 0.0;
  double y1 = 0.0;
  Material material;
};

/// Cell-centred raster of a cross-section at one wavelength.
///
/// `region[p]` is 0 for background or 1 + index of the winning rectangle.
struct Raster {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double dx = 0.0;
  double dy = 0.0;
  double x_min = 0.0;
  double y_min = 0.0;
  std::vector<int> region;
  std::vector<std::complex<double>> eps;
  std::vector<ComplexIndex> index;

  std::size_t size() const { return nx * ny; }
  std::size_t at(std::size_t i, std::size_t j) const { return j * nx + i; }
  double x_center(std::size_t i) const { return x_min + (static_cast<double>(i) + 0.5) * dx; }
  double y_center(std::size_t j) const { return y_min + (static_cast<double>(j) + 0.5) * dy; }
};

/// A 2D stack of material rectangles on a uniform grid. Later rectangles win on overlap.
class CrossSection {
 public:
  static constexpr std::size_t kMinCells = 10;

  CrossSection(Domain domain, double dx, double dy, Material background,
               std::vector<Rect> rects = {})
      : domain_(domain), dx_(dx), dy_(dy), background_(std::move(background)) {
    require(std::isfinite(dx) && std::isfinite(dy) && dx > 0.0 && dy > 0.0,
            ErrorKind::InvalidArgument, "grid steps must be positive");
    require(domain.x_max > domain.x_min && domain.y_max > domain.y_min,
            ErrorKind::InvalidArgument, "domain must have positive extent");
    nx_ = cell_count(domain.width(), dx);
    ny_ = cell_count(domain.height(), dy);
    require(nx_ >= kMinCells && ny_ >= kMinCells, ErrorKind::InvalidArgument,
            "domain must span at least 10 cells in each direction (got " + std::to_string(nx_) +
                " x " + std::to_string(ny_) + ")");
    for (auto& r : rects) add(std::move(r));
  }

  void add(Rect rect) {
    const double tol_x = 1e-9 * dx_;
    const double tol_y = 1e-9 * dy_;
    require(rect.x1 > rect.x0 && rect.y1 > rect.y0, ErrorKind::InvalidArgument,
            "rectangle of material '" + rect.material.name() + "' is empty");
    require(rect.x0 >= domain_.x_min - tol_x && rect.x1 <= domain_.x_max + tol_x &&
                rect.y0 >= domain_.y_min - tol_y && rect.y1 <= domain_.y_max + tol_y,
            ErrorKind::OutOfRange,
            "rectangle of material '" + rect.material.name() + "' leaves the domain");
    rects_.push_back(std::move(rect));
  }

  const Domain& domain() const noexcept { return domain_; }
  double dx() const noexcept { return dx_; }
  double dy() const noexcept { return dy_; }
  std::size_t nx() const noexcept { return nx_; }
  std::size_t ny() const noexcept { return ny_; }
  const Material& background() const noexcept { return background_; }
  const std::vector<Rect>& rects() const noexcept { return rects_; }

  /// Material of region id as produced by `rasterize`.
  const Material& region_material(int region) const {
    return region == 0 ? background_ : rects_.at(static_cast<std::size_t>(region - 1)).material;
  }

  /// Cell takes the material of the last rectangle containing its centre.
  /// Centres lying exactly on an edge count as inside, so mirror-symmetric
  /// layouts rasterize symmetrically.
  Raster rasterize(double wavelength) const {
    Raster r;
    r.nx = nx_;
    r.ny = ny_;
    r.dx = dx_;
    r.dy = dy_;
    r.x_min = domain_.x_min;
    r.y_min = domain_.y_min;
    r.region.assign(nx_ * ny_, 0);

    const double tol_x = 1e-9 * dx_;
    const double tol_y = 1e-9 * dy_;
    for (std::size_t k = 0; k < rects_.size(); ++k) {
      const Rect& rc = rects_[k];
      for (std::size_t j = 0; j < ny_; ++j) {
        const double y = r.y_center(j);
        if (y < rc.y0 - tol_y || y > rc.y1 + tol_y) continue;
        for (std::size_t i = 0; i < nx_; ++i) {
          const double x = r.x_center(i);
          if (x < rc.x0 - tol_x || x > rc.x1 + tol_x) continue;
          r.region[r.at(i, j)] = static_cast<int>(k) + 1;
        }
      }
    }

    std::vector<ComplexIndex> lookup;
    lookup.reserve(rects_.size() + 1);
    lookup.push_back(material_at(background_, wavelength));
    for (const auto& rc : rects_) lookup.push_back(material_at(rc.material, wavelength));

    r.index.resize(r.size());
    r.eps.resize(r.size());
    for (std::size_t p = 0; p < r.size(); ++p) {
      const ComplexIndex& idx = lookup[static_cast<std::size_t>(r.region[p])];
      r.index[p] = idx;
      r.eps[p] = idx.permittivity();
    }
    return r;
  }

 private:
  static std::size_t cell_count(double extent, double step) {
    return static_cast<std::size_t>(std::llround(extent / step));
  }

  Domain domain_;
  double dx_;
  double dy_;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  Material background_;
  std::vector<Rect> rects_;
};

}  // namespace snspd
