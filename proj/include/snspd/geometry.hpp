#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "snspd/cross_section.hpp"
#include "snspd/errors.hpp"
#include "snspd/material.hpp"
#include "snspd/units.hpp"

namespace snspd {

struct PicWaveguide {
  double thickness = 220 * kNano;
  double width_start = 400 * kNano;
  double width_end = 200 * kNano;
  double taper_length = 40 * kMicro;
  Material material = materials::silicon();
};

struct DetectorWaveguide {
  double thickness = 250 * kNano;
  double width = 1 * kMicro;
  Material material = materials::silicon_nitride();
};

/// Hairpin modelled as two parallel wires separated by `gap`, centred on the
/// detector waveguide axis.
struct Nanowire {
  double thickness = 9 * kNano;
  double wire_width = 90 * kNano;
  double gap = 120 * kNano;
  Material material = materials::nbtin_placeholder();
};

/// Film between the PIC waveguide top and the detector waveguide bottom.
/// Zero thickness means the two are in contact.
struct GapLayer {
  double thickness = 0.0;
  Material material = materials::silicon_dioxide();
};

struct Claddings {
  Material upper = materials::vacuum();
  Material lower = materials::silicon_dioxide();
};

/// z1: hairpin start. z2: end of the PIC waveguide (taper tip).
/// dz2: hairpin length past z2. dz1 = z2 - z1.
struct Segmentation {
  double z1 = 10 * kMicro;
  double z2 = 50 * kMicro;
  double dz2 = 50 * kMicro;

  double dz1() const { return z2 - z1; }
  double end() const { return z2 + dz2; }
};

/// Discretization used for every cross-section of a converter.
struct GridSpec {
  double dx = 10 * kNano;
  double dy = 9 * kNano;
  double padding_x = 1.5 * kMicro;
  double padding_y = 1.5 * kMicro;
};

/// Hybrid taper/nanowire converter laid out along z in [0, segmentation.end()].
///
/// The PIC waveguide runs at width_start until its taper begins at
/// z2 - taper_length, narrows linearly and ends at z2. The detector waveguide
/// spans the whole structure; the hairpin covers [z1, z2 + dz2].
struct ConverterGeometry {
  PicWaveguide pic;
  DetectorWaveguide detector;
  Nanowire nanowire;
  GapLayer gap_layer;
  Claddings claddings;
  Segmentation segmentation;
  double rotation_deg = 0.0;
  double pivot_z = 10 * kMicro;
  GridSpec grid;

  double total_length() const { return segmentation.end(); }
  double taper_start() const { return segmentation.z2 - pic.taper_length; }

  double pic_width_at(double z) const {
    const double z0 = taper_start();
    if (z <= z0) return pic.width_start;
    const double t = std::min((z - z0) / pic.taper_length, 1.0);
    return pic.width_start + t * (pic.width_end - pic.width_start);
  }

  /// Rigid lateral shift of the detector stack; an approximation of a
  /// rotated chiplet that ignores the tilt of the cross-section itself.
  double lateral_offset_at(double z) const {
    return (z - pivot_z) * std::tan(rotation_deg * std::numbers::pi / 180.0);
  }

  double max_lateral_offset() const {
    return std::max(std::abs(lateral_offset_at(0.0)), std::abs(lateral_offset_at(total_length())));
  }

  void validate() const {
    auto positive = [](double v, const char* what) {
      require(std::isfinite(v) && v > 0.0, ErrorKind::InvalidArgument,
              std::string(what) + " must be positive");
    };
    positive(pic.thickness, "pic_waveguide.thickness");
    positive(pic.width_start, "pic_waveguide.width_start");
    positive(pic.width_end, "pic_waveguide.width_end");
    positive(pic.taper_length, "pic_waveguide.taper_length");
    positive(detector.thickness, "detector_waveguide.thickness");
    positive(detector.width, "detector_waveguide.width");
    positive(nanowire.thickness, "nanowire.thickness");
    positive(nanowire.wire_width, "nanowire.wire_width");
    positive(grid.dx, "grid.dx");
    positive(grid.dy, "grid.dy");
    require(nanowire.gap >= 0.0, ErrorKind::InvalidArgument, "nanowire.gap must be >= 0");
    require(gap_layer.thickness >= 0.0, ErrorKind::InvalidArgument,
            "gap_layer.thickness must be >= 0");
    require(grid.padding_x >= 0.0 && grid.padding_y >= 0.0, ErrorKind::InvalidArgument,
            "grid padding must be >= 0");
    require(2 * nanowire.wire_width + nanowire.gap <= detector.width, ErrorKind::InvalidArgument,
            "hairpin wider than the detector waveguide");
    const auto& s = segmentation;
    require(s.z1 >= 0.0 && s.z1 < s.z2, ErrorKind::InvalidArgument, "need 0 <= z1 < z2");
    require(s.dz2 >= 0.0, ErrorKind::InvalidArgument, "dz2 must be >= 0");
    require(taper_start() >= 0.0, ErrorKind::InvalidArgument,
            "PIC taper would start before z = 0 (taper_length > z2)");
    require(std::isfinite(rotation_deg) && std::abs(rotation_deg) < 45.0,
            ErrorKind::InvalidArgument, "rotation_offset must be within (-45, 45) degrees");
  }

  /// Height of the nanowire bottom above the PIC waveguide bottom (y = 0).
  double nanowire_base() const { return pic.thickness + gap_layer.thickness + detector.thickness; }

  /// Fixed simulation window shared by every slice. Symmetric about the PIC
  /// axis; the y grid has a cell edge at the nanowire base.
  Domain domain() const {
    const double half_needed = std::max(std::max(pic.width_start, pic.width_end) / 2.0,
                                        detector.width / 2.0 + max_lateral_offset());
    const double half = std::ceil((half_needed + grid.padding_x) / grid.dx - 1e-9) * grid.dx;
    const double base = nanowire_base();
    const double below = std::ceil((base + grid.padding_y) / grid.dy - 1e-9) * grid.dy;
    const double above = std::ceil((nanowire.thickness + grid.padding_y) / grid.dy - 1e-9) * grid.dy;
    return {-half, half, base - below, base + above};
  }
};

inline ConverterGeometry paper_default_geometry() {
  ConverterGeometry g;
  g.pivot_z = g.taper_start();
  return g;
}

/// Relative slack on z comparisons, so positions computed as sums of segment
/// lengths land on the intended side of a boundary.
inline constexpr double kZTolerance = 1e-12;

/// Layer stack at longitudinal position z.
inline CrossSection cross_section_at(const ConverterGeometry& geom, double z) {
  geom.validate();
  const double length = geom.total_length();
  const double slack = kZTolerance * length;
  if (!(z >= -slack && z <= length + slack)) {
    fail(ErrorKind::OutOfRange, "z = " + std::to_string(z) + " m outside [0, " +
                                    std::to_string(length) + "] m");
  }

  const Domain dom = geom.domain();
  CrossSection cs(dom, geom.grid.dx, geom.grid.dy, geom.claddings.upper);

  // The PIC waveguide is embedded in the lower cladding up to its top surface.
  const double t_pic = geom.pic.thickness;
  cs.add({dom.x_min, dom.x_max, dom.y_min, t_pic, geom.claddings.lower});

  const double tol = kZTolerance * length;
  if (z <= geom.segmentation.z2 + tol) {
    const double w = geom.pic_width_at(z);
    cs.add({-w / 2.0, w / 2.0, 0.0, t_pic, geom.pic.material});
  }

  const double y_gap = t_pic;
  if (geom.gap_layer.thickness > 0.0) {
    cs.add({dom.x_min, dom.x_max, y_gap, y_gap + geom.gap_layer.thickness,
            geom.gap_layer.material});
  }

  const double shift = geom.lateral_offset_at(z);
  const double y_det = y_gap + geom.gap_layer.thickness;
  const double y_nw = y_det + geom.detector.thickness;
  const double wd = geom.detector.width;
  cs.add({shift - wd / 2.0, shift + wd / 2.0, y_det, y_nw, geom.detector.material});

  const auto& s = geom.segmentation;
  if (z >= s.z1 - tol && z <= s.end() + tol) {
    const auto& nw = geom.nanowire;
    const double inner = nw.gap / 2.0;
    const double outer = inner + nw.wire_width;
    cs.add({shift - outer, shift - inner, y_nw, y_nw + nw.thickness, nw.material});
    cs.add({shift + inner, shift + outer, y_nw, y_nw + nw.thickness, nw.material});
  }
  return cs;
}

}  // namespace snspd
