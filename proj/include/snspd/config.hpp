#pragma once

// Strict JSON configuration: unknown keys are errors, lengths and other
// dimensioned values take either SI numbers or strings with a unit suffix
// ("220nm", "1.57um", "100ms"), and materials are referenced by name.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "snspd/analysis.hpp"
#include "snspd/calibration.hpp"
#include "snspd/csv.hpp"
#include "snspd/errors.hpp"
#include "snspd/geometry.hpp"
#include "snspd/material.hpp"
#include "snspd/mode_solver.hpp"
#include "snspd/propagation.hpp"
#include "snspd/units.hpp"

namespace snspd::config {

using json = nlohmann::json;

/// View of one JSON object that records which keys were consumed, so that
/// finish() can reject anything unexpected.
class Object {
 public:
  Object(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) fail(ErrorKind::Config, where() + " must be a JSON object");
  }

  const std::string& path() const { return path_; }
  bool has(const std::string& key) const { return j_->contains(key); }
  bool empty() const { return j_->empty(); }

  const json& raw(const std::string& key) {
    if (!has(key)) fail(ErrorKind::Config, "missing key '" + child(key) + "'");
    used_.insert(key);
    return (*j_)[key];
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) fail(ErrorKind::Config, child(key) + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(ErrorKind::Config, child(key) + " must be finite");
    return d;
  }

  long long integer(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(ErrorKind::Config, child(key) + " must be an integer");
    return v.get<long long>();
  }

  bool boolean(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_boolean()) fail(ErrorKind::Config, child(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(ErrorKind::Config, child(key) + " must be a string");
    return v.get<std::string>();
  }

  /// SI number or string with unit suffix.
  double quantity(const std::string& key, Dimension dim) {
    const json& v = raw(key);
    if (v.is_number()) {
      const double d = v.get<double>();
      if (!std::isfinite(d)) fail(ErrorKind::Config, child(key) + " must be finite");
      return d;
    }
    if (v.is_string()) {
      try {
        return parse_quantity(v.get<std::string>(), dim);
      } catch (const Error& e) {
        fail(ErrorKind::Config, child(key) + ": " + e.message());
      }
    }
    fail(ErrorKind::Config, child(key) + " must be a number or a string with a unit");
  }

  Object object(const std::string& key) { return Object(raw(key), child(key)); }

  /// All entries, each marked as consumed.
  std::vector<std::pair<std::string, const json*>> entries() {
    std::vector<std::pair<std::string, const json*>> out;
    for (const auto& [k, v] : j_->items()) {
      used_.insert(k);
      out.emplace_back(k, &v);
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) fail(ErrorKind::Config, child(key) + " must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) fail(ErrorKind::Config, child(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  void finish() const {
    std::vector<std::string> unknown;
    for (const auto& [k, v] : j_->items()) {
      if (!used_.count(k)) unknown.push_back(k);
    }
    if (!unknown.empty()) {
      std::string list;
      for (const auto& k : unknown) list += (list.empty() ? "'" : ", '") + child(k) + "'";
      fail(ErrorKind::Config, "unknown key(s) " + list);
    }
  }

 private:
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

inline json load_json(const std::filesystem::path& path) {
  const std::string text = csv::read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Config, path.string() + ": " + e.what());
  }
}

/// Resolves relative file references against the configuration's directory.
inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& ref) {
  std::filesystem::path p(ref);
  return p.is_absolute() ? p : base / p;
}

// ---------------------------------------------------------------- materials

inline Material parse_material(const std::string& name, Object spec,
                               const std::filesystem::path& base) {
  if (spec.has("file")) {
    const auto path = resolve(base, spec.string("file"));
    spec.finish();
    const json j = load_json(path);
    return parse_material(name, Object(j, path.filename().string()), path.parent_path());
  }
  if (spec.has("table")) {
    const json& t = spec.raw("table");
    if (!t.is_array() || t.empty()) {
      fail(ErrorKind::Config, spec.path() + ".table must be a non-empty array");
    }
    std::vector<DispersionPoint> pts;
    for (std::size_t i = 0; i < t.size(); ++i) {
      Object row(t[i], spec.path() + ".table[" + std::to_string(i) + "]");
      DispersionPoint p;
      p.wavelength = row.quantity("wavelength", Dimension::Length);
      p.n = row.number("n");
      p.k = row.number("k");
      row.finish();
      pts.push_back(p);
    }
    spec.finish();
    try {
      return Material(name, std::move(pts));
    } catch (const Error& e) {
      fail(ErrorKind::Config, spec.path() + ": " + e.message());
    }
  }
  const double n = spec.number("n");
  const double k = spec.number("k");
  spec.finish();
  try {
    return Material::constant(name, n, k);
  } catch (const Error& e) {
    fail(ErrorKind::Config, spec.path() + ": " + e.message());
  }
}

class MaterialRegistry {
 public:
  MaterialRegistry() {
    for (auto& m : materials::defaults()) by_name_.emplace(m.name(), m);
  }

  void load(Object section, const std::filesystem::path& base) {
    for (const auto& [name, spec] : section.entries()) {
      by_name_.insert_or_assign(name, parse_material(name, Object(*spec, "materials." + name), base));
    }
  }

  const Material& get(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) {
      std::string known;
      for (const auto& [k, v] : by_name_) known += (known.empty() ? "" : ", ") + k;
      fail(ErrorKind::Config, "unknown material '" + name + "' (known: " + known + ")");
    }
    return it->second;
  }

 private:
  std::map<std::string, Material> by_name_;
};

inline json material_to_json(const Material& m) {
  json table = json::array();
  for (const auto& p : m.table()) {
    table.push_back({{"wavelength_m", p.wavelength}, {"n", p.n}, {"k", p.k}});
  }
  return {{"name", m.name()}, {"table", table}};
}

// ----------------------------------------------------------------- geometry

namespace detail {

/// Reads `key` into `slot` when present; without a preset every key is required.
struct Filler {
  Object& obj;
  bool preset;

  void length(const std::string& key, double& slot) {
    if (obj.has(key) || !preset) slot = obj.quantity(key, Dimension::Length);
  }
  void material(const std::string& key, Material& slot, const MaterialRegistry& reg) {
    if (obj.has(key) || !preset) slot = reg.get(obj.string(key));
  }
  void number(const std::string& key, double& slot) {
    if (obj.has(key) || !preset) slot = obj.number(key);
  }
  template <class Fn>
  void section(const std::string& key, Fn&& fn) {
    if (!obj.has(key) && preset) return;
    Object sub = obj.object(key);
    Filler f{sub, preset};
    fn(f);
    sub.finish();
  }
};

}  // namespace detail

/// Converter geometry. With "preset": "paper_default" omitted keys keep the
/// preset values; without a preset every key must be given.
inline ConverterGeometry parse_geometry(Object g, const MaterialRegistry& reg) {
  bool preset = false;
  ConverterGeometry geom = paper_default_geometry();
  if (g.has("preset")) {
    const std::string name = g.string("preset");
    if (name != "paper_default") {
      fail(ErrorKind::Config, "unknown geometry preset '" + name + "' (known: paper_default)");
    }
    preset = true;
  }
  detail::Filler top{g, preset};
  top.section("pic_waveguide", [&](detail::Filler& f) {
    f.length("thickness", geom.pic.thickness);
    f.length("width_start", geom.pic.width_start);
    f.length("width_end", geom.pic.width_end);
    f.length("taper_length", geom.pic.taper_length);
    f.material("material", geom.pic.material, reg);
  });
  top.section("detector_waveguide", [&](detail::Filler& f) {
    f.length("thickness", geom.detector.thickness);
    f.length("width", geom.detector.width);
    f.material("material", geom.detector.material, reg);
  });
  top.section("nanowire", [&](detail::Filler& f) {
    f.length("thickness", geom.nanowire.thickness);
    f.length("wire_width", geom.nanowire.wire_width);
    f.length("gap", geom.nanowire.gap);
    f.material("material", geom.nanowire.material, reg);
  });
  top.section("gap_layer", [&](detail::Filler& f) {
    f.length("thickness", geom.gap_layer.thickness);
    f.material("material", geom.gap_layer.material, reg);
  });
  top.section("claddings", [&](detail::Filler& f) {
    f.material("upper", geom.claddings.upper, reg);
    f.material("lower", geom.claddings.lower, reg);
  });
  top.section("segmentation", [&](detail::Filler& f) {
    f.length("z1", geom.segmentation.z1);
    f.length("z2", geom.segmentation.z2);
    f.length("dz2", geom.segmentation.dz2);
  });
  top.number("rotation_offset_deg", geom.rotation_deg);
  if (preset && !g.has("pivot_z")) {
    geom.pivot_z = geom.taper_start();  // preset pivot follows the taper start
  } else {
    geom.pivot_z = g.quantity("pivot_z", Dimension::Length);
  }
  top.section("grid", [&](detail::Filler& f) {
    f.length("dx", geom.grid.dx);
    f.length("dy", geom.grid.dy);
    f.length("padding_x", geom.grid.padding_x);
    f.length("padding_y", geom.grid.padding_y);
  });
  g.finish();
  try {
    geom.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("geometry: ") + e.message());
  }
  return geom;
}

inline json geometry_to_json(const ConverterGeometry& g) {
  return {
      {"pic_waveguide",
       {{"thickness_m", g.pic.thickness},
        {"width_start_m", g.pic.width_start},
        {"width_end_m", g.pic.width_end},
        {"taper_length_m", g.pic.taper_length},
        {"material", g.pic.material.name()}}},
      {"detector_waveguide",
       {{"thickness_m", g.detector.thickness},
        {"width_m", g.detector.width},
        {"material", g.detector.material.name()}}},
      {"nanowire",
       {{"thickness_m", g.nanowire.thickness},
        {"wire_width_m", g.nanowire.wire_width},
        {"gap_m", g.nanowire.gap},
        {"material", g.nanowire.material.name()}}},
      {"gap_layer",
       {{"thickness_m", g.gap_layer.thickness}, {"material", g.gap_layer.material.name()}}},
      {"claddings",
       {{"upper", g.claddings.upper.name()}, {"lower", g.claddings.lower.name()}}},
      {"segmentation",
       {{"z1_m", g.segmentation.z1}, {"z2_m", g.segmentation.z2}, {"dz2_m", g.segmentation.dz2}}},
      {"rotation_offset_deg", g.rotation_deg},
      {"pivot_z_m", g.pivot_z},
      {"grid",
       {{"dx_m", g.grid.dx},
        {"dy_m", g.grid.dy},
        {"padding_x_m", g.grid.padding_x},
        {"padding_y_m", g.grid.padding_y}}},
  };
}

/// Every distinct material the geometry references, by name.
inline json geometry_materials_json(const ConverterGeometry& g) {
  json out = json::object();
  for (const Material* m : {&g.pic.material, &g.detector.material, &g.nanowire.material,
                            &g.gap_layer.material, &g.claddings.upper, &g.claddings.lower}) {
    out[m->name()] = material_to_json(*m)["table"];
  }
  return out;
}

// ------------------------------------------------------- physics constants

inline TipTransmissions parse_tips(Object t) {
  TipTransmissions tips;
  tips.t_det_sq = t.number("t_det_sq");
  tips.t_pic_sq = t.number("t_pic_sq");
  t.finish();
  try {
    tips.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("tips: ") + e.message());
  }
  return tips;
}

inline json tips_to_json(const TipTransmissions& t) {
  return {{"t_det_sq", t.t_det_sq}, {"t_pic_sq", t.t_pic_sq}};
}

inline Polarization parse_polarization(const std::string& s) {
  if (s == "TE") return Polarization::TE;
  if (s == "TM") return Polarization::TM;
  fail(ErrorKind::Config, "polarization must be \"TE\" or \"TM\", got \"" + s + "\"");
}

// ------------------------------------------------------------------ budget

/// A dB entry is a number, a list of stage losses, or (for the coupler) a
/// loopback measurement {"loopback_total_db", "fiber_in_db", "fiber_out_db"}.
inline double parse_db(Object& parent, const std::string& key) {
  const json& v = parent.raw(key);
  const std::string path = parent.path().empty() ? key : parent.path() + "." + key;
  if (v.is_number()) return v.get<double>();
  if (v.is_array()) {
    std::vector<double> stages;
    for (const auto& e : v) {
      if (!e.is_number()) fail(ErrorKind::Config, path + " stages must be numbers");
      stages.push_back(e.get<double>());
    }
    return chain_db(stages);
  }
  if (v.is_object()) {
    Object o(v, path);
    const double total = o.number("loopback_total_db");
    const double in = o.number("fiber_in_db");
    const double out = o.number("fiber_out_db");
    o.finish();
    return facet_loss_from_loopback(total, in, out);
  }
  fail(ErrorKind::Config, path + " must be a number, an array of stage losses or a loopback object");
}

inline LossBudget parse_budget(Object b) {
  LossBudget lb;
  lb.p_in = b.quantity("p_in", Dimension::Power);
  lb.wavelength = b.quantity("wavelength", Dimension::Length);
  lb.db_fiber = parse_db(b, "db_fiber");
  lb.db_coupler = parse_db(b, "db_coupler");
  lb.db_attenuator = parse_db(b, "db_attenuator");
  lb.db_fiber_sigma = b.number("db_fiber_sigma");
  if (b.has("db_extra")) lb.db_extra = b.number("db_extra");
  if (b.has("db_coupler_sigma")) lb.db_coupler_sigma = b.number("db_coupler_sigma");
  if (b.has("db_attenuator_sigma")) lb.db_attenuator_sigma = b.number("db_attenuator_sigma");
  b.finish();
  try {
    lb.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("budget: ") + e.message());
  }
  return lb;
}

inline json budget_to_json(const LossBudget& b) {
  json j = {{"p_in_w", b.p_in},
            {"wavelength_m", b.wavelength},
            {"db_fiber", b.db_fiber},
            {"db_coupler", b.db_coupler},
            {"db_attenuator", b.db_attenuator},
            {"db_extra", b.db_extra},
            {"db_fiber_sigma", b.db_fiber_sigma},
            {"planck_j_s", kPlanck},
            {"speed_of_light_m_s", kSpeedOfLight}};
  if (b.db_coupler_sigma) j["db_coupler_sigma"] = *b.db_coupler_sigma;
  if (b.db_attenuator_sigma) j["db_attenuator_sigma"] = *b.db_attenuator_sigma;
  return j;
}

// ------------------------------------------------------------- data files

inline const std::vector<std::string> kTraceColumns{"bias_a", "photon_rate_hz", "dark_rate_hz"};
inline const std::vector<std::string> kIvColumns{"bias_a", "voltage_v"};
inline const std::vector<std::string> kJitterColumns{"bin_start_s", "counts"};
inline const std::vector<std::string> kLinearityColumns{"attenuation_db", "rate_hz"};
inline const std::vector<std::string> kSweepColumns{"angle_deg", "u_a"};
inline const std::vector<std::string> kProfileColumns{"z_m", "k_per_m", "alpha_per_m",
                                                      "survival"};

inline CountTrace load_trace(const std::filesystem::path& path, double integration_time) {
  std::vector<CountPoint> pts;
  for (const auto& r : csv::read(path, kTraceColumns)) pts.push_back({r[0], r[1], r[2]});
  return CountTrace(integration_time, std::move(pts));
}

inline std::vector<IVPoint> load_iv(const std::filesystem::path& path) {
  std::vector<IVPoint> pts;
  for (const auto& r : csv::read(path, kIvColumns)) pts.push_back({r[0], r[1]});
  return pts;
}

inline JitterHistogram load_jitter(const std::filesystem::path& path) {
  const auto rows = csv::read(path, kJitterColumns);
  require(rows.size() >= 2, ErrorKind::InvalidArgument, path.string() + ": need >= 2 bins");
  JitterHistogram h;
  h.t0 = rows.front()[0];
  h.bin_width = rows[1][0] - rows[0][0];
  require(h.bin_width > 0.0, ErrorKind::InvalidArgument,
          path.string() + ": bin starts must increase");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double expect = h.t0 + static_cast<double>(i) * h.bin_width;
    require(std::abs(rows[i][0] - expect) <= 1e-6 * h.bin_width, ErrorKind::InvalidArgument,
            path.string() + ": bins must be uniformly spaced (row " + std::to_string(i + 1) + ")");
    const double c = rows[i][1];
    require(c >= 0.0 && c == std::floor(c), ErrorKind::InvalidArgument,
            path.string() + ": counts must be non-negative integers (row " +
                std::to_string(i + 1) + ")");
    h.counts.push_back(c);
  }
  return h;
}

inline std::vector<std::pair<double, double>> load_pairs(const std::filesystem::path& path,
                                                         const std::vector<std::string>& cols) {
  std::vector<std::pair<double, double>> out;
  for (const auto& r : csv::read(path, cols)) out.emplace_back(r[0], r[1]);
  return out;
}

}  // namespace snspd::config
