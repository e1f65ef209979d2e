// snspd-link: simulation and bench-data analysis front end.
//
//   snspd-link simulate-ode       --config C --out DIR [--slices N | --tol X] [--threads N]
//   snspd-link rotation-normalize --config C --out DIR
//   snspd-link extract-ode        --config C --out DIR
//   snspd-link analyze            --config C --out DIR
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 data-contract violation. Failures print one JSON object on stderr.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "snspd/analysis.hpp"
#include "snspd/calibration.hpp"
#include "snspd/config.hpp"
#include "snspd/csv.hpp"
#include "snspd/errors.hpp"
#include "snspd/geometry.hpp"
#include "snspd/propagation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace snspd;

namespace {

struct Common {
  std::string config;
  std::string out;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_json(const fs::path& path, const json& j) { csv::write_atomic(path, j.dump(2) + "\n"); }

struct Loaded {
  json doc;
  fs::path base;
};

Loaded load(const Common& c) {
  const fs::path path(c.config);
  if (!fs::exists(path)) fail(ErrorKind::Config, "config file '" + c.config + "' not found");
  Loaded l{config::load_json(path), path.parent_path()};
  if (!l.doc.is_object()) fail(ErrorKind::Config, "configuration must be a JSON object");
  return l;
}

fs::path prepare_out(const Common& c) {
  fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::Config, "cannot create output directory '" + c.out + "': " + ec.message());
  return out;
}

void skip_description(config::Object& o) {
  if (o.has("description")) (void)o.string("description");
}

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("SNSPD_LINK_THREADS")) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(env, &pos);
      if (pos != std::string(env).size() || v < 1) throw std::invalid_argument(env);
      return static_cast<unsigned>(v);
    } catch (const std::exception&) {
      fail(ErrorKind::Config, std::string("SNSPD_LINK_THREADS must be a positive integer, got '") +
                                  env + "'");
    }
  }
  return 1;
}

// ------------------------------------------------------------ simulate-ode

struct SimulateFlags {
  std::optional<int> slices;
  std::optional<double> tol;
  std::optional<unsigned> threads;
};

int simulate_ode(const Common& c, const SimulateFlags& flags) {
  const Loaded l = load(c);
  config::Object root(l.doc, "");
  skip_description(root);

  config::MaterialRegistry reg;
  if (root.has("materials")) reg.load(root.object("materials"), l.base);
  const ConverterGeometry geom = config::parse_geometry(root.object("geometry"), reg);
  const double wavelength = root.quantity("wavelength", Dimension::Length);

  ProfileOptions opt;
  opt.solver.polarization = root.has("polarization")
                                ? config::parse_polarization(root.string("polarization"))
                                : Polarization::TE;
  if (root.has("tips")) opt.tips = config::parse_tips(root.object("tips"));
  opt.threads = resolve_threads(flags.threads);
  opt.cache = std::make_shared<ModeCache>();

  std::optional<int> slices = flags.slices;
  std::optional<double> tol = flags.tol;
  if (root.has("numerics")) {
    auto n = root.object("numerics");
    std::optional<int> cfg_slices;
    std::optional<double> cfg_tol;
    if (n.has("slices")) cfg_slices = static_cast<int>(n.integer("slices"));
    if (n.has("tol")) cfg_tol = n.number("tol");
    n.finish();
    if (cfg_slices && cfg_tol) {
      fail(ErrorKind::Config, "numerics: give either slices or tol, not both");
    }
    // Command-line flags replace the config's numerics entirely.
    if (!slices && !tol) {
      slices = cfg_slices;
      tol = cfg_tol;
    }
  }
  if (slices && tol) fail(ErrorKind::Config, "give either a slice count or a tolerance, not both");
  if (slices && *slices < 2) fail(ErrorKind::Config, "slices must be >= 2");
  if (tol && !(*tol > 0.0)) fail(ErrorKind::Config, "tol must be > 0");
  if (!slices && !tol) tol = 1e-3;

  std::vector<double> rotation_angles;
  int rotation_slices = 0;
  if (root.has("approximate_rotation")) {
    auto r = root.object("approximate_rotation");
    rotation_angles = r.numbers("angles_deg");
    rotation_slices = static_cast<int>(r.integer("slices"));
    r.finish();
    if (rotation_angles.empty()) fail(ErrorKind::Config, "approximate_rotation.angles_deg is empty");
    if (rotation_slices < 2) fail(ErrorKind::Config, "approximate_rotation.slices must be >= 2");
  }
  root.finish();

  const auto& seg = geom.segmentation;
  AbsorptionProfile profile;
  json history = json::array();
  double ode = 0.0;
  int used = 0;
  double estimate = 0.0;
  if (slices) {
    profile = build_absorption_profile(geom, wavelength, *slices, opt);
    ode = compute_ode(profile, seg.z1, seg.z2, opt.tips, seg.end());
    used = *slices;
    estimate = profile.convergence_estimate();
    history.push_back({{"slices", used}, {"ode", ode}});
  } else {
    auto conv = ode_convergence(geom, wavelength, *tol, opt);
    ode = conv.ode;
    used = conv.n_slices;
    estimate = conv.last_change;
    profile = std::move(conv.profile);
    for (const auto& [n, o] : conv.history) history.push_back({{"slices", n}, {"ode", o}});
  }
  const double a1 = profile.survival_between(seg.z1, seg.z2);
  const double a2 = profile.survival_between(seg.z2, seg.end());

  const fs::path out = prepare_out(c);
  std::vector<csv::Row> rows;
  for (std::size_t j = 0; j < profile.slices().size(); ++j) {
    const auto& s = profile.slices()[j];
    rows.push_back({s.z, s.k, s.alpha, profile.survival()[j]});
  }
  csv::write_atomic(out / "absorption_profile.csv", csv::to_text(config::kProfileColumns, rows));

  json slices_json = json::array();
  for (const auto& s : profile.slices()) {
    slices_json.push_back({{"z_m", s.z},
                           {"n_eff_real", s.n_eff.real()},
                           {"n_eff_loss", -s.n_eff.imag()},
                           {"alpha_per_m", s.alpha}});
  }

  json notes = json::array();
  if (geom.nanowire.material.name() == materials::nbtin_placeholder().name()) {
    notes.push_back("nanowire optical constants are the built-in literature-style placeholder, "
                    "not measured values");
  }
  notes.push_back("semi-vectorial finite-difference mode model; full-vector effects are not included");
  if (geom.rotation_deg != 0.0) {
    notes.push_back("rotation modelled as a rigid lateral shift per slice (approximate)");
  }

  json resolved = {
      {"geometry", config::geometry_to_json(geom)},
      {"materials", config::geometry_materials_json(geom)},
      {"wavelength_m", wavelength},
      {"polarization", std::string(to_string(opt.solver.polarization))},
      {"tips", config::tips_to_json(opt.tips)},
      {"numerics", slices ? json{{"slices", *slices}} : json{{"tol", *tol}}},
  };

  json result = {{"ode", ode},
                 {"slices_used", used},
                 {"convergence_estimate", estimate},
                 {"segment1_survival", a1},
                 {"segment2_survival", a2},
                 {"distinct_mode_solves", opt.cache->size()},
                 {"history", history},
                 {"profile", slices_json}};

  if (!rotation_angles.empty()) {
    const auto sweep =
        approximate_rotation_sweep(geom, wavelength, rotation_angles, rotation_slices, opt);
    std::vector<csv::Row> rrows;
    json rj = json::array();
    for (const auto& [a, o] : sweep) {
      rrows.push_back({a, o});
      rj.push_back({{"angle_deg", a}, {"ode", o}});
    }
    csv::write_atomic(out / "approx_rotation_ode.csv",
                      "# APPROXIMATE rigid lateral-shift slice model, not a 3D propagation\n" +
                          csv::to_text({"angle_deg", "ode"}, rrows));
    resolved["approximate_rotation"] = {{"angles_deg", rotation_angles},
                                        {"slices", rotation_slices}};
    result["approximate_rotation"] = rj;
  }

  write_json(out / "ode_report.json",
             {{"command", "simulate-ode"}, {"config", resolved}, {"result", result}, {"notes", notes}});

  std::cout << "ODE " << fmt("%.6g", ode) << "\n"
            << "slices " << used << "\n"
            << "convergence estimate " << fmt("%.3g", estimate) << "\n"
            << "segment survivals " << fmt("%.6g", a1) << " " << fmt("%.6g", a2) << "\n";
  return 0;
}

// ------------------------------------------------------ rotation-normalize

int rotation_normalize(const Common& c) {
  const Loaded l = load(c);
  config::Object root(l.doc, "");
  skip_description(root);
  const std::string sweep_ref = root.string("sweep_csv");
  const double aligned = root.number("aligned_ode");
  root.finish();

  const auto sweep = config::load_pairs(config::resolve(l.base, sweep_ref), config::kSweepColumns);
  const auto curve = normalize_rotation_sweep(sweep, aligned);

  const fs::path out = prepare_out(c);
  std::vector<csv::Row> rows;
  json rj = json::array();
  for (const auto& [a, o] : curve) {
    rows.push_back({a, o});
    rj.push_back({{"angle_deg", a}, {"ode", o}});
  }
  csv::write_atomic(out / "rotation_ode.csv", csv::to_text({"angle_deg", "ode"}, rows));
  json input = json::array();
  for (const auto& [a, u] : sweep) input.push_back({{"angle_deg", a}, {"u_a", u}});
  write_json(out / "rotation_report.json",
             {{"command", "rotation-normalize"},
              {"config", {{"sweep_csv", sweep_ref}, {"aligned_ode", aligned}, {"sweep", input}}},
              {"result", rj}});

  std::cout << "aligned ODE " << fmt("%.6g", aligned) << "\n";
  for (const auto& [a, o] : curve) std::cout << fmt("%g", a) << " deg  " << fmt("%.6g", o) << "\n";
  return 0;
}

// ------------------------------------------------------------- extract-ode

int extract_ode_cmd(const Common& c) {
  const Loaded l = load(c);
  config::Object root(l.doc, "");
  skip_description(root);
  const LossBudget budget = config::parse_budget(root.object("budget"));
  auto tr = root.object("trace");
  const std::string trace_ref = tr.string("csv");
  const double t_int = tr.quantity("integration_time", Dimension::Time);
  tr.finish();
  const double at_bias = root.quantity("at_bias", Dimension::Current);
  root.finish();

  const CountTrace trace = config::load_trace(config::resolve(l.base, trace_ref), t_int);
  const PhotonFlux flux = photon_flux(budget);
  const EfficiencyReport r = extract_ode(trace, at_bias, flux, budget.wavelength);

  json pts = json::array();
  for (const auto& p : trace.points()) {
    pts.push_back({{"bias_a", p.bias}, {"photon_rate_hz", p.photon_rate}, {"dark_rate_hz", p.dark_rate}});
  }
  json report = {
      {"command", "extract-ode"},
      {"config",
       {{"budget", config::budget_to_json(budget)},
        {"trace", {{"csv", trace_ref}, {"integration_time_s", t_int}, {"points", pts}}},
        {"at_bias_a", at_bias}}},
      {"result",
       {{"ode", r.ode},
        {"ode_sigma", r.ode_sigma},
        {"bias_a", r.bias},
        {"wavelength_m", r.wavelength},
        {"photon_rate_hz", r.photon_rate},
        {"dark_rate_hz", r.dark_rate},
        {"sigma_counts_hz", r.sigma_counts},
        {"photon_flux_per_s", r.flux.phi},
        {"photon_flux_sigma_per_s", r.flux.sigma},
        {"neighbour_biases_a", r.neighbour_biases}}},
  };
  const fs::path out = prepare_out(c);
  write_json(out / "efficiency_report.json", report);

  std::ostringstream s;
  s << "on-chip detection efficiency\n"
    << "  ODE            " << fmt("%.4f", 100.0 * r.ode) << " +/- " << fmt("%.4f", 100.0 * r.ode_sigma)
    << " %\n"
    << "  bias           " << fmt("%.6g", r.bias) << " A\n"
    << "  wavelength     " << fmt("%.6g", r.wavelength) << " m\n"
    << "  photon rate    " << fmt("%.6g", r.photon_rate) << " Hz\n"
    << "  dark rate      " << fmt("%.6g", r.dark_rate) << " Hz\n"
    << "  photon flux    " << fmt("%.6g", r.flux.phi) << " +/- " << fmt("%.3g", r.flux.sigma)
    << " 1/s\n"
    << "  total loss     " << fmt("%.4f", budget.total_db()) << " dB\n";
  csv::write_atomic(out / "efficiency_summary.txt", s.str());
  std::cout << s.str();
  return 0;
}

// ----------------------------------------------------------------- analyze

int analyze(const Common& c) {
  const Loaded l = load(c);
  config::Object root(l.doc, "");
  skip_description(root);
  static const std::vector<std::string> kSections{"iv",    "jitter",      "linearity",
                                                  "extinction", "plateau", "dark_counts"};
  bool any = false;
  for (const auto& k : kSections) any = any || root.has(k);
  if (!any) {
    fail(ErrorKind::Config,
         "analyze needs at least one of: iv, jitter, linearity, extinction, plateau, dark_counts");
  }

  json sections = json::object();
  json resolved = json::object();
  std::ostringstream summary;
  int exit_code = 0;
  std::string first_category;

  auto run = [&](const std::string& name, auto&& body) {
    if (!root.has(name)) {
      sections[name] = {{"status", "skipped"}};
      summary << name << ": skipped (not configured)\n";
      return;
    }
    json echo = json::object();
    try {
      auto sec = root.object(name);
      json res = body(sec, echo);
      sec.finish();
      sections[name] = {{"status", "ok"}, {"result", res}};
    } catch (const Error& e) {
      sections[name] = {{"status", "error"},
                        {"kind", std::string(to_string(e.kind()))},
                        {"category", std::string(to_string(e.category()))},
                        {"message", e.message()}};
      summary << name << ": FAILED " << e.what() << "\n";
      if (exit_code == 0) {
        exit_code = e.exit_code();
        first_category = std::string(to_string(e.category()));
      }
    }
    resolved[name] = echo;
  };

  run("iv", [&](config::Object& s, json& echo) {
    const std::string ref = s.string("csv");
    const double thr = s.has("v_threshold") ? s.quantity("v_threshold", Dimension::Voltage)
                                            : kDefaultSwitchThreshold;
    echo = {{"csv", ref}, {"v_threshold_v", thr}};
    const double isw = switching_current(config::load_iv(config::resolve(l.base, ref)), thr);
    summary << "iv: switching current " << fmt("%.6g", isw) << " A\n";
    return json{{"switching_current_a", isw}};
  });

  run("jitter", [&](config::Object& s, json& echo) {
    const std::string ref = s.string("csv");
    echo = {{"csv", ref}};
    const auto h = config::load_jitter(config::resolve(l.base, ref));
    const auto f = jitter_fwhm(h);
    summary << "jitter: FWHM " << fmt("%.6g", f.fwhm) << " s";
    if (f.resolution_limited) summary << " (" << f.warning << ")";
    summary << "\n";
    json r = {{"fwhm_s", f.fwhm},
              {"sigma_s", f.sigma},
              {"center_s", f.center},
              {"amplitude", f.amplitude},
              {"background", f.background},
              {"resolution_limited", f.resolution_limited}};
    if (f.resolution_limited) r["warning"] = f.warning;
    return r;
  });

  run("linearity", [&](config::Object& s, json& echo) {
    const std::string ref = s.string("csv");
    const double floor = s.has("rate_floor_hz") ? s.number("rate_floor_hz") : 0.0;
    echo = {{"csv", ref}, {"rate_floor_hz", floor}};
    const auto f = linearity_fit(
        config::load_pairs(config::resolve(l.base, ref), config::kLinearityColumns), floor);
    summary << "linearity: slope " << fmt("%.6g", f.slope) << " per decade, r^2 "
            << fmt("%.6g", f.r_squared) << "\n";
    return json{{"slope", f.slope},
                {"intercept", f.intercept},
                {"r_squared", f.r_squared},
                {"points_used", f.points_used}};
  });

  run("extinction", [&](config::Object& s, json& echo) {
    const double on = s.number("coupled_rate_hz");
    const double off = s.number("uncoupled_rate_hz");
    std::optional<double> t;
    if (s.has("integration_time")) t = s.quantity("integration_time", Dimension::Time);
    echo = {{"coupled_rate_hz", on}, {"uncoupled_rate_hz", off}};
    if (t) echo["integration_time_s"] = *t;
    const auto r = extinction_ratio(on, off, t);
    summary << "extinction: " << r.text << "\n";
    return json{{"db", r.db}, {"lower_bound", r.lower_bound}, {"text", r.text}};
  });

  run("plateau", [&](config::Object& s, json& echo) {
    const std::string ref = s.string("trace_csv");
    const double t = s.quantity("integration_time", Dimension::Time);
    PlateauOptions po;
    if (s.has("flatness")) po.flatness = s.number("flatness");
    if (s.has("min_points")) po.min_points = static_cast<std::size_t>(s.integer("min_points"));
    if (s.has("dark_margin")) po.dark_margin = s.number("dark_margin");
    echo = {{"trace_csv", ref},
            {"integration_time_s", t},
            {"flatness", po.flatness},
            {"min_points", po.min_points},
            {"dark_margin", po.dark_margin}};
    const auto p = detect_plateau(config::load_trace(config::resolve(l.base, ref), t), po);
    if (!p) {
      summary << "plateau: none found\n";
      return json{{"found", false}};
    }
    summary << "plateau: " << fmt("%.6g", p->lo) << " to " << fmt("%.6g", p->hi) << " A\n";
    return json{{"found", true}, {"bias_lo_a", p->lo}, {"bias_hi_a", p->hi}};
  });

  run("dark_counts", [&](config::Object& s, json& echo) {
    const std::string ref = s.string("trace_csv");
    const double t = s.quantity("integration_time", Dimension::Time);
    const double bias = s.quantity("bias", Dimension::Current);
    echo = {{"trace_csv", ref}, {"integration_time_s", t}, {"bias_a", bias}};
    const double rate = dark_count_rate(config::load_trace(config::resolve(l.base, ref), t), bias);
    summary << "dark counts: " << fmt("%.6g", rate) << " Hz\n";
    return json{{"dark_rate_hz", rate}};
  });

  root.finish();
  const fs::path out = prepare_out(c);
  write_json(out / "analysis_report.json",
             {{"command", "analyze"}, {"config", resolved}, {"sections", sections}});
  csv::write_atomic(out / "analysis_summary.txt", summary.str());
  std::cout << summary.str();
  if (exit_code != 0) {
    json err = {{"error",
                 {{"category", first_category},
                  {"exit_code", exit_code},
                  {"message", "one or more analysis sections failed; see analysis_report.json"}}}};
    std::cerr << err.dump() << "\n";
  }
  return exit_code;
}

int report_error(ErrorKind kind, const std::string& message) {
  const auto cat = category_of(kind);
  json err = {{"error",
               {{"category", std::string(to_string(cat))},
                {"kind", std::string(to_string(kind))},
                {"exit_code", static_cast<int>(cat)},
                {"message", message}}}};
  std::cerr << err.dump() << "\n";
  return static_cast<int>(cat);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Waveguide-coupled single-photon detector simulation and analysis"};
  app.require_subcommand(1);

  Common common;
  SimulateFlags sim;
  int slices_flag = 0;
  double tol_flag = 0.0;
  unsigned threads_flag = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file")->required();
    sub->add_option("--out", common.out, "output directory")->required();
  };

  auto* simulate = app.add_subcommand("simulate-ode", "predict ODE of the hybrid converter");
  add_common(simulate);
  auto* o_slices = simulate->add_option("--slices", slices_flag, "fixed number of z slices");
  auto* o_tol = simulate->add_option("--tol", tol_flag, "ODE convergence tolerance");
  o_slices->excludes(o_tol);
  auto* o_threads = simulate->add_option("--threads", threads_flag, "worker threads for slice solves");

  auto* rotation = app.add_subcommand("rotation-normalize", "normalize an absorbed-energy rotation sweep");
  add_common(rotation);
  auto* extract = app.add_subcommand("extract-ode", "measured ODE with uncertainty from a count trace");
  add_common(extract);
  auto* analyze_cmd = app.add_subcommand("analyze", "IV, jitter, linearity, extinction and dark counts");
  add_common(analyze_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << "\n";
    return report_error(ErrorKind::Config, e.what());
  }

  try {
    if (simulate->parsed()) {
      if (o_slices->count()) sim.slices = slices_flag;
      if (o_tol->count()) sim.tol = tol_flag;
      if (o_threads->count()) sim.threads = threads_flag;
      return simulate_ode(common, sim);
    }
    if (rotation->parsed()) return rotation_normalize(common);
    if (extract->parsed()) return extract_ode_cmd(common);
    if (analyze_cmd->parsed()) return analyze(common);
  } catch (const Error& e) {
    return report_error(e.kind(), e.message());
  } catch (const nlohmann::json::exception& e) {
    return report_error(ErrorKind::Config, e.what());
  } catch (const std::exception& e) {
    return report_error(ErrorKind::InvalidArgument, e.what());
  }
  return report_error(ErrorKind::Config, "no command given");
}
