// Acceptance run: one PASS/FAIL line per criterion, supporting numbers
// indented underneath. Exit status is nonzero if any criterion fails.
//
// Needs SNSPD_SAMPLES_DIR and SNSPD_LINK_PATH (compile definitions, or the
// first two command-line arguments).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "snspd/analysis.hpp"
#include "snspd/calibration.hpp"
#include "snspd/config.hpp"
#include "snspd/csv.hpp"
#include "snspd/geometry.hpp"
#include "snspd/mode_solver.hpp"
#include "snspd/propagation.hpp"

#include "../oracles/slab_oracle.hpp"

namespace fs = std::filesystem;
using namespace snspd;
using Clock = std::chrono::steady_clock;

namespace {

fs::path g_samples;
std::string g_cli;
unsigned g_threads = 1;
const auto g_start = Clock::now();

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  // Records one sub-check; the criterion passes only if all of them do.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

int g_failures = 0;

void run(int id, const std::string& title, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.check(false, std::string("exception: ") + e.what());
  }
  if (!o.pass) ++g_failures;
  std::printf("%s %d %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(),
              seconds_since(t0));
  for (const auto& n : o.notes) std::printf("       %s\n", n.c_str());
  std::fflush(stdout);
}

// ------------------------------------------------------------------ slab

constexpr double kLambda = 1570e-9;

// Core layer |y| < 125 nm, invariant along x (zero-slope x walls). The
// window is offset half a cell at 10 nm so cell edges land on the interfaces
// at every refinement.
CrossSection slab(double dy, double core_k, double half_height = 1.5e-6, double width = 3e-6) {
  const Domain dom{-width / 2, width / 2, -half_height - 5e-9, half_height - 5e-9};
  CrossSection cs(dom, 10e-9, dy, Material::constant("clad", 1.444));
  cs.add({dom.x_min, dom.x_max, -125e-9, 125e-9, Material::constant("core", 2.0, core_k)});
  return cs;
}

SolverOptions slab_options() {
  SolverOptions o;
  o.boundary_x = Boundary::ZeroSlope;
  return o;
}

void criterion_slab(Outcome& o) {
  const auto ref = oracle::symmetric_slab_te0(2.0, 1.444, 250e-9, kLambda);
  o.note(fmt("analytic TE0 root %.9f", ref.n_eff));

  // Timing on the 3 um x 3 um window.
  {
    const auto cs = slab(10e-9, 0.0);
    auto t0 = Clock::now();
    const auto m = solve_modes(cs, kLambda, 1, slab_options()).front();
    const double dt = seconds_since(t0);
    auto no_sym = slab_options();
    no_sym.use_mirror_symmetry = false;
    t0 = Clock::now();
    const auto f = solve_modes(cs, kLambda, 1, no_sym).front();
    const double dt_full = seconds_since(t0);
    o.note(fmt("300 x 300 window: n_eff %.9f, |err| %.3e", m.n_real(),
               std::abs(m.n_real() - ref.n_eff)));
    o.check(cs.nx() == 300 && cs.ny() == 300 && dt < 10.0 && dt_full < 10.0,
            fmt("300 x 300 solve %.2f s, %.2f s without the mirror reduction (< 10 s)", dt,
                dt_full));
    o.note(fmt("mirror-reduced and full solves differ by %.2e", std::abs(m.n_real() - f.n_real())));
  }

  // Refinement series on a taller window, so the closed walls (field
  // amplitude ~1e-4 of peak there) stay below the discretization error.
  std::vector<double> errors;
  for (double dy : {10e-9, 5e-9, 2.5e-9}) {
    const auto cs = slab(dy, 0.0, 3.0e-6, 0.2e-6);
    const auto m = solve_modes(cs, kLambda, 1, slab_options()).front();
    const double err = std::abs(m.n_real() - ref.n_eff);
    errors.push_back(err);
    o.note(fmt("dy %.1f nm (6 um window): n_eff %.9f  |err| %.3e", dy * 1e9, m.n_real(), err));
  }
  o.check(errors[0] < 1e-3, fmt("error at 10 nm %.3e < 1e-3", errors[0]));
  o.check(errors[1] < errors[0] && errors[2] < errors[1],
          "error decreases monotonically over two refinements");
}

void criterion_absorption(Outcome& o) {
  const double k = 1e-4;
  const auto ref = oracle::symmetric_slab_te0(2.0, 1.444, 250e-9, kLambda);
  const double expected = k * ref.confinement;
  const auto cs = slab(10e-9, k);
  const auto m = solve_modes(cs, kLambda, 1, slab_options()).front();
  const double rel = std::abs(m.n_loss() - expected) / expected;
  o.note(fmt("confinement factor %.6f, k * Gamma = %.6e", ref.confinement, expected));
  o.check(rel < 0.10, fmt("solver n'' %.6e, relative deviation %.3f%% < 10%%", m.n_loss(),
                          100 * rel));
}

// ------------------------------------------------------------ propagation

struct SimConfig {
  ConverterGeometry geom;
  double wavelength = 0.0;
  TipTransmissions tips;
};

SimConfig load_sim(const fs::path& path) {
  const auto doc = config::load_json(path);
  config::Object root(doc, "");
  config::MaterialRegistry reg;
  if (root.has("materials")) reg.load(root.object("materials"), path.parent_path());
  SimConfig c;
  c.geom = config::parse_geometry(root.object("geometry"), reg);
  c.wavelength = root.quantity("wavelength", Dimension::Length);
  if (root.has("tips")) c.tips = config::parse_tips(root.object("tips"));
  return c;
}

AbsorptionProfile constant_profile(double alpha, double length, int n) {
  std::vector<Slice> s;
  for (int i = 0; i < n; ++i) s.push_back({length * i / (n - 1), 0.0, alpha, {}});
  return AbsorptionProfile(kLambda, s);
}

void criterion_closed_form(Outcome& o) {
  const auto cfg = load_sim(g_samples / "simulate" / "constant_alpha.json");
  const auto profile = build_absorption_profile(cfg.geom, cfg.wavelength, 9);
  const auto& sl = profile.slices();
  const double alpha = sl.front().alpha;
  bool constant = true;
  for (const auto& s : sl) constant = constant && s.alpha == alpha;
  o.check(constant && alpha > 0.0, fmt("fixture alpha constant over all slices: %.6f 1/m", alpha));

  double worst = 0.0;
  for (std::size_t j = 0; j < sl.size(); ++j) {
    const double exact = std::exp(-2.0 * alpha * (sl[j].z - sl.front().z));
    worst = std::max(worst, std::abs(profile.survival()[j] - exact) / exact);
  }
  o.check(worst <= 1e-9, fmt("max relative deviation from exp(-2 alpha L): %.2e", worst));

  const auto hand = constant_profile(4002.0, 90e-6, 7);
  const double s90 = hand.survival().back();
  o.check(std::abs(s90 - 0.4866) < 5e-5, fmt("4002 1/m over 90 um -> %.5f (0.4866)", s90));

  std::mt19937_64 rng(20240917);
  double worst_split = 0.0;
  const double a0 = profile.z_begin();
  const double span = profile.z_end() - a0;
  // Also on a profile with varying alpha, where the split can fall mid-slice.
  std::vector<Slice> ramp;
  for (int i = 0; i < 11; ++i) ramp.push_back({i * 1e-6, 0.0, 2e4 * (1 + std::sin(i)), {}});
  const AbsorptionProfile varying(kLambda, ramp);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto& p = trial % 2 ? profile : varying;
    const double lo = trial % 2 ? a0 : 0.0;
    const double len = trial % 2 ? span : 10e-6;
    double xs[3] = {lo + len * u(rng), lo + len * u(rng), lo + len * u(rng)};
    std::sort(xs, xs + 3);
    const double whole = p.survival_between(xs[0], xs[2]);
    const double parts = p.survival_between(xs[0], xs[1]) * p.survival_between(xs[1], xs[2]);
    worst_split = std::max(worst_split, std::abs(whole - parts));
  }
  o.check(worst_split <= 1e-12,
          fmt("composition over 2000 random split points: max |diff| %.2e", worst_split));
}

void criterion_ode_formula(Outcome& o) {
  const double lossless = detection_efficiency(1.0, 1.0, {0.995, 0.925});
  o.check(lossless == 0.0, fmt("lossless -> %.17g", lossless));
  const double half = detection_efficiency(0.5, 0.5, {1.0, 1.0});
  o.check(half == 0.75, fmt("tips (1,1), survivals 0.5/0.5 -> %.17g", half));
  const double mixed = detection_efficiency(0.7, 0.8, {0.995, 0.925});
  o.check(std::abs(mixed - 0.4274) < 1e-4, fmt("tips (0.995,0.925), 0.7/0.8 -> %.6f", mixed));

  // Same numbers through compute_ode on slice profiles.
  const double L = 1e-6;
  const auto halving = constant_profile(std::log(2.0) / (2 * L), 2 * L, 5);
  const double v = compute_ode(halving, 0.0, L, {1.0, 1.0});
  o.check(std::abs(v - 0.75) < 1e-12, fmt("compute_ode, survival 0.5 per segment -> %.15f", v));
  const auto flat = constant_profile(0.0, 2 * L, 5);
  const double z = compute_ode(flat, 0.0, L, {0.995, 0.925});
  o.check(z == 0.0, fmt("compute_ode on a lossless profile -> %.17g", z));
}

// -------------------------------------------------------------- calibration

void criterion_flux(Outcome& o) {
  LossBudget b;
  b.p_in = 1e-3;
  b.wavelength = kLambda;
  b.db_fiber = chain_db({4.18, 1.35});
  b.db_coupler = facet_loss_from_loopback(22.23, 2.70, 2.83);
  b.db_attenuator = 70.0;
  b.db_fiber_sigma = 0.1;
  o.note(fmt("dB_f %.2f, dB_c %.2f, dB_attn %.0f", b.db_fiber, b.db_coupler, b.db_attenuator));
  const auto f = photon_flux(b);
  const double rel = std::abs(f.phi - 3.235e7) / 3.235e7;
  o.check(rel < 1e-3, fmt("flux %.5e 1/s, %.3f%% from 3.235e7", f.phi, 100 * rel));
}

// ------------------------------------------------------- measured numbers

struct Extracted {
  EfficiencyReport report;
  PhotonFlux flux;
};

Extracted extract_fixture(const fs::path& path) {
  const auto doc = config::load_json(path);
  config::Object root(doc, "");
  const auto budget = config::parse_budget(root.object("budget"));
  auto trace = root.object("trace");
  const auto csv_path = config::resolve(path.parent_path(), trace.string("csv"));
  const double t_int = trace.quantity("integration_time", Dimension::Time);
  const double bias = root.quantity("at_bias", Dimension::Current);
  const auto flux = photon_flux(budget);
  return {extract_ode(config::load_trace(csv_path, t_int), bias, flux, budget.wavelength), flux};
}

void criterion_paper_numbers(Outcome& o) {
  const auto ex = extract_fixture(g_samples / "extract" / "paper_numbers.json");
  const auto& r = ex.report;
  o.note(fmt("flux %.5e 1/s", ex.flux.phi));
  o.check(std::abs(r.ode - 0.078) <= 5e-4, fmt("ODE %.4f%% (7.8%% +- 0.05%%)", 100 * r.ode));
  const double ratio = r.ode_sigma / r.ode;
  o.check(std::abs(ratio - 0.023) < 1e-3,
          fmt("ode_sigma %.4f%% = ODE * %.5f (~0.023)", 100 * r.ode_sigma, ratio));

  // Simulated side: placeholder nanowire table, shared cache across variants.
  const auto cfg = load_sim(g_samples / "simulate" / "paper_default.json");
  ProfileOptions opt;
  opt.tips = cfg.tips;
  opt.threads = g_threads;
  opt.cache = std::make_shared<ModeCache>();
  const double tol = 1e-3;

  const auto base = ode_convergence(cfg.geom, cfg.wavelength, tol, opt);
  o.check(base.ode > 0.05 && base.ode < 0.60,
          fmt("default geometry ODE %.6f in (0.05, 0.60), %.0f slices", base.ode,
              static_cast<double>(base.n_slices)));

  const auto& seg = cfg.geom.segmentation;
  std::vector<double> dz2s{10e-6, 25e-6, seg.dz2, 100e-6, 250e-6 - seg.z2};
  std::sort(dz2s.begin(), dz2s.end());
  dz2s.erase(std::unique(dz2s.begin(), dz2s.end()), dz2s.end());
  std::vector<double> odes;
  double a1_long = 0.0;
  for (double dz2 : dz2s) {
    auto g = cfg.geom;
    g.segmentation.dz2 = dz2;
    const auto c = ode_convergence(g, cfg.wavelength, tol, opt);
    odes.push_back(c.ode);
    a1_long = c.profile.survival_between(g.segmentation.z1, g.segmentation.z2);
    o.note(fmt("hairpin past the PIC tip %.0f um: ODE %.6f (%.0f slices)", dz2 * 1e6, c.ode,
               static_cast<double>(c.n_slices)));
  }
  bool monotone = true;
  for (std::size_t i = 1; i < odes.size(); ++i) monotone = monotone && odes[i] >= odes[i - 1];
  o.check(monotone, "ODE non-decreasing as the hairpin overlap grows");

  const double t_det = cfg.tips.t_det_sq;
  const double t_pic = cfg.tips.t_pic_sq;
  const double asymptote = t_det * (1 - a1_long) + t_det * t_pic * a1_long;
  o.check(odes.back() > 0.95 * asymptote,
          fmt("250 um structure ODE %.6f > 95%% of asymptote %.6f", odes.back(), asymptote));
  o.note(fmt("distinct mode solves across all variants: %.0f",
             static_cast<double>(opt.cache->size())));
}

// ----------------------------------------------------------------- rotation

void criterion_rotation(Outcome& o) {
  const auto rows = config::load_pairs(g_samples / "rotation" / "paper_endpoints.csv",
                                       config::kSweepColumns);
  const auto out = normalize_rotation_sweep(rows, 0.303);
  std::map<double, double> by_angle(out.begin(), out.end());
  o.check(std::abs(by_angle.at(0.0) - 0.303) < 1e-12, fmt("0 deg -> %.6f", by_angle.at(0.0)));
  o.check(std::abs(by_angle.at(0.8) - 0.0869) <= 1e-4,
          fmt("0.8 deg -> %.6f (0.0869 +- 0.0001)", by_angle.at(0.8)));
}

// ----------------------------------------------------------------- analysis

void criterion_analysis(Outcome& o) {
  const fs::path d = g_samples / "analyze";
  const double ic = switching_current(config::load_iv(d / "iv.csv"), kDefaultSwitchThreshold);
  o.check(ic == 7.1e-6, fmt("switching current %.10g A", ic));

  const auto jit = jitter_fwhm(config::load_jitter(d / "jitter.csv"));
  const double jrel = std::abs(jit.fwhm - 242e-12) / 242e-12;
  o.check(jrel <= 0.01, fmt("jitter FWHM %.2f ps (%.3f%% from 242 ps)", jit.fwhm * 1e12, 100 * jrel));

  const auto lin = linearity_fit(config::load_pairs(d / "linearity.csv", config::kLinearityColumns));
  o.check(std::abs(lin.slope - 1.0) <= 0.01,
          fmt("linearity slope %.6f, r^2 %.6f", lin.slope, lin.r_squared));

  const auto ext = extinction_ratio(1e6, 100.0);
  o.check(std::abs(ext.db - 40.0) < 1e-9, fmt("extinction %.4f dB", ext.db));

  bool rejected = false;
  std::string why;
  try {
    (void)config::load_trace(d / "bad_dark_trace.csv", 0.1);
  } catch (const Error& e) {
    rejected = e.kind() == ErrorKind::GranularityViolation;
    why = e.message();
  }
  o.check(rejected, "43 Hz dark rate at 0.1 s rejected on ingestion" +
                        (why.empty() ? std::string() : ": " + why));
}

// -------------------------------------------------------------- determinism

struct Job {
  std::string command;
  fs::path config;
};

std::vector<Job> fixture_jobs() {
  std::vector<Job> jobs;
  auto add_dir = [&](const std::string& dir, const std::string& cmd) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(g_samples / dir)) {
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) jobs.push_back({cmd, f});
  };
  add_dir("simulate", "simulate-ode");
  add_dir("rotation", "rotation-normalize");
  add_dir("extract", "extract-ode");
  add_dir("analyze", "analyze");
  return jobs;
}

// Every file below `root` keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).string()] = csv::read_text(e.path());
  }
  return out;
}

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

void run_fixtures(const std::vector<Job>& jobs, const fs::path& root) {
  fs::remove_all(root);
  fs::create_directories(root);
  for (const auto& j : jobs) {
    const std::string name = j.command + "__" + j.config.stem().string();
    const fs::path out = root / name;
    fs::create_directories(out);
    const std::string cmd = quote(g_cli) + " " + j.command + " --config " +
                            quote(j.config.string()) + " --out " + quote(out.string()) + " > " +
                            quote((out / "stdout.txt").string()) + " 2> " +
                            quote((out / "stderr.txt").string());
    const int status = std::system(cmd.c_str());
    std::ofstream(out / "status.txt") << status << "\n";
  }
}

void criterion_determinism(Outcome& o) {
  const auto jobs = fixture_jobs();
  const fs::path work = fs::temp_directory_path() / ("snspd-acceptance-" + std::to_string(::getpid()));
  const auto t0 = Clock::now();
  run_fixtures(jobs, work / "a");
  o.note(fmt("first pass over %.0f fixture configs: %.1f s", static_cast<double>(jobs.size()),
             seconds_since(t0)));
  run_fixtures(jobs, work / "b");
  const auto a = snapshot(work / "a");
  const auto b = snapshot(work / "b");
  std::vector<std::string> differ;
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || it->second != v) differ.push_back(k);
  }
  for (const auto& [k, v] : b) {
    if (!a.count(k)) differ.push_back(k);
  }
  std::size_t outputs = 0;
  for (const auto& [k, v] : a) {
    if (k.find("stdout.txt") == std::string::npos && k.find("stderr.txt") == std::string::npos &&
        k.find("status.txt") == std::string::npos) {
      ++outputs;
    }
  }
  std::string list;
  for (const auto& d : differ) list += " " + d;
  o.check(differ.empty(), fmt("%.0f files compared (%.0f written outputs), all byte-identical",
                              static_cast<double>(a.size()), static_cast<double>(outputs)) +
                              (differ.empty() ? "" : "; differing:" + list));
  fs::remove_all(work);
  const double total = seconds_since(g_start);
  o.check(total < 300.0, fmt("whole acceptance run %.1f s < 300 s", total));
}

}  // namespace

int main(int argc, char** argv) {
#ifdef SNSPD_SAMPLES_DIR
  g_samples = SNSPD_SAMPLES_DIR;
#endif
#ifdef SNSPD_LINK_PATH
  g_cli = SNSPD_LINK_PATH;
#endif
  if (argc > 1) g_samples = argv[1];
  if (argc > 2) g_cli = argv[2];
  if (g_samples.empty() || g_cli.empty()) {
    std::cerr << "usage: acceptance SAMPLES_DIR SNSPD_LINK\n";
    return 2;
  }

  // Slice solves run on every core, in-process and in the CLI runs.
  g_threads = std::max(1u, std::thread::hardware_concurrency());
  ::setenv("SNSPD_LINK_THREADS", std::to_string(g_threads).c_str(), 1);
  std::printf("threads %u\n", g_threads);

  run(1, "mode solver against the analytic slab root", criterion_slab);
  run(2, "modal loss against the confinement-factor perturbation", criterion_absorption);
  run(3, "survival closed form and segment composition", criterion_closed_form);
  run(4, "two-segment efficiency examples", criterion_ode_formula);
  run(5, "photon flux from the stage losses", criterion_flux);
  run(6, "measured-number consistency and simulated ODE properties", criterion_paper_numbers);
  run(7, "rotation sweep normalization", criterion_rotation);
  run(8, "analysis suite on synthetic data", criterion_analysis);
  run(9, "end-to-end determinism and run time", criterion_determinism);

  std::printf("%d of 9 criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
