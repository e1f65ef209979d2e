#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "snspd/config.hpp"
#include "snspd/csv.hpp"
#include "snspd/units.hpp"

using namespace snspd;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using config::json;

namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an snspd::Error");
  return ErrorKind::Config;
}

ConverterGeometry geometry_from(const json& j) {
  config::MaterialRegistry reg;
  return config::parse_geometry(config::Object(j, "geometry"), reg);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("snspd-unit-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("quantities with unit suffixes normalize to SI", "[config_csv]") {
  CHECK_THAT(parse_quantity("1570nm", Dimension::Length), WithinRel(1570e-9, 1e-15));
  CHECK_THAT(parse_quantity("1.57 um", Dimension::Length), WithinRel(1.57e-6, 1e-15));
  CHECK_THAT(parse_quantity("1.57µm", Dimension::Length), WithinRel(1.57e-6, 1e-15));
  CHECK_THAT(parse_quantity("7.1uA", Dimension::Current), WithinRel(7.1e-6, 1e-15));
  CHECK_THAT(parse_quantity("100ms", Dimension::Time), WithinRel(0.1, 1e-15));
  CHECK_THAT(parse_quantity("1mW", Dimension::Power), WithinRel(1e-3, 1e-15));
  CHECK(parse_quantity("2.5e-6", Dimension::Length) == 2.5e-6);
  CHECK(kind_of([] { parse_quantity("3 furlongs", Dimension::Length); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_quantity("5uA", Dimension::Length); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_quantity("", Dimension::Length); }) == ErrorKind::Config);
}

TEST_CASE("strict objects reject unknown keys", "[config_csv]") {
  const json j = {{"t_det_sq", 0.9}, {"t_pic_sq", 0.8}, {"t_typo", 1}};
  CHECK(kind_of([&] { config::parse_tips(config::Object(j, "tips")); }) == ErrorKind::Config);
  const json ok = {{"t_det_sq", 0.9}, {"t_pic_sq", 0.8}};
  const auto tips = config::parse_tips(config::Object(ok, "tips"));
  CHECK(tips.t_det_sq == 0.9);
  const json bad = {{"t_det_sq", 1.2}, {"t_pic_sq", 0.8}};
  CHECK(kind_of([&] { config::parse_tips(config::Object(bad, "tips")); }) == ErrorKind::Config);
}

TEST_CASE("geometry preset fills omitted keys", "[config_csv]") {
  const auto g = geometry_from({{"preset", "paper_default"},
                                {"nanowire", {{"gap", "150nm"}}},
                                {"grid", {{"dx", "20nm"}}}});
  CHECK_THAT(g.nanowire.gap, WithinRel(150e-9, 1e-15));
  CHECK_THAT(g.nanowire.wire_width, WithinRel(90e-9, 1e-15));
  CHECK_THAT(g.grid.dx, WithinRel(20e-9, 1e-15));
  CHECK_THAT(g.grid.dy, WithinRel(9e-9, 1e-15));
  CHECK(g.pivot_z == g.taper_start());

  CHECK(kind_of([] { geometry_from({{"preset", "paper_default"}, {"nanowire", {{"gapp", 1}}}}); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { geometry_from({{"preset", "other"}}); }) == ErrorKind::Config);
  // Without a preset nothing may be omitted.
  CHECK(kind_of([] { geometry_from({{"nanowire", {{"gap", "150nm"}}}}); }) == ErrorKind::Config);
  // Invalid geometry surfaces as a configuration error.
  CHECK(kind_of([] {
          geometry_from({{"preset", "paper_default"}, {"segmentation", {{"z1", "60um"}}}});
        }) == ErrorKind::Config);
}

TEST_CASE("materials from inline tables, constants and files", "[config_csv]") {
  TempDir tmp;
  std::ofstream(tmp.path / "m.json")
      << R"({"table": [{"wavelength": "1.5um", "n": 5.0, "k": 5.5}, {"wavelength": "1.6um", "n": 5.2, "k": 5.7}]})";
  const json section = {{"filemat", {{"file", "m.json"}}},
                        {"flat", {{"n", 1.7}, {"k", 0.0}}},
                        {"inline", {{"table", {{{"wavelength", 1.5e-6}, {"n", 2.0}, {"k", 0.0}}}}}}};
  config::MaterialRegistry reg;
  reg.load(config::Object(section, "materials"), tmp.path);
  CHECK_THAT(material_at(reg.get("filemat"), 1.55e-6).n, WithinAbs(5.1, 1e-12));
  CHECK(material_at(reg.get("flat"), 1.55e-6).n == 1.7);
  CHECK(material_at(reg.get("inline"), 1.5e-6).n == 2.0);
  CHECK(reg.get("si").name() == "si");
  CHECK(kind_of([&] { reg.get("unobtainium"); }) == ErrorKind::Config);

  const json gain = {{"g", {{"n", 1.0}, {"k", -0.1}}}};
  CHECK(kind_of([&] { reg.load(config::Object(gain, "materials"), tmp.path); }) ==
        ErrorKind::Config);
  const json missing = {{"x", {{"file", "nope.json"}}}};
  CHECK(kind_of([&] { reg.load(config::Object(missing, "materials"), tmp.path); }) ==
        ErrorKind::Config);
}

TEST_CASE("loss budget accepts stage lists and loopback objects", "[config_csv]") {
  const json b = {{"p_in", "1mW"},
                  {"wavelength", "1570nm"},
                  {"db_fiber", {4.18, 1.35}},
                  {"db_coupler", {{"loopback_total_db", 22.23}, {"fiber_in_db", 2.70}, {"fiber_out_db", 2.83}}},
                  {"db_attenuator", 70},
                  {"db_fiber_sigma", 0.1}};
  const auto lb = config::parse_budget(config::Object(b, "budget"));
  CHECK_THAT(lb.db_fiber, WithinAbs(5.53, 1e-12));
  CHECK_THAT(lb.db_coupler, WithinAbs(8.35, 1e-12));
  CHECK(lb.db_attenuator == 70.0);
  CHECK(lb.db_extra == 0.0);

  json neg = b;
  neg["db_coupler"] = {{"loopback_total_db", 2.0}, {"fiber_in_db", 2.70}, {"fiber_out_db", 2.83}};
  CHECK(kind_of([&] { config::parse_budget(config::Object(neg, "budget")); }) ==
        ErrorKind::NegativeLoss);
  json extra = b;
  extra["db_other"] = 1;
  CHECK(kind_of([&] { config::parse_budget(config::Object(extra, "budget")); }) ==
        ErrorKind::Config);
  json missing = b;
  missing.erase("db_fiber_sigma");
  CHECK(kind_of([&] { config::parse_budget(config::Object(missing, "budget")); }) ==
        ErrorKind::Config);
}

TEST_CASE("csv parsing is strict about headers and fields", "[config_csv]") {
  const std::vector<std::string> cols{"a", "b"};
  const auto rows = csv::parse("# note\na,b\n1,2\n\n3.5, 4e-3\r\n", cols);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][0] == 3.5);
  CHECK(rows[1][1] == 4e-3);
  CHECK(kind_of([&] { csv::parse("b,a\n1,2\n", cols); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { csv::parse("a,b\n1\n", cols); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { csv::parse("a,b\n1,x\n", cols); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { csv::parse("a,b\n1,nan\n", cols); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { csv::parse("", cols); }) == ErrorKind::InvalidArgument);
  CHECK(csv::parse("a,b\n", cols).empty());
}

TEST_CASE("csv output round-trips and writes atomically", "[config_csv]") {
  TempDir tmp;
  const std::vector<std::string> cols{"x", "y"};
  const std::vector<csv::Row> rows{{0.1, 1.0 / 3.0}, {1e-300, 12345678.9}};
  const auto text = csv::to_text(cols, rows);
  csv::write_atomic(tmp.path / "out.csv", text);
  CHECK_FALSE(fs::exists(tmp.path / "out.csv.tmp"));
  const auto back = csv::read(tmp.path / "out.csv", cols);
  REQUIRE(back.size() == 2);
  CHECK_THAT(back[0][1], WithinRel(1.0 / 3.0, 1e-11));
  CHECK(back[1][1] == 12345678.9);
  CHECK(kind_of([&] { csv::read(tmp.path / "absent.csv", cols); }) == ErrorKind::Config);
}

TEST_CASE("trace and jitter loaders enforce their contracts", "[config_csv]") {
  TempDir tmp;
  std::ofstream(tmp.path / "t.csv") << "bias_a,photon_rate_hz,dark_rate_hz\n1e-6,100,40\n2e-6,110,43\n";
  CHECK(kind_of([&] { config::load_trace(tmp.path / "t.csv", 0.1); }) ==
        ErrorKind::GranularityViolation);
  CHECK_NOTHROW(config::load_trace(tmp.path / "t.csv", 1.0));

  std::ofstream(tmp.path / "j.csv") << "bin_start_s,counts\n0,1\n5e-12,2\n11e-12,3\n";
  CHECK(kind_of([&] { config::load_jitter(tmp.path / "j.csv"); }) == ErrorKind::InvalidArgument);
  std::ofstream(tmp.path / "k.csv") << "bin_start_s,counts\n0,1\n5e-12,2.5\n";
  CHECK(kind_of([&] { config::load_jitter(tmp.path / "k.csv"); }) == ErrorKind::InvalidArgument);
  std::ofstream(tmp.path / "ok.csv") << "bin_start_s,counts\n0,1\n5e-12,2\n10e-12,3\n";
  const auto h = config::load_jitter(tmp.path / "ok.csv");
  CHECK_THAT(h.bin_width, WithinRel(5e-12, 1e-12));
  CHECK(h.counts.size() == 3);
}

TEST_CASE("error categories map to exit codes", "[config_csv]") {
  CHECK(Error(ErrorKind::Config, "").exit_code() == 2);
  CHECK(Error(ErrorKind::NoGuidedMode, "").exit_code() == 3);
  CHECK(Error(ErrorKind::NonConvergence, "").exit_code() == 3);
  CHECK(Error(ErrorKind::FitFailure, "").exit_code() == 3);
  CHECK(Error(ErrorKind::MissingAlignedPoint, "").exit_code() == 4);
  CHECK(Error(ErrorKind::InsufficientPoints, "").exit_code() == 4);
  CHECK(Error(ErrorKind::GranularityViolation, "").exit_code() == 4);
}
