#include "mabuchi/families.hpp"
#include "mabuchi/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace mabuchi;
namespace fs = std::filesystem;

namespace {

GridPtr small_disc(int nt = 3) {
    GridSpec s;
    s.h_z = 0.1;
    s.n_t = nt;
    return build_grid(s);
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "mabuchi_test_io";
    fs::create_directories(dir);
    return dir / name;
}

KeyValueConfig parse(const std::string& text) {
    std::istringstream in(text);
    return KeyValueConfig::parse(in);
}

}  // namespace

TEST(FormatDouble, RoundTripsExactly) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, std::nextafter(1.0, 2.0)})
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v) << format_double(v);
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(GridFunctionIo, RoundTripIsBitExact) {
    const auto g = small_disc();
    const auto phi = family_potential(g, FamilySpec{FamilyKind::angular_perturbation}).values();
    const auto file = scratch("phi.json");
    save_grid_function(file, phi);
    const auto back = load_grid_function(file);
    ASSERT_TRUE(back.grid().spec() == g->spec());
    EXPECT_EQ(back.tag(), SliceTag::spatial);
    for (std::size_t i = 0; i < phi.size(); ++i) EXPECT_EQ(back[i], phi[i]);
}

TEST(GridFunctionIo, FullTagSurvives) {
    const auto g = small_disc(5);
    GridFunction u(g, SliceTag::full);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = 0.25 * static_cast<double>(i);
    const auto back = grid_function_from_json(to_json(u), g);
    EXPECT_EQ(back.tag(), SliceTag::full);
    EXPECT_EQ(&back.grid(), g.get());
    EXPECT_EQ(back[u.size() - 1], u[u.size() - 1]);
}

TEST(GridFunctionIo, TruncatedFileIsFormatError) {
    const auto g = small_disc();
    const auto file = scratch("truncated.json");
    const std::string text = to_json(GridFunction(g, SliceTag::spatial)).dump();
    write_text_file(file, text.substr(0, text.size() / 2));
    EXPECT_THROW(load_grid_function(file), FormatError);
}

TEST(GridFunctionIo, VersionMismatchNamesBothVersions) {
    auto j = to_json(GridFunction(small_disc(), SliceTag::spatial));
    j["version"] = 99;
    try {
        grid_function_from_json(j);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("expected 1, found 99"), std::string::npos) << e.what();
    }
}

TEST(GridFunctionIo, RejectsBadHeadersAndSizes) {
    auto j = to_json(GridFunction(small_disc(), SliceTag::spatial));
    auto wrong_format = j;
    wrong_format["format"] = "something.else";
    EXPECT_THROW(grid_function_from_json(wrong_format), FormatError);
    auto no_spec = j;
    no_spec.erase("spec");
    EXPECT_THROW(grid_function_from_json(no_spec), FormatError);
    auto bad_tag = j;
    bad_tag["slice_tag"] = "diagonal";
    EXPECT_THROW(grid_function_from_json(bad_tag), FormatError);
    auto short_values = j;
    short_values["values"].erase(0);
    EXPECT_THROW(grid_function_from_json(short_values), FormatError);
    auto bad_spec = j;
    bad_spec["spec"]["h_z"] = -1.0;
    EXPECT_THROW(grid_function_from_json(bad_spec), FormatError);
}

TEST(GridFunctionIo, MissingFileIsIoError) { EXPECT_THROW(load_grid_function(scratch("absent.json")), IoError); }

TEST(PathIo, RoundTrip) {
    const auto g = small_disc();
    const auto a = family_potential(g, FamilySpec{}).values();
    const auto b = 2.0 * a;
    const GeodesicPath p({a, 0.5 * (a + b), b}, "hash123");
    const auto back = path_from_json(to_json(p));
    ASSERT_EQ(back.size(), 3u);
    EXPECT_EQ(back.provenance(), "hash123");
    EXPECT_EQ(sup_distance(back.slice(1), p.slice(1)), 0.0);
    auto j = to_json(p);
    j["version"] = 0;
    EXPECT_THROW(path_from_json(j), FormatError);
}

TEST(Csv, FormatsRowsAndBlanksNaN) {
    CsvTable t({"t", "value"});
    t.add({0.0, 0.5});
    t.add({1.0, std::numeric_limits<double>::quiet_NaN()});
    EXPECT_EQ(t.str(), "t,value\n0,0.5\n1,\n");
    EXPECT_THROW(t.add({1.0}), UsageError);
}

TEST(KeyValueConfig, SectionsCommentsQuotes) {
    const auto c = parse("# top\nseed = 3\n[grid]\nh = 0.02   # step\ndomain = \"unit_disc\"\n[endpoints]\nphi0 = \"file:a#b.json\"\n");
    EXPECT_EQ(c.get_int("seed", 0), 3);
    EXPECT_DOUBLE_EQ(c.get_double("grid.h", 1.0), 0.02);
    EXPECT_EQ(c.get_string("grid.domain", ""), "unit_disc");
    EXPECT_EQ(c.get_string("endpoints.phi0", ""), "file:a#b.json");
    EXPECT_EQ(c.get_double("grid.nt", 9.0), 9.0);
    EXPECT_NO_THROW(c.check_all_used());
    EXPECT_EQ(c.resolved().at("grid.nt"), "9");
    EXPECT_EQ(c.resolved().at("grid.h"), "0.02");
}

TEST(KeyValueConfig, OverridesAndLists) {
    auto c = parse("[ke]\nscan = [0.5, 1, 2]\n");
    c.set_override("ke.scan=1,4");
    c.set_override("solver.trace = false");
    EXPECT_EQ(c.get_list("ke.scan", {}), (std::vector<double>{1.0, 4.0}));
    EXPECT_FALSE(c.get_bool("solver.trace", true));
    EXPECT_THROW(c.set_override("no_equals"), ConfigError);
}

TEST(KeyValueConfig, Errors) {
    EXPECT_THROW(parse("[grid\nh = 1\n"), ConfigError);
    EXPECT_THROW(parse("just words\n"), ConfigError);
    EXPECT_THROW(parse("k = \"open\n"), ConfigError);
    const auto c = parse("a = x\nb = 1.5\nunused = 1\n");
    EXPECT_THROW(c.get_double("a", 0.0), ConfigError);
    EXPECT_THROW(c.get_int("b", 0), ConfigError);
    EXPECT_THROW(c.get_bool("a", false), ConfigError);
    EXPECT_THROW(c.check_all_used(), ConfigError);
    EXPECT_THROW(KeyValueConfig::from_file(scratch("no_such.toml")), ConfigError);
}

TEST(KeyValueConfig, CanonicalIsOrderIndependent) {
    EXPECT_EQ(parse("b = 2\na = 1\n").canonical(), parse("a = 1\nb = 2\n").canonical());
}

TEST(Families, NamesRoundTrip) {
    for (auto k : {FamilyKind::scaled_quadratic, FamilyKind::quartic_blend, FamilyKind::angular_perturbation})
        EXPECT_EQ(family_from_string(to_string(k)), k);
    EXPECT_THROW(family_from_string("cubic"), ConfigError);
}

TEST(Families, VanishOnTheSphereAndAreStrictlyPsh) {
    const auto g = small_disc();
    FamilySpec quartic{FamilyKind::quartic_blend};
    quartic.b = 0.5;
    for (const auto& f : {FamilySpec{}, quartic, FamilySpec{FamilyKind::angular_perturbation}}) {
        const auto fn = family_function(f);
        EXPECT_NEAR(fn({cplx(0.6, 0.8), cplx(0.0, 0.0)}), 0.0, 1e-15);
        EXPECT_NO_THROW(family_potential(g, f));
    }
}

TEST(Families, RejectsNonPshMembers) {
    const auto g = small_disc();
    FamilySpec neg;
    neg.c = -1.0;
    EXPECT_THROW(family_potential(g, neg), ConfigError);
    FamilySpec wild{FamilyKind::angular_perturbation};
    wild.eps = 5.0;
    EXPECT_THROW(family_potential(g, wild), ConfigError);
    wild.eps = 0.1;
    wild.k = 0;
    EXPECT_THROW(family_potential(g, wild), ConfigError);
}

TEST(Families, RadialProfilesMatchTheFunctions) {
    FamilySpec quartic{FamilyKind::quartic_blend};
    quartic.a = 0.5;
    quartic.b = 0.25;
    const double s = -0.3, r = std::exp(s);
    for (const auto& f : {FamilySpec{}, quartic}) {
        const auto g = radial_profile(f);
        ASSERT_TRUE(g.has_value());
        EXPECT_NEAR((*g)(s), family_function(f)({cplx(r, 0.0), cplx(0.0, 0.0)}), 1e-15);
    }
    EXPECT_FALSE(radial_profile(FamilySpec{FamilyKind::angular_perturbation}).has_value());
}
