// Runs the opcalc binary on the bundled samples and checks reports and exit codes.

#include <json.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = OPCALC_CLI;
const std::string kSamples = OPCALC_SAMPLES;

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "opcalc-cli-tests";
    fs::create_directories(dir);
    return dir / name;
}

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string sample(const std::string& name) { return kSamples + "/" + name; }

json read_json(const fs::path& p) {
    std::ifstream in(p);
    return json::parse(in);
}

json run_report(const std::string& args, const std::string& tag, int expected_exit) {
    const auto out = scratch(tag + ".json");
    fs::remove(out);
    const int code = run(args + " --out " + out.string());
    if (expected_exit >= 0) EXPECT_EQ(code, expected_exit) << args;
    return fs::exists(out) ? read_json(out) : json();
}

fs::path write_temp(const std::string& name, const json& j) {
    const auto p = scratch(name);
    std::ofstream(p) << j.dump(2);
    return p;
}

std::complex<double> entry(const json& m, int i, int k) {
    const auto& e = m.at(i).at(k);
    return {e.at(0).get<double>(), e.at(1).get<double>()};
}

json strip(json j) {
    if (j.is_object()) {
        j.erase("wall_time");
        for (auto& [k, v] : j.items()) v = strip(v);
    } else if (j.is_array()) {
        for (auto& v : j) v = strip(v);
    }
    return j;
}

}  // namespace

TEST(Cli, ConstantSeriesGivesIdentity) {
    const auto r = run_report("disentangle " + sample("identity.json"), "identity", 0);
    ASSERT_TRUE(r.contains("value"));
    for (int i = 0; i < 2; ++i)
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(std::abs(entry(r["value"], i, k) - (i == k ? 1.0 : 0.0)), 0.0, 1e-12);
}

TEST(Cli, NilpotentExample) {
    const auto r = run_report("disentangle " + sample("nilpotent.json"), "nilpotent", 0);
    ASSERT_TRUE(r.contains("value"));
    EXPECT_NEAR(std::abs(entry(r["value"], 0, 0) - 0.5), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(entry(r["value"], 1, 1) - 0.5), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(entry(r["value"], 0, 1)), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(entry(r["value"], 1, 0)), 0.0, 1e-10);
}

TEST(Cli, TimeOverride) {
    const auto r = run_report("disentangle " + sample("identity.json") + " --time 0.5", "identity-half", 0);
    EXPECT_DOUBLE_EQ(r.value("time", -1.0), 0.5);
}

TEST(Cli, MalformedInputExitsTwo) {
    const auto bad = scratch("malformed.json");
    std::ofstream(bad) << "{ \"horizon\": 1, \"generator\": [[0, 0], [0";
    EXPECT_EQ(run("disentangle " + bad.string()), 2);
    EXPECT_EQ(run("disentangle " + scratch("does-not-exist.json").string()), 2);
    EXPECT_EQ(run("no-such-command"), 2);
    EXPECT_EQ(run("disentangle"), 2);
}

TEST(Cli, ZeroOperatorPasses) {
    const auto r = run_report("verify-evolution " + sample("zero_operator.json"), "zero", 0);
    EXPECT_TRUE(r.value("all_pass", false));
}

TEST(Cli, EvolutionPassesAndCorruptedFixtureFails) {
    const auto good = run_report("verify-evolution " + sample("evolution.json"), "evo", 0);
    EXPECT_TRUE(good.value("all_pass", false));
    ASSERT_TRUE(good.contains("checks"));
    for (const auto& c : good["checks"]) EXPECT_LE(c["residual"].get<double>(), c["tolerance"].get<double>());

    const auto bad = run_report("verify-evolution " + sample("evolution_corrupted.json"), "evo-bad", 1);
    EXPECT_FALSE(bad.value("all_pass", true));
}

TEST(Cli, IntegralEquationReducedPassesFullFails) {
    const auto good = run_report("ie-residual " + sample("ie_exp.json"), "ie", 0);
    EXPECT_TRUE(good.value("all_pass", false));
    const auto bad = run_report("ie-residual " + sample("ie_full_form.json"), "ie-full", 1);
    ASSERT_TRUE(bad.contains("checks"));
    EXPECT_GT(bad["checks"][0]["residual"].get<double>(), 1e-3);
}

TEST(Cli, EngineErrorExitsThree) {
    // A potential with sup-norm 1 violates the reduced check's precondition.
    json spec = read_json(sample("fk.json"));
    spec["mc"]["paths"] = 200;
    spec["mc"]["steps"] = 10;
    spec["checks"] = {"reduced_fk_check"};
    json pot = read_json(sample("potential.json"));
    pot["amplitude"] = 1.5;
    const auto s = write_temp("fk-strong.json", spec), p = write_temp("pot-strong.json", pot);
    EXPECT_EQ(run("feynman-kac " + s.string() + " --potential " + p.string()), 3);
}

TEST(Cli, SmallFeynmanKacRunWritesCsv) {
    json spec = read_json(sample("fk.json"));
    spec["mc"]["paths"] = 20000;
    spec["mc"]["steps"] = 50;
    const auto s = write_temp("fk-small.json", spec);
    const auto csv = scratch("fk.csv");
    fs::remove(csv);
    const auto r = run_report("feynman-kac " + s.string() + " --potential " + sample("potential.json") + " --csv " +
                                  csv.string(),
                              "fk", 0);
    EXPECT_TRUE(r.value("all_pass", false));
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "x,estimate,std_error,oracle,residual");
    int rows = 0;
    for (std::string line; std::getline(in, line);) rows += !line.empty();
    EXPECT_GT(rows, 100);
}

TEST(Cli, RerunsAreBitIdentical) {
    for (const std::string& args :
         {"disentangle " + sample("nilpotent.json"), "verify-evolution " + sample("evolution.json"),
          "ie-residual " + sample("ie_exp.json")}) {
        const auto a = run_report(args, "rerun-a", 0), b = run_report(args, "rerun-b", 0);
        EXPECT_EQ(strip(a).dump(), strip(b).dump()) << args;
    }
    json spec = read_json(sample("fk.json"));
    spec["mc"]["paths"] = 3000;
    spec["mc"]["steps"] = 20;
    spec["checks"] = {"fk_heat_solution"};
    const auto s = write_temp("fk-rerun.json", spec);
    const std::string fk = "feynman-kac " + s.string() + " --potential " + sample("potential.json");
    const auto a = run_report(fk + " --workers 1", "fk-a", -1), b = run_report(fk + " --workers 2", "fk-b", -1);
    EXPECT_EQ(strip(a)["checks"].dump(), strip(b)["checks"].dump());
}
