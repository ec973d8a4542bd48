#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "bohmfreeze/cli.hpp"

namespace fs = std::filesystem;
using namespace bohmfreeze;
using cli::json;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bohmfreeze_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    return p;
}

json config_with(const std::vector<std::string>& overrides) {
    std::vector<cli::Diagnostic> d;
    auto cfg = cli::resolve_config("", overrides, d);
    EXPECT_TRUE(d.empty()) << (d.empty() ? "" : d.front().field + ": " + d.front().message);
    return cfg;
}

std::vector<cli::Diagnostic> diagnostics_for(const std::string& sub, const std::vector<std::string>& overrides) {
    std::vector<cli::Diagnostic> d;
    const auto rc = cli::parse_config(config_with(overrides), d);
    if (!d.empty()) return d;
    return cli::validate(rc, sub);
}

bool mentions(const std::vector<cli::Diagnostic>& ds, const std::string& field, const std::string& text) {
    for (const auto& d : ds)
        if (d.field == field && d.message.find(text) != std::string::npos) return true;
    return false;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_binary(const std::string& args) {
    const char* exe = std::getenv("BOHMFREEZE_CLI");
    if (!exe) return -1;
    const int status = std::system((std::string(exe) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Validate, DefaultsAreValidForEverySubcommand) {
    for (const auto& sub : cli::subcommands()) EXPECT_TRUE(diagnostics_for(sub, {}).empty()) << sub;
}

TEST(Validate, NamesTheOffendingField) {
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--eta.end=0"}), "eta.end", "eta window must end strictly before 0"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--mode.k=0"}), "mode.k", "zero mode is degenerate"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--cosmology.H=-1"}), "cosmology.H", "positive"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--eta.start=-0.00001"}), "eta.start", "eta.start < eta.end"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--tolerances.epsilon=1"}), "tolerances.epsilon", "(0, 1)"));
    EXPECT_TRUE(mentions(diagnostics_for("freeze-scan", {"--mode.k_grid=[1,10]"}), "mode.k_grid", "two decades"));
    EXPECT_TRUE(mentions(diagnostics_for("freeze-scan", {"--mode.k_grid=[0,1,10]"}), "mode.k_grid", "zero mode"));
    EXPECT_TRUE(mentions(diagnostics_for("multimode", {"--multimode.modes=[1,1]"}), "multimode.modes", "only once"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--state.preset=squeezed"}), "state.preset", "one of"));
    EXPECT_TRUE(mentions(diagnostics_for("trajectory", {"--mode.k=\"one\""}), "mode.k", "wrong type"));
    EXPECT_TRUE(mentions(diagnostics_for("bogus", {}), "subcommand", "unknown"));
}

TEST(Overrides, DottedNamesAndUnknownFields) {
    const auto cfg = config_with({"--cosmology.H=2.5", "--state.levels", "[[0,0,1,0],[1,0,0,1]]", "--output.dir=x"});
    EXPECT_EQ(cfg["cosmology"]["H"], 2.5);
    EXPECT_EQ(cfg["state"]["levels"].size(), 2u);
    EXPECT_EQ(cfg["output"]["dir"], "x");
    std::vector<cli::Diagnostic> d;
    cli::resolve_config("", {"--cosmology.G=1"}, d);
    EXPECT_TRUE(mentions(d, "cosmology.G", "unknown"));
}

TEST(Overrides, ConfigFileMergesOverDefaults) {
    const auto dir = scratch("cfgfile");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "c.json");
        os << R"({"mode": {"k": 3.0}, "eta": {"start": -4.0}})";
    }
    std::vector<cli::Diagnostic> d;
    const auto cfg = cli::resolve_config((dir / "c.json").string(), {"--mode.k=4"}, d);
    EXPECT_TRUE(d.empty());
    EXPECT_EQ(cfg["mode"]["k"], 4);
    EXPECT_EQ(cfg["eta"]["start"], -4.0);
    EXPECT_EQ(cfg["eta"]["end"], -0.0001);
    {
        std::ofstream os(dir / "bad.json");
        os << R"({"mode": {"kk": 3.0}})";
    }
    cli::resolve_config((dir / "bad.json").string(), {}, d);
    EXPECT_TRUE(mentions(d, "/mode/kk", "unknown"));
}

TEST(Run, VerifyTransformsPasses) {
    const auto dir = scratch("verify");
    std::ostringstream log;
    const auto res = cli::run("verify-transforms", config_with({"--output.dir=" + dir.string()}), log);
    EXPECT_EQ(res.exit_code, cli::exit_ok) << log.str();
    EXPECT_TRUE(res.summary["pass"].get<bool>());
    EXPECT_LT(res.summary["max_residual"].get<double>(), 1e-9);
    EXPECT_TRUE(fs::exists(dir / "residuals.tsv"));
    const auto manifest = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest["subcommand"], "verify-transforms");
    EXPECT_EQ(manifest["config"]["verify"]["seed"], 2024);
}

TEST(Run, FreezeScanBunchDavies) {
    const auto dir = scratch("scan_bd");
    std::ostringstream log;
    const auto res = cli::run("freeze-scan", config_with({"--output.dir=" + dir.string()}), log);
    ASSERT_EQ(res.exit_code, cli::exit_ok) << log.str();
    ASSERT_EQ(res.summary["reports"].size(), 3u);
    for (const auto& r : res.summary["reports"]) EXPECT_EQ(r["onset"], "always");
    EXPECT_TRUE(res.summary["k_independent"].get<bool>());
    std::istringstream curves(slurp(dir / "error_curves.tsv"));
    std::string line;
    std::getline(curves, line);
    while (std::getline(curves, line)) EXPECT_LT(std::stod(line.substr(line.rfind('\t') + 1)), 1e-10);
}

TEST(Run, EquivarianceGroundStatePasses) {
    const auto dir = scratch("equi");
    std::ostringstream log;
    const auto res = cli::run("equivariance",
                              config_with({"--output.dir=" + dir.string(), "--eta.start=-2", "--eta.end=-0.5",
                                           "--ensemble.n_points=10000", "--ensemble.seed=7",
                                           "--ensemble.null_replicates=20"}),
                              log);
    ASSERT_EQ(res.exit_code, cli::exit_ok) << log.str();
    EXPECT_TRUE(res.summary["pass"].get<bool>());
}

TEST(Run, ReproducibleAcrossRerunsAndWorkerCounts) {
    const std::vector<std::string> base{"--state.preset=levels", "--state.levels=[[0,0,1,0],[1,0,1,0]]",
                                        "--ensemble.n_points=300"};
    for (const std::string sub : {"trajectory", "freeze-scan", "ensemble", "multimode"}) {
        const auto a = scratch(sub + "_a"), b = scratch(sub + "_b");
        auto oa = base, ob = base;
        oa.push_back("--output.dir=" + a.string());
        ob.push_back("--output.dir=" + b.string());
        std::ostringstream log;
        set_worker_count(1);
        ASSERT_EQ(cli::run(sub, config_with(oa), log).exit_code, cli::exit_ok) << log.str();
        set_worker_count(3);
        ASSERT_EQ(cli::run(sub, config_with(ob), log).exit_code, cli::exit_ok) << log.str();
        set_worker_count(0);
        for (const auto& entry : fs::directory_iterator(a)) {
            const auto name = entry.path().filename();
            if (name == "manifest.json") continue;  // echoes the output directory
            EXPECT_EQ(slurp(a / name), slurp(b / name)) << sub << "/" << name;
        }
    }
}

TEST(Run, InvalidConfigReturnsOne) {
    std::ostringstream log;
    const auto res = cli::run("trajectory", config_with({"--eta.end=0"}), log);
    EXPECT_EQ(res.exit_code, cli::exit_invalid);
    EXPECT_NE(log.str().find("eta window must end strictly before 0"), std::string::npos);
}

TEST(Run, NodeAbortReturnsTwo) {
    const auto dir = scratch("node");
    std::ostringstream log;
    const auto res = cli::run("trajectory",
                              config_with({"--output.dir=" + dir.string(), "--state.preset=levels",
                                           "--state.levels=[[1,0,1,0]]", "--initial.sample=false",
                                           "--initial.z0=[0.0,0.2]"}),
                              log);
    EXPECT_EQ(res.exit_code, cli::exit_numerical);
}

TEST(Binary, ExitCodes) {
    if (!std::getenv("BOHMFREEZE_CLI")) GTEST_SKIP() << "BOHMFREEZE_CLI not set";
    const auto dir = scratch("binary");
    EXPECT_EQ(run_binary("verify-transforms --output.dir=" + dir.string()), 0);
    EXPECT_EQ(run_binary("trajectory --eta.end=0"), 1);
    EXPECT_EQ(run_binary("trajectory --no.such=1"), 1);
    EXPECT_EQ(run_binary("--deterministic trajectory --output.dir=" + dir.string() +
                         " --state.preset=levels --state.levels=[[1,0,1,0]] --initial.sample=false --initial.z0=[0,0.2]"),
              2);
    EXPECT_EQ(run_binary("--check freeze-scan --mode.k_grid=[1,2]"), 1);
    EXPECT_EQ(run_binary("--check freeze-scan"), 0);
}
