#include <selfsim/cli/commands.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace selfsim;
using namespace selfsim::cli;

namespace {

/// Fresh scratch directory per test, removed afterwards.
class Commands : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() /
               (std::string("selfsim_cli_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    RunOptions opts() const {
        RunOptions o;
        o.out = dir_;
        o.threads = 2;
        return o;
    }

    fs::path dir_;
};

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error_path(std::string_view text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<no error>";
}

const char* kSmallModel = R"(
[ifs]
builtin = "ST"
[model]
kernel = { preset = "gaussian_kernel", rate = 2.0 }
initial = { preset = "sign_indicator_ic", branch = 2 }
[discretization]
levels = [2, 3]
dt = 1e-3
t_end = 0.02
)";

} // namespace

TEST(Config, UnknownKeysAreRejectedWithTheirPath) {
    EXPECT_EQ(config_error_path("bogus = 1\n"), "bogus");
    EXPECT_EQ(config_error_path("[ifs]\nbuiltin = \"ST\"\nratoi = 0.5\n"), "ifs.ratoi");
    EXPECT_EQ(config_error_path("[discretization]\nlevels = [2]\ntend = 1.0\n"), "discretization.tend");
    EXPECT_EQ(config_error_path("[study]\nintegrand = \"1\"\nlevel = [1]\n"), "study.level");
}

TEST(Config, InvalidValuesNameTheirKey) {
    EXPECT_EQ(config_error_path("[discretization]\nlevels = [3, 2]\n"), "discretization.levels");
    EXPECT_EQ(config_error_path("[discretization]\ndt = 0.03\nt_end = 0.1\n"), "discretization.dt");
    EXPECT_EQ(config_error_path("[quadrature]\nmethod = \"simpson\"\n"), "quadrature.method");
    EXPECT_EQ(config_error_path("[ifs]\nbuiltin = \"UC\"\ndimension = 1\n[quadrature]\nmethod = \"vertex\"\n"),
              "quadrature.method");
    EXPECT_EQ(config_error_path("[study]\np = 0.5\n"), "study.p");
    EXPECT_EQ(config_error_path("[ifs]\nbuiltin = \"UC\"\ndimension = 1\n[model]\n"
                                "initial = { preset = \"sign_indicator_ic\", branch = 3 }\n"),
              "model.initial.branch");
    EXPECT_EQ(config_error_path("seed = -1\n"), "seed");
    EXPECT_THROW(parse_config("[ifs\n"), ConfigError);
}

TEST(Config, ExpressionErrorsSurfaceAsParseErrors) {
    EXPECT_THROW(parse_config("[model]\ncoupling = \"w - u\"\n"), ParseError);
}

TEST(Config, ShippedConfigsLoad) {
    int count = 0;
    for (const auto& entry : fs::directory_iterator(fs::path(SELFSIM_SOURCE_DIR) / "configs")) {
        if (entry.path().extension() != ".toml") continue;
        EXPECT_NO_THROW(load_config(entry.path())) << entry.path();
        ++count;
    }
    EXPECT_GE(count, 6);
    const auto cfg = load_config(fs::path(SELFSIM_SOURCE_DIR) / "configs" / "st_example.toml");
    EXPECT_EQ(cfg.discretization.levels, (std::vector<int>{3, 4, 5, 6, 7}));
    EXPECT_EQ(describe(cfg.model.kernel), "preset:gaussian_kernel(rate=2)");
}

TEST(Config, SeedOverrideReachesTheQuadrature) {
    auto cfg = parse_config("seed = 4\n[quadrature]\nmethod = \"mc\"\n");
    EXPECT_EQ(cfg.quad.seed, 4u);
    override_seed(cfg, 99);
    EXPECT_EQ(cfg.seed, 99u);
    EXPECT_EQ(cfg.quad.seed, 99u);
    EXPECT_EQ(to_json(cfg)["seed"], 99u);
}

TEST_F(Commands, SimulateWithZeroKernelReproducesTheInitialProjection) {
    auto cfg = parse_config(std::string(kSmallModel) + "\n");
    cfg.model.kernel = kernel_expression("0");
    const auto r = run_simulate(cfg, opts());
    ASSERT_EQ(r.levels.size(), 2u);
    for (const auto& s : r.levels) {
        const auto u0 = project_initial(cfg.ifs, cfg.model.initial, s.level, cfg.quad);
        const auto& u = s.snapshots.back().state;
        ASSERT_EQ(u.size(), u0.size());
        for (std::size_t i = 0; i < u.size(); ++i) EXPECT_EQ(u[i], u0[i]);
    }
}

TEST_F(Commands, SimulateCsvLayoutAndDeterminism) {
    const auto cfg = parse_config(kSmallModel);
    run_simulate(cfg, opts());
    const auto first = slurp(dir_ / "solution_m3.csv");
    run_simulate(cfg, opts());
    EXPECT_EQ(slurp(dir_ / "solution_m3.csv"), first);

    std::istringstream lines(first);
    std::string comment, header, row;
    std::getline(lines, comment);
    std::getline(lines, header);
    EXPECT_EQ(comment.rfind("# selfsim ", 0), 0u);
    EXPECT_NE(comment.find("config={"), std::string::npos);
    EXPECT_EQ(header, "level,word,word_index,h,value,t");
    int rows = 0;
    double prev_h = -1.0;
    while (std::getline(lines, row)) {
        std::vector<std::string> cols;
        std::stringstream ss(row);
        for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
        ASSERT_EQ(cols.size(), 6u) << row;
        EXPECT_EQ(cols[0], "3");
        EXPECT_EQ(cols[1].size(), 3u);
        const double h = std::stod(cols[3]);
        EXPECT_GE(h, prev_h);
        prev_h = h;
        ++rows;
    }
    EXPECT_EQ(rows, 27);

    const auto manifest = nlohmann::json::parse(slurp(dir_ / "manifest.json"));
    EXPECT_EQ(manifest["command"], "simulate");
    EXPECT_EQ(manifest["levels"].size(), 2u);
    EXPECT_EQ(manifest["levels"][1]["cells"], 27);
}

TEST_F(Commands, KernelCacheHitsOnTheSecondRun) {
    const auto cfg = parse_config(kSmallModel);
    auto o = opts();
    o.cache = dir_ / "cache";
    const auto a = run_simulate(cfg, o);
    const auto b = run_simulate(cfg, o);
    for (std::size_t k = 0; k < a.levels.size(); ++k) {
        EXPECT_FALSE(a.levels[k].cache_hit);
        EXPECT_TRUE(b.levels[k].cache_hit);
        EXPECT_EQ(b.levels[k].assembly_cost, 0u);
    }
    EXPECT_EQ(slurp(a.files[0]), slurp(b.files[0]));
}

TEST_F(Commands, RatesRequireThreeConsecutiveLevels) {
    auto cfg = parse_config(kSmallModel);
    try {
        run_rates(cfg, opts());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path(), "discretization.levels");
    }
    cfg.discretization.levels = {2, 3, 5};
    EXPECT_THROW(run_rates(cfg, opts()), ConfigError);
}

TEST_F(Commands, SyntheticRatesAreExact) {
    const auto cfg = parse_config("[study]\ndiffs = [0.25, 0.125, 0.0625]\n");
    const auto r = run_rates(cfg, opts());
    ASSERT_EQ(r.alphas.size(), 2u);
    for (double a : r.alphas) EXPECT_NEAR(a, 1.0, 1e-12);
    EXPECT_EQ(r.levels, (std::vector<int>{0, 1, 2, 3}));
    const auto j = nlohmann::json::parse(slurp(dir_ / "rates.json"));
    EXPECT_EQ(j["report"]["meta"]["mode"], "synthetic");
}

TEST_F(Commands, SimulatedRatesOnSmallLevels) {
    auto cfg = parse_config(kSmallModel);
    cfg.discretization.levels = {2, 3, 4};
    const auto r = run_rates(cfg, opts());
    ASSERT_EQ(r.diffs.size(), 2u);
    ASSERT_EQ(r.alphas.size(), 1u);
    EXPECT_GT(r.diffs[0], r.diffs[1]);
    EXPECT_TRUE(std::isfinite(r.alphas[0]));
}

TEST_F(Commands, QuadratureNeedsAnIntegrand) {
    const auto cfg = parse_config("[study]\nlevels = [2, 3]\n");
    try {
        run_quadrature(cfg, opts());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.path(), "study.integrand");
    }
    EXPECT_THROW(run_modulus(cfg, opts()), ConfigError);
    EXPECT_THROW(run_project(cfg, opts()), ConfigError);
}

TEST_F(Commands, QuadratureOfOneHasZeroError) {
    const auto cfg = parse_config("[study]\nintegrand = \"1\"\nlevels = [2, 3]\nsamples = [100]\nreference = 1.0\n");
    const auto t = run_quadrature(cfg, opts());
    ASSERT_EQ(t.rows.size(), 5u); // uniform x2, vertex x2, mc x1
    for (const auto& row : t.rows) {
        EXPECT_NEAR(row.estimate, 1.0, 1e-14);
        EXPECT_LE(row.error, 1e-14);
    }
    const auto csv = slurp(dir_ / "quadrature.csv");
    EXPECT_NE(csv.find("method,budget,seed,repeats,n_evals,estimate,error,increment\n"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir_ / "quadrature.json"));
}

TEST_F(Commands, QuadratureManifestRecordsSeedAndEvaluations) {
    const auto cfg = parse_config("seed = 11\n[study]\nintegrand = \"x[1]\"\nmethods = [\"mc\"]\n"
                                  "samples = [100, 1000]\nrepeats = 3\nreference = 0.5\n");
    const auto t = run_quadrature(cfg, opts());
    const auto& mc = t.manifest["methods"]["mc"];
    EXPECT_EQ(mc["seed"], 11u);
    EXPECT_EQ(mc["repeats"], 3);
    EXPECT_EQ(mc["n_evals"], (std::vector<std::uint64_t>{300, 3000}));
    EXPECT_TRUE(mc.contains("error_slope_vs_samples"));
}

TEST_F(Commands, VertexIncrementSlopeInTheManifest) {
    const auto cfg = parse_config("[study]\nintegrand = \"exp(-(x[1]^2 + x[2]^2))\"\n"
                                  "methods = [\"vertex\"]\nlevels = [4, 5, 6, 7, 8]\n");
    const auto t = run_quadrature(cfg, opts());
    const double slope = t.manifest["methods"]["vertex"]["increment_slope_vs_h"];
    EXPECT_NEAR(slope, 2.0, 0.2);
}

TEST_F(Commands, ModulusOfAConstantVanishes) {
    const auto cfg = parse_config("[study]\nintegrand = \"3\"\nlevels = [0, 1, 2]\ndepth = 4\n");
    const auto r = run_modulus(cfg, opts());
    EXPECT_EQ(r.depth, 4);
    for (double w : r.omega) EXPECT_EQ(w, 0.0);
    EXPECT_THROW(run_modulus(parse_config("[study]\nintegrand = \"3\"\nlevels = [0, 5]\ndepth = 4\n"), opts()),
                 ConfigError);
    EXPECT_TRUE(fs::exists(dir_ / "modulus.json"));
}

TEST_F(Commands, ProjectionOfALipschitzFunction) {
    const auto cfg = parse_config("[study]\nintegrand = \"x[1]\"\nlevels = [2, 3, 4, 5, 6]\nreference_level = 8\n");
    const auto r = run_project(cfg, opts());
    EXPECT_NEAR(r.fitted_exponent, 1.0, 0.1);
    const auto j = nlohmann::json::parse(slurp(dir_ / "projection.json"));
    EXPECT_EQ(j["command"], "project");
}

TEST(Info, ListsBuiltinsAndPresets) {
    const auto j = info();
    EXPECT_EQ(j["tool"], "selfsim");
    EXPECT_EQ(j["presets"].size(), 4u);
    EXPECT_FALSE(j.contains("config"));
    EXPECT_TRUE(info(parse_config(""))["config"].contains("ifs"));
}

#ifdef SELFSIM_CLI_PATH
namespace {
int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + SELFSIM_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
} // namespace

TEST_F(Commands, ExitCodes) {
    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream(dir_ / name) << text;
        return (dir_ / name).string();
    };
    const auto out = " --out \"" + (dir_ / "out").string() + "\"";
    EXPECT_EQ(run_cli("info"), 0);
    EXPECT_EQ(run_cli("simulate"), 2); // --config is required
    EXPECT_EQ(run_cli("simulate --config \"" + write("bad.toml", "bogus = 1\n") + "\"" + out), 2);
    EXPECT_EQ(run_cli("simulate --config \"" + write("expr.toml", "[model]\ncoupling = \"w\"\n") + "\"" + out), 2);
    EXPECT_EQ(run_cli("quadrature --config \"" +
                      write("cap.toml", "[study]\nintegrand = \"1\"\nmethods = [\"uniform\"]\nlevels = [17]\n") + "\"" +
                      out),
              3);
    EXPECT_EQ(run_cli("quadrature --config \"" +
                      write("nan.toml", "[study]\nintegrand = \"1/(x[1] - x[1])\"\nmethods = [\"uniform\"]\n"
                                        "levels = [1]\n") +
                      "\"" + out),
              4);
    EXPECT_EQ(run_cli("rates --config \"" + write("ok.toml", "[study]\ndiffs = [0.5, 0.25]\n") + "\"" + out), 0);
}
#endif
