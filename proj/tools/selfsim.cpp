// selfsim: config-driven runs of the fractal nonlocal-diffusion solver.
//
// Exit codes: 0 success, 2 configuration error, 3 capacity error, 4 numerical failure.

#include <selfsim/cli/commands.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonFlags {
    std::string config;
    std::string out;
    std::string cache;
    unsigned threads = 0;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
    auto* opt = sub->add_option("--config", f.config, "TOML run configuration");
    if (config_required) opt->required();
    sub->add_option("--out", f.out, "output directory (overrides output.dir)");
    sub->add_option("--cache", f.cache, "kernel cache directory");
    sub->add_option("--threads", f.threads, "worker threads, 0 = auto");
    sub->add_option("--seed", f.seed, "override the run seed");
}

selfsim::cli::RunConfig load(const CommonFlags& f) {
    auto cfg = selfsim::cli::load_config(f.config);
    if (f.seed) selfsim::cli::override_seed(cfg, *f.seed);
    return cfg;
}

selfsim::cli::RunOptions options(const CommonFlags& f) {
    selfsim::cli::RunOptions o;
    if (!f.out.empty()) o.out = f.out;
    if (!f.cache.empty()) o.cache = f.cache;
    o.threads = f.threads;
    o.log = &std::cerr;
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"selfsim: nonlocal diffusion on self-similar sets"};
    app.set_version_flag("--version", std::string(selfsim::kVersion));
    app.require_subcommand(1);

    CommonFlags flags;
    auto* simulate = app.add_subcommand("simulate", "solve the Galerkin system at each configured level");
    auto* rates = app.add_subcommand("rates", "estimate convergence rates across levels");
    auto* quadrature = app.add_subcommand("quadrature", "convergence table of the quadrature rules");
    auto* modulus = app.add_subcommand("modulus", "L^p modulus of continuity of an integrand");
    auto* project = app.add_subcommand("project", "projection-error study of an integrand");
    auto* info = app.add_subcommand("info", "version, builtins, presets and the resolved config");
    for (auto* sub : {simulate, rates, quadrature, modulus, project}) add_common(sub, flags, true);
    add_common(info, flags, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    namespace cli = selfsim::cli;
    try {
        if (info->parsed()) {
            std::optional<cli::RunConfig> cfg;
            if (!flags.config.empty()) cfg = load(flags);
            std::cout << cli::info(cfg).dump(2) << '\n';
            return 0;
        }
        const auto cfg = load(flags);
        const auto opt = options(flags);
        const auto dir = cli::output_dir(cfg, opt);
        if (simulate->parsed()) {
            const auto r = cli::run_simulate(cfg, opt);
            for (const auto& f : r.files) std::cout << f.string() << '\n';
        } else if (rates->parsed()) {
            const auto r = cli::run_rates(cfg, opt);
            for (std::size_t k = 0; k < r.alphas.size(); ++k)
                std::cout << "alpha^" << r.levels[k] << " = " << r.alphas[k] << '\n';
            std::cout << (dir / "rates.json").string() << '\n';
        } else if (quadrature->parsed()) {
            cli::run_quadrature(cfg, opt);
            std::cout << (dir / "quadrature.csv").string() << '\n';
        } else if (modulus->parsed()) {
            const auto r = cli::run_modulus(cfg, opt);
            for (std::size_t k = 0; k < r.levels.size(); ++k)
                std::cout << "omega_" << r.p << "(m=" << r.levels[k] << ") = " << r.omega[k] << '\n';
        } else if (project->parsed()) {
            const auto r = cli::run_project(cfg, opt);
            std::cout << "fitted exponent " << r.fitted_exponent << '\n';
            if (!r.bounds.empty()) std::cout << "bound " << (r.bound_holds ? "holds" : "VIOLATED") << '\n';
        }
        return 0;
    } catch (const selfsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const selfsim::ParseError& e) {
        std::cerr << "expression error: " << e.what() << '\n';
        return 2;
    } catch (const selfsim::CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << '\n';
        return 3;
    } catch (const selfsim::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 4;
    } catch (const selfsim::DomainError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
