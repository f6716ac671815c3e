#include "erlmix/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

/// Parses repeated key=value tokens into the target map.
void parse_pairs(const std::vector<std::string>& tokens,
                 std::map<std::string, double>& target, const char* what) {
    for (const auto& token : tokens) {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 0)
            throw CLI::ValidationError(std::string(what) +
                                       " expects key=value, got '" + token +
                                       "'");
        target[token.substr(0, eq)] = std::stod(token.substr(eq + 1));
    }
}

void add_common_options(CLI::App* cmd, erlmix::cli::RunConfig& config,
                        std::vector<std::string>& model_pairs,
                        std::vector<std::string>& kernel_pairs) {
    cmd->add_option("--model", config.model_id,
                    "Model id: logistic-manufactured, logistic-bifurcation, "
                    "fission");
    cmd->add_option("--set", model_pairs,
                    "Model parameter override key=value (repeatable)");
    cmd->add_option("--kernel", config.kernel_id,
                    "Kernel family: gaussian-halfline, folded-normal-sum, "
                    "precursor, erlang-mixture");
    cmd->add_option("--kernel-param", kernel_pairs,
                    "Kernel parameter key=value (repeatable)");
    cmd->add_option("-o,--output-dir", config.output_dir,
                    "Directory for CSV/manifest artifacts");
    cmd->add_option("--threads", config.threads,
                    "Worker threads (0 = hardware concurrency)");
}

void add_fit_options(CLI::App* cmd, erlmix::cli::RunConfig& config) {
    cmd->add_option("-M,--order", config.order, "Mixture order M");
    cmd->add_option("-N,--samples-objective", config.sample_count,
                    "Objective sample count N (raised to 4(M+1) if lower)");
    cmd->add_option("--epsilon", config.epsilon,
                    "Tail mass defining the fit horizon");
    cmd->add_option("--horizon-tol", config.horizon_tol,
                    "Bisection tolerance (default epsilon/10)");
    cmd->add_option("--kkt-tol", config.kkt_tol, "Fit KKT tolerance");
    cmd->add_option("--max-alternations", config.max_alternations,
                    "Fit alternation budget");
    cmd->add_option("--error-points", config.error_points,
                    "K_alpha grid points of the kernel error");
    cmd->add_option("--fit-method", config.fit_method,
                    "least-squares or theoretical");
}

void add_integrator_options(CLI::App* cmd, erlmix::cli::RunConfig& config) {
    cmd->add_option("--integrator", config.integrator,
                    "explicit or implicit");
    cmd->add_option("--implicit-scheme", config.implicit_scheme,
                    "euler or trbdf2");
    cmd->add_option("--abs-tol", config.abs_tol, "Absolute tolerance");
    cmd->add_option("--rel-tol", config.rel_tol, "Relative tolerance");
    cmd->add_option("--output-points", config.output_points,
                    "Uniform output grid resolution");
}

void add_dde_options(CLI::App* cmd, erlmix::cli::RunConfig& config) {
    cmd->add_option("--dde-method", config.dde_method,
                    "explicit or implicit");
    cmd->add_option("--dt", config.dde_dt, "Fixed time step");
    cmd->add_option("--memory-horizon", config.dde_horizon,
                    "Convolution truncation length (0 = automatic)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Simulation and stability analysis of distributed-delay systems via "
        "Erlang mixture kernels and the linear chain trick"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from a key=value file");

    erlmix::cli::RunConfig config;
    std::vector<std::string> model_pairs, kernel_pairs;

    auto* fit = app.add_subcommand(
        "fit-kernel",
        "Fit an Erlang mixture to a kernel; writes mixture.txt and "
        "kernel_fit.csv (t,alpha,alpha_hat,error)");
    add_common_options(fit, config, model_pairs, kernel_pairs);
    add_fit_options(fit, config);

    auto* sim_lct = app.add_subcommand(
        "simulate-lct",
        "Fit (or load) mixtures and integrate the chain ODE realization; "
        "writes trajectory.csv (time,states...,zhat...)");
    add_common_options(sim_lct, config, model_pairs, kernel_pairs);
    add_fit_options(sim_lct, config);
    add_integrator_options(sim_lct, config);
    sim_lct->add_option("--mixture-file", config.mixture_file,
                        "Reuse a fitted mixture file instead of fitting");

    auto* sim_dde = app.add_subcommand(
        "simulate-dde",
        "Integrate the delay system directly; writes trajectory.csv "
        "(time,states...,z...)");
    add_common_options(sim_dde, config, model_pairs, kernel_pairs);
    add_dde_options(sim_dde, config);

    auto* conv = app.add_subcommand(
        "convergence",
        "Manufactured-solution study; writes kernel_state_errors.csv "
        "(M,method,E_alpha,E_x; method 0 = least-squares, 1 = theoretical) "
        "and dde_convergence.csv (method,dt,E_x; 0 = explicit, 1 = implicit)");
    add_common_options(conv, config, model_pairs, kernel_pairs);
    add_fit_options(conv, config);
    add_integrator_options(conv, config);
    conv->add_option("--order-list", config.order_list,
                     "Mixture orders of the fit stage");
    conv->add_option("--dt-list", config.dt_list,
                     "Step sizes of the direct-solver stage");
    conv->add_option("--state-error-points", config.state_error_points,
                     "K_x grid points of the state error");

    auto* bif = app.add_subcommand(
        "bifurcate",
        "Steady-state eigenvalue scan over sigma or mu2; writes "
        "bifurcation.csv (parameter,steady_state,max_re_lambda,ok)");
    add_common_options(bif, config, model_pairs, kernel_pairs);
    add_fit_options(bif, config);
    bif->add_option("--param", config.scan_param, "sigma or mu2");
    bif->add_option("--from", config.scan_from, "Grid start");
    bif->add_option("--to", config.scan_to, "Grid end");
    bif->add_option("--points", config.scan_points, "Grid size");
    bif->add_flag("--dump-spectra", config.dump_spectra,
                  "Write spectrum_<k>.csv (re,im,chain) per grid point");
    bif->add_option("--simulate-at", config.simulate_points,
                    "Parameter values to time-simulate with the direct "
                    "explicit solver");

    auto* mc = app.add_subcommand(
        "montecarlo",
        "Reactivity-coefficient Monte Carlo of the fission model; writes "
        "montecarlo_stats.csv (pointwise mean/percentiles/min/max) and "
        "relative_error.csv against the direct implicit solver");
    add_common_options(mc, config, model_pairs, kernel_pairs);
    add_fit_options(mc, config);
    add_integrator_options(mc, config);
    add_dde_options(mc, config);
    mc->add_option("--mc-samples", config.samples, "Sample count");
    mc->add_option("--seed", config.seed, "RNG seed (recorded in manifest)");
    mc->add_option("--kappa-mean", config.kappa_mean,
                   "Mean of the sampled reactivity coefficient");
    mc->add_option("--kappa-sd", config.kappa_sd,
                   "Standard deviation of the sampled reactivity coefficient");

    // Per-subcommand defaults (desk scale).
    bif->parse_complete_callback([&] {
        if (bif->count("--model") == 0) config.model_id = "logistic-bifurcation";
        if (bif->count("--order") == 0) config.order = 32;
    });
    mc->parse_complete_callback([&] {
        if (mc->count("--model") == 0) config.model_id = "fission";
        if (mc->count("--order") == 0) config.order = 200;
        if (mc->count("--dt") == 0) config.dde_dt = 1e-4;
        if (mc->count("--abs-tol") == 0) config.abs_tol = 1e-8;
        if (mc->count("--rel-tol") == 0) config.rel_tol = 1e-8;
    });

    CLI11_PARSE(app, argc, argv);

    try {
        parse_pairs(model_pairs, config.model_overrides, "--set");
        parse_pairs(kernel_pairs, config.kernel_params, "--kernel-param");
        config.subcommand = app.get_subcommands().front()->get_name();
        const auto outputs = erlmix::cli::run(config);
        for (const auto& path : outputs) std::cout << path << "\n";
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
