#pragma once

#include "erlmix/approx.hpp"
#include "erlmix/integrate.hpp"
#include "erlmix/kernels.hpp"
#include "erlmix/types.hpp"

#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace erlmix::cli {

/// Validated run description shared by all subcommands. Front ends fill it
/// from flags or a key=value config file; unknown keys are rejected.
struct RunConfig {
    std::string subcommand;

    std::string model_id = "logistic-manufactured";
    std::map<std::string, double> model_overrides;

    std::string kernel_id = "gaussian-halfline";
    std::map<std::string, double> kernel_params;

    // Mixture fitting.
    int order = 16;             // M
    int sample_count = 100;     // N objective samples
    double epsilon = 1e-14;     // horizon tail mass
    double horizon_tol = -1.0;  // bisection tolerance; <0 = epsilon/10
    double kkt_tol = 1e-8;
    int max_alternations = 500;
    int error_points = 10000;  // K_alpha, desk scale
    std::string fit_method = "least-squares";  // or "theoretical"
    std::string mixture_file;                  // reuse an existing fit

    // Augmented-system integration.
    std::string integrator = "explicit";       // explicit | implicit
    std::string implicit_scheme = "trbdf2";    // euler | trbdf2
    double abs_tol = 1e-10;
    double rel_tol = 1e-10;
    int output_points = 400;

    // Direct DDE integration.
    std::string dde_method = "explicit";  // explicit | implicit
    double dde_dt = 0.01;
    double dde_horizon = 0.0;  // 0 = per-kernel default at 1e-12 tail mass

    // Convergence study.
    std::vector<int> order_list = {4, 8, 16};
    std::vector<double> dt_list = {0.04, 0.02, 0.01};
    int state_error_points = 24000;  // K_x

    // Bifurcation scan.
    std::string scan_param = "sigma";  // sigma | mu2
    double scan_from = 1.0;
    double scan_to = 40.0;
    int scan_points = 25;
    bool dump_spectra = false;
    std::vector<double> simulate_points;

    // Monte Carlo.
    int samples = 50;
    unsigned long long seed = 42;
    double kappa_mean = 3e-4;
    double kappa_sd = 7.5e-5;

    std::string output_dir = "out";
    int threads = 0;
};

/// Throws DomainError on inconsistent settings or unknown override keys.
void validate(const RunConfig& config);

/// Runs the selected subcommand; throws on misuse, returns the list of
/// written artifact files (the manifest is always last).
std::vector<std::string> run(const RunConfig& config);

std::vector<std::string> cmd_fit_kernel(const RunConfig& config);
std::vector<std::string> cmd_simulate_lct(const RunConfig& config);
std::vector<std::string> cmd_simulate_dde(const RunConfig& config);
std::vector<std::string> cmd_convergence(const RunConfig& config);
std::vector<std::string> cmd_bifurcate(const RunConfig& config);
std::vector<std::string> cmd_montecarlo(const RunConfig& config);

// -- Artifact formats -------------------------------------------------------

/// Mixture text file: line 1 the rate, one coefficient per following line,
/// 17 significant digits.
void write_mixture_file(const std::string& path, const ErlangMixture& mixture);
ErlangMixture read_mixture_file(const std::string& path);

/// CSV with a header row, comma separators, '.' decimal point, and 17
/// significant digits per value.
class CsvWriter {
public:
    CsvWriter(std::string path, const std::vector<std::string>& columns);
    void row(const std::vector<double>& values);
    /// Flushes and returns the path.
    std::string finish();

private:
    std::string path_;
    std::string buffer_;
    std::size_t columns_;
    bool finished_ = false;
};

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          const std::vector<std::string>& state_names,
                          const std::vector<std::string>& memory_names = {});

/// Per-run manifest: config echo, version, wall time, per-stage timings,
/// output files, and failure notes. Written atomically at run end.
class RunManifest {
public:
    explicit RunManifest(const RunConfig& config);
    void stage(const std::string& name, double seconds);
    void note(const std::string& key, const std::string& value);
    void note(const std::string& key, double value);
    void output(const std::string& path);
    void failure(const std::string& what);
    /// Writes <output_dir>/manifest.json via a temporary file + rename.
    std::string write();

private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

/// Deterministic normal sampler: Box-Muller over uniforms drawn from a
/// seeded 64-bit Mersenne Twister.
class NormalSampler {
public:
    explicit NormalSampler(unsigned long long seed) : gen_(seed) {}
    double next(double mean, double stddev);

private:
    double uniform01();
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Linear interpolation between order statistics; percentile in [0, 100].
double percentile(std::vector<double> values, double pct);

std::string format_value(double value);  // %.17g

}  // namespace erlmix::cli
