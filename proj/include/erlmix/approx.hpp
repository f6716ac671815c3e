#pragma once

#include "erlmix/kernels.hpp"
#include "erlmix/types.hpp"

#include <optional>
#include <string>

namespace erlmix {

/// Cumulative kernel mass on [0, t]: the analytic cumulative when the kernel
/// provides one, otherwise adaptive quadrature with absolute tolerance 1e-13.
double beta(const KernelSpec& kernel, double t);

/// Kernel tail mass on (t, inf), evaluated at full precision when the kernel
/// carries an analytic survival function.
double kernel_survival(const KernelSpec& kernel, double t);

struct HorizonResult {
    double horizon = 0.0;     // t_h with 1 - beta(t_h) ~ epsilon
    double epsilon = 0.0;     // requested tail mass
    int iterations = 0;       // bisection iterations
    double residual = 0.0;    // |1 - beta(t_h) - epsilon| achieved
};

/// Bisects 1 - beta(t) = epsilon on [bracket_lo, bracket_hi]. An invalid
/// bracket is repaired by geometric shifting/expansion before iterating.
/// tol < 0 selects the default epsilon/10.
HorizonResult find_horizon(const KernelSpec& kernel, double epsilon,
                           double bracket_lo = 0.0, double bracket_hi = 1.0,
                           double tol = -1.0);

/// Least-squares target: fit an order-M Erlang mixture to `kernel` on the
/// uniform grid t_k = k*horizon/sample_count, k = 0..sample_count-1 (the
/// grid includes t = 0). rate_min <= 0 selects the default 1e-6/horizon.
struct FitProblem {
    KernelSpec kernel;
    int order = 0;          // M
    double horizon = 0.0;   // t_h
    int sample_count = 0;   // N, must be >= order + 1
    double rate_min = 0.0;  // a_min
};

double effective_rate_min(const FitProblem& problem);
void validate(const FitProblem& problem);

/// Objective phi = 1/2 sum_k (alpha(t_k) - alpha_hat(t_k))^2 dt together
/// with its analytic gradient and Hessian over (c_0..c_M, a); the rate
/// occupies the last index.
struct ObjectiveEval {
    double phi = 0.0;
    Vector gradient;
    Matrix hessian;
};
ObjectiveEval objective(const FitProblem& problem,
                        const ErlangMixture& mixture);

struct FitOptions {
    double kkt_tol = 1e-8;
    int max_alternations = 500;
    int error_points = 10000;  // K_alpha used for the reported kernel error
};

enum class FitMethod { kLeastSquares, kTheoretical };

struct FitReport {
    bool converged = false;
    int alternations = 0;
    double kkt_residual = 0.0;
    std::string message;
};

struct FitResult {
    ErlangMixture mixture;
    double phi = 0.0;           // objective value on the problem grid
    double kernel_err = 0.0;    // E_alpha on the error grid
    FitMethod method = FitMethod::kLeastSquares;
    FitReport report;
};

/// Alternating solver for the simplex- and bound-constrained least-squares
/// program: an exact active-set solve in the coefficients for fixed rate,
/// then a safeguarded 1-D Newton step in the rate (golden-section fallback).
/// Seeds from the theoretical coefficients when no init is given; an
/// infeasible init is projected onto the simplex first.
FitResult fit_least_squares(const FitProblem& problem,
                            std::optional<ErlangMixture> init = std::nullopt,
                            const FitOptions& options = {});

/// Interval masses of the target kernel: c_m = beta(s_{m+1}) - beta(s_m)
/// with s_m = m/rate. The coefficients sum to beta((M+1)/rate) and are not
/// rescaled.
Vector theoretical_coefficients(const KernelSpec& kernel, double rate,
                                int order);

/// Reference fit with rate (M+1)/t_h and the interval-mass coefficients.
FitResult fit_theoretical(const FitProblem& problem,
                          const FitOptions& options = {});

/// E_alpha = sum_{k=0}^{points-1} (approx(t_k) - alpha(t_k))^2 dt on the
/// uniform grid over [0, horizon], dt = horizon/points.
double kernel_error(const std::function<double(double)>& approximation,
                    const KernelSpec& kernel, int points, double horizon);
double kernel_error(const ErlangMixture& mixture, const KernelSpec& kernel,
                    int points, double horizon);

/// Euclidean projection onto the unit simplex.
Vector project_to_simplex(const Vector& v);

}  // namespace erlmix
