#pragma once

#include "erlmix/integrate.hpp"
#include "erlmix/kernels.hpp"
#include "erlmix/lct.hpp"
#include "erlmix/types.hpp"

#include <array>
#include <functional>
#include <vector>

namespace erlmix {

// ---------------------------------------------------------------------------
// Modified logistic equation
// ---------------------------------------------------------------------------

struct LogisticParams {
    double growth = 4.0;    // sigma [1/mo]
    double capacity = 1.0;  // kappa
    double dilation = 10.0;  // gamma [mo], manufactured variant only
    double t0 = 0.0;
    double tf = 24.0;
    double x0 = 0.9;
    // Bimodal folded normal kernel of the bifurcation benchmark.
    double weight1 = 0.5, weight2 = 0.5;
    double mu1 = 0.35, mu2 = 0.45;
    double sigma1 = 0.06, sigma2 = 0.12;
};

enum class LogisticVariant {
    kManufactured,  // forcing chosen so a prescribed x*(t) solves the system
    kBifurcation    // unforced, folded normal kernel
};

/// Prescribed solution, its memory state, and the matching forcing:
/// x*(t) = 1 + exp(-(t/gamma)^2) with the half-line Gaussian kernel.
struct ManufacturedPoint {
    double x = 0.0;        // x*(t)
    double x_dot = 0.0;    // d/dt x*(t)
    double z = 0.0;        // z*(t)
    double forcing = 0.0;  // Q(t)
};
ManufacturedPoint manufactured_truth(double dilation, double t,
                                     double growth = 4.0,
                                     double capacity = 1.0);

/// Scalar logistic model f = sigma x (1 - z/kappa) + Q(t), h(x) = x. The
/// manufactured variant carries the full history x*(t); the bifurcation
/// variant has constant history x0.
ModelSpec logistic_model(const LogisticParams& params, LogisticVariant variant);

/// The bimodal folded normal kernel of the bifurcation benchmark.
KernelSpec logistic_kernel(const LogisticParams& params);

/// Initial chain memory for the manufactured history: per auxiliary state
/// the convolution int_0^inf l_m(s) x*(-s) ds, by adaptive quadrature.
Vector manufactured_initial_memory(const LctSystem& lct, double dilation);

// ---------------------------------------------------------------------------
// Molten salt point reactor kinetics
// ---------------------------------------------------------------------------

struct FissionParams {
    std::array<double, 6> decay = {0.0124, 0.0305, 0.1110,
                                   0.3010, 1.1300, 3.0000};  // lambda_i [1/s]
    std::array<double, 6> fraction = {0.00021, 0.00141, 0.00127,
                                      0.00255, 0.00074, 0.00027};  // beta_i
    double generation_time = 5e-5;    // Lambda [s]
    double reactivity_coeff = 3e-4;   // kappa [1/K]
    double heat_ratio = 0.05;         // H [K cm^3/s]
    double dilution = 2.0;            // D [1/s]
    double mu1 = 2.0;                 // kernel base location [s]
    double sigma1 = 0.1;              // kernel base scale [s]
    double t0 = 0.0;
    double tf = 2.0;

    double total_fraction() const {
        double beta = 0.0;
        for (double b : fraction) beta += b;
        return beta;
    }
};

/// Point kinetics model with recirculating precursors: states are
/// (C_1..C_6, C_n, rho), delay channels feed the precursor inflows.
ModelSpec fission_model(const FissionParams& params);

/// The six precursor recirculation kernels (one per group).
std::vector<KernelSpec> fission_kernels(const FissionParams& params);

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

/// E_x = sum_{n=0}^{points-1} ||x_hat(t_{n+1}) - x*(t_{n+1})||^2 dt on the
/// uniform grid over [t0, tf]; the trajectory is interpolated by cubic
/// Hermite where the grid does not align with its records.
double state_error(const Trajectory& traj,
                   const std::function<Vector(double)>& truth, double t0,
                   double tf, int points);

/// Pointwise relative difference |a_i - b_i| / (1 + |b_i|) per state, on the
/// given grid (rows = grid points, columns = states).
Matrix relative_diff(const Trajectory& a, const Trajectory& b,
                     const std::vector<double>& grid);

/// Largest relative difference over all grid points and states.
double max_relative_diff(const Trajectory& a, const Trajectory& b,
                         const std::vector<double>& grid);

/// Spearman rank correlation of two samples of equal length.
double spearman_rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b);

}  // namespace erlmix
