#pragma once

#include "erlmix/types.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>

namespace erlmix {

/// Density of the m'th order Erlang distribution with rate a at time t,
/// computed with the multiplicative recursion l_0(t) = a*exp(-a*t),
/// l_m(t) = (a*t/m) * l_{m-1}(t). Underflow to zero is accepted.
double erlang_eval(int order, double rate, double t);

/// First (deriv_order = 1) or second (deriv_order = 2) derivative of the
/// Erlang density with respect to the rate parameter.
double erlang_deriv_rate(int order, double rate, double t, int deriv_order);

/// Fills out[m] = l_m(t) for m = 0..out.size()-1 in one recursion pass.
void erlang_basis(double rate, double t, Eigen::Ref<Vector> out);

/// As erlang_basis, plus first and second rate derivatives.
void erlang_basis_with_derivatives(double rate, double t,
                                   Eigen::Ref<Vector> values,
                                   Eigen::Ref<Vector> d_rate,
                                   Eigen::Ref<Vector> d_rate2);

/// Single Erlang kernel; callable as a density of t.
struct ErlangKernel {
    int order = 0;
    double rate = 1.0;
    double operator()(double t) const { return erlang_eval(order, rate, t); }
};

/// Convex combination of Erlang kernels l_0..l_M sharing one rate parameter.
/// Coefficients live on the unit simplex.
class ErlangMixture {
public:
    /// Validates rate > 0, c in [0,1] elementwise, and |sum(c) - 1| below
    /// sum_tolerance. Reference-approach coefficient sets sum to 1 - epsilon
    /// by construction, so callers may relax the tolerance accordingly.
    ErlangMixture(double rate, Vector coefficients,
                  double sum_tolerance = 1e-12);

    double rate() const { return rate_; }
    const Vector& coefficients() const { return coefficients_; }
    /// Highest Erlang order M; the mixture has M+1 coefficients.
    int order() const { return static_cast<int>(coefficients_.size()) - 1; }

    /// Density sum_m c_m l_m(t).
    double operator()(double t) const;
    /// d/da of the density.
    double deriv_rate(double t) const;
    /// d^2/da^2 of the density.
    double deriv_rate2(double t) const;
    /// Cumulative mass on [0, t].
    double cumulative(double t) const;
    /// Tail mass on (t, inf); accurate where cumulative(t) rounds to 1.
    double survival(double t) const;

private:
    double rate_;
    Vector coefficients_;
};

/// Piecewise-constant-in-s family delta_a(t, s) = l_m(t) for
/// s in [m/a, (m+1)/a); acts as an approximate identity as a grows.
struct DeltaFamily {
    double rate = 1.0;
    double operator()(double t, double s) const;
    double interval_width() const { return 1.0 / rate; }
};

/// Mean and variance of delta_a(t, .) for fixed t:
/// mean = t + 1/(2a), variance = t/a + 1/(12a^2).
struct DeltaFamilyStats {
    double mean = 0.0;
    double variance = 0.0;
};
DeltaFamilyStats delta_family_stats(double rate, double t);

/// A regular kernel: nonnegative bounded density on [0, inf) integrating to
/// one, with an optional analytic cumulative and tail. When `cumulative` is
/// absent it is computed by adaptive quadrature of `density`; `survival`
/// keeps full precision near the tail when provided.
struct KernelSpec {
    std::function<double(double)> density;
    std::function<double(double)> cumulative;  // optional
    std::function<double(double)> survival;    // optional, 1 - cumulative
    double bound = 0.0;                        // K in 0 <= density <= K
    std::string name;
};

/// alpha(t) = (2/sqrt(pi)) exp(-t^2) on the half line; cumulative erf(t).
KernelSpec gaussian_halfline_kernel();

/// Density of |X| for X ~ N(mu, sigma^2), evaluated at t >= 0.
double folded_normal_density(double t, double location, double scale);
/// Cumulative of the folded normal on [0, t].
double folded_normal_cumulative(double t, double location, double scale);

/// Convex combination of folded normal kernels.
KernelSpec folded_normal_sum_kernel(const Vector& weights,
                                    const Vector& locations,
                                    const Vector& scales);

/// Parameters of one neutron-precursor recirculation kernel:
/// gamma * exp(-decay_rate * t) * sum_j F(t; mu_j, sigma_j) with
/// sigma_{j+1} = 1.5 sigma_j and mu_{j+1} = mu_j + sigma_j.
struct PrecursorParams {
    double decay_rate = 0.0;
    double base_location = 2.0;
    double base_scale = 0.1;
    int term_count = 7;
};

/// Closed-form normalization constant of the precursor kernel.
double precursor_normalization(const PrecursorParams& params);
KernelSpec precursor_kernel(const PrecursorParams& params);

/// Wraps an Erlang mixture as a KernelSpec (analytic cumulative and tail).
KernelSpec erlang_mixture_kernel(const ErlangMixture& mixture);

/// Normalizes an arbitrary nonnegative density by its quadrature integral
/// over [0, tail_horizon]. Rejects integrals that are zero, nonfinite, or
/// outside [1e-8, 1e8] before normalization.
KernelSpec custom_normalized_kernel(std::function<double(double)> density,
                                    std::string name = "custom");

/// Builds a kernel by family id ("gaussian-halfline", "folded-normal-sum",
/// "precursor", "erlang-mixture") and a flat parameter map, as used from the
/// command line. Folded-normal components use keys gamma<i>, mu<i>, sigma<i>.
KernelSpec make_kernel(const std::string& name,
                       const std::map<std::string, double>& params);

}  // namespace erlmix
