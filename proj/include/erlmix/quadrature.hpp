#pragma once

#include "erlmix/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <vector>

namespace erlmix {

template <class Scalar>
struct QuadratureResult {
    Scalar value{};
    double error_estimate = 0.0;
    int evaluations = 0;
    bool converged = false;
};

namespace detail {

// Gauss-Kronrod 7-15 nodes and weights on [-1, 1] (QUADPACK dqk15).
inline constexpr double kGk15Nodes[8] = {
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985, 0.0};
inline constexpr double kGk15Weights[8] = {
    0.022935322010529224, 0.06309209262997855, 0.10479001032225018,
    0.14065325971552592,  0.1690047266392679,  0.19035057806478542,
    0.20443294007529889,  0.20948214108472782};
inline constexpr double kGauss7Weights[4] = {
    0.1294849661688697, 0.27970539148927664, 0.3818300505051189,
    0.41795918367346935};

template <class Scalar, class F>
void gk15(F&& f, double lo, double hi, Scalar& kronrod, double& err) {
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    Scalar resg{};
    Scalar resk{};
    const Scalar fc = f(mid);
    resg += kGauss7Weights[3] * fc;
    resk += kGk15Weights[7] * fc;
    for (int j = 0; j < 7; ++j) {
        const double dx = half * kGk15Nodes[j];
        const Scalar f1 = f(mid - dx);
        const Scalar f2 = f(mid + dx);
        resk += kGk15Weights[j] * (f1 + f2);
        if (j % 2 == 1) resg += kGauss7Weights[j / 2] * (f1 + f2);
    }
    kronrod = resk * half;
    err = std::abs((resk - resg) * half);
}

struct Interval {
    double lo, hi, err;
    bool operator<(const Interval& o) const { return err < o.err; }
};

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [lo, hi].
/// Splits the interval with the largest error estimate until the summed
/// error estimate drops below abs_tol + rel_tol*|value| or the interval
/// budget is exhausted.
template <class Scalar = double, class F>
QuadratureResult<Scalar> integrate_adaptive(F&& f, double lo, double hi,
                                            double abs_tol,
                                            double rel_tol = 0.0,
                                            int max_intervals = 2000) {
    QuadratureResult<Scalar> result;
    if (lo == hi) {
        result.converged = true;
        return result;
    }

    struct Piece {
        double lo, hi, err;
        Scalar val;
        bool operator<(const Piece& o) const { return err < o.err; }
    };
    std::priority_queue<Piece> pieces;

    Scalar v{};
    double e = 0.0;
    detail::gk15<Scalar>(f, lo, hi, v, e);
    result.evaluations = 15;
    pieces.push({lo, hi, e, v});
    Scalar total = v;
    double total_err = e;

    int splits = 0;
    while (total_err > abs_tol + rel_tol * std::abs(total) &&
           splits < max_intervals) {
        Piece worst = pieces.top();
        pieces.pop();
        const double mid = 0.5 * (worst.lo + worst.hi);
        if (mid <= worst.lo || mid >= worst.hi) {
            // Interval at floating point resolution; keep its contribution.
            pieces.push(worst);
            break;
        }
        Scalar vl{}, vr{};
        double el = 0.0, er = 0.0;
        detail::gk15<Scalar>(f, worst.lo, mid, vl, el);
        detail::gk15<Scalar>(f, mid, worst.hi, vr, er);
        result.evaluations += 30;
        total += vl + vr - worst.val;
        total_err += el + er - worst.err;
        pieces.push({worst.lo, mid, el, vl});
        pieces.push({mid, worst.hi, er, vr});
        ++splits;
    }

    result.value = total;
    result.error_estimate = total_err;
    result.converged = total_err <= abs_tol + rel_tol * std::abs(total) ||
                       total_err <= 1e-15 * std::abs(total);
    return result;
}

/// As integrate_adaptive, but throws QuadratureError (carrying the partial
/// estimate) when the budget runs out before reaching the tolerance.
template <class F>
double integrate_or_throw(F&& f, double lo, double hi, double abs_tol,
                          double rel_tol = 0.0, int max_intervals = 2000) {
    auto r = integrate_adaptive<double>(f, lo, hi, abs_tol, rel_tol,
                                        max_intervals);
    if (!r.converged) {
        throw QuadratureError("adaptive quadrature did not converge on [" +
                                  std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]",
                              r.value);
    }
    return r.value;
}

/// Scans [0, upper] with a uniform grid and returns the largest |f|.
double scan_peak(const std::function<double(double)>& f, double upper,
                 int points = 10000);

/// Truncation point T such that |f| stays below cutoff_ratio times its peak
/// beyond T. Doubles the scan window until the last quarter of the window is
/// below the cutoff.
double tail_horizon(const std::function<double(double)>& f,
                    double cutoff_ratio = 1e-16, double initial_upper = 1.0,
                    int max_doublings = 60);

}  // namespace erlmix
