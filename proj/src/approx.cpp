#include "erlmix/approx.hpp"

#include "erlmix/quadrature.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace erlmix {

double beta(const KernelSpec& kernel, double t) {
    if (!(t >= 0.0)) throw DomainError("beta requires t >= 0");
    if (kernel.cumulative) return kernel.cumulative(t);
    if (t == 0.0) return 0.0;
    return integrate_or_throw(kernel.density, 0.0, t, 1e-13, 0.0, 4000);
}

double kernel_survival(const KernelSpec& kernel, double t) {
    if (kernel.survival) return kernel.survival(t);
    return 1.0 - beta(kernel, t);
}

HorizonResult find_horizon(const KernelSpec& kernel, double epsilon,
                           double bracket_lo, double bracket_hi, double tol) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw DomainError("epsilon must lie in (0, 1)");
    if (tol < 0.0) tol = epsilon / 10.0;
    if (bracket_hi <= bracket_lo) bracket_hi = bracket_lo + 1.0;

    const auto tail = [&](double t) { return kernel_survival(kernel, t); };

    // Repair the bracket: the lower end must keep more than epsilon of tail
    // mass, the upper end less.
    double lo = std::max(bracket_lo, 0.0);
    if (tail(lo) <= epsilon) {
        int shrink = 0;
        while (lo > 0.0 && tail(lo) <= epsilon) {
            lo = (lo < 1e-300) ? 0.0 : lo / 2.0;
            if (++shrink > 200) {
                lo = 0.0;
                break;
            }
        }
    }
    double hi = std::max(bracket_hi, lo + 1.0);
    int doublings = 0;
    while (tail(hi) >= epsilon) {
        hi *= 2.0;
        if (++doublings > 200)
            throw ConvergenceError(
                "kernel tail never drops below epsilon after 200 bracket "
                "doublings");
    }

    HorizonResult result;
    result.epsilon = epsilon;
    double best_mid = 0.5 * (lo + hi);
    double best_residual = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 2000; ++k) {
        const double mid = 0.5 * (lo + hi);
        const double s = tail(mid);
        const double residual = std::abs(s - epsilon);
        ++result.iterations;
        if (residual < best_residual) {
            best_residual = residual;
            best_mid = mid;
        }
        if (residual < tol) {
            result.horizon = mid;
            result.residual = residual;
            return result;
        }
        if (s > epsilon)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() *
                           std::max(1.0, std::abs(mid)))
            break;
    }
    if (best_residual < tol) {
        result.horizon = best_mid;
        result.residual = best_residual;
        return result;
    }
    throw ConvergenceError("bisection stalled at residual " +
                           std::to_string(best_residual) +
                           " above tolerance " + std::to_string(tol));
}

double effective_rate_min(const FitProblem& problem) {
    return problem.rate_min > 0.0 ? problem.rate_min : 1e-6 / problem.horizon;
}

void validate(const FitProblem& problem) {
    if (!problem.kernel.density) throw DomainError("fit target has no density");
    if (problem.order < 0) throw DomainError("mixture order must be >= 0");
    if (!(problem.horizon > 0.0)) throw DomainError("horizon must be > 0");
    if (problem.sample_count < problem.order + 1)
        throw DomainError("need at least order+1 objective samples");
}

namespace {

struct Grid {
    double dt;
    Vector times;    // t_k = k*dt, k = 0..N-1
    Vector targets;  // alpha(t_k)
};

Grid make_grid(const FitProblem& problem) {
    Grid grid;
    const int n = problem.sample_count;
    grid.dt = problem.horizon / n;
    grid.times.resize(n);
    grid.targets.resize(n);
    for (int k = 0; k < n; ++k) {
        grid.times[k] = k * grid.dt;
        grid.targets[k] = problem.kernel.density(grid.times[k]);
    }
    return grid;
}

/// Basis matrix L with L(k, m) = l_m(t_k).
Matrix basis_matrix(const Grid& grid, int order, double rate) {
    Matrix basis(grid.times.size(), order + 1);
    Vector row(order + 1);
    for (Eigen::Index k = 0; k < grid.times.size(); ++k) {
        erlang_basis(rate, grid.times[k], row);
        basis.row(k) = row;
    }
    return basis;
}

struct RatePhi {
    double phi, dphi, d2phi;
};

/// phi and its first two rate derivatives for fixed coefficients.
RatePhi rate_profile(const Grid& grid, const Vector& c, double rate) {
    const Eigen::Index order1 = c.size();
    Vector values(order1), d1(order1), d2(order1);
    RatePhi out{0.0, 0.0, 0.0};
    for (Eigen::Index k = 0; k < grid.times.size(); ++k) {
        erlang_basis_with_derivatives(rate, grid.times[k], values, d1, d2);
        const double res = grid.targets[k] - c.dot(values);
        const double da = c.dot(d1);
        const double d2a = c.dot(d2);
        out.phi += 0.5 * res * res;
        out.dphi += -res * da;
        out.d2phi += -(res * d2a - da * da);
    }
    out.phi *= grid.dt;
    out.dphi *= grid.dt;
    out.d2phi *= grid.dt;
    return out;
}

/// Exact solve of min 1/2 ||L c - y||^2 over the unit simplex by a primal
/// active-set method; the equality-constrained subproblems are solved via a
/// null-space QR so no normal equations are formed.
Vector simplex_least_squares(const Matrix& basis, const Vector& y, Vector c) {
    const Eigen::Index n = c.size();
    std::vector<bool> active(n);
    for (Eigen::Index m = 0; m < n; ++m) active[m] = c[m] <= 0.0;

    const auto solve_free = [&](const std::vector<Eigen::Index>& free) {
        const Eigen::Index p = static_cast<Eigen::Index>(free.size());
        Vector d = Vector::Zero(n);
        if (p == 1) {
            d[free[0]] = 1.0;
            return d;
        }
        Matrix sub(basis.rows(), p);
        for (Eigen::Index j = 0; j < p; ++j) sub.col(j) = basis.col(free[j]);
        // Orthonormal basis of {v : sum(v) = 0} from a Householder QR of 1.
        Vector ones = Vector::Ones(p);
        Eigen::HouseholderQR<Matrix> qr_ones(ones);
        Matrix q = qr_ones.householderQ();
        Matrix null_basis = q.rightCols(p - 1);
        Vector center = Vector::Constant(p, 1.0 / p);
        Vector rhs = y - sub * center;
        Vector u = (sub * null_basis).colPivHouseholderQr().solve(rhs);
        Vector df = center + null_basis * u;
        for (Eigen::Index j = 0; j < p; ++j) d[free[j]] = df[j];
        return d;
    };

    const int max_iterations = static_cast<int>(5 * n) + 50;
    for (int it = 0; it < max_iterations; ++it) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index m = 0; m < n; ++m)
            if (!active[m]) free.push_back(m);
        if (free.empty()) {
            // Everything pinned at zero is infeasible for the sum constraint;
            // release the best column.
            Vector g = basis.transpose() * (basis * c - y);
            Eigen::Index best = 0;
            g.minCoeff(&best);
            active[best] = false;
            continue;
        }

        Vector d = solve_free(free);
        double min_free = 0.0;
        for (Eigen::Index m : free) min_free = std::min(min_free, d[m]);

        if (min_free >= -1e-12) {
            for (Eigen::Index m = 0; m < n; ++m) c[m] = active[m] ? 0.0 : std::max(d[m], 0.0);
            // Check multipliers of the pinned coordinates.
            Vector g = basis.transpose() * (basis * c - y);
            double nu = 0.0;
            for (Eigen::Index m : free) nu += g[m];
            nu /= static_cast<double>(free.size());
            const double mult_tol = 1e-10 * (1.0 + g.cwiseAbs().maxCoeff());
            Eigen::Index release = -1;
            double worst = -mult_tol;
            for (Eigen::Index m = 0; m < n; ++m) {
                if (!active[m]) continue;
                const double mult = g[m] - nu;
                if (mult < worst) {
                    worst = mult;
                    release = m;
                }
            }
            if (release < 0) return c;
            active[release] = false;
            continue;
        }

        // Partial step toward d until the first coordinate hits zero.
        double theta = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index m : free) {
            if (d[m] < 0.0 && c[m] > 0.0) {
                const double step = c[m] / (c[m] - d[m]);
                if (step < theta) {
                    theta = step;
                    blocking = m;
                }
            } else if (d[m] < 0.0 && c[m] <= 0.0) {
                theta = 0.0;
                blocking = m;
            }
        }
        if (blocking < 0) {
            for (Eigen::Index m : free) c[m] = std::max(d[m], 0.0);
            return c;
        }
        for (Eigen::Index m : free) c[m] = c[m] + theta * (d[m] - c[m]);
        c[blocking] = 0.0;
        active[blocking] = true;
    }
    return c;
}

}  // namespace

Vector project_to_simplex(const Vector& v) {
    const Eigen::Index n = v.size();
    std::vector<double> sorted(v.data(), v.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double cumulative = 0.0;
    double threshold = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cumulative += sorted[k];
        const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
        if (k + 1 == n || sorted[k + 1] <= candidate) {
            threshold = candidate;
            break;
        }
    }
    Vector out(n);
    for (Eigen::Index m = 0; m < n; ++m)
        out[m] = std::max(v[m] - threshold, 0.0);
    return out;
}

ObjectiveEval objective(const FitProblem& problem,
                        const ErlangMixture& mixture) {
    validate(problem);
    if (mixture.order() != problem.order)
        throw DomainError("mixture order does not match the fit problem");
    const Grid grid = make_grid(problem);
    const Eigen::Index order1 = problem.order + 1;
    const Vector& c = mixture.coefficients();
    const double rate = mixture.rate();

    ObjectiveEval eval;
    eval.gradient = Vector::Zero(order1 + 1);
    eval.hessian = Matrix::Zero(order1 + 1, order1 + 1);

    Vector values(order1), d1(order1), d2(order1);
    for (Eigen::Index k = 0; k < grid.times.size(); ++k) {
        erlang_basis_with_derivatives(rate, grid.times[k], values, d1, d2);
        const double res = grid.targets[k] - c.dot(values);
        const double da = c.dot(d1);
        const double d2a = c.dot(d2);
        eval.phi += 0.5 * res * res;
        eval.gradient.head(order1) += -res * values;
        eval.gradient[order1] += -res * da;
        eval.hessian.topLeftCorner(order1, order1) +=
            values * values.transpose();
        eval.hessian.col(order1).head(order1) += -(res * d1 - da * values);
        eval.hessian(order1, order1) += -(res * d2a - da * da);
    }
    eval.phi *= grid.dt;
    eval.gradient *= grid.dt;
    eval.hessian *= grid.dt;
    eval.hessian.row(order1).head(order1) =
        eval.hessian.col(order1).head(order1).transpose();
    return eval;
}

namespace {

double golden_section_rate(const Grid& grid, const Vector& c, double lo,
                           double hi) {
    constexpr double kInvPhi = 0.6180339887498949;
    double x1 = hi - kInvPhi * (hi - lo);
    double x2 = lo + kInvPhi * (hi - lo);
    double f1 = rate_profile(grid, c, x1).phi;
    double f2 = rate_profile(grid, c, x2).phi;
    for (int it = 0; it < 100 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kInvPhi * (hi - lo);
            f1 = rate_profile(grid, c, x1).phi;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kInvPhi * (hi - lo);
            f2 = rate_profile(grid, c, x2).phi;
        }
    }
    return 0.5 * (lo + hi);
}

/// Safeguarded 1-D Newton minimization of phi in the rate for fixed
/// coefficients; golden-section fallback when the Newton step does not
/// decrease phi.
double minimize_rate(const Grid& grid, const Vector& c, double rate,
                     double rate_min, double grad_tol) {
    for (int it = 0; it < 30; ++it) {
        const RatePhi prof = rate_profile(grid, c, rate);
        if (std::abs(prof.dphi) <= grad_tol &&
            !(rate <= rate_min && prof.dphi > 0.0))
            return rate;
        double candidate = rate;
        bool improved = false;
        if (prof.d2phi > 0.0) {
            double step = -prof.dphi / prof.d2phi;
            for (int half = 0; half < 25; ++half) {
                candidate = std::max(rate_min, rate + step);
                if (rate_profile(grid, c, candidate).phi <
                    prof.phi - 1e-18 * (1.0 + prof.phi)) {
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if (!improved) {
            const double lo = std::max(rate_min, rate / 4.0);
            const double hi = rate * 4.0;
            candidate = golden_section_rate(grid, c, lo, hi);
            if (rate_profile(grid, c, candidate).phi >= prof.phi) return rate;
        }
        if (std::abs(candidate - rate) <=
            1e-15 * std::max(1.0, std::abs(rate)))
            return candidate;
        rate = candidate;
    }
    return rate;
}

double kkt_residual(const Grid& grid, const Matrix& basis, const Vector& c,
                    double rate, double rate_min) {
    const Vector residual = basis * c - grid.targets;
    const Vector grad_c = grid.dt * (basis.transpose() * residual);
    const double grad_a = rate_profile(grid, c, rate).dphi;

    double nu = 0.0;
    int free_count = 0;
    for (Eigen::Index m = 0; m < c.size(); ++m) {
        if (c[m] > 0.0) {
            nu += grad_c[m];
            ++free_count;
        }
    }
    if (free_count > 0) nu /= free_count;

    double residual_max = 0.0;
    for (Eigen::Index m = 0; m < c.size(); ++m) {
        if (c[m] > 0.0)
            residual_max = std::max(residual_max, std::abs(grad_c[m] - nu));
        else
            residual_max = std::max(residual_max, std::max(0.0, nu - grad_c[m]));
    }
    if (rate > rate_min * (1.0 + 1e-12))
        residual_max = std::max(residual_max, std::abs(grad_a));
    else
        residual_max = std::max(residual_max, std::max(0.0, -grad_a));
    return residual_max;
}

ErlangMixture finalize_mixture(double rate, Vector c) {
    for (Eigen::Index m = 0; m < c.size(); ++m) c[m] = std::max(c[m], 0.0);
    const double sum = c.sum();
    if (sum > 0.0) c /= sum;
    return ErlangMixture(rate, std::move(c));
}

}  // namespace

FitResult fit_least_squares(const FitProblem& problem,
                            std::optional<ErlangMixture> init,
                            const FitOptions& options) {
    validate(problem);
    const Grid grid = make_grid(problem);
    const double rate_min = effective_rate_min(problem);

    double rate;
    Vector c;
    if (init) {
        if (init->order() != problem.order)
            throw DomainError("init mixture order does not match the problem");
        rate = std::max(init->rate(), rate_min);
        c = project_to_simplex(init->coefficients());
    } else {
        rate = (problem.order + 1) / problem.horizon;
        c = project_to_simplex(
            theoretical_coefficients(problem.kernel, rate, problem.order));
    }

    FitReport report;
    double best_phi = rate_profile(grid, c, rate).phi;
    Vector best_c = c;
    double best_rate = rate;

    for (int it = 0; it < options.max_alternations; ++it) {
        ++report.alternations;
        Matrix basis = basis_matrix(grid, problem.order, rate);
        c = simplex_least_squares(basis, grid.targets, c);

        const double grad_tol = 0.1 * options.kkt_tol;
        const double new_rate = minimize_rate(grid, c, rate, rate_min, grad_tol);
        const bool rate_moved =
            std::abs(new_rate - rate) > 1e-15 * std::max(1.0, rate);
        rate = new_rate;
        if (rate_moved) basis = basis_matrix(grid, problem.order, rate);

        const double phi = rate_profile(grid, c, rate).phi;
        if (phi < best_phi) {
            best_phi = phi;
            best_c = c;
            best_rate = rate;
        }

        report.kkt_residual = kkt_residual(grid, basis, c, rate, rate_min);
        if (report.kkt_residual <= options.kkt_tol) {
            report.converged = true;
            break;
        }
        if (!rate_moved && it > 0) {
            // The coefficient step is exact, so a stationary rate means the
            // alternation has reached its fixed point.
            break;
        }
    }
    if (!report.converged)
        report.message = "stopped at KKT residual " +
                         std::to_string(report.kkt_residual);

    FitResult result{finalize_mixture(best_rate, best_c), best_phi, 0.0,
                     FitMethod::kLeastSquares, report};
    result.kernel_err = kernel_error(result.mixture, problem.kernel,
                                     options.error_points, problem.horizon);
    return result;
}

Vector theoretical_coefficients(const KernelSpec& kernel, double rate,
                                int order) {
    if (!(rate > 0.0)) throw DomainError("rate must be positive");
    if (order < 0) throw DomainError("order must be nonnegative");
    const bool has_tail = static_cast<bool>(kernel.survival);
    Vector c(order + 1);
    double prev_cumulative = 0.0;
    double prev_tail = 1.0;
    for (int m = 0; m <= order; ++m) {
        const double edge = (m + 1) / rate;
        if (has_tail && prev_cumulative > 0.5) {
            const double tail = kernel_survival(kernel, edge);
            c[m] = std::max(prev_tail - tail, 0.0);
            prev_tail = tail;
            prev_cumulative = 1.0 - tail;
        } else {
            const double cumulative = beta(kernel, edge);
            c[m] = std::max(cumulative - prev_cumulative, 0.0);
            prev_cumulative = cumulative;
            prev_tail = 1.0 - cumulative;
        }
    }
    return c;
}

FitResult fit_theoretical(const FitProblem& problem,
                          const FitOptions& options) {
    validate(problem);
    const double rate = (problem.order + 1) / problem.horizon;
    Vector c = theoretical_coefficients(problem.kernel, rate, problem.order);
    const double sum = c.sum();
    // The interval masses sum to beta(t_h) = 1 - epsilon by construction and
    // are deliberately not rescaled.
    const double sum_tolerance =
        std::max(1e-12, 1.0000001 * std::abs(sum - 1.0) + 1e-15);
    ErlangMixture mixture(rate, std::move(c), sum_tolerance);

    FitResult result{mixture, 0.0, 0.0, FitMethod::kTheoretical, {}};
    result.report.converged = true;
    result.phi = objective(problem, mixture).phi;
    result.kernel_err = kernel_error(mixture, problem.kernel,
                                     options.error_points, problem.horizon);
    return result;
}

double kernel_error(const std::function<double(double)>& approximation,
                    const KernelSpec& kernel, int points, double horizon) {
    if (points < 2) throw DomainError("kernel error needs >= 2 grid points");
    if (!(horizon > 0.0)) throw DomainError("horizon must be > 0");
    const double dt = horizon / points;
    double acc = 0.0;
    for (int k = 0; k < points; ++k) {
        const double t = k * dt;
        const double diff = approximation(t) - kernel.density(t);
        acc += diff * diff;
    }
    return acc * dt;
}

double kernel_error(const ErlangMixture& mixture, const KernelSpec& kernel,
                    int points, double horizon) {
    return kernel_error([&](double t) { return mixture(t); }, kernel, points,
                        horizon);
}

}  // namespace erlmix
