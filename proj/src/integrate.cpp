#include "erlmix/integrate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace erlmix {

namespace {

void validate_config(const IntegratorConfig& config) {
    if (!(config.abs_tol >= 1e-14) || !(config.rel_tol >= 1e-14))
        throw DomainError("integrator tolerances must be >= 1e-14");
    if (config.min_step > 0.0 && config.max_step > 0.0 &&
        !(config.min_step <= config.max_step))
        throw DomainError("min step must not exceed max step");
    if (config.max_steps < 1) throw DomainError("max_steps must be >= 1");
}

std::vector<double> prepare_samples(std::vector<double> samples, double t0,
                                    double tf) {
    std::sort(samples.begin(), samples.end());
    const double slack = 1e-12 * (1.0 + std::abs(tf - t0));
    if (!samples.empty() &&
        (samples.front() < t0 - slack || samples.back() > tf + slack))
        throw DomainError("sample times outside the integration window");
    return samples;
}

struct Recorder {
    Trajectory* traj;
    std::vector<double> samples;
    std::size_t next = 0;

    void record_initial(double t0, const Vector& y0, const Vector& f0) {
        if (samples.empty()) {
            push(t0, y0, f0);
            return;
        }
        while (next < samples.size() && samples[next] <= t0) {
            push(samples[next], y0, f0);
            ++next;
        }
    }

    /// Lays down all sample points inside (t_prev, t_new] by cubic Hermite;
    /// without samples, records the accepted step itself.
    void record_step(double t_prev, const Vector& y_prev, const Vector& f_prev,
                     double t_new, const Vector& y_new, const Vector& f_new,
                     bool final_step) {
        if (samples.empty()) {
            push(t_new, y_new, f_new);
            return;
        }
        const double cutoff =
            final_step ? std::numeric_limits<double>::infinity() : t_new;
        while (next < samples.size() && samples[next] <= cutoff) {
            const double s = std::min(samples[next], t_new);
            if (s >= t_new) {
                push(samples[next], y_new, f_new);
            } else {
                Vector ys = hermite_interpolate(t_prev, y_prev, f_prev, t_new,
                                                y_new, f_new, s);
                Vector fs = hermite_slope(t_prev, y_prev, f_prev, t_new, y_new,
                                          f_new, s);
                push(samples[next], ys, fs);
            }
            ++next;
        }
    }

    static Vector hermite_slope(double t0, const Vector& y0, const Vector& f0,
                                double t1, const Vector& y1, const Vector& f1,
                                double t) {
        const double h = t1 - t0;
        const double u = (t - t0) / h;
        const double du0 = (6.0 * u * u - 6.0 * u) / h;
        const double du1 = -du0;
        const double dv0 = 3.0 * u * u - 4.0 * u + 1.0;
        const double dv1 = 3.0 * u * u - 2.0 * u;
        return du0 * y0 + du1 * y1 + dv0 * f0 + dv1 * f1;
    }

    void push(double t, const Vector& y, const Vector& f) {
        traj->times.push_back(t);
        traj->states.push_back(y);
        traj->derivatives.push_back(f);
    }
};

double error_norm(const Vector& estimate, const Vector& y_old,
                  const Vector& y_new, double abs_tol, double rel_tol) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < estimate.size(); ++i) {
        const double scale =
            abs_tol + rel_tol * std::max(std::abs(y_old[i]), std::abs(y_new[i]));
        const double e = estimate[i] / scale;
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(estimate.size()));
}

struct StepBounds {
    double min_step;
    double max_step;
    double initial;
};

StepBounds step_bounds(const IntegratorConfig& config, double t0, double tf) {
    StepBounds b{};
    const double span = tf - t0;
    b.max_step = config.max_step > 0.0 ? config.max_step : span;
    b.min_step = config.min_step > 0.0
                     ? config.min_step
                     : 16.0 * std::numeric_limits<double>::epsilon() *
                           std::max(std::abs(t0), std::abs(tf));
    b.initial = config.initial_step > 0.0
                    ? config.initial_step
                    : std::min(b.max_step, 1e-2 * span);
    b.initial = std::clamp(b.initial, std::min(b.min_step, b.max_step),
                           b.max_step);
    return b;
}

}  // namespace

Vector hermite_interpolate(double t0, const Vector& y0, const Vector& f0,
                           double t1, const Vector& y1, const Vector& f1,
                           double t) {
    const double h = t1 - t0;
    const double u = (t - t0) / h;
    const double h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    const double h10 = u * (1.0 - u) * (1.0 - u);
    const double h01 = u * u * (3.0 - 2.0 * u);
    const double h11 = u * u * (u - 1.0);
    return h00 * y0 + h * h10 * f0 + h01 * y1 + h * h11 * f1;
}

Vector Trajectory::interpolate(double t) const {
    if (times.empty()) throw DomainError("empty trajectory");
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    if (derivatives.size() != states.size()) {
        // Fall back to linear interpolation when slopes are unavailable.
        const double u = (t - times[lo]) / (times[hi] - times[lo]);
        return (1.0 - u) * states[lo] + u * states[hi];
    }
    return hermite_interpolate(times[lo], states[lo], derivatives[lo],
                               times[hi], states[hi], derivatives[hi], t);
}

void DenseNewtonMatrix::factor(double t, const Vector& y, double gamma) {
    Matrix m = -gamma * jacobian_(t, y);
    m.diagonal().array() += 1.0;
    lu_.compute(m);
}

Vector DenseNewtonMatrix::solve(const Vector& rhs) const {
    return lu_.solve(rhs);
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kA21 = 1.0 / 5.0;
constexpr double kA31 = 3.0 / 40.0, kA32 = 9.0 / 40.0;
constexpr double kA41 = 44.0 / 45.0, kA42 = -56.0 / 15.0, kA43 = 32.0 / 9.0;
constexpr double kA51 = 19372.0 / 6561.0, kA52 = -25360.0 / 2187.0,
                 kA53 = 64448.0 / 6561.0, kA54 = -212.0 / 729.0;
constexpr double kA61 = 9017.0 / 3168.0, kA62 = -355.0 / 33.0,
                 kA63 = 46732.0 / 5247.0, kA64 = 49.0 / 176.0,
                 kA65 = -5103.0 / 18656.0;
constexpr double kB1 = 35.0 / 384.0, kB3 = 500.0 / 1113.0,
                 kB4 = 125.0 / 192.0, kB5 = -2187.0 / 6784.0,
                 kB6 = 11.0 / 84.0;
constexpr double kE1 = 71.0 / 57600.0, kE3 = -71.0 / 16695.0,
                 kE4 = 71.0 / 1920.0, kE5 = -17253.0 / 339200.0,
                 kE6 = 22.0 / 525.0, kE7 = -1.0 / 40.0;
constexpr double kC2 = 1.0 / 5.0, kC3 = 3.0 / 10.0, kC4 = 4.0 / 5.0,
                 kC5 = 8.0 / 9.0;

}  // namespace

Trajectory solve_explicit(const RhsFn& rhs, const Vector& y0, double t0,
                          double tf, const IntegratorConfig& config,
                          const std::vector<double>& sample_times) {
    validate_config(config);
    if (!(tf > t0)) throw DomainError("tf must exceed t0");
    if (!y0.allFinite()) throw DomainError("initial state must be finite");

    Trajectory traj;
    Recorder recorder{&traj, prepare_samples(sample_times, t0, tf), 0};
    const StepBounds bounds = step_bounds(config, t0, tf);

    double t = t0;
    Vector y = y0;
    Vector k1 = rhs(t, y);
    ++traj.rhs_evaluations;
    recorder.record_initial(t0, y, k1);

    double h = bounds.initial;
    double err_prev = 1.0;
    Vector k2, k3, k4, k5, k6, k7, y_new, y_stage, estimate;

    while (t < tf) {
        if (traj.steps_accepted + traj.steps_rejected >= config.max_steps)
            throw IntegrationError("explicit integrator exhausted " +
                                       std::to_string(config.max_steps) +
                                       " steps",
                                   t);
        h = std::min(h, tf - t);
        if (h < bounds.min_step && tf - t > bounds.min_step)
            throw IntegrationError(
                "step size underflow at t = " + std::to_string(t) +
                    "; stiffness suspected",
                t);

        y_stage = y + h * (kA21 * k1);
        k2 = rhs(t + kC2 * h, y_stage);
        y_stage = y + h * (kA31 * k1 + kA32 * k2);
        k3 = rhs(t + kC3 * h, y_stage);
        y_stage = y + h * (kA41 * k1 + kA42 * k2 + kA43 * k3);
        k4 = rhs(t + kC4 * h, y_stage);
        y_stage = y + h * (kA51 * k1 + kA52 * k2 + kA53 * k3 + kA54 * k4);
        k5 = rhs(t + kC5 * h, y_stage);
        y_stage =
            y + h * (kA61 * k1 + kA62 * k2 + kA63 * k3 + kA64 * k4 + kA65 * k5);
        k6 = rhs(t + h, y_stage);
        y_new = y + h * (kB1 * k1 + kB3 * k3 + kB4 * k4 + kB5 * k5 + kB6 * k6);
        k7 = rhs(t + h, y_new);
        traj.rhs_evaluations += 6;

        estimate =
            h * (kE1 * k1 + kE3 * k3 + kE4 * k4 + kE5 * k5 + kE6 * k6 + kE7 * k7);
        const double err = y_new.allFinite()
                               ? error_norm(estimate, y, y_new, config.abs_tol,
                                            config.rel_tol)
                               : std::numeric_limits<double>::infinity();

        if (err <= 1.0) {
            const double t_new = t + h;
            recorder.record_step(t, y, k1, t_new, y_new, k7,
                                 t_new >= tf - 1e-14 * std::abs(tf));
            t = t_new;
            y.swap(y_new);
            k1.swap(k7);  // first-same-as-last
            ++traj.steps_accepted;
            const double safe_err = std::max(err, 1e-30);
            double factor = 0.9 * std::pow(safe_err, -0.17) *
                            std::pow(std::max(err_prev, 1e-30), 0.04);
            factor = std::clamp(factor, 0.2, 5.0);
            h = std::min(h * factor, bounds.max_step);
            err_prev = safe_err;
        } else {
            ++traj.steps_rejected;
            double factor = 0.9 * std::pow(err, -0.2);
            h *= std::clamp(factor, 0.1, 0.9);
        }
    }
    return traj;
}

namespace {

constexpr double kTrGamma = 2.0 - 1.4142135623730951;  // 2 - sqrt(2)
constexpr double kTrD = kTrGamma / 2.0;

struct NewtonOutcome {
    bool converged = false;
    bool slow = false;
    Vector y;
};

/// Modified Newton for u - w*f(t_eval, u) = rhs_const with the factored
/// matrix approximating I - w*J.
NewtonOutcome modified_newton(const RhsFn& rhs, const NewtonMatrix& newton,
                              double t_eval, double w, const Vector& rhs_const,
                              Vector u, double abs_tol, double rel_tol,
                              long& evals) {
    NewtonOutcome out;
    double prev_norm = -1.0;
    for (int it = 0; it < 12; ++it) {
        Vector f = rhs(t_eval, u);
        ++evals;
        if (!f.allFinite()) return out;
        Vector residual = u - w * f - rhs_const;
        Vector delta = newton.solve(-residual);
        if (!delta.allFinite()) return out;
        u += delta;
        const double norm = error_norm(delta, u, u, abs_tol, rel_tol);
        if (prev_norm >= 0.0) {
            const double rate = norm / std::max(prev_norm, 1e-300);
            if (rate > 0.9 && norm > 0.03) return out;  // diverging
            if (rate > 0.5) out.slow = true;
        }
        if (norm <= 0.03) {
            out.converged = true;
            out.y = std::move(u);
            return out;
        }
        prev_norm = norm;
    }
    return out;
}

}  // namespace

Trajectory solve_implicit(const RhsFn& rhs, NewtonMatrix& newton,
                          const Vector& y0, double t0, double tf,
                          const IntegratorConfig& config,
                          const std::vector<double>& sample_times) {
    validate_config(config);
    if (!(tf > t0)) throw DomainError("tf must exceed t0");
    if (!y0.allFinite()) throw DomainError("initial state must be finite");
    const bool trbdf2 = config.implicit_scheme == ImplicitScheme::kTrBdf2;

    Trajectory traj;
    Recorder recorder{&traj, prepare_samples(sample_times, t0, tf), 0};
    const StepBounds bounds = step_bounds(config, t0, tf);

    double t = t0;
    Vector y = y0;
    Vector f_now = rhs(t, y);
    ++traj.rhs_evaluations;
    recorder.record_initial(t0, y, f_now);

    double h = bounds.initial;
    double gamma_factored = -1.0;
    bool fresh_factorization = false;

    const auto refactor = [&](double gamma) {
        newton.factor(t, y, gamma);
        gamma_factored = gamma;
        fresh_factorization = true;
    };

    while (t < tf) {
        if (traj.steps_accepted + traj.steps_rejected >= config.max_steps)
            throw IntegrationError("implicit integrator exhausted " +
                                       std::to_string(config.max_steps) +
                                       " steps",
                                   t);
        h = std::min(h, tf - t);

        int halvings = 0;
        for (;;) {
            const double gamma = (trbdf2 ? kTrD : 1.0) * h;
            if (gamma_factored < 0.0 ||
                std::abs(gamma - gamma_factored) > 0.2 * gamma_factored)
                refactor(gamma);

            bool newton_ok = true;
            bool slow = false;
            Vector y_new, f_new, estimate;

            if (trbdf2) {
                // Trapezoidal stage to t + gamma_tr*h.
                const double w = kTrD * h;
                Vector rhs_const = y + w * f_now;
                Vector predictor = y + kTrGamma * h * f_now;
                NewtonOutcome stage1 =
                    modified_newton(rhs, newton, t + kTrGamma * h, w, rhs_const,
                                    predictor, config.abs_tol, config.rel_tol,
                                    traj.rhs_evaluations);
                slow |= stage1.slow;
                if (!stage1.converged) {
                    newton_ok = false;
                } else {
                    const Vector& y_mid = stage1.y;
                    Vector f_mid = (y_mid - y - w * f_now) / w;  // stage slope
                    // BDF2 stage to t + h.
                    const double r1 = 1.0 / (kTrGamma * (2.0 - kTrGamma));
                    const double r0 = (1.0 - kTrGamma) * (1.0 - kTrGamma) * r1;
                    rhs_const = r1 * y_mid - r0 * y;
                    predictor = rhs_const + w * f_mid;
                    NewtonOutcome stage2 = modified_newton(
                        rhs, newton, t + h, w, rhs_const, predictor,
                        config.abs_tol, config.rel_tol, traj.rhs_evaluations);
                    slow |= stage2.slow;
                    if (!stage2.converged) {
                        newton_ok = false;
                    } else {
                        y_new = stage2.y;
                        f_new = (y_new - rhs_const) / w;
                        // Third-order embedded difference, filtered through
                        // the factored matrix to stay bounded for stiff modes.
                        const double sq2 = 1.4142135623730951;
                        estimate = (h / 3.0) * ((sq2 - 1.0) * f_now - f_mid +
                                                (2.0 - sq2) * f_new);
                        estimate = newton.solve(estimate);
                    }
                }
            } else {
                const double w = h;
                Vector rhs_const = y;
                Vector predictor = y + h * f_now;
                NewtonOutcome stage =
                    modified_newton(rhs, newton, t + h, w, rhs_const, predictor,
                                    config.abs_tol, config.rel_tol,
                                    traj.rhs_evaluations);
                slow |= stage.slow;
                if (!stage.converged) {
                    newton_ok = false;
                } else {
                    y_new = stage.y;
                    f_new = (y_new - y) / h;
                    estimate = 0.5 * (y_new - predictor);
                    estimate = newton.solve(estimate);
                }
            }

            if (!newton_ok) {
                if (!fresh_factorization) {
                    refactor((trbdf2 ? kTrD : 1.0) * h);
                    continue;
                }
                if (++halvings > 4)
                    throw IntegrationError(
                        "Newton iteration failed after a Jacobian refresh and "
                        "4 step halvings at t = " +
                            std::to_string(t),
                        t);
                h *= 0.5;
                if (h < bounds.min_step)
                    throw IntegrationError("implicit step underflow at t = " +
                                               std::to_string(t),
                                           t);
                continue;
            }
            // A degraded convergence rate schedules a Jacobian refresh.
            if (slow) gamma_factored = -1.0;

            const double err = error_norm(estimate, y, y_new, config.abs_tol,
                                          config.rel_tol);
            const double order_exp = trbdf2 ? 1.0 / 3.0 : 0.5;
            if (err <= 1.0) {
                const double t_new = t + h;
                recorder.record_step(t, y, f_now, t_new, y_new, f_new,
                                     t_new >= tf - 1e-14 * std::abs(tf));
                t = t_new;
                y.swap(y_new);
                f_now.swap(f_new);
                ++traj.steps_accepted;
                fresh_factorization = false;
                const double factor = std::clamp(
                    0.9 * std::pow(std::max(err, 1e-30), -order_exp), 0.2, 5.0);
                h = std::min(h * factor, bounds.max_step);
                break;
            }
            ++traj.steps_rejected;
            const double factor =
                std::clamp(0.9 * std::pow(err, -order_exp), 0.1, 0.9);
            h *= factor;
            if (h < bounds.min_step && tf - t > bounds.min_step)
                throw IntegrationError("implicit step underflow at t = " +
                                           std::to_string(t),
                                       t);
        }
    }
    return traj;
}

Trajectory solve_implicit(const RhsFn& rhs, const JacFn& jacobian,
                          const Vector& y0, double t0, double tf,
                          const IntegratorConfig& config,
                          const std::vector<double>& sample_times) {
    DenseNewtonMatrix newton(jacobian);
    return solve_implicit(rhs, newton, y0, t0, tf, config, sample_times);
}

}  // namespace erlmix
