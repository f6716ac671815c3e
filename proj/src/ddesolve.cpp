#include "erlmix/ddesolve.hpp"

#include "erlmix/approx.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace erlmix {

namespace {

struct DdeGrid {
    double dt = 0.0;
    long n_horizon = 0;  // N_h
    long steps = 0;
    Matrix weights;  // (n_z x N_h+1), alpha_i(j*dt)*dt
    Matrix ring;     // (n_z x N_h+1), past r values by time index mod L
    long ring_len = 0;

    long slot(long k) const { return ((k % ring_len) + ring_len) % ring_len; }
};

long exact_multiple(double span, double dt, const char* what) {
    const double ratio = span / dt;
    const long n = static_cast<long>(std::llround(ratio));
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9 * ratio)
        throw DomainError(std::string(what) +
                          " must be an integer multiple of dt");
    return n;
}

DdeGrid make_grid(const ModelSpec& model,
                  const std::vector<KernelSpec>& kernels, double dt,
                  double horizon, double t0, double tf) {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (static_cast<int>(kernels.size()) != model.n_z)
        throw DomainError("kernel count must equal the channel count");
    DdeGrid grid;
    grid.dt = dt;
    grid.n_horizon = exact_multiple(horizon, dt, "memory horizon");
    grid.steps = exact_multiple(tf - t0, dt, "tf - t0");
    grid.ring_len = grid.n_horizon + 1;

    grid.weights.resize(model.n_z, grid.ring_len);
    for (long j = 0; j < grid.ring_len; ++j)
        for (int i = 0; i < model.n_z; ++i)
            grid.weights(i, j) = kernels[static_cast<std::size_t>(i)].density(
                                     static_cast<double>(j) * dt) *
                                 dt;

    // Past delayed variables from the history function (constant x0 when no
    // history is given).
    grid.ring.resize(model.n_z, grid.ring_len);
    for (long k = -grid.n_horizon; k <= 0; ++k) {
        const double t = t0 + static_cast<double>(k) * dt;
        const Vector x = model.history ? model.history(t) : model.x0;
        grid.ring.col(grid.slot(k)) = model.h(x);
    }
    return grid;
}

/// z with the sum over weight indices [j_lo, j_hi] against r_{n_top - j}.
Vector convolve(const DdeGrid& grid, long n_top, long j_lo, long j_hi) {
    Vector z = Vector::Zero(grid.ring.rows());
    for (long j = j_lo; j <= j_hi; ++j)
        z += grid.weights.col(j).cwiseProduct(grid.ring.col(grid.slot(n_top - j)));
    return z;
}

}  // namespace

double default_memory_horizon(const std::vector<KernelSpec>& kernels,
                              double dt) {
    double horizon = 0.0;
    for (const auto& kernel : kernels)
        horizon = std::max(horizon, find_horizon(kernel, 1e-12).horizon);
    return std::ceil(horizon / dt) * dt;
}

Trajectory dde_explicit(const ModelSpec& model,
                        const std::vector<KernelSpec>& kernels, double dt,
                        double horizon, double t0, double tf) {
    DdeGrid grid = make_grid(model, kernels, dt, horizon, t0, tf);
    Trajectory traj;
    traj.times.reserve(grid.steps + 1);

    Vector x = model.history ? model.history(t0) : model.x0;
    for (long n = 0; n <= grid.steps; ++n) {
        const double t = t0 + static_cast<double>(n) * dt;
        // Left rectangle rule: z_n collects r_{n-1} .. r_{n-N_h}.
        const Vector z = convolve(grid, n, 1, grid.n_horizon);
        const Vector dx = model.f(t, x, z);
        if (!x.allFinite() || !dx.allFinite())
            throw IntegrationError("explicit DDE solve diverged at step " +
                                       std::to_string(n),
                                   t);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.derivatives.push_back(dx);
        traj.memory_outputs.push_back(z);
        ++traj.rhs_evaluations;
        if (n == grid.steps) break;

        x += dt * dx;
        grid.ring.col(grid.slot(n + 1)) = model.h(x);
        ++traj.steps_accepted;
    }
    return traj;
}

Trajectory dde_implicit(const ModelSpec& model,
                        const std::vector<KernelSpec>& kernels, double dt,
                        double horizon, double t0, double tf) {
    DdeGrid grid = make_grid(model, kernels, dt, horizon, t0, tf);
    Trajectory traj;
    traj.times.reserve(grid.steps + 1);

    const Vector alpha0_dt = grid.weights.col(0);
    const Matrix identity = Matrix::Identity(model.n_x, model.n_x);

    Vector x = model.history ? model.history(t0) : model.x0;
    // Right rectangle rule memory state at the record times.
    Vector z = convolve(grid, 0, 0, grid.n_horizon - 1);
    for (long n = 0; n <= grid.steps; ++n) {
        const double t = t0 + static_cast<double>(n) * dt;
        const Vector dx = model.f(t, x, z);
        if (!x.allFinite() || !dx.allFinite())
            throw IntegrationError("implicit DDE solve diverged at step " +
                                       std::to_string(n),
                                   t);
        traj.times.push_back(t);
        traj.states.push_back(x);
        traj.derivatives.push_back(dx);
        traj.memory_outputs.push_back(z);
        ++traj.rhs_evaluations;
        if (n == grid.steps) break;

        // z_{n+1} = alpha(0) h(x_{n+1}) dt + known part.
        const Vector z_known = convolve(grid, n + 1, 1, grid.n_horizon - 1);
        const double t_next = t + dt;
        Vector x_next = x;
        bool converged = false;
        for (int it = 0; it < 50; ++it) {
            const Vector z_next =
                z_known + alpha0_dt.cwiseProduct(model.h(x_next));
            const Vector residual =
                x_next - x - dt * model.f(t_next, x_next, z_next);
            if (!residual.allFinite())
                throw IntegrationError(
                    "implicit DDE residual became nonfinite at step " +
                        std::to_string(n),
                    t_next);
            if (residual.norm() <= 1e-12 * (1.0 + x_next.norm())) {
                converged = true;
                break;
            }
            const Matrix jac_f = model.jac_x(t_next, x_next, z_next);
            const Matrix jac_z = model.jac_z(t_next, x_next, z_next);
            const Matrix jac_h = model.jac_h(x_next);
            const Matrix jac_residual =
                identity -
                dt * (jac_f +
                      jac_z * (alpha0_dt.asDiagonal() * jac_h));
            x_next += jac_residual.partialPivLu().solve(-residual);
        }
        if (!converged)
            throw ConvergenceError(
                "implicit DDE Newton did not converge at step " +
                std::to_string(n));

        x = x_next;
        grid.ring.col(grid.slot(n + 1)) = model.h(x);
        z = z_known + alpha0_dt.cwiseProduct(grid.ring.col(grid.slot(n + 1)));
        ++traj.steps_accepted;
    }
    return traj;
}

}  // namespace erlmix
