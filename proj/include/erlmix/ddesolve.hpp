#pragma once

#include "erlmix/integrate.hpp"
#include "erlmix/kernels.hpp"
#include "erlmix/lct.hpp"
#include "erlmix/types.hpp"

#include <vector>

namespace erlmix {

/// Fixed-step direct integrators for the distributed-delay system. The
/// convolution is truncated at the memory horizon and evaluated by a
/// rectangle rule with weights alpha(j*dt)*dt precomputed per channel; the
/// past delayed variables live in a ring buffer. One solve is strictly
/// sequential.
///
/// Both solvers require dt to divide the memory horizon and tf - t0. The
/// recorded trajectory holds x_n, the rectangle-rule memory state z_n, and
/// f(t_n, x_n, z_n).

/// Explicit Euler with a left rectangle rule:
/// x_{n+1} = x_n + f(x_n, z_n) dt,
/// z_{n+1} = sum_{j=1}^{N_h} alpha(j dt) (.) r_{n+1-j} dt.
Trajectory dde_explicit(const ModelSpec& model,
                        const std::vector<KernelSpec>& kernels, double dt,
                        double horizon, double t0, double tf);

/// Implicit Euler with a right rectangle rule: per step the residual
/// R(x) = x - x_n - f(x, z(x)) dt with
/// z_{n+1} = sum_{j=0}^{N_h-1} alpha(j dt) (.) r_{n+1-j} dt
/// is solved by Newton with the analytic Jacobian
/// I - (F + G diag(alpha(0) dt) H) dt.
Trajectory dde_implicit(const ModelSpec& model,
                        const std::vector<KernelSpec>& kernels, double dt,
                        double horizon, double t0, double tf);

/// Largest per-channel tail horizon at epsilon = 1e-12, rounded up to a
/// multiple of dt.
double default_memory_horizon(const std::vector<KernelSpec>& kernels,
                              double dt);

}  // namespace erlmix
