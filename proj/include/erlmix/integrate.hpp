#pragma once

#include "erlmix/types.hpp"

#include <Eigen/LU>

#include <functional>
#include <vector>

namespace erlmix {

enum class Method { kExplicitRk, kImplicit };
enum class ImplicitScheme { kEuler, kTrBdf2 };

struct IntegratorConfig {
    double abs_tol = 1e-8;
    double rel_tol = 1e-8;
    double initial_step = 0.0;  // 0 selects an automatic choice
    double min_step = 0.0;      // 0 selects an eps-scaled floor
    double max_step = 0.0;      // 0 means tf - t0
    long max_steps = 10'000'000;
    Method method = Method::kExplicitRk;
    ImplicitScheme implicit_scheme = ImplicitScheme::kTrBdf2;
};

/// Sampled solution. When the solve was given explicit sample times the
/// records live exactly there (cubic Hermite between accepted steps);
/// otherwise every accepted step is recorded. `derivatives` holds the
/// right-hand side at each record, which is what the Hermite interpolation
/// of error metrics consumes. `memory_outputs` is filled by the chain
/// simulation wrappers with z_hat = C Z.
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> derivatives;
    std::vector<Vector> memory_outputs;
    long steps_accepted = 0;
    long steps_rejected = 0;
    long rhs_evaluations = 0;

    /// Cubic Hermite interpolation between stored records.
    Vector interpolate(double t) const;
};

using RhsFn = std::function<Vector(double, const Vector&)>;
using JacFn = std::function<Matrix(double, const Vector&)>;

/// Factorization of I - gamma*J reused across modified-Newton iterations.
/// Implementations decide how much structure of J to exploit.
class NewtonMatrix {
public:
    virtual ~NewtonMatrix() = default;
    virtual void factor(double t, const Vector& y, double gamma) = 0;
    virtual Vector solve(const Vector& rhs) const = 0;
};

/// Dense LU with partial pivoting on I - gamma*J.
class DenseNewtonMatrix : public NewtonMatrix {
public:
    explicit DenseNewtonMatrix(JacFn jacobian) : jacobian_(std::move(jacobian)) {}
    void factor(double t, const Vector& y, double gamma) override;
    Vector solve(const Vector& rhs) const override;

private:
    JacFn jacobian_;
    Eigen::PartialPivLU<Matrix> lu_;
};

/// Adaptive embedded Runge-Kutta pair (5th order, 4th order error estimate)
/// with PI step control. Throws IntegrationError on step underflow
/// (stiffness suspected) or step budget exhaustion.
Trajectory solve_explicit(const RhsFn& rhs, const Vector& y0, double t0,
                          double tf, const IntegratorConfig& config,
                          const std::vector<double>& sample_times = {});

/// L-stable single-step schemes (implicit Euler or TR-BDF2) with
/// modified-Newton inner solves; the Jacobian factorization is reused until
/// the convergence rate degrades. Throws IntegrationError when Newton still
/// fails after a Jacobian refresh and four step halvings.
Trajectory solve_implicit(const RhsFn& rhs, NewtonMatrix& newton,
                          const Vector& y0, double t0, double tf,
                          const IntegratorConfig& config,
                          const std::vector<double>& sample_times = {});

/// Convenience overload building a dense Newton matrix from the Jacobian.
Trajectory solve_implicit(const RhsFn& rhs, const JacFn& jacobian,
                          const Vector& y0, double t0, double tf,
                          const IntegratorConfig& config,
                          const std::vector<double>& sample_times = {});

/// Cubic Hermite interpolation on [t0, t1] from endpoint values and slopes.
Vector hermite_interpolate(double t0, const Vector& y0, const Vector& f0,
                           double t1, const Vector& y1, const Vector& f1,
                           double t);

}  // namespace erlmix
