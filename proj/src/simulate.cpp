#include "erlmix/simulate.hpp"

#include <Eigen/Dense>

namespace erlmix {

RhsFn augmented_rhs_fn(const ModelSpec& model, const LctSystem& lct) {
    const int n_x = model.n_x;
    const int n_aux = lct.total_dimension();
    return [&model, &lct, n_x, n_aux](double t, const Vector& y) {
        const AugmentedRhs out =
            augmented_rhs(model, lct, t, y.head(n_x), y.tail(n_aux));
        Vector dy(n_x + n_aux);
        dy.head(n_x) = out.dx;
        dy.tail(n_aux) = out.dz;
        return dy;
    };
}

JacFn augmented_jacobian_fn(const ModelSpec& model, const LctSystem& lct) {
    const int n_x = model.n_x;
    const int n_aux = lct.total_dimension();
    return [&model, &lct, n_x, n_aux](double t, const Vector& y) {
        const Vector x = y.head(n_x);
        const Vector z = lct.memory_output(y.tail(n_aux));
        Matrix j = Matrix::Zero(n_x + n_aux, n_x + n_aux);
        j.topLeftCorner(n_x, n_x) = model.jac_x(t, x, z);
        j.topRightCorner(n_x, n_aux) = model.jac_z(t, x, z) * lct.dense_C();
        j.bottomLeftCorner(n_aux, n_x) = lct.dense_B() * model.jac_h(x);
        j.bottomRightCorner(n_aux, n_aux) = lct.dense_A();
        return j;
    };
}

void LctNewtonMatrix::factor(double t, const Vector& y, double gamma) {
    const int n_x = model_->n_x;
    const Vector x = y.head(n_x);
    const Vector z = lct_->memory_output(y.tail(lct_->total_dimension()));
    gamma_ = gamma;
    jac_z_ = model_->jac_z(t, x, z);
    jac_h_ = model_->jac_h(x);
    const Vector w = lct_->c_shiftinv_b(gamma);
    Matrix schur = -gamma * model_->jac_x(t, x, z);
    schur.diagonal().array() += 1.0;
    schur -= gamma * gamma * jac_z_ * w.asDiagonal() * jac_h_;
    schur_.compute(schur);
}

Vector LctNewtonMatrix::solve(const Vector& rhs) const {
    const int n_x = model_->n_x;
    const int n_aux = lct_->total_dimension();
    const Vector b_x = rhs.head(n_x);
    const Vector b_mem = rhs.tail(n_aux);

    Vector u;
    lct_->solve_shifted(gamma_, b_mem, u);
    const Vector dx =
        schur_.solve(b_x + gamma_ * (jac_z_ * lct_->memory_output(u)));

    Vector forced = Vector::Zero(n_aux);
    lct_->add_B(jac_h_ * dx, forced);
    Vector v;
    lct_->solve_shifted(gamma_, forced, v);

    Vector out(n_x + n_aux);
    out.head(n_x) = dx;
    out.tail(n_aux) = u + gamma_ * v;
    return out;
}

Trajectory simulate_lct(const ModelSpec& model, const LctSystem& lct,
                        double t0, double tf, const IntegratorConfig& config,
                        const std::vector<double>& sample_times,
                        const std::optional<Vector>& memory0) {
    const int n_x = model.n_x;
    const int n_aux = lct.total_dimension();
    Vector y0(n_x + n_aux);
    y0.head(n_x) = model.x0;
    y0.tail(n_aux) = memory0 ? *memory0 : initial_memory(model, lct);

    const RhsFn rhs = augmented_rhs_fn(model, lct);
    Trajectory full;
    if (config.method == Method::kExplicitRk) {
        full = solve_explicit(rhs, y0, t0, tf, config, sample_times);
    } else if (n_x + n_aux > 200) {
        LctNewtonMatrix newton(model, lct);
        full = solve_implicit(rhs, newton, y0, t0, tf, config, sample_times);
    } else {
        DenseNewtonMatrix newton(augmented_jacobian_fn(model, lct));
        full = solve_implicit(rhs, newton, y0, t0, tf, config, sample_times);
    }

    // Project the augmented records onto the user state and memory output.
    Trajectory traj;
    traj.times = std::move(full.times);
    traj.steps_accepted = full.steps_accepted;
    traj.steps_rejected = full.steps_rejected;
    traj.rhs_evaluations = full.rhs_evaluations;
    traj.states.reserve(full.states.size());
    traj.derivatives.reserve(full.states.size());
    traj.memory_outputs.reserve(full.states.size());
    for (std::size_t k = 0; k < full.states.size(); ++k) {
        traj.states.push_back(full.states[k].head(n_x));
        traj.derivatives.push_back(full.derivatives[k].head(n_x));
        traj.memory_outputs.push_back(
            lct.memory_output(full.states[k].tail(n_aux)));
    }
    return traj;
}

}  // namespace erlmix
