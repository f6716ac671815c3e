#pragma once

#include "erlmix/integrate.hpp"
#include "erlmix/lct.hpp"
#include "erlmix/types.hpp"

#include <Eigen/LU>

#include <optional>
#include <vector>

namespace erlmix {

/// Right-hand side of the augmented system over the stacked state [x; Z].
RhsFn augmented_rhs_fn(const ModelSpec& model, const LctSystem& lct);

/// Dense augmented Jacobian [[F, G C], [B H, A]] at time t.
JacFn augmented_jacobian_fn(const ModelSpec& model, const LctSystem& lct);

/// Newton matrix for the augmented system that eliminates the chain block:
/// (I - gamma A) is solved by per-block forward substitution and only the
/// n_x-by-n_x Schur complement is factored densely.
class LctNewtonMatrix : public NewtonMatrix {
public:
    LctNewtonMatrix(const ModelSpec& model, const LctSystem& lct)
        : model_(&model), lct_(&lct) {}
    void factor(double t, const Vector& y, double gamma) override;
    Vector solve(const Vector& rhs) const override;

private:
    const ModelSpec* model_;
    const LctSystem* lct_;
    double gamma_ = 0.0;
    Matrix jac_z_;
    Matrix jac_h_;
    Eigen::PartialPivLU<Matrix> schur_;
};

/// Integrates the augmented system and returns records of the user state x
/// with memory outputs z_hat = C Z. Uses the method selected in the config;
/// the implicit path picks the chain-eliminating Newton matrix above the
/// dense/structured threshold. `memory0` overrides the constant-history
/// initial memory when given.
Trajectory simulate_lct(const ModelSpec& model, const LctSystem& lct,
                        double t0, double tf, const IntegratorConfig& config,
                        const std::vector<double>& sample_times = {},
                        const std::optional<Vector>& memory0 = std::nullopt);

}  // namespace erlmix
