#pragma once

#include "erlmix/kernels.hpp"
#include "erlmix/types.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <string>
#include <vector>

namespace erlmix {

/// User system: x' = f(x, z) with memory state z fed by r = h(x) through
/// per-channel convolution kernels. The Jacobian callbacks return
/// F = df/dx, G = df/dz, H = dh/dx. The forcing argument t supports
/// manufactured problems; autonomous models ignore it.
struct ModelSpec {
    int n_x = 0;
    int n_z = 0;
    std::function<Vector(double, const Vector&, const Vector&)> f;
    std::function<Vector(const Vector&)> h;
    std::function<Matrix(double, const Vector&, const Vector&)> jac_x;  // F
    std::function<Matrix(double, const Vector&, const Vector&)> jac_z;  // G
    std::function<Matrix(const Vector&)> jac_h;                         // H
    Vector x0;  // constant history value
    /// Optional full history x(t) for t <= t0; empty means the constant x0.
    std::function<Vector(double)> history;
    std::string name;
};

/// One chain block: shared rate and simplex coefficients of the channel's
/// Erlang mixture.
struct LctChannel {
    double rate = 1.0;
    Vector coefficients;
    int size() const { return static_cast<int>(coefficients.size()); }
};

/// Chain realization of the mixture-approximated memory states:
/// Z' = A Z + B r, z = C Z, with A block lower-bidiagonal (diagonal -a_i,
/// first subdiagonal +a_i), B carrying a_i in each block's first row, and C
/// rows holding the coefficient vectors.
class LctSystem {
public:
    explicit LctSystem(std::vector<LctChannel> channels);

    int channel_count() const { return static_cast<int>(channels_.size()); }
    const LctChannel& channel(int i) const { return channels_[i]; }
    /// Total auxiliary dimension sum_i (M_i + 1).
    int total_dimension() const { return total_dimension_; }
    int block_offset(int i) const { return offsets_[i]; }
    /// Matrices above this dimension are materialized sparse.
    bool prefers_sparse() const { return total_dimension_ > 200; }

    Matrix dense_A() const;
    Matrix dense_B() const;
    Matrix dense_C() const;
    Eigen::SparseMatrix<double> sparse_A() const;
    Eigen::SparseMatrix<double> sparse_B() const;
    Eigen::SparseMatrix<double> sparse_C() const;

    /// out = A Z (block bidiagonal application, no materialization).
    void apply_A(const Vector& memory, Vector& out) const;
    /// out += B r.
    void add_B(const Vector& delayed, Vector& out) const;
    /// z = C Z.
    Vector memory_output(const Vector& memory) const;
    /// Solves A x = rhs by per-block forward substitution.
    Vector solve_A(const Vector& rhs) const;
    /// Solves (I - gamma A) x = rhs by per-block forward substitution.
    void solve_shifted(double gamma, const Vector& rhs, Vector& out) const;
    /// Diagonal of -C A^{-1} B; identically one for simplex coefficients.
    Vector neg_c_ainv_b() const;
    /// Diagonal of C (I - gamma A)^{-1} B.
    Vector c_shiftinv_b(double gamma) const;

private:
    std::vector<LctChannel> channels_;
    std::vector<int> offsets_;
    int total_dimension_ = 0;
};

/// Assembles the chain system, one mixture per memory channel.
LctSystem build_lct(const std::vector<ErlangMixture>& mixtures);

struct AugmentedRhs {
    Vector dx;
    Vector dz;  // derivative of the auxiliary memory vector
};

/// Right-hand side of the augmented ODE system:
/// z_hat = C Z, x' = f(x, z_hat), Z' = A Z + B h(x).
/// Throws IntegrationError when f or h produce nonfinite values.
AugmentedRhs augmented_rhs(const ModelSpec& model, const LctSystem& lct,
                           double t, const Vector& x, const Vector& memory);

/// Constant-history initial memory: block i filled with h_i(x0).
Vector initial_memory(const ModelSpec& model, const LctSystem& lct);

/// Memory vector consistent with a steady state x_bar.
Vector steady_memory(const ModelSpec& model, const LctSystem& lct,
                     const Vector& x_bar);

/// Stacked initial state [x0; initial_memory].
Vector augmented_initial_state(const ModelSpec& model, const LctSystem& lct);

/// Damped Newton solve of f(x, h(x)) = 0 with Jacobian F + G H and Armijo
/// backtracking; converges when ||f|| <= 1e-12 (1 + ||x||).
Vector steady_state(const ModelSpec& model, const Vector& guess,
                    int max_iterations = 100);

}  // namespace erlmix
