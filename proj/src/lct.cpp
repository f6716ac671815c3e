#include "erlmix/lct.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace erlmix {

LctSystem::LctSystem(std::vector<LctChannel> channels)
    : channels_(std::move(channels)) {
    if (channels_.empty()) throw DomainError("need at least one channel");
    offsets_.reserve(channels_.size());
    for (const auto& ch : channels_) {
        if (!(ch.rate > 0.0)) throw DomainError("channel rate must be > 0");
        if (ch.coefficients.size() == 0)
            throw DomainError("channel has no coefficients");
        offsets_.push_back(total_dimension_);
        total_dimension_ += ch.size();
    }
}

Matrix LctSystem::dense_A() const {
    Matrix a = Matrix::Zero(total_dimension_, total_dimension_);
    for (int i = 0; i < channel_count(); ++i) {
        const auto& ch = channels_[i];
        const int off = offsets_[i];
        for (int k = 0; k < ch.size(); ++k) {
            a(off + k, off + k) = -ch.rate;
            if (k > 0) a(off + k, off + k - 1) = ch.rate;
        }
    }
    return a;
}

Matrix LctSystem::dense_B() const {
    Matrix b = Matrix::Zero(total_dimension_, channel_count());
    for (int i = 0; i < channel_count(); ++i)
        b(offsets_[i], i) = channels_[i].rate;
    return b;
}

Matrix LctSystem::dense_C() const {
    Matrix c = Matrix::Zero(channel_count(), total_dimension_);
    for (int i = 0; i < channel_count(); ++i)
        c.row(i).segment(offsets_[i], channels_[i].size()) =
            channels_[i].coefficients.transpose();
    return c;
}

Eigen::SparseMatrix<double> LctSystem::sparse_A() const {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(2 * static_cast<std::size_t>(total_dimension_));
    for (int i = 0; i < channel_count(); ++i) {
        const auto& ch = channels_[i];
        const int off = offsets_[i];
        for (int k = 0; k < ch.size(); ++k) {
            triplets.emplace_back(off + k, off + k, -ch.rate);
            if (k > 0) triplets.emplace_back(off + k, off + k - 1, ch.rate);
        }
    }
    Eigen::SparseMatrix<double> a(total_dimension_, total_dimension_);
    a.setFromTriplets(triplets.begin(), triplets.end());
    return a;
}

Eigen::SparseMatrix<double> LctSystem::sparse_B() const {
    std::vector<Eigen::Triplet<double>> triplets;
    for (int i = 0; i < channel_count(); ++i)
        triplets.emplace_back(offsets_[i], i, channels_[i].rate);
    Eigen::SparseMatrix<double> b(total_dimension_, channel_count());
    b.setFromTriplets(triplets.begin(), triplets.end());
    return b;
}

Eigen::SparseMatrix<double> LctSystem::sparse_C() const {
    std::vector<Eigen::Triplet<double>> triplets;
    for (int i = 0; i < channel_count(); ++i)
        for (int k = 0; k < channels_[i].size(); ++k)
            triplets.emplace_back(i, offsets_[i] + k,
                                  channels_[i].coefficients[k]);
    Eigen::SparseMatrix<double> c(channel_count(), total_dimension_);
    c.setFromTriplets(triplets.begin(), triplets.end());
    return c;
}

void LctSystem::apply_A(const Vector& memory, Vector& out) const {
    out.resize(total_dimension_);
    for (int i = 0; i < channel_count(); ++i) {
        const auto& ch = channels_[i];
        const int off = offsets_[i];
        out[off] = -ch.rate * memory[off];
        for (int k = 1; k < ch.size(); ++k)
            out[off + k] = ch.rate * (memory[off + k - 1] - memory[off + k]);
    }
}

void LctSystem::add_B(const Vector& delayed, Vector& out) const {
    for (int i = 0; i < channel_count(); ++i)
        out[offsets_[i]] += channels_[i].rate * delayed[i];
}

Vector LctSystem::memory_output(const Vector& memory) const {
    Vector z(channel_count());
    for (int i = 0; i < channel_count(); ++i)
        z[i] = channels_[i].coefficients.dot(
            memory.segment(offsets_[i], channels_[i].size()));
    return z;
}

Vector LctSystem::solve_A(const Vector& rhs) const {
    Vector x(total_dimension_);
    for (int i = 0; i < channel_count(); ++i) {
        const auto& ch = channels_[i];
        const int off = offsets_[i];
        x[off] = -rhs[off] / ch.rate;
        for (int k = 1; k < ch.size(); ++k)
            x[off + k] = x[off + k - 1] - rhs[off + k] / ch.rate;
    }
    return x;
}

void LctSystem::solve_shifted(double gamma, const Vector& rhs,
                              Vector& out) const {
    out.resize(total_dimension_);
    for (int i = 0; i < channel_count(); ++i) {
        const auto& ch = channels_[i];
        const int off = offsets_[i];
        const double diag = 1.0 + gamma * ch.rate;
        out[off] = rhs[off] / diag;
        for (int k = 1; k < ch.size(); ++k)
            out[off + k] =
                (rhs[off + k] + gamma * ch.rate * out[off + k - 1]) / diag;
    }
}

Vector LctSystem::neg_c_ainv_b() const {
    Vector diag(channel_count());
    Vector rhs = Vector::Zero(total_dimension_);
    for (int i = 0; i < channel_count(); ++i) {
        rhs.setZero();
        rhs[offsets_[i]] = channels_[i].rate;
        const Vector u = solve_A(rhs);
        diag[i] = -channels_[i].coefficients.dot(
            u.segment(offsets_[i], channels_[i].size()));
    }
    return diag;
}

Vector LctSystem::c_shiftinv_b(double gamma) const {
    Vector diag(channel_count());
    Vector rhs = Vector::Zero(total_dimension_);
    Vector u;
    for (int i = 0; i < channel_count(); ++i) {
        rhs.setZero();
        rhs[offsets_[i]] = channels_[i].rate;
        solve_shifted(gamma, rhs, u);
        diag[i] = channels_[i].coefficients.dot(
            u.segment(offsets_[i], channels_[i].size()));
    }
    return diag;
}

LctSystem build_lct(const std::vector<ErlangMixture>& mixtures) {
    if (mixtures.empty()) throw DomainError("need at least one mixture");
    std::vector<LctChannel> channels;
    channels.reserve(mixtures.size());
    for (const auto& mixture : mixtures)
        channels.push_back({mixture.rate(), mixture.coefficients()});
    return LctSystem(std::move(channels));
}

AugmentedRhs augmented_rhs(const ModelSpec& model, const LctSystem& lct,
                           double t, const Vector& x, const Vector& memory) {
    if (x.size() != model.n_x || memory.size() != lct.total_dimension())
        throw DomainError("augmented state dimensions are inconsistent");
    AugmentedRhs out;
    const Vector z = lct.memory_output(memory);
    out.dx = model.f(t, x, z);
    const Vector r = model.h(x);
    if (!out.dx.allFinite() || !r.allFinite())
        throw IntegrationError("model produced nonfinite values", t);
    lct.apply_A(memory, out.dz);
    lct.add_B(r, out.dz);
    return out;
}

Vector initial_memory(const ModelSpec& model, const LctSystem& lct) {
    return steady_memory(model, lct, model.x0);
}

Vector steady_memory(const ModelSpec& model, const LctSystem& lct,
                     const Vector& x_bar) {
    const Vector r = model.h(x_bar);
    if (r.size() != lct.channel_count())
        throw DomainError("h(x) size does not match the channel count");
    Vector memory(lct.total_dimension());
    for (int i = 0; i < lct.channel_count(); ++i)
        memory.segment(lct.block_offset(i), lct.channel(i).size())
            .setConstant(r[i]);
    return memory;
}

Vector augmented_initial_state(const ModelSpec& model, const LctSystem& lct) {
    Vector y(model.n_x + lct.total_dimension());
    y.head(model.n_x) = model.x0;
    y.tail(lct.total_dimension()) = initial_memory(model, lct);
    return y;
}

Vector steady_state(const ModelSpec& model, const Vector& guess,
                    int max_iterations) {
    Vector x = guess;
    const auto residual = [&](const Vector& v) {
        return model.f(0.0, v, model.h(v)).eval();
    };
    Vector g = residual(x);
    double norm = g.norm();
    for (int it = 0; it < max_iterations; ++it) {
        if (norm <= 1e-12 * (1.0 + x.norm())) return x;
        const Vector z = model.h(x);
        const Matrix jac = model.jac_x(0.0, x, z) +
                           model.jac_z(0.0, x, z) * model.jac_h(x);
        const Vector step = jac.partialPivLu().solve(-g);
        if (!step.allFinite())
            throw ConvergenceError("steady-state Newton produced a nonfinite "
                                   "step at iteration " +
                                   std::to_string(it));
        double damping = 1.0;
        bool accepted = false;
        for (int half = 0; half < 40; ++half) {
            const Vector candidate = x + damping * step;
            const Vector gc = residual(candidate);
            if (gc.allFinite() &&
                gc.norm() <= (1.0 - 1e-4 * damping) * norm) {
                x = candidate;
                g = gc;
                norm = g.norm();
                accepted = true;
                break;
            }
            damping *= 0.5;
        }
        if (!accepted)
            throw ConvergenceError(
                "steady-state Newton stalled at residual " +
                std::to_string(norm) + " after " + std::to_string(it) +
                " iterations");
    }
    if (norm <= 1e-12 * (1.0 + x.norm())) return x;
    throw ConvergenceError("steady-state Newton did not converge in " +
                           std::to_string(max_iterations) +
                           " iterations; residual " + std::to_string(norm));
}

}  // namespace erlmix
