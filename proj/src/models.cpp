#include "erlmix/models.hpp"

#include "erlmix/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace erlmix {

ManufacturedPoint manufactured_truth(double dilation, double t, double growth,
                                     double capacity) {
    if (!(dilation > 0.0)) throw DomainError("dilation must be positive");
    const double g2 = dilation * dilation;
    ManufacturedPoint point;
    point.x = 1.0 + std::exp(-t * t / g2);
    point.x_dot = -2.0 * t / g2 * std::exp(-t * t / g2);
    const double g2p1 = g2 + 1.0;
    point.z = 1.0 + dilation / std::sqrt(g2p1) * std::exp(-t * t / g2p1) *
                        (1.0 + std::erf(t / (dilation * std::sqrt(g2p1))));
    point.forcing =
        point.x_dot - growth * point.x * (1.0 - point.z / capacity);
    return point;
}

ModelSpec logistic_model(const LogisticParams& params,
                         LogisticVariant variant) {
    const double sigma = params.growth;
    const double kappa = params.capacity;
    const double gamma = params.dilation;
    if (!(sigma > 0.0) || !(kappa > 0.0))
        throw DomainError("growth rate and capacity must be positive");

    ModelSpec model;
    model.n_x = 1;
    model.n_z = 1;
    const bool manufactured = variant == LogisticVariant::kManufactured;

    model.f = [sigma, kappa, gamma, manufactured](double t, const Vector& x,
                                                  const Vector& z) {
        double forcing = 0.0;
        if (manufactured)
            forcing = manufactured_truth(gamma, t, sigma, kappa).forcing;
        Vector dx(1);
        dx[0] = sigma * x[0] * (1.0 - z[0] / kappa) + forcing;
        return dx;
    };
    model.h = [](const Vector& x) { return x; };
    model.jac_x = [sigma, kappa](double, const Vector&, const Vector& z) {
        Matrix jac(1, 1);
        jac(0, 0) = sigma * (1.0 - z[0] / kappa);
        return jac;
    };
    model.jac_z = [sigma, kappa](double, const Vector& x, const Vector&) {
        Matrix jac(1, 1);
        jac(0, 0) = -sigma * x[0] / kappa;
        return jac;
    };
    model.jac_h = [](const Vector&) { return Matrix::Identity(1, 1); };

    model.x0 = Vector::Constant(1, params.x0);
    if (manufactured) {
        model.x0[0] = manufactured_truth(gamma, params.t0).x;
        model.history = [gamma](double t) {
            return Vector::Constant(1, manufactured_truth(gamma, t).x);
        };
        model.name = "logistic-manufactured";
    } else {
        model.name = "logistic-bifurcation";
    }
    return model;
}

KernelSpec logistic_kernel(const LogisticParams& params) {
    Vector weights(2), locations(2), scales(2);
    weights << params.weight1, params.weight2;
    locations << params.mu1, params.mu2;
    scales << params.sigma1, params.sigma2;
    return folded_normal_sum_kernel(weights, locations, scales);
}

Vector manufactured_initial_memory(const LctSystem& lct, double dilation) {
    if (!(dilation > 0.0)) throw DomainError("dilation must be positive");
    const double g2 = dilation * dilation;
    Vector memory(lct.total_dimension());
    for (int i = 0; i < lct.channel_count(); ++i) {
        const auto& ch = lct.channel(i);
        for (int m = 0; m < ch.size(); ++m) {
            // int_0^inf l_m(s) x*(-s) ds with x*(-s) = 1 + exp(-s^2/g^2).
            const double upper =
                (m + 1 + 60.0 * std::sqrt(m + 1.0) + 60.0) / ch.rate;
            const double extra = integrate_or_throw(
                [&](double s) {
                    return erlang_eval(m, ch.rate, s) * std::exp(-s * s / g2);
                },
                0.0, upper, 1e-13, 1e-12, 4000);
            memory[lct.block_offset(i) + m] = 1.0 + extra;
        }
    }
    return memory;
}

ModelSpec fission_model(const FissionParams& params) {
    constexpr int kGroups = 6;
    const double beta = params.total_fraction();
    const double inv_gen = 1.0 / params.generation_time;
    const double dilution = params.dilution;
    const double kappa_h = params.reactivity_coeff * params.heat_ratio;
    const auto decay = params.decay;
    const auto fraction = params.fraction;

    ModelSpec model;
    model.n_x = kGroups + 2;  // C_1..C_6, C_n, rho
    model.n_z = kGroups;

    model.f = [=](double, const Vector& x, const Vector& z) {
        Vector dx(kGroups + 2);
        const double c_n = x[kGroups];
        const double rho = x[kGroups + 1];
        double delayed_sum = 0.0;
        for (int i = 0; i < kGroups; ++i) {
            const double rate_i = decay[i] * x[i];
            dx[i] = (z[i] - x[i]) * dilution - rate_i +
                    fraction[i] * c_n * inv_gen;
            delayed_sum += rate_i;
        }
        dx[kGroups] = delayed_sum + (rho - beta) * c_n * inv_gen;
        dx[kGroups + 1] = -kappa_h * c_n;
        return dx;
    };
    model.h = [=](const Vector& x) { return x.head(kGroups).eval(); };
    model.jac_x = [=](double, const Vector& x, const Vector&) {
        Matrix jac = Matrix::Zero(kGroups + 2, kGroups + 2);
        const double c_n = x[kGroups];
        const double rho = x[kGroups + 1];
        for (int i = 0; i < kGroups; ++i) {
            jac(i, i) = -dilution - decay[i];
            jac(i, kGroups) = fraction[i] * inv_gen;
            jac(kGroups, i) = decay[i];
        }
        jac(kGroups, kGroups) = (rho - beta) * inv_gen;
        jac(kGroups, kGroups + 1) = c_n * inv_gen;
        jac(kGroups + 1, kGroups) = -kappa_h;
        return jac;
    };
    model.jac_z = [=](double, const Vector&, const Vector&) {
        Matrix jac = Matrix::Zero(kGroups + 2, kGroups);
        for (int i = 0; i < kGroups; ++i) jac(i, i) = dilution;
        return jac;
    };
    model.jac_h = [=](const Vector&) {
        Matrix jac = Matrix::Zero(kGroups, kGroups + 2);
        for (int i = 0; i < kGroups; ++i) jac(i, i) = 1.0;
        return jac;
    };

    model.x0 = Vector::Ones(kGroups + 2);
    model.x0[kGroups + 1] = 1.1 * beta;
    model.name = "fission";
    return model;
}

std::vector<KernelSpec> fission_kernels(const FissionParams& params) {
    std::vector<KernelSpec> kernels;
    kernels.reserve(params.decay.size());
    for (double lambda : params.decay) {
        PrecursorParams p;
        p.decay_rate = lambda;
        p.base_location = params.mu1;
        p.base_scale = params.sigma1;
        p.term_count = 7;
        kernels.push_back(precursor_kernel(p));
    }
    return kernels;
}

double state_error(const Trajectory& traj,
                   const std::function<Vector(double)>& truth, double t0,
                   double tf, int points) {
    if (points < 1) throw DomainError("state error needs >= 1 grid point");
    if (!(tf > t0)) throw DomainError("tf must exceed t0");
    const double dt = (tf - t0) / points;
    double acc = 0.0;
    for (int n = 0; n < points; ++n) {
        const double t = t0 + (n + 1) * dt;
        const Vector diff = traj.interpolate(t) - truth(t);
        acc += diff.squaredNorm();
    }
    return acc * dt;
}

Matrix relative_diff(const Trajectory& a, const Trajectory& b,
                     const std::vector<double>& grid) {
    if (a.states.empty() || b.states.empty())
        throw DomainError("relative difference of empty trajectories");
    const Eigen::Index n_states = a.states.front().size();
    if (b.states.front().size() != n_states)
        throw DomainError("trajectories have different state dimensions");
    Matrix out(static_cast<Eigen::Index>(grid.size()), n_states);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vector xa = a.interpolate(grid[k]);
        const Vector xb = b.interpolate(grid[k]);
        for (Eigen::Index i = 0; i < n_states; ++i)
            out(static_cast<Eigen::Index>(k), i) =
                std::abs(xa[i] - xb[i]) / (1.0 + std::abs(xb[i]));
    }
    return out;
}

double max_relative_diff(const Trajectory& a, const Trajectory& b,
                         const std::vector<double>& grid) {
    return relative_diff(a, b, grid).maxCoeff();
}

double spearman_rank_correlation(const std::vector<double>& a,
                                 const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw DomainError("rank correlation needs two equal-length samples");
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> order(v.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
        std::vector<double> rank(v.size());
        for (std::size_t pos = 0; pos < order.size(); ++pos)
            rank[order[pos]] = static_cast<double>(pos);
        return rank;
    };
    const std::vector<double> ra = ranks(a);
    const std::vector<double> rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n - 1.0) / 2.0;
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
        var_a += (ra[i] - mean) * (ra[i] - mean);
        var_b += (rb[i] - mean) * (rb[i] - mean);
    }
    return cov / std::sqrt(var_a * var_b);
}

}  // namespace erlmix
