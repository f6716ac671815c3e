#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "erlmix/approx.hpp"
#include "erlmix/kernels.hpp"

#include "testutil.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace erlmix;

namespace {

KernelSpec exponential_kernel() {
    KernelSpec spec;
    spec.density = [](double t) { return std::exp(-t); };
    spec.cumulative = [](double t) { return 1.0 - std::exp(-t); };
    spec.survival = [](double t) { return std::exp(-t); };
    spec.bound = 1.0;
    spec.name = "exponential";
    return spec;
}

/// Same density but without the analytic cumulative, to exercise the
/// quadrature path.
KernelSpec exponential_kernel_quadrature_only() {
    KernelSpec spec;
    spec.density = [](double t) {
        if (t < 0.0) throw DomainError("t < 0");
        return std::exp(-t);
    };
    spec.bound = 1.0;
    spec.name = "exponential-quad";
    return spec;
}

FitProblem gaussian_problem(int order, int samples) {
    FitProblem problem;
    problem.kernel = gaussian_halfline_kernel();
    problem.order = order;
    problem.horizon = find_horizon(problem.kernel, 1e-14).horizon;
    problem.sample_count = samples;
    return problem;
}

}  // namespace

TEST_CASE("beta: analytic and quadrature paths") {
    const KernelSpec gaussian = gaussian_halfline_kernel();
    CHECK(beta(gaussian, 1.0) ==
          doctest::Approx(0.8427007929497149).epsilon(1e-14));
    CHECK(beta(gaussian, 0.0) == 0.0);

    const KernelSpec quad = exponential_kernel_quadrature_only();
    CHECK(beta(quad, 2.0) ==
          doctest::Approx(0.8646647167633873).epsilon(1e-11));
    CHECK(beta(quad, 0.0) == 0.0);
    CHECK_THROWS_AS(beta(quad, -1.0), DomainError);
}

TEST_CASE("find_horizon: analytic inverse of the exponential tail") {
    const auto result =
        find_horizon(exponential_kernel(), 1e-6, 1.0, 30.0, 1e-12);
    // - ln(1e-6)
    CHECK(result.horizon ==
          doctest::Approx(13.815510557964274).epsilon(1e-6));
    CHECK(result.residual < 1e-12);
    CHECK(result.epsilon == 1e-6);

    // Bisection halves the bracket; iteration count stays near the bound.
    const int bound = static_cast<int>(std::ceil(std::log2(29.0 / 1e-9))) + 30;
    CHECK(result.iterations <= bound);
}

TEST_CASE("find_horizon: tiny tail mass against the erfc oracle") {
    const double eps = 1e-14;
    const double tol = 1e-15;
    const auto result =
        find_horizon(gaussian_halfline_kernel(), eps, 0.0, 1.0, tol);
    const double tail = std::erfc(result.horizon);
    CHECK(tail >= eps - tol - 5e-16);
    CHECK(tail <= eps + tol + 5e-16);
}

TEST_CASE("find_horizon: bracket repair and failure modes") {
    // [5, 6] excludes the root at ~13.8; the bracket expands upward.
    const auto repaired =
        find_horizon(exponential_kernel(), 1e-6, 5.0, 6.0, 1e-12);
    CHECK(repaired.horizon ==
          doctest::Approx(13.815510557964274).epsilon(1e-6));

    CHECK_THROWS_AS(find_horizon(exponential_kernel(), 2.0), DomainError);
}

TEST_CASE("objective: exact fit gives zero value and gradient") {
    Vector c(3);
    c << 0.2, 0.3, 0.5;
    const ErlangMixture target(3.0, c);
    FitProblem problem;
    problem.kernel = erlang_mixture_kernel(target);
    problem.order = 2;
    problem.horizon = find_horizon(problem.kernel, 1e-12).horizon;
    problem.sample_count = 12;

    const auto eval = objective(problem, target);
    CHECK(eval.phi <= 1e-26);
    CHECK(eval.gradient.cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("objective: gradient and Hessian match finite differences") {
    testutil::Rng rng(11);
    FitProblem problem = gaussian_problem(4, 40);
    for (int trial = 0; trial < 20; ++trial) {
        const double a = rng.uniform(0.5, 6.0);
        const Vector c = rng.simplex(problem.order + 1);
        const ErlangMixture mix(a, c);
        const auto eval = objective(problem, mix);

        const auto phi_at = [&](const Vector& coeff, double rate) {
            // Plain re-evaluation; allows probing off-simplex points.
            const double dt = problem.horizon / problem.sample_count;
            double acc = 0.0;
            Vector basis(problem.order + 1);
            for (int k = 0; k < problem.sample_count; ++k) {
                const double t = k * dt;
                erlang_basis(rate, t, basis);
                const double res =
                    problem.kernel.density(t) - coeff.dot(basis);
                acc += 0.5 * res * res;
            }
            return acc * dt;
        };

        const double step = 1e-6;
        for (int j = 0; j <= problem.order + 1; ++j) {
            const auto f = [&](double v) {
                Vector coeff = c;
                double rate = a;
                if (j <= problem.order)
                    coeff[j] = v;
                else
                    rate = v;
                return phi_at(coeff, rate);
            };
            const double x0 = j <= problem.order ? c[j] : a;
            const double fd = testutil::central_diff(f, x0, step);
            CHECK(std::abs(eval.gradient[j] - fd) <=
                  1e-6 * std::max(1.0, std::abs(fd)));
        }

        // Hessian coefficient block: a PSD Gram matrix.
        const Matrix block =
            eval.hessian.topLeftCorner(problem.order + 1, problem.order + 1);
        CHECK((block - block.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
        Eigen::SelfAdjointEigenSolver<Matrix> es(block);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);

        // Rate column against finite differences of the analytic gradient.
        const auto grad_at = [&](double rate) {
            return objective(problem, ErlangMixture(rate, c)).gradient;
        };
        const Vector gp = grad_at(a + step);
        const Vector gm = grad_at(a - step);
        const Vector fd_col = (gp - gm) / (2.0 * step);
        for (int j = 0; j <= problem.order + 1; ++j)
            CHECK(std::abs(eval.hessian(j, problem.order + 1) - fd_col[j]) <=
                  1e-5 * std::max(1.0, std::abs(fd_col[j])));
    }
}

TEST_CASE("fit: self-recovery of a mixture target") {
    Vector c(3);
    c << 0.2, 0.3, 0.5;
    const ErlangMixture target(3.0, c);
    FitProblem problem;
    problem.kernel = erlang_mixture_kernel(target);
    problem.order = 2;
    problem.horizon = find_horizon(problem.kernel, 1e-12).horizon;
    problem.sample_count = 12;

    const FitResult fit = fit_least_squares(problem);
    CHECK(fit.phi <= 1e-18);
    CHECK(fit.mixture.rate() == doctest::Approx(3.0).epsilon(1e-6));
    for (int m = 0; m <= 2; ++m)
        CHECK(fit.mixture.coefficients()[m] ==
              doctest::Approx(c[m]).epsilon(1e-6));
}

TEST_CASE("fit: least squares beats the theoretical reference") {
    FitProblem problem = gaussian_problem(16, 100);
    const FitResult ls = fit_least_squares(problem);
    const FitResult th = fit_theoretical(problem);
    CHECK(ls.phi < th.phi);
    CHECK(ls.kernel_err <= th.kernel_err);
    CHECK(ls.method == FitMethod::kLeastSquares);
    CHECK(th.method == FitMethod::kTheoretical);
}

TEST_CASE("fit: infeasible init is projected onto the simplex") {
    FitProblem problem = gaussian_problem(3, 30);
    Vector off(4);
    off << 0.9, 0.8, -0.1, 0.05;  // not a simplex point
    const Vector projected = project_to_simplex(off);
    CHECK(projected.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(projected.minCoeff() >= 0.0);

    const ErlangMixture init(2.0, projected);
    const FitResult fit = fit_least_squares(problem, init);
    CHECK(fit.mixture.coefficients().sum() ==
          doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit.mixture.coefficients().minCoeff() >= 0.0);
}

TEST_CASE("fit: simplex feasibility regardless of the convergence flag") {
    testutil::Rng rng(23);
    for (int trial = 0; trial < 4; ++trial) {
        FitProblem problem = gaussian_problem(rng.uniform_int(2, 10), 80);
        FitOptions options;
        options.max_alternations = trial == 0 ? 1 : 40;  // force early stops
        const FitResult fit =
            fit_least_squares(problem, std::nullopt, options);
        CHECK(std::abs(fit.mixture.coefficients().sum() - 1.0) <= 1e-10);
        CHECK(fit.mixture.coefficients().minCoeff() >= -1e-10);
        CHECK(fit.mixture.rate() >= effective_rate_min(problem));
    }
}

TEST_CASE("theoretical coefficients: interval masses of the target") {
    // Exponential target with rate 1 and unit intervals: c_0 = 1 - e^{-1}.
    const Vector c = theoretical_coefficients(exponential_kernel(), 1.0, 5);
    CHECK(c[0] == doctest::Approx(0.6321205588285577).epsilon(1e-12));
    for (int m = 0; m <= 5; ++m) {
        const double expected =
            std::exp(-static_cast<double>(m)) - std::exp(-(m + 1.0));
        CHECK(c[m] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("theoretical fit: telescoping coefficient sum") {
    FitProblem problem = gaussian_problem(16, 100);
    const FitResult fit = fit_theoretical(problem);
    // sum c_m = beta(t_h) = 1 - epsilon, never rescaled.
    const double mass = beta(problem.kernel, problem.horizon);
    CHECK(fit.mixture.coefficients().sum() ==
          doctest::Approx(mass).epsilon(1e-12));
    CHECK(fit.mixture.coefficients().minCoeff() >= 0.0);
    CHECK(fit.mixture.rate() ==
          doctest::Approx((problem.order + 1) / problem.horizon));
}

TEST_CASE("kernel error: zero at the target and stable under refinement") {
    Vector c(2);
    c << 0.4, 0.6;
    const ErlangMixture mix(2.0, c);
    const KernelSpec self = erlang_mixture_kernel(mix);
    const double horizon = find_horizon(self, 1e-12).horizon;
    CHECK(kernel_error(mix, self, 100, horizon) == 0.0);

    // Grid refinement changes the value by < 5% beyond 1e4 points.
    const KernelSpec gaussian = gaussian_halfline_kernel();
    const double h = find_horizon(gaussian, 1e-14).horizon;
    const double coarse = kernel_error(mix, gaussian, 10000, h);
    const double fine = kernel_error(mix, gaussian, 20000, h);
    CHECK(std::abs(fine - coarse) <= 0.05 * coarse);

    CHECK_THROWS_AS(kernel_error(mix, gaussian, 1, h), DomainError);
}

TEST_CASE("kernel error: monotone in the mixture order") {
    double previous = 1e300;
    for (int order : {4, 8, 16}) {
        FitProblem problem = gaussian_problem(order, 4 * (order + 1) + 40);
        const FitResult fit = fit_least_squares(problem);
        CHECK(fit.kernel_err < previous);
        previous = fit.kernel_err;
    }
}

TEST_CASE("fit problem validation") {
    FitProblem problem = gaussian_problem(4, 3);  // too few samples
    CHECK_THROWS_AS(validate(problem), DomainError);
    problem.sample_count = 40;
    problem.horizon = -1.0;
    CHECK_THROWS_AS(validate(problem), DomainError);
}
