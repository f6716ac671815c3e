#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "erlmix/approx.hpp"
#include "erlmix/kernels.hpp"
#include "erlmix/quadrature.hpp"

#include "testutil.hpp"

#include <cmath>

using namespace erlmix;

namespace {

/// Direct density b_m t^m exp(-a t); independent of the recursion path.
double erlang_direct(int m, double a, double t) {
    const double b = std::pow(a, m + 1) / std::tgamma(m + 1.0);
    return b * std::pow(t, m) * std::exp(-a * t);
}

}  // namespace

TEST_CASE("erlang density: pinned values") {
    CHECK(erlang_eval(0, 2.0, 0.0) == doctest::Approx(2.0));
    // b_1 t e^{-at} = 4 e^{-2}
    CHECK(erlang_eval(1, 2.0, 1.0) ==
          doctest::Approx(0.5413411329464508).epsilon(1e-14));
    CHECK(erlang_eval(3, 2.0, 0.0) == 0.0);
}

TEST_CASE("erlang density: domain errors") {
    CHECK_THROWS_AS(erlang_eval(0, 0.0, 1.0), DomainError);
    CHECK_THROWS_AS(erlang_eval(0, -1.0, 1.0), DomainError);
    CHECK_THROWS_AS(erlang_eval(0, 1.0, -0.5), DomainError);
    CHECK_THROWS_AS(erlang_eval(-1, 1.0, 1.0), DomainError);
    CHECK_THROWS_AS(erlang_deriv_rate(0, 1.0, 1.0, 3), DomainError);
}

TEST_CASE("erlang density: recursion matches the direct formula") {
    for (double a : {0.5, 2.0, 10.0, 50.0}) {
        for (double t : {0.01, 0.1, 1.0, 5.0, 10.0}) {
            for (int m = 0; m <= 20; ++m) {
                const double direct = erlang_direct(m, a, t);
                const double recursive = erlang_eval(m, a, t);
                if (direct > 1e-250) {
                    CHECK(std::abs(recursive - direct) <= 1e-10 * direct);
                } else {
                    CHECK(std::abs(recursive - direct) <= 1e-250);
                }
            }
        }
    }
}

TEST_CASE("erlang rate derivatives: pinned values and finite differences") {
    CHECK(erlang_deriv_rate(0, 1.0, 0.0, 1) == doctest::Approx(1.0));
    CHECK(erlang_deriv_rate(1, 2.0, 1.0, 1) == doctest::Approx(0.0));

    for (double a : {0.7, 2.0, 8.0}) {
        for (int m : {0, 1, 3, 7, 15}) {
            const double step = 1e-5 * a;
            double f_peak = 1e-300;
            for (double t : {0.0, 0.3, 1.0, 4.0})
                f_peak = std::max(f_peak, erlang_eval(m, a, t));
            // Roundoff floors of the central differences themselves.
            const double floor1 = 1e-15 * f_peak / step;
            const double floor2 = 1e-14 * f_peak / (step * step);
            for (double t : {0.0, 0.3, 1.0, 4.0}) {
                const auto f = [&](double rate) {
                    return erlang_eval(m, rate, t);
                };
                const double fd1 = testutil::central_diff(f, a, step);
                const double an1 = erlang_deriv_rate(m, a, t, 1);
                CHECK(std::abs(an1 - fd1) <=
                      1e-6 * std::max(std::abs(fd1), f_peak) + floor1);
                const double fd2 = testutil::central_diff2(f, a, step);
                const double an2 = erlang_deriv_rate(m, a, t, 2);
                CHECK(std::abs(an2 - fd2) <=
                      1e-6 * std::max(std::abs(fd2), f_peak) + floor2);
            }
        }
    }
}

TEST_CASE("mixture density: pinned values and validation") {
    Vector c(2);
    c << 0.5, 0.5;
    ErlangMixture half(1.0, c);
    CHECK(half(1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(half.order() == 1);

    ErlangMixture point(1.0, Vector::Ones(1));
    CHECK(point(0.0) == doctest::Approx(1.0));

    Vector bad(2);
    bad << 0.5, 0.6;
    CHECK_THROWS_AS(ErlangMixture(1.0, bad), DomainError);
    Vector negative(2);
    negative << 1.2, -0.2;
    CHECK_THROWS_AS(ErlangMixture(1.0, negative), DomainError);
    CHECK_THROWS_AS(ErlangMixture(0.0, c), DomainError);
}

TEST_CASE("mixture density: normalization and derivative properties") {
    testutil::Rng rng(7);
    for (int trial = 0; trial < 12; ++trial) {
        const int order = rng.uniform_int(0, 15);
        const double a = rng.uniform(0.3, 12.0);
        ErlangMixture mix(a, rng.simplex(order + 1));

        const double mass = integrate_adaptive<double>(
                                [&](double t) { return mix(t); }, 0.0,
                                40.0 / a + 40.0, 1e-12, 0.0, 20000)
                                .value;
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));

        // Analytic cumulative against quadrature of the density.
        const double t_probe = rng.uniform(0.1, 10.0 / a);
        const double by_quad =
            integrate_or_throw([&](double t) { return mix(t); }, 0.0, t_probe,
                               1e-12, 1e-12, 20000);
        CHECK(mix.cumulative(t_probe) ==
              doctest::Approx(by_quad).epsilon(1e-9));
        CHECK(mix.survival(t_probe) ==
              doctest::Approx(1.0 - by_quad).epsilon(1e-8));

        // Rate derivatives against finite differences.
        const double t = rng.uniform(0.0, 5.0 / a);
        const double step = 1e-5 * a;
        const double fd = testutil::central_diff(
            [&](double rate) {
                return ErlangMixture(rate, mix.coefficients())(t);
            },
            a, step);
        CHECK(std::abs(mix.deriv_rate(t) - fd) <=
              1e-6 * std::max(1e-10, std::abs(fd)));
    }
}

TEST_CASE("delta family: closed-form mean and variance") {
    const auto stats = delta_family_stats(10.0, 1.0);
    CHECK(stats.mean == doctest::Approx(1.05).epsilon(1e-14));
    CHECK(stats.variance ==
          doctest::Approx(0.1 + 1.0 / 1200.0).epsilon(1e-14));

    // Large-rate limit: mean -> t, variance -> 0.
    const auto tight = delta_family_stats(1e8, 1.0);
    CHECK(tight.mean == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(tight.variance < 1e-7);

    CHECK_THROWS_AS(delta_family_stats(-1.0, 1.0), DomainError);
}

namespace {

/// Exact piecewise sums over the constant-in-s intervals; the independent
/// oracle for the delta family moments.
struct DeltaMoments {
    double mass = 0.0, mean = 0.0, second = 0.0;
};

DeltaMoments delta_moments(double a, double t) {
    DeltaMoments m;
    const double at = a * t;
    const int m_max =
        static_cast<int>(at + 60.0 * std::sqrt(at + 1.0) + 60.0);
    for (int k = 0; k <= m_max; ++k) {
        const double density = erlang_eval(k, a, t);
        const double lo = k / a;
        const double hi = (k + 1) / a;
        m.mass += density * (hi - lo);
        m.mean += density * 0.5 * (hi * hi - lo * lo);
        m.second += density * (hi * hi * hi - lo * lo * lo) / 3.0;
    }
    return m;
}

}  // namespace

TEST_CASE("delta family: quadrature oracle reproduces the closed forms") {
    for (double a : {1.0, 10.0, 100.0}) {
        for (double t : {0.0, 0.5, 2.0}) {
            const auto oracle = delta_moments(a, t);
            const auto stats = delta_family_stats(a, t);
            CHECK(std::abs(oracle.mass - 1.0) <= 1e-10);
            CHECK(std::abs(oracle.mean - stats.mean) <= 1e-6);
            const double variance =
                oracle.second - oracle.mean * oracle.mean;
            CHECK(std::abs(variance - stats.variance) <= 1e-6);
        }
    }
}

TEST_CASE("delta family: monotone toward the diagonal") {
    DeltaFamily delta{3.0};
    const double width = delta.interval_width();
    for (double t : {0.4, 1.0, 2.7}) {
        for (double s = 0.0; s < 6.0; s += width) {
            if (s + width <= t)
                CHECK(delta(t, s) <= delta(t, s + width) + 1e-15);
            if (s >= t)
                CHECK(delta(t, s) >= delta(t, s + width) - 1e-15);
        }
    }
    // Piecewise constant within an interval.
    CHECK(delta(1.0, 0.01) == delta(1.0, 0.3));
}

TEST_CASE("kernel factory: gaussian half line") {
    const KernelSpec kernel = gaussian_halfline_kernel();
    CHECK(kernel.density(0.0) ==
          doctest::Approx(1.1283791670955126).epsilon(1e-14));
    CHECK(kernel.cumulative(1.0) == doctest::Approx(std::erf(1.0)));
    CHECK(kernel.bound == doctest::Approx(1.1283791670955126));
    CHECK_THROWS_AS(kernel.density(-0.1), DomainError);
}

TEST_CASE("kernel factory: folded normal values") {
    // mu = 0 folds into 2/sqrt(2 pi).
    CHECK(folded_normal_density(0.0, 0.0, 1.0) ==
          doctest::Approx(0.7978845608028654).epsilon(1e-14));
    Vector w(1), mu(1), s(1);
    w << 1.0;
    mu << 0.0;
    s << 1.0;
    const KernelSpec kernel = folded_normal_sum_kernel(w, mu, s);
    CHECK(kernel.density(0.0) == doctest::Approx(0.7978845608028654));

    Vector w2(2);
    w2 << 0.6, 0.3;
    CHECK_THROWS_AS(
        folded_normal_sum_kernel(w2, Vector::Zero(2), Vector::Ones(2)),
        DomainError);
}

TEST_CASE("kernel factory: precursor normalization identity") {
    PrecursorParams params;
    params.decay_rate = 0.0124;
    const double gamma = precursor_normalization(params);

    // Quadrature oracle for 1 / integral of exp(-lambda t) sum_j F.
    double mu = params.base_location, sigma = params.base_scale;
    std::vector<std::pair<double, double>> terms;
    for (int j = 0; j < params.term_count; ++j) {
        terms.emplace_back(mu, sigma);
        mu += sigma;
        sigma *= 1.5;
    }
    const auto unnormalized = [&](double t) {
        double acc = 0.0;
        for (const auto& [m, s] : terms)
            acc += folded_normal_density(t, m, s);
        return std::exp(-params.decay_rate * t) * acc;
    };
    const double mass =
        integrate_or_throw(unnormalized, 0.0, 30.0, 1e-12, 1e-12, 20000);
    CHECK(gamma * mass == doctest::Approx(1.0).epsilon(1e-6));

    const KernelSpec kernel = precursor_kernel(params);
    const double norm_mass = integrate_or_throw(kernel.density, 0.0, 30.0,
                                                1e-12, 1e-12, 20000);
    CHECK(norm_mass == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("kernel factory: every family normalizes over its horizon") {
    std::vector<KernelSpec> kernels;
    kernels.push_back(gaussian_halfline_kernel());
    kernels.push_back(make_kernel("folded-normal-sum", {}));
    kernels.push_back(make_kernel("precursor", {{"lambda", 0.0124}}));
    Vector c(3);
    c << 0.2, 0.3, 0.5;
    kernels.push_back(erlang_mixture_kernel(ErlangMixture(2.0, c)));

    for (const auto& kernel : kernels) {
        const double horizon = find_horizon(kernel, 1e-12).horizon;
        const double mass = integrate_adaptive<double>(
                                kernel.density, 0.0, horizon, 1e-10, 0.0,
                                40000)
                                .value;
        CHECK(mass <= 1.0 + 1e-9);
        CHECK(mass >= 1.0 - 1e-6);
        // Regularity: the declared bound caps the density.
        const double peak = scan_peak(kernel.density, horizon, 4000);
        CHECK(peak <= kernel.bound * (1.0 + 1e-12));
    }
}

TEST_CASE("kernel factory: custom densities are normalized or rejected") {
    const KernelSpec spec = custom_normalized_kernel(
        [](double t) { return std::exp(-2.0 * t); }, "exp2");
    CHECK(spec.density(0.0) == doctest::Approx(2.0).epsilon(1e-9));

    CHECK_THROWS_AS(
        custom_normalized_kernel([](double) { return 0.0; }, "zero"),
        DomainError);
    CHECK_THROWS_AS(custom_normalized_kernel(
                        [](double) { return 1e300; }, "heavy"),
                    DomainError);
}

TEST_CASE("kernel factory: name dispatch") {
    CHECK(make_kernel("gaussian-halfline", {}).name == "gaussian-halfline");
    CHECK_THROWS_AS(make_kernel("triangular", {}), DomainError);
    CHECK_THROWS_AS(make_kernel("precursor", {}), DomainError);
    const KernelSpec mix = make_kernel(
        "erlang-mixture", {{"a", 2.0}, {"c0", 0.25}, {"c1", 0.75}});
    CHECK(mix.density(0.0) == doctest::Approx(0.5));
}

TEST_CASE("theoretical mixtures converge pointwise on the half line") {
    const KernelSpec kernel = gaussian_halfline_kernel();
    const double horizon = find_horizon(kernel, 1e-14).horizon;
    double previous = 1e300;
    for (double a : {10.0, 20.0, 40.0}) {
        const int order = static_cast<int>(std::ceil(a * horizon));
        ErlangMixture mix(a, theoretical_coefficients(kernel, a, order),
                          /*sum_tolerance=*/1e-3);
        double worst = 0.0;
        for (int k = 0; k <= 300; ++k) {
            const double t = 3.0 * k / 300.0;
            worst = std::max(worst, std::abs(mix(t) - kernel.density(t)));
        }
        CHECK(worst < previous);
        previous = worst;
    }
}
