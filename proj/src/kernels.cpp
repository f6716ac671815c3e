#include "erlmix/kernels.hpp"

#include "erlmix/quadrature.hpp"

#include <cmath>
#include <numbers>

namespace erlmix {

namespace {

void check_rate_time(double rate, double t) {
    if (!(rate > 0.0)) throw DomainError("rate parameter must be positive");
    if (!(t >= 0.0)) throw DomainError("kernel argument must be nonnegative");
}

/// erf(hi) - erf(lo) without cancellation when both arguments sit in a tail.
double erf_diff(double hi, double lo) {
    if (lo > 3.0 && hi > 3.0) return std::erfc(lo) - std::erfc(hi);
    if (lo < -3.0 && hi < -3.0) return std::erfc(-hi) - std::erfc(-lo);
    return std::erf(hi) - std::erf(lo);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;

/// int_0^t exp(-lambda*s) N(s; mu, sigma) ds.
double exp_gauss_partial(double t, double mu, double sigma, double lambda) {
    const double mu_shift = mu - lambda * sigma * sigma;
    const double pre =
        0.5 * std::exp(0.5 * lambda * lambda * sigma * sigma - lambda * mu);
    return pre * erf_diff((t - mu_shift) * kInvSqrt2 / sigma,
                          -mu_shift * kInvSqrt2 / sigma);
}

/// int_t^inf exp(-lambda*s) N(s; mu, sigma) ds.
double exp_gauss_tail(double t, double mu, double sigma, double lambda) {
    const double mu_shift = mu - lambda * sigma * sigma;
    const double pre =
        0.5 * std::exp(0.5 * lambda * lambda * sigma * sigma - lambda * mu);
    return pre * std::erfc((t - mu_shift) * kInvSqrt2 / sigma);
}

double default_bound(const std::function<double(double)>& density) {
    const double horizon = tail_horizon(density, 1e-16, 1.0);
    return 1.05 * scan_peak(density, horizon, 10000);
}

}  // namespace

double erlang_eval(int order, double rate, double t) {
    if (order < 0) throw DomainError("Erlang order must be nonnegative");
    check_rate_time(rate, t);
    double value = rate * std::exp(-rate * t);
    for (int m = 1; m <= order; ++m) value *= rate * t / m;
    return value;
}

double erlang_deriv_rate(int order, double rate, double t, int deriv_order) {
    if (deriv_order != 1 && deriv_order != 2)
        throw DomainError("derivative order must be 1 or 2");
    const double value = erlang_eval(order, rate, t);
    const double factor = (order + 1) / rate - t;
    const double first = factor * value;
    if (deriv_order == 1) return first;
    return factor * first - (order + 1) / (rate * rate) * value;
}

void erlang_basis(double rate, double t, Eigen::Ref<Vector> out) {
    check_rate_time(rate, t);
    if (out.size() == 0) return;
    double value = rate * std::exp(-rate * t);
    out[0] = value;
    for (Eigen::Index m = 1; m < out.size(); ++m) {
        value *= rate * t / static_cast<double>(m);
        out[m] = value;
    }
}

void erlang_basis_with_derivatives(double rate, double t,
                                   Eigen::Ref<Vector> values,
                                   Eigen::Ref<Vector> d_rate,
                                   Eigen::Ref<Vector> d_rate2) {
    erlang_basis(rate, t, values);
    for (Eigen::Index m = 0; m < values.size(); ++m) {
        const double factor = (m + 1) / rate - t;
        d_rate[m] = factor * values[m];
        d_rate2[m] = factor * d_rate[m] - (m + 1) / (rate * rate) * values[m];
    }
}

ErlangMixture::ErlangMixture(double rate, Vector coefficients,
                             double sum_tolerance)
    : rate_(rate), coefficients_(std::move(coefficients)) {
    if (!(rate_ > 0.0)) throw DomainError("mixture rate must be positive");
    if (coefficients_.size() == 0)
        throw DomainError("mixture needs at least one coefficient");
    for (Eigen::Index m = 0; m < coefficients_.size(); ++m) {
        const double c = coefficients_[m];
        if (!(c >= 0.0 && c <= 1.0))
            throw DomainError("mixture coefficient " + std::to_string(m) +
                              " outside [0, 1]: " + std::to_string(c));
    }
    const double sum = coefficients_.sum();
    if (std::abs(sum - 1.0) > sum_tolerance)
        throw DomainError("mixture coefficients sum to " +
                          std::to_string(sum) + ", not 1");
}

double ErlangMixture::operator()(double t) const {
    check_rate_time(rate_, t);
    double value = rate_ * std::exp(-rate_ * t);
    double acc = coefficients_[0] * value;
    for (Eigen::Index m = 1; m < coefficients_.size(); ++m) {
        value *= rate_ * t / static_cast<double>(m);
        acc += coefficients_[m] * value;
    }
    return acc;
}

double ErlangMixture::deriv_rate(double t) const {
    check_rate_time(rate_, t);
    double value = rate_ * std::exp(-rate_ * t);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < coefficients_.size(); ++m) {
        if (m > 0) value *= rate_ * t / static_cast<double>(m);
        acc += coefficients_[m] * ((m + 1) / rate_ - t) * value;
    }
    return acc;
}

double ErlangMixture::deriv_rate2(double t) const {
    check_rate_time(rate_, t);
    double value = rate_ * std::exp(-rate_ * t);
    double acc = 0.0;
    for (Eigen::Index m = 0; m < coefficients_.size(); ++m) {
        if (m > 0) value *= rate_ * t / static_cast<double>(m);
        const double factor = (m + 1) / rate_ - t;
        acc += coefficients_[m] *
               (factor * factor * value - (m + 1) / (rate_ * rate_) * value);
    }
    return acc;
}

namespace {

/// Upper-tail Poisson sums Q_m = exp(-x) * sum_{k<=m} x^k/k! for m = 0..M.
/// These are the survival values of Erlang(m+1) kernels at x = a*t.
void poisson_partial_sums(double x, Eigen::Index count, Vector& out) {
    out.resize(count);
    if (x < 700.0) {
        double term = std::exp(-x);
        double sum = term;
        out[0] = sum;
        for (Eigen::Index k = 1; k < count; ++k) {
            term *= x / static_cast<double>(k);
            sum += term;
            out[k] = std::min(sum, 1.0);
        }
    } else {
        // exp(-x) underflows; build each term in log space instead.
        double sum = 0.0;
        for (Eigen::Index k = 0; k < count; ++k) {
            const double log_term =
                k * std::log(x) - x - std::lgamma(static_cast<double>(k) + 1.0);
            sum += std::exp(log_term);
            out[k] = std::min(sum, 1.0);
        }
    }
}

}  // namespace

double ErlangMixture::cumulative(double t) const {
    return 1.0 - survival(t);
}

double ErlangMixture::survival(double t) const {
    check_rate_time(rate_, t);
    Vector tails;
    poisson_partial_sums(rate_ * t, coefficients_.size(), tails);
    return coefficients_.dot(tails);
}

double DeltaFamily::operator()(double t, double s) const {
    check_rate_time(rate, t);
    if (!(s >= 0.0)) throw DomainError("second argument must be nonnegative");
    const double m = std::floor(s * rate);
    if (m > 1e9) return 0.0;
    return erlang_eval(static_cast<int>(m), rate, t);
}

DeltaFamilyStats delta_family_stats(double rate, double t) {
    check_rate_time(rate, t);
    return {t + 0.5 / rate, t / rate + 1.0 / (12.0 * rate * rate)};
}

KernelSpec gaussian_halfline_kernel() {
    KernelSpec spec;
    const double scale = 2.0 / std::sqrt(std::numbers::pi);
    spec.density = [scale](double t) {
        if (!(t >= 0.0)) throw DomainError("kernel argument must be >= 0");
        return scale * std::exp(-t * t);
    };
    spec.cumulative = [](double t) { return std::erf(t); };
    spec.survival = [](double t) { return std::erfc(t); };
    spec.bound = scale;
    spec.name = "gaussian-halfline";
    return spec;
}

double folded_normal_density(double t, double location, double scale) {
    if (!(scale > 0.0)) throw DomainError("folded normal scale must be > 0");
    if (!(t >= 0.0)) throw DomainError("kernel argument must be >= 0");
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * scale);
    const double d1 = (t - location) / scale;
    const double d2 = (t + location) / scale;
    return norm * (std::exp(-0.5 * d1 * d1) + std::exp(-0.5 * d2 * d2));
}

double folded_normal_cumulative(double t, double location, double scale) {
    if (!(scale > 0.0)) throw DomainError("folded normal scale must be > 0");
    return 0.5 * (std::erf((t - location) * kInvSqrt2 / scale) +
                  std::erf((t + location) * kInvSqrt2 / scale));
}

KernelSpec folded_normal_sum_kernel(const Vector& weights,
                                    const Vector& locations,
                                    const Vector& scales) {
    const Eigen::Index n = weights.size();
    if (locations.size() != n || scales.size() != n)
        throw DomainError("folded normal sum parameter sizes differ");
    if (n == 0) throw DomainError("folded normal sum needs >= 1 component");
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(weights[i] >= 0.0 && weights[i] <= 1.0))
            throw DomainError("folded normal weight outside [0, 1]");
        if (!(scales[i] > 0.0))
            throw DomainError("folded normal scale must be > 0");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-12)
        throw DomainError("folded normal weights must sum to 1");

    KernelSpec spec;
    spec.density = [=](double t) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            acc += weights[i] * folded_normal_density(t, locations[i], scales[i]);
        return acc;
    };
    spec.cumulative = [=](double t) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            acc += weights[i] *
                   folded_normal_cumulative(t, locations[i], scales[i]);
        return acc;
    };
    spec.survival = [=](double t) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double a = (t - locations[i]) * kInvSqrt2 / scales[i];
            const double b = (t + locations[i]) * kInvSqrt2 / scales[i];
            acc += weights[i] * 0.5 * (std::erfc(a) + std::erfc(b));
        }
        return acc;
    };
    spec.bound = default_bound(spec.density);
    spec.name = "folded-normal-sum";
    return spec;
}

namespace {

struct PrecursorTerms {
    std::vector<double> locations;
    std::vector<double> scales;
};

PrecursorTerms precursor_terms(const PrecursorParams& p) {
    if (!(p.decay_rate > 0.0)) throw DomainError("decay rate must be > 0");
    if (!(p.base_scale > 0.0)) throw DomainError("base scale must be > 0");
    if (p.term_count < 1) throw DomainError("term count must be >= 1");
    PrecursorTerms terms;
    double mu = p.base_location;
    double sigma = p.base_scale;
    for (int j = 0; j < p.term_count; ++j) {
        terms.locations.push_back(mu);
        terms.scales.push_back(sigma);
        mu += sigma;
        sigma *= 1.5;
    }
    return terms;
}

}  // namespace

double precursor_normalization(const PrecursorParams& params) {
    const auto terms = precursor_terms(params);
    double total = 0.0;
    for (std::size_t j = 0; j < terms.locations.size(); ++j) {
        const double mu = terms.locations[j];
        const double sigma = terms.scales[j];
        total += exp_gauss_tail(0.0, mu, sigma, params.decay_rate) +
                 exp_gauss_tail(0.0, -mu, sigma, params.decay_rate);
    }
    return 1.0 / total;
}

KernelSpec precursor_kernel(const PrecursorParams& params) {
    const auto terms = precursor_terms(params);
    const double gamma = precursor_normalization(params);
    const double lambda = params.decay_rate;

    KernelSpec spec;
    spec.density = [=](double t) {
        if (!(t >= 0.0)) throw DomainError("kernel argument must be >= 0");
        double acc = 0.0;
        for (std::size_t j = 0; j < terms.locations.size(); ++j)
            acc += folded_normal_density(t, terms.locations[j],
                                         terms.scales[j]);
        return gamma * std::exp(-lambda * t) * acc;
    };
    spec.cumulative = [=](double t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < terms.locations.size(); ++j) {
            const double mu = terms.locations[j];
            const double sigma = terms.scales[j];
            acc += exp_gauss_partial(t, mu, sigma, lambda) +
                   exp_gauss_partial(t, -mu, sigma, lambda);
        }
        return gamma * acc;
    };
    spec.survival = [=](double t) {
        double acc = 0.0;
        for (std::size_t j = 0; j < terms.locations.size(); ++j) {
            const double mu = terms.locations[j];
            const double sigma = terms.scales[j];
            acc += exp_gauss_tail(t, mu, sigma, lambda) +
                   exp_gauss_tail(t, -mu, sigma, lambda);
        }
        return gamma * acc;
    };
    spec.bound = default_bound(spec.density);
    spec.name = "precursor";
    return spec;
}

KernelSpec erlang_mixture_kernel(const ErlangMixture& mixture) {
    KernelSpec spec;
    spec.density = [mixture](double t) { return mixture(t); };
    spec.cumulative = [mixture](double t) { return mixture.cumulative(t); };
    spec.survival = [mixture](double t) { return mixture.survival(t); };
    spec.bound = default_bound(spec.density);
    spec.name = "erlang-mixture";
    return spec;
}

KernelSpec custom_normalized_kernel(std::function<double(double)> density,
                                    std::string name) {
    const double horizon = tail_horizon(density, 1e-16, 1.0);
    const double mass =
        integrate_or_throw(density, 0.0, horizon, 1e-12, 1e-12, 20000);
    if (!std::isfinite(mass) || mass < 1e-8 || mass > 1e8)
        throw DomainError("custom kernel mass " + std::to_string(mass) +
                          " outside [1e-8, 1e8]");
    KernelSpec spec;
    spec.density = [density = std::move(density), mass](double t) {
        if (!(t >= 0.0)) throw DomainError("kernel argument must be >= 0");
        return density(t) / mass;
    };
    spec.bound = default_bound(spec.density);
    spec.name = std::move(name);
    return spec;
}

namespace {

double param_or(const std::map<std::string, double>& params,
                const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

}  // namespace

KernelSpec make_kernel(const std::string& name,
                       const std::map<std::string, double>& params) {
    if (name == "gaussian-halfline") return gaussian_halfline_kernel();
    if (name == "folded-normal-sum") {
        std::vector<double> w, mu, sigma;
        for (int i = 1;; ++i) {
            const std::string suffix = std::to_string(i);
            auto gi = params.find("gamma" + suffix);
            if (gi == params.end()) break;
            w.push_back(gi->second);
            mu.push_back(param_or(params, "mu" + suffix, 0.0));
            sigma.push_back(param_or(params, "sigma" + suffix, 1.0));
        }
        if (w.empty()) {
            // Bimodal default matching the logistic benchmark kernel.
            w = {0.5, 0.5};
            mu = {0.35, 0.45};
            sigma = {0.06, 0.12};
        }
        const auto as_vec = [](const std::vector<double>& v) {
            return Eigen::Map<const Vector>(v.data(),
                                            static_cast<Eigen::Index>(v.size()))
                .eval();
        };
        return folded_normal_sum_kernel(as_vec(w), as_vec(mu), as_vec(sigma));
    }
    if (name == "precursor") {
        PrecursorParams p;
        auto it = params.find("lambda");
        if (it == params.end())
            throw DomainError("precursor kernel requires lambda=<decay rate>");
        p.decay_rate = it->second;
        p.base_location = param_or(params, "mu1", 2.0);
        p.base_scale = param_or(params, "sigma1", 0.1);
        p.term_count = static_cast<int>(param_or(params, "ns", 7.0));
        return precursor_kernel(p);
    }
    if (name == "erlang-mixture") {
        auto it = params.find("a");
        if (it == params.end())
            throw DomainError("erlang-mixture kernel requires a=<rate>");
        std::vector<double> c;
        for (int m = 0;; ++m) {
            auto ci = params.find("c" + std::to_string(m));
            if (ci == params.end()) break;
            c.push_back(ci->second);
        }
        if (c.empty())
            throw DomainError("erlang-mixture kernel requires c0..cM");
        ErlangMixture mixture(
            it->second,
            Eigen::Map<const Vector>(c.data(),
                                     static_cast<Eigen::Index>(c.size())));
        return erlang_mixture_kernel(mixture);
    }
    throw DomainError(
        "unknown kernel '" + name +
        "'; expected gaussian-halfline, folded-normal-sum, precursor, or "
        "erlang-mixture");
}

}  // namespace erlmix
