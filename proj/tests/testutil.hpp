#pragma once

#include "erlmix/types.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace testutil {

/// Central finite difference of a scalar function.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double step) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// Second central difference.
inline double central_diff2(const std::function<double(double)>& f, double x,
                            double step) {
    return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step);
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Deterministic uniform helpers for hand-rolled property tests.
class Rng {
public:
    explicit Rng(unsigned seed) : gen_(seed) {}
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * dist_(gen_);
    }
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(gen_);
    }
    /// A random point on the unit simplex of the given size.
    erlmix::Vector simplex(int size) {
        erlmix::Vector v(size);
        for (int i = 0; i < size; ++i) v[i] = -std::log(dist_(gen_) + 1e-300);
        return v / v.sum();
    }
    erlmix::Vector vector(int size, double lo, double hi) {
        erlmix::Vector v(size);
        for (int i = 0; i < size; ++i) v[i] = uniform(lo, hi);
        return v;
    }
    erlmix::Matrix matrix(int rows, int cols, double lo, double hi) {
        erlmix::Matrix m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = uniform(lo, hi);
        return m;
    }

private:
    std::mt19937 gen_;
    std::uniform_real_distribution<double> dist_{0.0, 1.0};
};

}  // namespace testutil
