#include "erlmix/stability.hpp"

#include "erlmix/parallel.hpp"
#include "erlmix/quadrature.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>

namespace erlmix {

Matrix augmented_jacobian(const ModelSpec& model, const LctSystem& lct,
                          const Vector& x_bar, const Vector& memory_bar) {
    const int n_x = model.n_x;
    const int n_aux = lct.total_dimension();
    const Vector z_bar = lct.memory_output(memory_bar);
    const Matrix jac_x = model.jac_x(0.0, x_bar, z_bar);
    const Matrix jac_z = model.jac_z(0.0, x_bar, z_bar);
    const Matrix jac_h = model.jac_h(x_bar);

    Matrix j = Matrix::Zero(n_x + n_aux, n_x + n_aux);
    j.topLeftCorner(n_x, n_x) = jac_x;
    j.topRightCorner(n_x, n_aux) = jac_z * lct.dense_C();
    j.bottomLeftCorner(n_aux, n_x) = lct.dense_B() * jac_h;
    j.bottomRightCorner(n_aux, n_aux) = lct.dense_A();
    return j;
}

ComplexVector eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols()) throw DomainError("matrix must be square");
    if (!m.allFinite()) throw DomainError("matrix entries must be finite");
    Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError(
            "QR iteration failed to converge for the dense eigenproblem of "
            "dimension " +
            std::to_string(m.rows()));
    return solver.eigenvalues();
}

EigenPairs eigenpairs(const Matrix& m) {
    if (m.rows() != m.cols()) throw DomainError("matrix must be square");
    Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/true);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError(
            "QR iteration failed to converge for the dense eigenproblem of "
            "dimension " +
            std::to_string(m.rows()));
    EigenPairs pairs{solver.eigenvalues(), solver.eigenvectors()};
    const double scale = m.norm();
    const ComplexMatrix mc = m.cast<Complex>();
    for (Eigen::Index k = 0; k < pairs.values.size(); ++k) {
        const ComplexVector v = pairs.vectors.col(k);
        const double backward = (mc * v - pairs.values[k] * v).norm();
        if (backward > 1e-8 * scale)
            throw ConvergenceError("eigenpair " + std::to_string(k) +
                                   " exceeds the backward error bound");
    }
    return pairs;
}

ComplexMatrix q_matrix(const LctSystem& lct, Complex lambda) {
    const int n_z = lct.channel_count();
    ComplexMatrix q = ComplexMatrix::Zero(n_z, n_z);
    for (int i = 0; i < n_z; ++i) {
        const auto& ch = lct.channel(i);
        if (std::abs(lambda + ch.rate) < 1e-12 * ch.rate)
            throw DomainError("lambda is within 1e-12*a of the pole -a of "
                              "channel " +
                              std::to_string(i));
        const Complex ratio = ch.rate / (ch.rate + lambda);
        Complex power = ratio;
        Complex acc = 0.0;
        for (int m = 0; m < ch.size(); ++m) {
            acc += ch.coefficients[m] * power;
            power *= ratio;
        }
        q(i, i) = acc;
    }
    return q;
}

Complex reduced_char(const Matrix& jac_x, const Matrix& jac_z,
                     const Matrix& jac_h, const LctSystem& lct,
                     Complex lambda) {
    const Eigen::Index n_x = jac_x.rows();
    ComplexMatrix m = jac_x.cast<Complex>();
    m -= lambda * ComplexMatrix::Identity(n_x, n_x);
    m += jac_z.cast<Complex>() * q_matrix(lct, lambda) * jac_h.cast<Complex>();

    // Row-max equilibration keeps the LU determinant well scaled.
    Complex det_scale = 1.0;
    for (Eigen::Index r = 0; r < n_x; ++r) {
        const double row_max = m.row(r).cwiseAbs().maxCoeff();
        if (row_max > 0.0) {
            m.row(r) /= row_max;
            det_scale *= row_max;
        }
    }
    return det_scale * Eigen::PartialPivLU<ComplexMatrix>(m).determinant();
}

Complex char_integral(const KernelSpec& kernel, Complex lambda,
                      double horizon) {
    if (!(horizon > 0.0)) throw DomainError("horizon must be positive");
    const auto integrand = [&](double s) -> Complex {
        return std::exp(-lambda * s) * kernel.density(s);
    };
    auto result = integrate_adaptive<Complex>(integrand, 0.0, horizon, 1e-10,
                                              0.0, 20000);
    if (!result.converged)
        throw QuadratureError(
            "kernel transform quadrature did not converge (oscillatory "
            "integrand?)",
            std::abs(result.value));
    return result.value;
}

SpectrumReport analyze_spectrum(const ModelSpec& model, const LctSystem& lct,
                                const Vector& x_bar,
                                const Vector& memory_bar) {
    const Matrix j = augmented_jacobian(model, lct, x_bar, memory_bar);
    SpectrumReport report;
    report.eigenvalues = eigenvalues(j);
    report.max_real_part = report.eigenvalues.real().maxCoeff();

    const Vector z_bar = lct.memory_output(memory_bar);
    const Matrix jac_x = model.jac_x(0.0, x_bar, z_bar);
    const Matrix jac_z = model.jac_z(0.0, x_bar, z_bar);
    const Matrix jac_h = model.jac_h(x_bar);

    report.chain_flags.resize(report.eigenvalues.size());
    report.reduced_residuals.assign(report.eigenvalues.size(), -1.0);
    for (Eigen::Index k = 0; k < report.eigenvalues.size(); ++k) {
        const Complex lambda = report.eigenvalues[k];
        bool chain = false;
        for (int i = 0; i < lct.channel_count(); ++i) {
            const double rate = lct.channel(i).rate;
            if (std::abs(lambda + rate) <= 1e-3 * rate) {
                chain = true;
                break;
            }
        }
        report.chain_flags[k] = chain;
        if (!chain)
            report.reduced_residuals[k] =
                std::abs(reduced_char(jac_x, jac_z, jac_h, lct, lambda));
    }
    return report;
}

std::vector<ScanPoint> scan_parameter(
    const std::function<ScanProblem(double)>& problem_at,
    const std::vector<double>& grid, const ScanOptions& options) {
    std::vector<ScanPoint> points(grid.size());
    parallel_for(static_cast<int>(grid.size()), options.threads, [&](int k) {
        ScanPoint& point = points[static_cast<std::size_t>(k)];
        point.parameter = grid[static_cast<std::size_t>(k)];
        try {
            ScanProblem problem = problem_at(point.parameter);
            const int dim =
                problem.model.n_x + problem.lct.total_dimension();
            if (dim > 2000)
                throw DomainError(
                    "augmented dimension " + std::to_string(dim) +
                    " exceeds the dense eigensolver limit of 2000; lower the "
                    "mixture order M");
            point.steady_state = steady_state(problem.model, problem.guess);
            const Vector memory =
                steady_memory(problem.model, problem.lct, point.steady_state);
            SpectrumReport report = analyze_spectrum(
                problem.model, problem.lct, point.steady_state, memory);
            point.max_real_eig = report.max_real_part;
            if (options.keep_spectra) point.spectrum = std::move(report);
            point.ok = true;
        } catch (const std::exception& err) {
            point.ok = false;
            point.error = err.what();
        }
    });
    return points;
}

}  // namespace erlmix
