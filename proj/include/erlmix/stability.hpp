#pragma once

#include "erlmix/kernels.hpp"
#include "erlmix/lct.hpp"
#include "erlmix/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace erlmix {

/// Eigenvalue report of an augmented Jacobian. Chain eigenvalues are those
/// within 1e-3*a_i of some -a_i; the remaining ones are checked against the
/// reduced characteristic function and their residuals recorded.
struct SpectrumReport {
    ComplexVector eigenvalues;
    double max_real_part = 0.0;
    std::vector<bool> chain_flags;
    /// |det(F - lambda I + G Q(lambda) H)| for non-chain entries, -1 for
    /// chain entries.
    std::vector<double> reduced_residuals;
};

/// J = [[F, G C], [B H, A]] evaluated at (x_bar, z_bar = C Z_bar).
Matrix augmented_jacobian(const ModelSpec& model, const LctSystem& lct,
                          const Vector& x_bar, const Vector& memory_bar);

/// All eigenvalues of a real dense matrix (balancing, Hessenberg reduction,
/// shifted QR via Eigen's dense nonsymmetric solver). Throws
/// ConvergenceError when the QR iteration fails.
ComplexVector eigenvalues(const Matrix& m);

struct EigenPairs {
    ComplexVector values;
    ComplexMatrix vectors;
};

/// Eigenvalues with eigenvectors; each returned pair is verified to have
/// backward error ||J v - lambda v|| <= 1e-8 ||J||.
EigenPairs eigenpairs(const Matrix& m);

/// Diagonal transfer matrix Q_ii(lambda) = sum_m c_{m,i} (a_i/(a_i+lambda))^{m+1}.
/// Throws DomainError when lambda comes within 1e-12*a_i of a pole -a_i.
ComplexMatrix q_matrix(const LctSystem& lct, Complex lambda);

/// Reduced characteristic function det(F - lambda I + G Q(lambda) H),
/// computed by complex LU with row-max equilibration.
Complex reduced_char(const Matrix& jac_x, const Matrix& jac_z,
                     const Matrix& jac_h, const LctSystem& lct,
                     Complex lambda);

/// Truncated kernel transform int_0^t_h exp(-lambda s) alpha(s) ds by
/// adaptive quadrature (tolerance 1e-10). Throws QuadratureError carrying
/// the magnitude of the partial value if the budget is exhausted.
Complex char_integral(const KernelSpec& kernel, Complex lambda,
                      double horizon);

/// Classifies the spectrum of the augmented Jacobian at a steady state and
/// evaluates the reduced characteristic function at non-chain eigenvalues.
SpectrumReport analyze_spectrum(const ModelSpec& model, const LctSystem& lct,
                                const Vector& x_bar, const Vector& memory_bar);

struct ScanProblem {
    ModelSpec model;
    LctSystem lct;
    Vector guess;
};

struct ScanPoint {
    double parameter = 0.0;
    bool ok = false;
    std::string error;
    Vector steady_state;
    double max_real_eig = 0.0;
    SpectrumReport spectrum;  // eigenvalues kept only when requested
};

struct ScanOptions {
    bool keep_spectra = false;
    int threads = 0;  // 0 = hardware concurrency
};

/// Parameter scan: per grid point solve the steady state, assemble the
/// augmented Jacobian, and record the largest real eigenvalue part.
/// Per-point failures are recorded and the scan continues. Refuses
/// augmented dimensions above 2000 (lower the mixture order instead).
std::vector<ScanPoint> scan_parameter(
    const std::function<ScanProblem(double)>& problem_at,
    const std::vector<double>& grid, const ScanOptions& options = {});

}  // namespace erlmix
