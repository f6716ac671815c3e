#include "erlmix/quadrature.hpp"

namespace erlmix {

double scan_peak(const std::function<double(double)>& f, double upper,
                 int points) {
    double peak = 0.0;
    for (int i = 0; i <= points; ++i) {
        const double t = upper * static_cast<double>(i) / points;
        peak = std::max(peak, std::abs(f(t)));
    }
    return peak;
}

double tail_horizon(const std::function<double(double)>& f,
                    double cutoff_ratio, double initial_upper,
                    int max_doublings) {
    double upper = initial_upper;
    double peak = 0.0;
    for (int d = 0; d < max_doublings; ++d) {
        constexpr int kScan = 2048;
        peak = std::max(peak, scan_peak(f, upper, kScan));
        const double cutoff = cutoff_ratio * peak;
        // The tail is considered reached when the last quarter of the window
        // stays below the cutoff.
        bool tail_ok = peak > 0.0;
        for (int i = 3 * kScan / 4; i <= kScan; ++i) {
            const double t = upper * static_cast<double>(i) / kScan;
            if (std::abs(f(t)) >= cutoff) {
                tail_ok = false;
                break;
            }
        }
        if (tail_ok) return upper;
        upper *= 2.0;
    }
    return upper;
}

}  // namespace erlmix
