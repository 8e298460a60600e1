#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "sspe/matrix.hpp"
#include "sspe/rng.hpp"

namespace sspe {

// A scalar-valued differentiable function of a matrix-shaped point:
// `value` evaluates f, `gradient` returns the analytic df/dpoint.
struct ScalarFunction {
    std::function<double(const Matrix&)> value;
    std::function<Matrix(const Matrix&)> gradient;
};

namespace detail {

inline double grad_check_coord(const ScalarFunction& f, Matrix& point, const Matrix& analytic,
                               std::size_t i, double step) {
    const double orig = point.data[i];
    point.data[i] = orig + step;
    const double fp = f.value(point);
    point.data[i] = orig - step;
    const double fm = f.value(point);
    point.data[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm) || !std::isfinite(analytic.data[i]))
        throw std::runtime_error("grad_check: non-finite intermediate value");
    const double fd = (fp - fm) / (2.0 * step);
    return std::abs(analytic.data[i] - fd) / std::max(1.0, std::abs(fd));
}

}  // namespace detail

// Max over all coordinates of |analytic - central difference| / max(1, |cd|).
inline double grad_check(const ScalarFunction& f, const Matrix& point, double step) {
    if (step < 1e-7 || step > 1e-3)
        throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");
    Matrix p = point;
    const Matrix analytic = f.gradient(p);
    if (!analytic.same_shape(point))
        throw std::invalid_argument("grad_check: gradient shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < p.data.size(); ++i)
        worst = std::max(worst, detail::grad_check_coord(f, p, analytic, i, step));
    return worst;
}

// Same check restricted to a random coordinate subset; used for large points
// where the full sweep would dominate the run.
inline double grad_check_sampled(const ScalarFunction& f, const Matrix& point, double step,
                                 std::size_t max_coords, Rng& rng) {
    if (step < 1e-7 || step > 1e-3)
        throw std::invalid_argument("grad_check: step must lie in [1e-7, 1e-3]");
    Matrix p = point;
    const Matrix analytic = f.gradient(p);
    if (point.data.size() <= max_coords) return grad_check(f, point, step);
    double worst = 0.0;
    for (std::size_t k = 0; k < max_coords; ++k) {
        const std::size_t i = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(p.data.size()) - 1));
        worst = std::max(worst, detail::grad_check_coord(f, p, analytic, i, step));
    }
    return worst;
}

}  // namespace sspe
