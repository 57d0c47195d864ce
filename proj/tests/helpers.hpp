#pragma once

#include <cmath>
#include <functional>

#include "mltn/tensor.hpp"

namespace testutil {

inline double rel_err(double got, double want) {
    const double denom = std::max(std::fabs(got), std::fabs(want));
    if (denom == 0.0) return 0.0;
    return std::fabs(got - want) / denom;
}

inline double max_rel_err(const mltn::Tensor& got, const mltn::Tensor& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, rel_err(got[i], want[i]));
    return worst;
}

inline double max_abs_diff(const mltn::Tensor& got, const mltn::Tensor& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i)
        worst = std::max(worst, std::fabs(got[i] - want[i]));
    return worst;
}

// Central finite difference of eval() with respect to *slot.
inline double fd_grad(double* slot, double h,
                      const std::function<double()>& eval) {
    const double orig = *slot;
    *slot = orig + h;
    const double fp = eval();
    *slot = orig - h;
    const double fm = eval();
    *slot = orig;
    return (fp - fm) / (2.0 * h);
}

// True when an analytic gradient matches a finite-difference estimate within
// rel_tol relative error with an abs_tol absolute floor.
inline bool grad_close(double analytic, double fd, double rel_tol,
                       double abs_tol) {
    const double diff = std::fabs(analytic - fd);
    return diff <= abs_tol + rel_tol * std::max(std::fabs(analytic), std::fabs(fd));
}

}  // namespace testutil
