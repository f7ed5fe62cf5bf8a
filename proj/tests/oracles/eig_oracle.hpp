#pragma once

// Eigenvalues of a Hermitian matrix by inertia counting (Sylvester) plus bisection.
// Independent of the Householder/QL path used by the library.

#include <vector>

#include <starisac/numerics.hpp>

namespace oracle {

// number of eigenvalues of A strictly below x
inline std::size_t count_below(const starisac::CMatrix &a, double x) {
    const std::size_t n = a.rows();
    std::vector<starisac::cdouble> m(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) m[i * n + j] = a(i, j) - (i == j ? x : 0.0);
    std::size_t neg = 0;
    for (std::size_t k = 0; k < n; ++k) {
        double piv = m[k * n + k].real();
        if (piv == 0.0) piv = -1e-300;
        if (piv < 0.0) ++neg;
        for (std::size_t i = k + 1; i < n; ++i) {
            const starisac::cdouble l = m[i * n + k] / piv;
            for (std::size_t j = k + 1; j < n; ++j) m[i * n + j] -= l * m[k * n + j];
        }
    }
    return neg;
}

inline std::vector<double> bisection_eigenvalues(const starisac::CMatrix &a, double tol = 1e-13) {
    const std::size_t n = a.rows();
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::abs(a(i, j));
        r = std::max(r, s);
    }
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        double lo = -r - 1.0, hi = r + 1.0;
        while (hi - lo > tol * (1.0 + r)) {
            const double mid = 0.5 * (lo + hi);
            if (count_below(a, mid) > k) hi = mid;
            else lo = mid;
        }
        out[k] = 0.5 * (lo + hi);
    }
    return out;
}

} // namespace oracle
