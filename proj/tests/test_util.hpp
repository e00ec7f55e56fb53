#pragma once

#include "lf/matrix.hpp"
#include "lf/rng.hpp"

#include <cmath>
#include <vector>

namespace lftest {

inline lf::Matrix random_matrix(std::size_t rows, std::size_t cols, lf::Rng& rng,
                                double scale = 1.0) {
    lf::Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.gaussian();
    return m;
}

inline lf::SymmetricPsd random_symmetric(std::size_t n, lf::Rng& rng) {
    lf::Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = rng.gaussian();
            m(i, j) = v;
            m(j, i) = v;
        }
    return lf::SymmetricPsd(std::move(m));
}

inline lf::Matrix random_orthonormal(std::size_t n, lf::Rng& rng) {
    return lf::qr(random_matrix(n, n, rng)).q;
}

/// Q diag(lambda) Q^T with eigenvalues drawn uniformly from [lo, hi].
inline lf::SymmetricPsd random_pd(std::size_t n, double lo, double hi, lf::Rng& rng) {
    const lf::Matrix q = random_orthonormal(n, rng);
    std::vector<double> lambda(n);
    for (double& v : lambda) v = rng.uniform(lo, hi);
    lf::Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += q(i, k) * lambda[k] * q(j, k);
            out(i, j) = acc;
            out(j, i) = acc;
        }
    return lf::SymmetricPsd(std::move(out));
}

inline double frob_diff(const lf::Matrix& a, const lf::Matrix& b) {
    return lf::frobenius_norm(lf::subtract(a, b));
}

inline double rel_frob_diff(const lf::Matrix& a, const lf::Matrix& b) {
    const double denom = std::max(lf::frobenius_norm(a), 1e-300);
    return frob_diff(a, b) / denom;
}

} // namespace lftest
