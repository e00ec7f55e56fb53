#include "lf/matrix.hpp"

#include "lf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lf {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols)
        throw ValidationError("matrix data length " + std::to_string(data.size()) +
                              " does not match " + std::to_string(rows) + "x" +
                              std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool same_shape(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ValidationError("matmul shape mismatch");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!same_shape(a, b)) throw ValidationError("add shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    if (!same_shape(a, b)) throw ValidationError("subtract shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (double& v : out.data) v *= s;
    return out;
}

double frobenius_norm(const Matrix& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return std::sqrt(acc);
}

double trace(const Matrix& a) {
    double acc = 0.0;
    const std::size_t n = std::min(a.rows, a.cols);
    for (std::size_t i = 0; i < n; ++i) acc += a(i, i);
    return acc;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

SymmetricPsd::SymmetricPsd(Matrix m) : dim(m.rows), mat(std::move(m)) {
    if (mat.rows != mat.cols) throw ValidationError("symmetric matrix must be square");
    const double scale = std::max(max_abs(mat), 1.0);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j)
            if (std::abs(mat(i, j) - mat(j, i)) > 1e-12 * scale)
                throw ValidationError("matrix is not symmetric within tolerance");
}

SymmetricPsd covariance(const Matrix& w, std::size_t block_cap) {
    if (w.rows < 2)
        throw ValidationError("degenerate input: covariance needs at least 2 rows");
    if (block_cap == 0) block_cap = 128;

    const std::size_t n = w.rows;
    const std::size_t d = w.cols;
    Matrix cov(d, d);

    // One code path for both regimes: a single block when d <= block_cap, so
    // the exact and block estimates agree bit-for-bit.
    for (std::size_t b0 = 0; b0 < d; b0 += block_cap) {
        const std::size_t b1 = std::min(b0 + block_cap, d);
        std::vector<double> mean(b1 - b0, 0.0);
        for (std::size_t j = b0; j < b1; ++j) {
            double acc = 0.0;
            for (std::size_t r = 0; r < n; ++r) acc += w(r, j);
            mean[j - b0] = acc / static_cast<double>(n);
        }
        for (std::size_t j = b0; j < b1; ++j) {
            for (std::size_t k = j; k < b1; ++k) {
                double acc = 0.0;
                for (std::size_t r = 0; r < n; ++r)
                    acc += (w(r, j) - mean[j - b0]) * (w(r, k) - mean[k - b0]);
                const double v = acc / static_cast<double>(n - 1);
                cov(j, k) = v;
                cov(k, j) = v;
            }
        }
    }
    return SymmetricPsd(std::move(cov));
}

EigenDecomposition sym_eig(const SymmetricPsd& s) {
    const std::size_t n = s.dim;
    Matrix a = s.mat;
    Matrix v = Matrix::identity(n);

    if (n == 0) return {{}, v};

    const double scale = std::max(max_abs(a), 1e-300);
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= 1e-15 * scale * static_cast<double>(n)) break;

        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigenDecomposition out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.eigenvalues[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
    }
    return out;
}

namespace {

// V f(diag) V^T with exact symmetry by mirroring the upper triangle.
Matrix spectral_map(const EigenDecomposition& eig, const std::vector<double>& mapped) {
    const std::size_t n = eig.eigenvalues.size();
    const Matrix& v = eig.eigenvectors;
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += v(i, k) * mapped[k] * v(j, k);
            out(i, j) = acc;
            out(j, i) = acc;
        }
    }
    return out;
}

} // namespace

SymmetricPsd matrix_sqrt(const SymmetricPsd& s) {
    EigenDecomposition eig = sym_eig(s);
    std::vector<double> mapped(eig.eigenvalues.size());
    for (std::size_t i = 0; i < mapped.size(); ++i)
        mapped[i] = std::sqrt(std::max(eig.eigenvalues[i], 0.0));
    return SymmetricPsd(spectral_map(eig, mapped));
}

Matrix matrix_log(const SymmetricPsd& s) {
    EigenDecomposition eig = sym_eig(s);
    if (eig.eigenvalues.empty() || eig.eigenvalues.front() <= 0.0)
        throw SingularMatrixError("matrix log: no positive eigenvalue");
    const double floor = 1e-10 * eig.eigenvalues.front();
    std::vector<double> mapped(eig.eigenvalues.size());
    for (std::size_t i = 0; i < mapped.size(); ++i)
        mapped[i] = std::log(std::max(eig.eigenvalues[i], floor));
    return spectral_map(eig, mapped);
}

double logdet(const SymmetricPsd& s) {
    const std::size_t n = s.dim;
    Matrix l(n, n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double diag = s.mat(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0))
            throw SingularMatrixError("logdet: matrix not positive definite");
        const double ljj = std::sqrt(diag);
        l(j, j) = ljj;
        acc += std::log(ljj);
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = s.mat(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / ljj;
        }
    }
    return 2.0 * acc;
}

SymmetricPsd ridge_floor(const SymmetricPsd& s, double rel) {
    EigenDecomposition eig = sym_eig(s);
    if (eig.eigenvalues.empty() || eig.eigenvalues.front() <= 0.0)
        throw SingularMatrixError("ridge floor: no positive eigenvalue");
    const double floor = rel * eig.eigenvalues.front();
    std::vector<double> mapped(eig.eigenvalues.size());
    for (std::size_t i = 0; i < mapped.size(); ++i)
        mapped[i] = std::max(eig.eigenvalues[i], floor);
    return SymmetricPsd(spectral_map(eig, mapped));
}

SymmetricPsd psd_inverse(const SymmetricPsd& s) {
    EigenDecomposition eig = sym_eig(s);
    if (eig.eigenvalues.empty() || eig.eigenvalues.back() <= 0.0)
        throw SingularMatrixError("inverse: matrix not positive definite");
    std::vector<double> mapped(eig.eigenvalues.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = 1.0 / eig.eigenvalues[i];
    return SymmetricPsd(spectral_map(eig, mapped));
}

SymmetricPsd inverse_sqrt(const SymmetricPsd& s, double ridge) {
    EigenDecomposition eig = sym_eig(s);
    std::vector<double> mapped(eig.eigenvalues.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        const double v = std::max(eig.eigenvalues[i], 0.0) + ridge;
        if (!(v > 0.0)) throw SingularMatrixError("inverse sqrt: non-positive diagonal");
        mapped[i] = 1.0 / std::sqrt(v);
    }
    return SymmetricPsd(spectral_map(eig, mapped));
}

QrResult qr(const Matrix& w) {
    const std::size_t m = w.rows;
    const std::size_t n = w.cols;
    const std::size_t k = std::min(m, n);

    Matrix a = w;
    std::vector<std::vector<double>> reflectors;
    reflectors.reserve(k);

    for (std::size_t j = 0; j < k; ++j) {
        double norm = 0.0;
        for (std::size_t i = j; i < m; ++i) norm += a(i, j) * a(i, j);
        norm = std::sqrt(norm);
        if (norm <= 1e-300) {
            reflectors.emplace_back(); // zero column, skip reflection
            continue;
        }
        const double alpha = a(j, j) >= 0.0 ? -norm : norm;
        std::vector<double> vvec(m - j, 0.0);
        vvec[0] = a(j, j) - alpha;
        for (std::size_t i = j + 1; i < m; ++i) vvec[i - j] = a(i, j);
        double vnorm2 = 0.0;
        for (double x : vvec) vnorm2 += x * x;
        if (vnorm2 <= 1e-300) {
            reflectors.emplace_back();
            continue;
        }
        // apply H = I - 2 v v^T / (v^T v) to remaining columns
        for (std::size_t c = j; c < n; ++c) {
            double dot = 0.0;
            for (std::size_t i = j; i < m; ++i) dot += vvec[i - j] * a(i, c);
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = j; i < m; ++i) a(i, c) -= f * vvec[i - j];
        }
        reflectors.push_back(std::move(vvec));
    }

    QrResult out;
    out.r = Matrix(k, n);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i; j < n; ++j) out.r(i, j) = a(i, j);

    // accumulate Q = H_0 ... H_{k-1} applied to the first k columns of I
    out.q = Matrix(m, k);
    for (std::size_t i = 0; i < k; ++i) out.q(i, i) = 1.0;
    for (std::size_t j = k; j-- > 0;) {
        const std::vector<double>& vvec = reflectors[j];
        if (vvec.empty()) continue;
        double vnorm2 = 0.0;
        for (double x : vvec) vnorm2 += x * x;
        for (std::size_t c = 0; c < k; ++c) {
            double dot = 0.0;
            for (std::size_t i = j; i < m; ++i) dot += vvec[i - j] * out.q(i, c);
            const double f = 2.0 * dot / vnorm2;
            for (std::size_t i = j; i < m; ++i) out.q(i, c) -= f * vvec[i - j];
        }
    }
    return out;
}

Matrix row_softmax(const Matrix& w) {
    Matrix out(w.rows, w.cols);
    for (std::size_t i = 0; i < w.rows; ++i) {
        double m = -1e308;
        for (std::size_t j = 0; j < w.cols; ++j) m = std::max(m, w(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) {
            out(i, j) = std::exp(w(i, j) - m);
            sum += out(i, j);
        }
        for (std::size_t j = 0; j < w.cols; ++j) out(i, j) /= sum;
    }
    return out;
}

} // namespace lf
