#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace lf {

/// Dense row-major matrix of 64-bit floats. All internal arithmetic runs in
/// doubles regardless of the on-disk dtype.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }

    static Matrix identity(std::size_t n);
};

bool same_shape(const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

double frobenius_norm(const Matrix& a);
double trace(const Matrix& a);
double max_abs(const Matrix& a);

/// Symmetric positive semi-definite matrix. Construction validates symmetry
/// to 1e-12 relative to the largest entry; numerical PSD (eigenvalues down to
/// -1e-10) is tolerated by the consumers that need square roots.
struct SymmetricPsd {
    std::size_t dim = 0;
    Matrix mat;

    SymmetricPsd() = default;
    explicit SymmetricPsd(Matrix m);
};

struct EigenDecomposition {
    std::vector<double> eigenvalues; // descending
    Matrix eigenvectors;             // orthonormal columns
};

/// Sample covariance of a weight matrix: rows are observations, columns are
/// variables, divisor rows-1. Columns beyond block_cap are estimated in
/// contiguous blocks of width <= block_cap and assembled block-diagonally.
SymmetricPsd covariance(const Matrix& w, std::size_t block_cap = 128);

/// Cyclic Jacobi eigendecomposition; eigenvalues sorted descending.
EigenDecomposition sym_eig(const SymmetricPsd& s);

SymmetricPsd matrix_sqrt(const SymmetricPsd& s);
Matrix matrix_log(const SymmetricPsd& s);

/// log det via Cholesky; throws SingularMatrixError when a pivot is not
/// strictly positive.
double logdet(const SymmetricPsd& s);

/// Eigenvalues clamped to max(lambda, 1e-10 * lambda_max); throws
/// SingularMatrixError when the matrix has no positive eigenvalue.
SymmetricPsd ridge_floor(const SymmetricPsd& s, double rel = 1e-10);

SymmetricPsd psd_inverse(const SymmetricPsd& s);
SymmetricPsd inverse_sqrt(const SymmetricPsd& s, double ridge);

struct QrResult {
    Matrix q; // m x k, orthonormal columns (k = min(m, n))
    Matrix r; // k x n, upper triangular
};

QrResult qr(const Matrix& w);

/// Softmax each row independently (max-shifted, so constant row offsets
/// cancel). Rows sum to 1.
Matrix row_softmax(const Matrix& w);

} // namespace lf
