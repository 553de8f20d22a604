#pragma once

#include <complex>
#include <vector>

#include "leosinr/common.hpp"

namespace leosinr {

using cxd = std::complex<double>;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        return {x / n, y / n, z / n};
    }
};

/// Dense row-major complex matrix. Sized for this project's workloads
/// (channel matrices up to N_B x N_R), not a general linear algebra library.
class CxMatrix {
public:
    CxMatrix() = default;
    CxMatrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }

    cxd& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
    const cxd& operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

    const std::vector<cxd>& data() const { return data_; }
    std::vector<cxd>& data() { return data_; }

    CxMatrix hermitian() const {
        CxMatrix out(cols_, rows_);
        for (size_t r = 0; r < rows_; ++r)
            for (size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
        return out;
    }

    CxMatrix multiply(const CxMatrix& b) const {
        if (cols_ != b.rows_) throw ShapeError("CxMatrix::multiply: inner dimensions differ");
        CxMatrix out(rows_, b.cols_);
        for (size_t i = 0; i < rows_; ++i) {
            for (size_t k = 0; k < cols_; ++k) {
                const cxd a = (*this)(i, k);
                if (a == cxd{}) continue;
                for (size_t j = 0; j < b.cols_; ++j) out(i, j) += a * b(k, j);
            }
        }
        return out;
    }

    /// A * A^H, Hermitian by construction (rows x rows).
    CxMatrix gram() const {
        CxMatrix g(rows_, rows_);
        for (size_t i = 0; i < rows_; ++i) {
            for (size_t j = 0; j <= i; ++j) {
                cxd s{};
                for (size_t k = 0; k < cols_; ++k) s += (*this)(i, k) * std::conj((*this)(j, k));
                g(i, j) = s;
                g(j, i) = std::conj(s);
            }
        }
        return g;
    }

    double row_norm(size_t r) const {
        double s = 0.0;
        for (size_t c = 0; c < cols_; ++c) s += std::norm((*this)(r, c));
        return std::sqrt(s);
    }

private:
    size_t rows_ = 0, cols_ = 0;
    std::vector<cxd> data_;
};

/// In-place lower Cholesky factor of a Hermitian positive-definite matrix.
/// Throws NumericalError when a pivot is not strictly positive.
inline CxMatrix cholesky(const CxMatrix& a) {
    if (a.rows() != a.cols()) throw ShapeError("cholesky: matrix not square");
    const size_t n = a.rows();
    CxMatrix l(n, n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j <= i; ++j) {
            cxd s = a(i, j);
            for (size_t k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
            if (i == j) {
                const double d = s.real();
                if (!(d > 0.0) || !std::isfinite(d))
                    throw NumericalError("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(d);
            } else {
                l(i, j) = s / l(j, j).real();
            }
        }
    }
    return l;
}

/// Solves A X = B for Hermitian positive-definite A via its Cholesky factor.
inline CxMatrix cholesky_solve(const CxMatrix& a, const CxMatrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("cholesky_solve: dimension mismatch");
    const CxMatrix l = cholesky(a);
    const size_t n = a.rows();
    const size_t m = b.cols();
    CxMatrix x = b;
    // forward: L y = b
    for (size_t c = 0; c < m; ++c) {
        for (size_t i = 0; i < n; ++i) {
            cxd s = x(i, c);
            for (size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i).real();
        }
    }
    // backward: L^H x = y
    for (size_t c = 0; c < m; ++c) {
        for (size_t ii = n; ii-- > 0;) {
            cxd s = x(ii, c);
            for (size_t k = ii + 1; k < n; ++k) s -= std::conj(l(k, ii)) * x(k, c);
            x(ii, c) = s / l(ii, ii).real();
        }
    }
    return x;
}

}  // namespace leosinr
