#pragma once

// Verification-only oracles: brute-force re-implementations kept
// deliberately independent of the production code paths they check.
// Used by the unit/acceptance suites and the `selftest` CLI command;
// nothing here is called by the simulator or the trainer.

#include <functional>

#include "leosinr/linalg.hpp"

namespace leosinr::verify {

/// Textbook Gauss-Jordan inverse with partial pivoting.
inline CxMatrix naive_inverse(const CxMatrix& a) {
    if (a.rows() != a.cols()) throw ShapeError("naive_inverse: matrix not square");
    const size_t n = a.rows();
    CxMatrix aug(n, 2 * n);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) aug(i, j) = a(i, j);
        aug(i, n + i) = 1.0;
    }
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(aug(r, col)) > std::abs(aug(pivot, col))) pivot = r;
        if (std::abs(aug(pivot, col)) == 0.0)
            throw NumericalError("naive_inverse: singular matrix");
        if (pivot != col)
            for (size_t j = 0; j < 2 * n; ++j) std::swap(aug(pivot, j), aug(col, j));
        const cxd d = aug(col, col);
        for (size_t j = 0; j < 2 * n; ++j) aug(col, j) /= d;
        for (size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const cxd f = aug(r, col);
            if (f == cxd{}) continue;
            for (size_t j = 0; j < 2 * n; ++j) aug(r, j) -= f * aug(col, j);
        }
    }
    CxMatrix inv(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) inv(i, j) = aug(i, n + j);
    return inv;
}

/// MMSE weights by the explicit textbook route: H^H (H H^H + alpha I)^-1.
inline CxMatrix naive_mmse(const CxMatrix& h, double alpha) {
    const size_t n = h.rows();
    CxMatrix m(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            cxd s = i == j ? cxd{alpha, 0.0} : cxd{};
            for (size_t k = 0; k < h.cols(); ++k) s += h(i, k) * std::conj(h(j, k));
            m(i, j) = s;
        }
    return h.hermitian().multiply(naive_inverse(m));
}

/// Loop-written SNR/INR per user, straight from the defining sums.
struct NaiveSinr {
    std::vector<double> snr_lin;
    std::vector<double> inr_lin;
    std::vector<double> sinr_lin;
};

inline NaiveSinr naive_sinr(const CxMatrix& h_true, const CxMatrix& b_norm) {
    const size_t n = h_true.rows();
    NaiveSinr out;
    out.snr_lin.resize(n);
    out.inr_lin.assign(n, 0.0);
    out.sinr_lin.resize(n);
    for (size_t k = 0; k < n; ++k) {
        for (size_t l = 0; l < n; ++l) {
            cxd acc{};
            for (size_t e = 0; e < h_true.cols(); ++e) acc += h_true(k, e) * b_norm(e, l);
            const double p = std::norm(acc);
            if (l == k)
                out.snr_lin[k] = p;
            else
                out.inr_lin[k] += p;
        }
        out.sinr_lin[k] = out.snr_lin[k] / (1.0 + out.inr_lin[k]);
    }
    return out;
}

inline double max_relative_deviation(const CxMatrix& a, const CxMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("max_relative_deviation: shape mismatch");
    double scale = 0.0;
    for (const cxd& v : b.data()) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    double worst = 0.0;
    for (size_t i = 0; i < a.data().size(); ++i)
        worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]) / scale);
    return worst;
}

/// Central finite difference through an arbitrary scalar functional.
inline double finite_difference(const std::function<double(double)>& f, double x,
                                double step = 1e-5) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

/// abs/rel hybrid: relative once the gradient magnitude exceeds one.
inline double gradient_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

}  // namespace leosinr::verify
