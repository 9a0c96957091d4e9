#pragma once

#include <lyapjet/linalg.hpp>
#include <lyapjet/rng.hpp>

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

// Small shared fixtures for the unit tests. Everything draws from named
// RngStreams so each TEST_CASE is reproducible in isolation.
namespace testutil {

using lyapjet::Mat;
using lyapjet::RngStream;
using lyapjet::Vec;

inline Mat random_matrix(int d, double scale, RngStream& rng) {
    Mat m(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = scale * rng.symmetric();
    return m;
}

// rejection keeps the condition number below ~1e3 so inverse-based
// comparisons stay meaningful
inline Mat random_invertible(int d, RngStream& rng) {
    for (;;) {
        Mat m = random_matrix(d, 1.0, rng);
        const lyapjet::SvdResult s = lyapjet::svd(m);
        if (s.sigma[0] > 0.0 && s.sigma[d - 1] / s.sigma[0] > 1e-3) return m;
    }
}

inline Vec random_unit(int d, RngStream& rng) {
    for (;;) {
        Vec v(d);
        for (int i = 0; i < d; ++i) v[i] = rng.symmetric();
        if (lyapjet::norm2(v) > 1e-3) return lyapjet::normalized(v);
    }
}

inline Mat reconstruct(const lyapjet::SvdResult& s) {
    const int d = s.left.dim();
    Mat scaled(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) scaled(i, j) = s.left(i, j) * s.sigma[j];
    return scaled * lyapjet::transpose(s.right);
}

inline double max_entry_gap(const Mat& a, const Mat& b) { return lyapjet::max_abs(a - b); }

// worst deviation of Q^T Q from the identity
inline double frame_error(const Mat& q) {
    return lyapjet::max_abs(lyapjet::transpose(q) * q - Mat::identity(q.dim()));
}

inline std::vector<std::pair<Mat, Mat>> random_pairs(int d, int n, double b_scale, RngStream& rng) {
    std::vector<std::pair<Mat, Mat>> out;
    out.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k)
        out.emplace_back(random_invertible(d, rng), random_matrix(d, b_scale, rng));
    return out;
}

} // namespace testutil
