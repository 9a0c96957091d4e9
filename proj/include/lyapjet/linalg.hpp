#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "lyapjet/errors.hpp"

// Dense d x d matrices and d-vectors for small d (a product dimension of 8
// already gives 2d = 16 block embeddings and d(d-1)/2 = 28 exterior squares,
// all comfortably in this range). Everything is double precision, row major,
// value semantics. Decompositions are one-sided Jacobi: at these sizes it is
// simpler and more accurate than blocked alternatives.

namespace lyapjet {

namespace detail {
inline void require(bool ok, const char* what) {
    if (!ok) throw ValidationError(what);
}
} // namespace detail

class Vec {
public:
    Vec() = default;
    explicit Vec(int dim) : a_(static_cast<size_t>(dim), 0.0) {
        detail::require(dim >= 1, "Vec: dim must be >= 1");
    }
    Vec(std::initializer_list<double> xs) : a_(xs) {
        detail::require(!a_.empty(), "Vec: empty initializer");
        for (double x : a_)
            detail::require(std::isfinite(x), "Vec: non-finite entry");
    }
    explicit Vec(std::vector<double> xs) : a_(std::move(xs)) {
        detail::require(!a_.empty(), "Vec: empty data");
        for (double x : a_)
            detail::require(std::isfinite(x), "Vec: non-finite entry");
    }

    static Vec ones(int dim) {
        Vec v(dim);
        std::fill(v.a_.begin(), v.a_.end(), 1.0);
        return v;
    }
    static Vec unit(int dim, int k) {
        Vec v(dim);
        v[k] = 1.0;
        return v;
    }

    int dim() const { return static_cast<int>(a_.size()); }
    double& operator[](int i) { return a_[static_cast<size_t>(i)]; }
    double operator[](int i) const { return a_[static_cast<size_t>(i)]; }
    const std::vector<double>& data() const { return a_; }

private:
    std::vector<double> a_;
};

class Mat {
public:
    Mat() = default;
    explicit Mat(int dim) : d_(dim), a_(static_cast<size_t>(dim) * dim, 0.0) {
        detail::require(dim >= 1, "Mat: dim must be >= 1");
    }

    static Mat identity(int dim) {
        Mat m(dim);
        for (int i = 0; i < dim; ++i) m(i, i) = 1.0;
        return m;
    }
    static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        std::vector<std::vector<double>> r;
        for (const auto& row : rows) r.emplace_back(row);
        return from_rows(r);
    }
    static Mat from_rows(const std::vector<std::vector<double>>& rows) {
        detail::require(!rows.empty(), "Mat: empty rows");
        const int d = static_cast<int>(rows.size());
        Mat m(d);
        for (int i = 0; i < d; ++i) {
            detail::require(static_cast<int>(rows[static_cast<size_t>(i)].size()) == d,
                            "Mat: rows must form a square matrix");
            for (int j = 0; j < d; ++j) {
                const double x = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
                detail::require(std::isfinite(x), "Mat: non-finite entry");
                m(i, j) = x;
            }
        }
        return m;
    }
    // Rotation by theta in the plane, counterclockwise.
    static Mat rotation(double theta) {
        const double c = std::cos(theta), s = std::sin(theta);
        return from_rows({{c, -s}, {s, c}});
    }
    static Mat diagonal(std::initializer_list<double> entries) {
        Mat m(static_cast<int>(entries.size()));
        int i = 0;
        for (double x : entries) m(i, i) = x, ++i;
        return m;
    }

    int dim() const { return d_; }
    double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * d_ + j]; }
    double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * d_ + j]; }
    const std::vector<double>& data() const { return a_; }

    bool all_finite() const {
        return std::all_of(a_.begin(), a_.end(), [](double x) { return std::isfinite(x); });
    }

private:
    int d_ = 0;
    std::vector<double> a_;
};

// --- elementwise / product arithmetic ---

inline Mat operator*(const Mat& x, const Mat& y) {
    detail::require(x.dim() == y.dim(), "Mat*Mat: dimension mismatch");
    const int d = x.dim();
    Mat r(d);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const double xik = x(i, k);
            if (xik == 0.0) continue;
            for (int j = 0; j < d; ++j) r(i, j) += xik * y(k, j);
        }
    return r;
}

inline Vec operator*(const Mat& m, const Vec& v) {
    detail::require(m.dim() == v.dim(), "Mat*Vec: dimension mismatch");
    const int d = m.dim();
    Vec r(d);
    for (int i = 0; i < d; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += m(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

inline Mat operator+(const Mat& x, const Mat& y) {
    detail::require(x.dim() == y.dim(), "Mat+Mat: dimension mismatch");
    Mat r = x;
    for (int i = 0; i < x.dim(); ++i)
        for (int j = 0; j < x.dim(); ++j) r(i, j) += y(i, j);
    return r;
}

inline Mat operator-(const Mat& x, const Mat& y) {
    detail::require(x.dim() == y.dim(), "Mat-Mat: dimension mismatch");
    Mat r = x;
    for (int i = 0; i < x.dim(); ++i)
        for (int j = 0; j < x.dim(); ++j) r(i, j) -= y(i, j);
    return r;
}

inline Mat operator*(double c, const Mat& m) {
    Mat r = m;
    for (int i = 0; i < m.dim(); ++i)
        for (int j = 0; j < m.dim(); ++j) r(i, j) *= c;
    return r;
}

inline Vec operator*(double c, const Vec& v) {
    Vec r = v;
    for (int i = 0; i < v.dim(); ++i) r[i] *= c;
    return r;
}

inline Vec operator+(const Vec& x, const Vec& y) {
    detail::require(x.dim() == y.dim(), "Vec+Vec: dimension mismatch");
    Vec r = x;
    for (int i = 0; i < x.dim(); ++i) r[i] += y[i];
    return r;
}

inline Vec operator-(const Vec& x, const Vec& y) {
    detail::require(x.dim() == y.dim(), "Vec-Vec: dimension mismatch");
    Vec r = x;
    for (int i = 0; i < x.dim(); ++i) r[i] -= y[i];
    return r;
}

inline Mat transpose(const Mat& m) {
    Mat r(m.dim());
    for (int i = 0; i < m.dim(); ++i)
        for (int j = 0; j < m.dim(); ++j) r(j, i) = m(i, j);
    return r;
}

inline double trace(const Mat& m) {
    double s = 0.0;
    for (int i = 0; i < m.dim(); ++i) s += m(i, i);
    return s;
}

inline double dot(const Vec& x, const Vec& y) {
    detail::require(x.dim() == y.dim(), "dot: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < x.dim(); ++i) s += x[i] * y[i];
    return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline Vec normalized(const Vec& v) {
    const double n = norm2(v);
    if (n == 0.0) throw ZeroVector("normalized: zero vector");
    return (1.0 / n) * v;
}

inline double frobenius_norm(const Mat& m) {
    // scaled to dodge overflow from squaring large entries
    double big = 0.0;
    for (double x : m.data()) big = std::max(big, std::abs(x));
    if (big == 0.0) return 0.0;
    double s = 0.0;
    for (double x : m.data()) {
        const double t = x / big;
        s += t * t;
    }
    return big * std::sqrt(s);
}

inline double max_abs(const Mat& m) {
    double big = 0.0;
    for (double x : m.data()) big = std::max(big, std::abs(x));
    return big;
}

// --- singular value decomposition ---

struct SvdResult {
    Mat left;   // orthonormal columns u_1..u_d
    Vec sigma;  // nonincreasing, >= 0
    Mat right;  // orthonormal columns v_1..v_d;  M = left . diag(sigma) . right^T
};

// One-sided Jacobi on the columns: right-rotations orthogonalize the columns
// of a working copy; the accumulated rotations are V, the column norms are
// the singular values. Input is pre-scaled by its largest entry so the Gram
// sums cannot overflow.
inline SvdResult svd(const Mat& m) {
    const int d = m.dim();
    const double scale = max_abs(m);
    SvdResult out{Mat::identity(d), Vec(d), Mat::identity(d)};
    if (scale == 0.0) return out;
    detail::require(std::isfinite(scale), "svd: non-finite entry");

    Mat g(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = m(i, j) / scale;
    Mat v = Mat::identity(d);

    constexpr double kOrthTol = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int i = 0; i < d - 1; ++i) {
            for (int j = i + 1; j < d; ++j) {
                double a = 0.0, b = 0.0, c = 0.0;
                for (int k = 0; k < d; ++k) {
                    a += g(k, i) * g(k, i);
                    b += g(k, j) * g(k, j);
                    c += g(k, i) * g(k, j);
                }
                if (std::abs(c) <= kOrthTol * std::sqrt(a * b)) continue;
                rotated = true;
                const double zeta = (b - a) / (2.0 * c);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (int k = 0; k < d; ++k) {
                    const double gi = g(k, i), gj = g(k, j);
                    g(k, i) = cs * gi - sn * gj;
                    g(k, j) = sn * gi + cs * gj;
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = cs * vi - sn * vj;
                    v(k, j) = sn * vi + cs * vj;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sig(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int k = 0; k < d; ++k) s += g(k, j) * g(k, j);
        sig[static_cast<size_t>(j)] = std::sqrt(s);
    }
    std::vector<int> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return sig[static_cast<size_t>(x)] > sig[static_cast<size_t>(y)]; });

    for (int p = 0; p < d; ++p) {
        const int j = order[static_cast<size_t>(p)];
        const double s = sig[static_cast<size_t>(j)];
        out.sigma[p] = s * scale;
        for (int k = 0; k < d; ++k) out.right(k, p) = v(k, j);
        if (s > 0.0) {
            for (int k = 0; k < d; ++k) out.left(k, p) = g(k, j) / s;
        } else {
            // zero column: fill in any unit vector orthogonal to the ones
            // already placed so the frame stays orthonormal
            for (int cand = 0; cand < d; ++cand) {
                Vec u = Vec::unit(d, cand);
                for (int q = 0; q < p; ++q) {
                    double proj = 0.0;
                    for (int k = 0; k < d; ++k) proj += out.left(k, q) * u[k];
                    for (int k = 0; k < d; ++k) u[k] -= proj * out.left(k, q);
                }
                const double un = norm2(u);
                if (un > 0.5) {
                    for (int k = 0; k < d; ++k) out.left(k, p) = u[k] / un;
                    break;
                }
            }
        }
    }
    return out;
}

inline double spectral_norm(const Mat& m) { return svd(m).sigma[0]; }

// Condition-based singularity cut-off shared by every inversion in the
// library (and by ensemble validation, which promises each atom passes it).
constexpr double kSingularRatio = 1e-12;

inline Mat invert(const Mat& m) {
    const SvdResult s = svd(m);
    const int d = m.dim();
    const double top = s.sigma[0];
    if (top == 0.0 || s.sigma[d - 1] / top < kSingularRatio)
        throw SingularMatrix("invert: singular value ratio below 1e-12");
    Mat r(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int k = 0; k < d; ++k) acc += s.right(i, k) * s.left(j, k) / s.sigma[k];
            r(i, j) = acc;
        }
    return r;
}

// --- projective distance ---

// delta(x, y) = sqrt(1 - cos^2(angle)), the sine of the angle between the
// lines through x and y. The cosine is clamped so rounding can never push
// the radicand negative.
inline double delta(const Vec& x, const Vec& y) {
    const double nx = norm2(x), ny = norm2(y);
    if (nx == 0.0 || ny == 0.0) throw ZeroVector("delta: zero vector");
    double c = dot(x, y) / (nx * ny);
    c = std::clamp(c, -1.0, 1.0);
    return std::sqrt(std::max(0.0, 1.0 - c * c));
}

struct DeltaBounds {
    double lower;  // ||x - chi.y|| / sqrt(2), chi the sign of <x,y>
    double upper;  // ||x - y||
    bool holds;    // lower <= delta(x,y) <= upper
};

// Two-sided comparison of delta with the aligned / plain chord lengths.
// All three quantities are evaluated from the same inner product, so the
// sandwich is stable up to a few ulps, which the check allows for.
inline DeltaBounds delta_equiv_bounds(const Vec& x, const Vec& y) {
    constexpr double kUnitTol = 1e-12;
    if (std::abs(norm2(x) - 1.0) > kUnitTol || std::abs(norm2(y) - 1.0) > kUnitTol)
        throw NotNormalised("delta_equiv_bounds: inputs must be unit vectors");
    double c = std::clamp(dot(x, y), -1.0, 1.0);
    const double dl = std::sqrt(std::max(0.0, 1.0 - c * c));
    DeltaBounds b{};
    b.lower = std::sqrt(std::max(0.0, 1.0 - std::abs(c)));  // == ||x - chi.y||/sqrt(2)
    b.upper = std::sqrt(std::max(0.0, 2.0 - 2.0 * c));      // == ||x - y||
    const double slack = 8e-16;
    b.holds = b.lower <= dl + slack && dl <= b.upper + slack;
    return b;
}

// --- exterior square ---

// Second compound matrix: the action of m on 2-vectors e_i ^ e_j (i < j),
// pairs ordered lexicographically. Its top singular value is sigma1.sigma2.
inline Mat compound2(const Mat& m) {
    const int d = m.dim();
    if (d < 2) throw DimensionTooSmall("compound2: needs dim >= 2");
    const int dd = d * (d - 1) / 2;
    Mat r(dd);
    int row = 0;
    for (int i = 0; i < d - 1; ++i)
        for (int j = i + 1; j < d; ++j, ++row) {
            int col = 0;
            for (int k = 0; k < d - 1; ++k)
                for (int l = k + 1; l < d; ++l, ++col)
                    r(row, col) = m(i, k) * m(j, l) - m(i, l) * m(j, k);
        }
    return r;
}

inline double exterior_square_norm(const Mat& m) {
    if (m.dim() < 2) throw DimensionTooSmall("exterior_square_norm: needs dim >= 2");
    const SvdResult s = svd(m);
    return s.sigma[0] * s.sigma[1];
}

} // namespace lyapjet
