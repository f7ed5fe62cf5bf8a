#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace starisac {

using cdouble = std::complex<double>;

class CVector {
  public:
    CVector() = default;
    explicit CVector(std::size_t n, cdouble fill = {}) : data_(n, fill) {}
    CVector(std::initializer_list<cdouble> values) : data_(values) {}
    explicit CVector(std::vector<cdouble> values) : data_(std::move(values)) {}

    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    cdouble &operator[](std::size_t i) { return data_[i]; }
    const cdouble &operator[](std::size_t i) const { return data_[i]; }
    cdouble *data() { return data_.data(); }
    const cdouble *data() const { return data_.data(); }
    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }
    const std::vector<cdouble> &values() const { return data_; }

    double squared_norm() const {
        double s = 0.0;
        for (const auto &v : data_) s += std::norm(v);
        return s;
    }
    double norm() const { return std::sqrt(squared_norm()); }

    CVector conj() const {
        CVector r(size());
        for (std::size_t i = 0; i < size(); ++i) r[i] = std::conj(data_[i]);
        return r;
    }

    CVector &operator+=(const CVector &o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] += o[i];
        return *this;
    }
    CVector &operator-=(const CVector &o) {
        check_same(o);
        for (std::size_t i = 0; i < size(); ++i) data_[i] -= o[i];
        return *this;
    }
    CVector &operator*=(cdouble s) {
        for (auto &v : data_) v *= s;
        return *this;
    }

  private:
    void check_same(const CVector &o) const {
        if (o.size() != size()) throw std::invalid_argument("CVector: length mismatch");
    }
    std::vector<cdouble> data_;
};

inline CVector operator+(CVector a, const CVector &b) { return a += b; }
inline CVector operator-(CVector a, const CVector &b) { return a -= b; }
inline CVector operator*(cdouble s, CVector a) { return a *= s; }
inline CVector operator*(CVector a, cdouble s) { return a *= s; }

// a^H b
inline cdouble dot(const CVector &a, const CVector &b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    cdouble s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline CVector hadamard(const CVector &a, const CVector &b) {
    if (a.size() != b.size()) throw std::invalid_argument("hadamard: length mismatch");
    CVector r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
    return r;
}

// Dense complex matrix, column-major storage.
class CMatrix {
  public:
    CMatrix() = default;
    CMatrix(std::size_t rows, std::size_t cols, cdouble fill = {}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    // Row-major literal: {{a, b}, {c, d}}
    CMatrix(std::initializer_list<std::initializer_list<cdouble>> rows) {
        rows_ = rows.size();
        cols_ = rows_ == 0 ? 0 : rows.begin()->size();
        data_.assign(rows_ * cols_, cdouble{});
        std::size_t i = 0;
        for (const auto &r : rows) {
            if (r.size() != cols_) throw std::invalid_argument("CMatrix: ragged initializer");
            std::size_t j = 0;
            for (const auto &v : r) (*this)(i, j++) = v;
            ++i;
        }
    }

    static CMatrix identity(std::size_t n) {
        CMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static CMatrix zeros(std::size_t r, std::size_t c) { return CMatrix(r, c); }
    static CMatrix diagonal(const CVector &d) {
        CMatrix m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
    // u v^H
    static CMatrix outer(const CVector &u, const CVector &v) {
        CMatrix m(u.size(), v.size());
        for (std::size_t j = 0; j < v.size(); ++j) {
            const cdouble cv = std::conj(v[j]);
            for (std::size_t i = 0; i < u.size(); ++i) m(i, j) = u[i] * cv;
        }
        return m;
    }
    static CMatrix outer(const CVector &u) { return outer(u, u); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool is_square() const { return rows_ == cols_; }
    cdouble &operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
    const cdouble &operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }
    cdouble *data() { return data_.data(); }
    const cdouble *data() const { return data_.data(); }
    cdouble *col_ptr(std::size_t j) { return data_.data() + j * rows_; }
    const cdouble *col_ptr(std::size_t j) const { return data_.data() + j * rows_; }

    CVector col(std::size_t j) const {
        CVector v(rows_);
        for (std::size_t i = 0; i < rows_; ++i) v[i] = (*this)(i, j);
        return v;
    }
    CVector diag() const {
        const std::size_t n = std::min(rows_, cols_);
        CVector v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = (*this)(i, i);
        return v;
    }

    CMatrix adjoint() const {
        CMatrix r(cols_, rows_);
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t i = 0; i < rows_; ++i) r(j, i) = std::conj((*this)(i, j));
        return r;
    }
    CMatrix transpose() const {
        CMatrix r(cols_, rows_);
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t i = 0; i < rows_; ++i) r(j, i) = (*this)(i, j);
        return r;
    }
    cdouble trace() const {
        if (!is_square()) throw std::invalid_argument("trace: matrix not square");
        cdouble s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) s += (*this)(i, i);
        return s;
    }
    double frobenius_norm() const {
        double s = 0.0;
        for (const auto &v : data_) s += std::norm(v);
        return std::sqrt(s);
    }
    double max_abs() const {
        double m = 0.0;
        for (const auto &v : data_) m = std::max(m, std::abs(v));
        return m;
    }
    bool all_finite() const {
        for (const auto &v : data_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

    // max|A - A^H|
    double hermitian_residual() const {
        if (!is_square()) return INFINITY;
        double r = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t i = 0; i <= j; ++i) r = std::max(r, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
        return r;
    }
    bool is_hermitian(double rel_tol = 1e-12) const {
        if (!is_square()) return false;
        return hermitian_residual() <= rel_tol * max_abs();
    }
    // (A + A^H)/2
    CMatrix hermitian_part() const {
        CMatrix r(rows_, cols_);
        for (std::size_t j = 0; j < cols_; ++j)
            for (std::size_t i = 0; i < rows_; ++i) r(i, j) = 0.5 * ((*this)(i, j) + std::conj((*this)(j, i)));
        return r;
    }

    CMatrix &operator+=(const CMatrix &o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    CMatrix &operator-=(const CMatrix &o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    CMatrix &operator*=(cdouble s) {
        for (auto &v : data_) v *= s;
        return *this;
    }
    // this += s * o
    void axpy(cdouble s, const CMatrix &o) {
        check_same(o);
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    }

    bool operator==(const CMatrix &o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

  private:
    void check_same(const CMatrix &o) const {
        if (o.rows_ != rows_ || o.cols_ != cols_) throw std::invalid_argument("CMatrix: shape mismatch");
    }
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<cdouble> data_;
};

inline CMatrix operator+(CMatrix a, const CMatrix &b) { return a += b; }
inline CMatrix operator-(CMatrix a, const CMatrix &b) { return a -= b; }
inline CMatrix operator*(cdouble s, CMatrix a) { return a *= s; }
inline CMatrix operator*(CMatrix a, cdouble s) { return a *= s; }

inline CMatrix operator*(const CMatrix &a, const CMatrix &b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
    CMatrix r(a.rows(), b.cols());
    for (std::size_t j = 0; j < b.cols(); ++j) {
        cdouble *rc = r.col_ptr(j);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const cdouble bkj = b(k, j);
            if (bkj == cdouble{}) continue;
            const cdouble *ac = a.col_ptr(k);
            for (std::size_t i = 0; i < a.rows(); ++i) rc[i] += ac[i] * bkj;
        }
    }
    return r;
}

inline CVector operator*(const CMatrix &a, const CVector &x) {
    if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    CVector r(a.rows());
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const cdouble *ac = a.col_ptr(k);
        for (std::size_t i = 0; i < a.rows(); ++i) r[i] += ac[i] * x[k];
    }
    return r;
}

// Re Tr(A B) without forming the product.
inline double real_trace_product(const CMatrix &a, const CMatrix &b) {
    if (a.cols() != b.rows() || a.rows() != b.cols()) throw std::invalid_argument("trace product: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) s += (a(i, k) * b(k, i)).real();
    return s;
}

// Re(u^H A u)
inline double quadratic_form(const CMatrix &a, const CVector &u) { return dot(u, a * u).real(); }

inline CMatrix kron(const CMatrix &a, const CMatrix &b) {
    CMatrix r(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::size_t ja = 0; ja < a.cols(); ++ja)
        for (std::size_t ia = 0; ia < a.rows(); ++ia) {
            const cdouble s = a(ia, ja);
            if (s == cdouble{}) continue;
            for (std::size_t jb = 0; jb < b.cols(); ++jb)
                for (std::size_t ib = 0; ib < b.rows(); ++ib) r(ia * b.rows() + ib, ja * b.cols() + jb) = s * b(ib, jb);
        }
    return r;
}

// column stacking
inline CVector vec(const CMatrix &a) {
    return CVector(std::vector<cdouble>(a.data(), a.data() + a.rows() * a.cols()));
}

inline CMatrix unvec(const CVector &v, std::size_t rows, std::size_t cols) {
    if (v.size() != rows * cols) throw std::invalid_argument("unvec: length does not match rows*cols");
    CMatrix r(rows, cols);
    std::copy(v.begin(), v.end(), r.data());
    return r;
}

inline void require_hermitian(const CMatrix &a, const char *what) {
    if (!a.is_square() || !a.all_finite() || !a.is_hermitian(1e-12))
        throw std::invalid_argument(std::string(what) + ": input is not a finite Hermitian matrix");
}

struct EigenDecomposition {
    std::vector<double> values; // ascending
    CMatrix vectors;            // columns
};

namespace detail {

// Hermitian -> real symmetric tridiagonal (d, e) with unitary Z such that A = Z T Z^H.
// e[i] couples i and i+1.
inline void tridiagonalize(CMatrix &a, std::vector<double> &d, std::vector<double> &e, CMatrix &z) {
    const std::size_t n = a.rows();
    z = CMatrix::identity(n);
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    std::vector<cdouble> off(n, 0.0), v(n), p(n), w(n);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        double tail = 0.0;
        for (std::size_t i = k + 2; i < n; ++i) tail += std::norm(a(i, k));
        const cdouble x0 = a(k + 1, k);
        if (tail == 0.0) {
            off[k] = x0;
            continue;
        }
        const double xnorm = std::sqrt(tail + std::norm(x0));
        const double ax0 = std::abs(x0);
        const cdouble phase = ax0 > 0.0 ? x0 / ax0 : cdouble(1.0);
        const cdouble alpha = -phase * xnorm;
        for (std::size_t i = k + 1; i < n; ++i) v[i] = a(i, k);
        v[k + 1] -= alpha;
        double vn2 = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) vn2 += std::norm(v[i]);
        const double tau = 2.0 / vn2;
        // p = tau * A22 v
        for (std::size_t i = k + 1; i < n; ++i) p[i] = 0.0;
        for (std::size_t j = k + 1; j < n; ++j) {
            const cdouble vj = v[j];
            const cdouble *aj = a.col_ptr(j);
            for (std::size_t i = k + 1; i < n; ++i) p[i] += aj[i] * vj;
        }
        cdouble vhp = 0.0;
        for (std::size_t i = k + 1; i < n; ++i) {
            p[i] *= tau;
            vhp += std::conj(v[i]) * p[i];
        }
        const double kk = 0.5 * tau * vhp.real();
        for (std::size_t i = k + 1; i < n; ++i) w[i] = p[i] - kk * v[i];
        for (std::size_t j = k + 1; j < n; ++j) {
            const cdouble cwj = std::conj(w[j]), cvj = std::conj(v[j]);
            cdouble *aj = a.col_ptr(j);
            for (std::size_t i = k + 1; i < n; ++i) aj[i] -= v[i] * cwj + w[i] * cvj;
        }
        off[k] = alpha;
        // z <- z H
        for (std::size_t r = 0; r < n; ++r) {
            cdouble s = 0.0;
            for (std::size_t j = k + 1; j < n; ++j) s += z(r, j) * v[j];
            s *= tau;
            for (std::size_t j = k + 1; j < n; ++j) z(r, j) -= s * std::conj(v[j]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = a(i, i).real();
    // diagonal unitary scaling makes the off-diagonal real and nonnegative
    cdouble dk = 1.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double m = std::abs(off[k]);
        e[k] = m;
        if (m > 0.0) dk *= off[k] / m;
        if (dk != cdouble(1.0)) {
            cdouble *zc = z.col_ptr(k + 1);
            for (std::size_t r = 0; r < n; ++r) zc[r] *= dk;
        }
    }
}

// Symmetric tridiagonal QL with implicit shifts (tql2), rotating complex columns of z.
inline void tql2(std::vector<double> &d, std::vector<double> &e, CMatrix &z) {
    const std::size_t n = d.size();
    if (n == 0) return;
    double f = 0.0, tst1 = 0.0;
    const double eps = std::ldexp(1.0, -52);
    e[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        std::size_t m = l;
        while (m + 1 < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            ++m;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > 60) throw std::runtime_error("eigensolver: QL iteration did not converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                const double dl1 = d[l + 1];
                double h = g - d[l];
                for (std::size_t i = l + 2; i < n; ++i) d[i] -= h;
                f += h;
                p = d[m];
                double c = 1.0, c2 = 1.0, c3 = 1.0;
                const double el1 = e[l + 1];
                double s = 0.0, s2 = 0.0;
                for (std::size_t ii = m; ii-- > l;) {
                    const std::size_t i = ii;
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    cdouble *zi = z.col_ptr(i);
                    cdouble *zi1 = z.col_ptr(i + 1);
                    for (std::size_t k = 0; k < n; ++k) {
                        const cdouble hk = zi1[k];
                        zi1[k] = s * zi[k] + c * hk;
                        zi[k] = c * zi[k] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] = d[l] + f;
        e[l] = 0.0;
    }
}

// No validation; caller guarantees a Hermitian input.
inline EigenDecomposition hermitian_eig_unchecked(CMatrix a) {
    const std::size_t n = a.rows();
    EigenDecomposition out;
    if (n == 1) {
        out.values = {a(0, 0).real()};
        out.vectors = CMatrix::identity(1);
        return out;
    }
    std::vector<double> d, e;
    CMatrix z;
    tridiagonalize(a, d, e, z);
    tql2(d, e, z);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return d[x] < d[y]; });
    out.values.resize(n);
    out.vectors = CMatrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = d[order[j]];
        std::copy(z.col_ptr(order[j]), z.col_ptr(order[j]) + n, out.vectors.col_ptr(j));
    }
    return out;
}

inline CVector phase_normalized(CVector u) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
        if (std::abs(u[i]) > std::abs(u[best]) * (1.0 + 1e-12)) best = i;
    const double m = std::abs(u[best]);
    if (m > 0.0) {
        const cdouble ph = std::conj(u[best]) / m;
        u *= ph;
        u[best] = cdouble(std::abs(u[best]), 0.0);
    }
    return u;
}

inline CMatrix psd_clip_unchecked(const CMatrix &a) {
    const std::size_t n = a.rows();
    auto ed = hermitian_eig_unchecked(a);
    CMatrix r(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double lam = ed.values[k];
        if (lam <= 0.0) continue;
        const cdouble *u = ed.vectors.col_ptr(k);
        for (std::size_t j = 0; j < n; ++j) {
            const cdouble cu = lam * std::conj(u[j]);
            cdouble *rc = r.col_ptr(j);
            for (std::size_t i = 0; i < n; ++i) rc[i] += u[i] * cu;
        }
    }
    return r.hermitian_part();
}

} // namespace detail

inline EigenDecomposition hermitian_eig(const CMatrix &a) {
    require_hermitian(a, "hermitian_eig");
    if (a.rows() == 0) throw std::invalid_argument("hermitian_eig: empty matrix");
    return detail::hermitian_eig_unchecked(a.hermitian_part());
}

struct EigenPair {
    double value;
    CVector vector;
};

inline EigenPair hermitian_eig_max(const CMatrix &a) {
    auto ed = hermitian_eig(a);
    const std::size_t n = a.rows();
    return {ed.values[n - 1], detail::phase_normalized(ed.vectors.col(n - 1))};
}

inline CMatrix psd_project(const CMatrix &a) {
    require_hermitian(a, "psd_project");
    if (a.rows() == 0) return a;
    return detail::psd_clip_unchecked(a.hermitian_part());
}

// Frobenius distance of a PSD matrix to its best rank-one approximation, relative to its norm.
inline double rank_one_residual(const CMatrix &a) {
    const double nf = a.frobenius_norm();
    if (nf == 0.0) return 0.0;
    auto ed = detail::hermitian_eig_unchecked(a.hermitian_part());
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < ed.values.size(); ++i) s += ed.values[i] * ed.values[i];
    return std::sqrt(s) / nf;
}

} // namespace starisac
