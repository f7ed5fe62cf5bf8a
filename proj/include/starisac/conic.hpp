#pragma once

// Small conic programs: minimize a real-linear objective over complex Hermitian PSD matrix
// variables and free real scalars, subject to real-linear equalities and inequalities.
//
// Internally: standard form  min c'x  s.t.  Ax = b, x in K, with K a product of
// PSD cones (isometric half-vectorization of Hermitian blocks), nonnegative slacks and free
// coordinates.  Solved by ADMM on the split x = z, where x lives on the affine set and z
// in the cone; the affine projection reuses one Cholesky factor of AA'.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "numerics.hpp"

namespace starisac::conic {

struct PsdVar {
    std::size_t index;
};
struct ScalarVar {
    std::size_t index;
};

enum class Sense { Eq, Le, Ge };

inline const char *to_string(Sense s) { return s == Sense::Eq ? "==" : (s == Sense::Le ? "<=" : ">="); }

// sum_v Re Tr(C_v X_v) + sum_s a_s x_s + constant
struct LinearForm {
    std::vector<std::pair<std::size_t, CMatrix>> psd_terms;
    std::vector<std::pair<std::size_t, double>> scalar_terms;
    double constant = 0.0;

    LinearForm &add(PsdVar v, CMatrix coeff) {
        psd_terms.emplace_back(v.index, std::move(coeff));
        return *this;
    }
    LinearForm &add(ScalarVar v, double coeff) {
        scalar_terms.emplace_back(v.index, coeff);
        return *this;
    }
    LinearForm &add_constant(double c) {
        constant += c;
        return *this;
    }
};

struct Constraint {
    LinearForm form;
    Sense sense;
    double rhs;
    std::string label;
};

class ConicProblem {
  public:
    PsdVar add_psd(std::string name, std::size_t dim) {
        if (dim == 0) throw std::invalid_argument("add_psd: dimension must be >= 1");
        psd_.push_back({std::move(name), dim});
        return {psd_.size() - 1};
    }
    ScalarVar add_scalar(std::string name) {
        scalar_.push_back(std::move(name));
        return {scalar_.size() - 1};
    }
    void minimize(LinearForm f) { objective_ = std::move(f); }
    void add_constraint(LinearForm f, Sense s, double rhs, std::string label = {}) {
        constraints_.push_back({std::move(f), s, rhs, std::move(label)});
    }

    struct PsdInfo {
        std::string name;
        std::size_t dim;
    };
    const std::vector<PsdInfo> &psd_vars() const { return psd_; }
    const std::vector<std::string> &scalar_vars() const { return scalar_; }
    const LinearForm &objective() const { return objective_; }
    const std::vector<Constraint> &constraints() const { return constraints_; }

    void validate() const {
        auto check_form = [&](const LinearForm &f, const std::string &where) {
            for (const auto &[v, c] : f.psd_terms) {
                if (v >= psd_.size()) throw std::invalid_argument(where + ": undeclared PSD variable");
                if (c.rows() != psd_[v].dim || c.cols() != psd_[v].dim)
                    throw std::invalid_argument(where + ": coefficient size does not match variable '" + psd_[v].name + "'");
                if (!c.all_finite() || !c.is_hermitian(1e-10)) throw std::invalid_argument(where + ": coefficient matrix is not Hermitian");
            }
            for (const auto &[v, a] : f.scalar_terms) {
                if (v >= scalar_.size()) throw std::invalid_argument(where + ": undeclared scalar variable");
                if (!std::isfinite(a)) throw std::invalid_argument(where + ": non-finite scalar coefficient");
            }
            if (!std::isfinite(f.constant)) throw std::invalid_argument(where + ": non-finite constant");
        };
        check_form(objective_, "objective");
        for (std::size_t i = 0; i < constraints_.size(); ++i) {
            const auto &c = constraints_[i];
            const std::string where = "constraint " + std::to_string(i) + (c.label.empty() ? "" : " (" + c.label + ")");
            check_form(c.form, where);
            if (!std::isfinite(c.rhs)) throw std::invalid_argument(where + ": non-finite right-hand side");
        }
    }

  private:
    std::vector<PsdInfo> psd_;
    std::vector<std::string> scalar_;
    LinearForm objective_;
    std::vector<Constraint> constraints_;
};

enum class Status { Optimal, Infeasible, Unbounded, MaxIters };

inline const char *to_string(Status s) {
    switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::MaxIters: return "max_iters";
    }
    return "?";
}

enum class Method { Admm, InteriorPoint };

struct Settings {
    Method method = Method::Admm;
    double tol = 1e-7;
    std::size_t max_iters = 100000;
    double infeasibility_tol = 1e-7;
    double relaxation = 1.6;
    double rho = 0.1;
    bool adaptive_rho = true;
    std::size_t check_every = 10;
    std::size_t scaling_iters = 15;
    std::size_t ipm_max_iters = 200;
};

// Internal primal point and cone dual; reusable across problems with the same layout.
struct WarmStart {
    std::vector<double> x, s;
};

struct ConicSolution {
    Status status = Status::MaxIters;
    std::vector<CMatrix> psd_values;
    std::vector<double> scalar_values;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    std::size_t iterations = 0;
    // A'y + s = c; y indexed by constraint
    std::vector<double> constraint_duals;
    // primal infeasibility: y with A'y in K*, b'y = -1 (standard-form rows, indexed by constraint)
    std::vector<double> certificate;
    WarmStart warm;

    const CMatrix &value(PsdVar v) const { return psd_values.at(v.index); }
    double value(ScalarVar v) const { return scalar_values.at(v.index); }
};

namespace detail {

struct Block {
    enum Kind { Psd, Nonneg, Free } kind;
    std::size_t offset, size, dim;
};

inline std::size_t svec_size(std::size_t d) { return d * d; }

inline void svec_coefficients(const CMatrix &c, std::size_t offset, std::vector<double> &dense) {
    const std::size_t d = c.rows();
    const std::size_t pairs = d * (d - 1) / 2;
    constexpr double r2 = 1.4142135623730951;
    for (std::size_t i = 0; i < d; ++i) dense[offset + i] += c(i, i).real();
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j, ++p) {
            const cdouble cij = 0.5 * (c(i, j) + std::conj(c(j, i)));
            dense[offset + d + p] += r2 * cij.real();
            dense[offset + d + pairs + p] += r2 * cij.imag();
        }
}

inline void unpack(const double *x, std::size_t d, CMatrix &m) {
    const std::size_t pairs = d * (d - 1) / 2;
    constexpr double ir2 = 0.7071067811865476;
    for (std::size_t i = 0; i < d; ++i) m(i, i) = x[i];
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j, ++p) {
            const cdouble v(ir2 * x[d + p], ir2 * x[d + pairs + p]);
            m(i, j) = v;
            m(j, i) = std::conj(v);
        }
}

inline void pack(const CMatrix &m, std::size_t d, double *x) {
    const std::size_t pairs = d * (d - 1) / 2;
    constexpr double r2 = 1.4142135623730951;
    for (std::size_t i = 0; i < d; ++i) x[i] = m(i, i).real();
    std::size_t p = 0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j, ++p) {
            const cdouble v = 0.5 * (m(i, j) + std::conj(m(j, i)));
            x[d + p] = r2 * v.real();
            x[d + pairs + p] = r2 * v.imag();
        }
}

// Euclidean projection of a PSD block (in place)
inline void project_psd_block(double *x, std::size_t d, CMatrix &work) {
    if (d == 1) {
        x[0] = std::max(0.0, x[0]);
        return;
    }
    unpack(x, d, work);
    auto ed = starisac::detail::hermitian_eig_unchecked(work);
    std::size_t npos = 0;
    for (double v : ed.values)
        if (v > 0.0) ++npos;
    if (npos == d) return;
    CMatrix r(d, d);
    if (npos > 0) {
        for (std::size_t k = d - npos; k < d; ++k) {
            const double lam = ed.values[k];
            const cdouble *u = ed.vectors.col_ptr(k);
            for (std::size_t j = 0; j < d; ++j) {
                const cdouble cu = lam * std::conj(u[j]);
                cdouble *rc = r.col_ptr(j);
                for (std::size_t i = 0; i < d; ++i) rc[i] += u[i] * cu;
            }
        }
    }
    pack(r, d, x);
}

inline void project_cone(const std::vector<Block> &blocks, double *x, CMatrix &work) {
    for (const auto &b : blocks) {
        if (b.kind == Block::Psd) {
            if (work.rows() != b.dim) work = CMatrix(b.dim, b.dim);
            project_psd_block(x + b.offset, b.dim, work);
        } else if (b.kind == Block::Nonneg) {
            for (std::size_t i = 0; i < b.size; ++i) x[b.offset + i] = std::max(0.0, x[b.offset + i]);
        }
    }
}

// projection onto the dual cone (free coordinates map to zero)
inline void project_dual_cone(const std::vector<Block> &blocks, double *x, CMatrix &work) {
    for (const auto &b : blocks) {
        if (b.kind == Block::Free) {
            for (std::size_t i = 0; i < b.size; ++i) x[b.offset + i] = 0.0;
        } else if (b.kind == Block::Psd) {
            if (work.rows() != b.dim) work = CMatrix(b.dim, b.dim);
            project_psd_block(x + b.offset, b.dim, work);
        } else {
            for (std::size_t i = 0; i < b.size; ++i) x[b.offset + i] = std::max(0.0, x[b.offset + i]);
        }
    }
}

struct Csr {
    std::size_t rows = 0, cols = 0;
    std::vector<std::size_t> ptr{0};
    std::vector<std::size_t> idx;
    std::vector<double> val;

    void mul(const double *x, double *y) const {
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) s += val[k] * x[idx[k]];
            y[i] = s;
        }
    }
    // y = A' x
    void mul_t(const double *x, double *y) const {
        std::fill(y, y + cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) y[idx[k]] += val[k] * xi;
        }
    }
    // |A| |x| row sums
    void abs_mul(const double *x, double *y) const {
        for (std::size_t i = 0; i < rows; ++i) {
            double s = 0.0;
            for (std::size_t k = ptr[i]; k < ptr[i + 1]; ++k) s += std::abs(val[k] * x[idx[k]]);
            y[i] = s;
        }
    }
};

inline double inf_norm(const std::vector<double> &v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline double dotv(const std::vector<double> &a, const std::vector<double> &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Dense Cholesky of an SPD matrix (row-major, lower factor in place)
struct Cholesky {
    std::size_t n = 0;
    std::vector<double> l;

    // solve L L' x = b in place
    void solve(double *b) const {
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            const double *li = l.data() + i * n;
            for (std::size_t k = 0; k < i; ++k) s -= li[k] * b[k];
            b[i] = s / li[i];
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = b[i];
            for (std::size_t k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
            b[i] = s / l[i * n + i];
        }
    }
};

struct Standard {
    std::vector<Block> blocks;
    std::vector<std::size_t> psd_offset, scalar_offset, slack_offset; // slack_offset[row] or npos
    std::size_t n = 0;
    Csr A;
    std::vector<double> b, c;
    double c0 = 0.0;
};

constexpr std::size_t npos = static_cast<std::size_t>(-1);

inline Standard to_standard(const ConicProblem &p) {
    Standard st;
    for (const auto &v : p.psd_vars()) {
        st.psd_offset.push_back(st.n);
        st.blocks.push_back({Block::Psd, st.n, svec_size(v.dim), v.dim});
        st.n += svec_size(v.dim);
    }
    if (!p.scalar_vars().empty()) {
        st.blocks.push_back({Block::Free, st.n, p.scalar_vars().size(), 0});
        for (std::size_t i = 0; i < p.scalar_vars().size(); ++i) st.scalar_offset.push_back(st.n++);
    }
    std::size_t nineq = 0;
    for (const auto &c : p.constraints())
        if (c.sense != Sense::Eq) ++nineq;
    if (nineq) st.blocks.push_back({Block::Nonneg, st.n, nineq, 0});
    for (const auto &c : p.constraints()) st.slack_offset.push_back(c.sense == Sense::Eq ? npos : st.n++);

    std::vector<double> dense(st.n, 0.0);
    auto densify = [&](const LinearForm &f) {
        std::fill(dense.begin(), dense.end(), 0.0);
        for (const auto &[v, coeff] : f.psd_terms) svec_coefficients(coeff, st.psd_offset[v], dense);
        for (const auto &[v, a] : f.scalar_terms) dense[st.scalar_offset[v]] += a;
    };
    densify(p.objective());
    st.c = dense;
    st.c0 = p.objective().constant;
    st.A.cols = st.n;
    for (std::size_t r = 0; r < p.constraints().size(); ++r) {
        const auto &con = p.constraints()[r];
        densify(con.form);
        if (st.slack_offset[r] != npos) dense[st.slack_offset[r]] = con.sense == Sense::Le ? 1.0 : -1.0;
        for (std::size_t j = 0; j < st.n; ++j)
            if (dense[j] != 0.0) {
                st.A.idx.push_back(j);
                st.A.val.push_back(dense[j]);
            }
        st.A.ptr.push_back(st.A.idx.size());
        st.b.push_back(con.rhs - con.form.constant);
    }
    st.A.rows = p.constraints().size();
    return st;
}

inline double clamp_scale(double v) { return std::clamp(v, 1e-4, 1e4); }

struct Unscale {
    const std::vector<double> &D, &E;
    double sigma;
};

// Per-row relative KKT test in the caller's units; shared by both methods.
struct KktReport {
    double pres = 0.0, pviol = 0.0, dres = 0.0, dscale = 0.0, gap = 0.0, gscale = 0.0;

    bool optimal(double tol) const { return pviol <= 0.1 * tol && dres <= tol * dscale && gap <= 0.1 * tol * gscale; }
};

inline KktReport kkt_report(const Csr &A, const std::vector<double> &b, const std::vector<double> &c, const std::vector<std::size_t> &rows,
                            const std::vector<double> &x, const std::vector<double> &y, const std::vector<double> &s, const Unscale &u,
                            double cmax_u) {
    const std::size_t m = A.rows, n = A.cols;
    KktReport r;
    std::vector<double> ax(m), absax(m), aty(n);
    A.mul(x.data(), ax.data());
    A.abs_mul(x.data(), absax.data());
    for (std::size_t i = 0; i < m; ++i) {
        const double e = u.E[rows[i]];
        const double ri = (ax[i] - b[i]) / e;
        r.pres = std::max(r.pres, std::abs(ri));
        r.pviol = std::max(r.pviol, std::abs(ri) / (1.0 + std::max(std::abs(b[i]), absax[i]) / e));
    }
    A.mul_t(y.data(), aty.data());
    double aty_max = 0.0, s_max = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double sc = u.D[j] * u.sigma;
        r.dres = std::max(r.dres, std::abs((aty[j] + s[j] - c[j]) / sc));
        aty_max = std::max(aty_max, std::abs(aty[j] / sc));
        s_max = std::max(s_max, std::abs(s[j] / sc));
    }
    r.dscale = 1.0 + std::max({cmax_u, aty_max, s_max});
    double cx = 0.0, by = 0.0;
    for (std::size_t j = 0; j < n; ++j) cx += c[j] * x[j];
    for (std::size_t i = 0; i < m; ++i) by += b[i] * y[i];
    cx /= u.sigma;
    by /= u.sigma;
    r.gap = std::abs(cx - by);
    r.gscale = 1.0 + std::abs(cx) + std::abs(by);
    return r;
}

// Dense LU with partial pivoting; solves in place, returns false when singular.
inline bool lu_solve(std::vector<double> a, std::size_t n, std::vector<double> &rhs) {
    std::vector<std::size_t> piv(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
        if (a[p * n + k] == 0.0) return false;
        piv[k] = p;
        if (p != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
            std::swap(rhs[k], rhs[p]);
        }
        const double inv = 1.0 / a[k * n + k];
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i * n + k] * inv;
            if (f == 0.0) continue;
            a[i * n + k] = f;
            for (std::size_t j = k + 1; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
            rhs[i] -= f * rhs[k];
        }
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i * n + j] * rhs[j];
        rhs[i] = s / a[i * n + i];
    }
    return true;
}

inline CMatrix hermitian_product_sym(const CMatrix &a, const CMatrix &b) {
    // (a b + (a b)^H) / 2
    CMatrix p = a * b;
    CMatrix r = p;
    r += p.adjoint();
    r *= 0.5;
    return r;
}

// largest alpha with x + alpha dx in the cone interior boundary (infinity when unbounded)
inline double psd_step_limit(const CMatrix &X, const CMatrix &dX) {
    auto ed = starisac::detail::hermitian_eig_unchecked(X);
    const std::size_t d = X.rows();
    CMatrix isq(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        const double lam = std::max(ed.values[k], 1e-300);
        const double f = 1.0 / std::sqrt(lam);
        const cdouble *u = ed.vectors.col_ptr(k);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < d; ++i) isq(i, j) += f * u[i] * std::conj(u[j]);
    }
    const CMatrix w = (isq * dX * isq).hermitian_part();
    const double lmin = starisac::detail::hermitian_eig_unchecked(w).values.front();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

inline CMatrix hermitian_inverse(const CMatrix &S) {
    auto ed = starisac::detail::hermitian_eig_unchecked(S);
    const std::size_t d = S.rows();
    CMatrix r(d, d);
    for (std::size_t k = 0; k < d; ++k) {
        const double f = 1.0 / ed.values[k];
        const cdouble *u = ed.vectors.col_ptr(k);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t i = 0; i < d; ++i) r(i, j) += f * u[i] * std::conj(u[j]);
    }
    return r;
}

struct IpmResult {
    Status status = Status::MaxIters;
    std::vector<double> x, y, s, cert;
    std::size_t iterations = 0;
    KktReport kkt;
};

// Infeasible-start primal-dual path following with the HKM direction and Mehrotra correction,
// on  min c'x  s.t.  Ax = b,  x in K  (scaled units).
inline IpmResult interior_point(const std::vector<Block> &blocks, const Csr &A, const std::vector<double> &b, const std::vector<double> &c,
                                const std::vector<std::size_t> &rows, const Unscale &unscale, double cmax_u, const Settings &settings) {
    const std::size_t m = A.rows, n = A.cols;
    IpmResult res;
    res.x.assign(n, 0.0);
    res.y.assign(m, 0.0);
    res.s.assign(n, 0.0);

    // per-block row coefficient matrices
    struct PsdRows {
        std::size_t offset, dim;
        std::vector<std::size_t> row;
        std::vector<CMatrix> coef;
    };
    std::vector<PsdRows> psd;
    std::vector<std::size_t> nonneg, freev;
    std::vector<int> block_of(n, -1);
    for (const auto &blk : blocks) {
        if (blk.kind == Block::Psd) {
            for (std::size_t j = 0; j < blk.size; ++j) block_of[blk.offset + j] = static_cast<int>(psd.size());
            psd.push_back({blk.offset, blk.dim, {}, {}});
        } else if (blk.kind == Block::Nonneg) {
            for (std::size_t j = 0; j < blk.size; ++j) nonneg.push_back(blk.offset + j);
        } else {
            for (std::size_t j = 0; j < blk.size; ++j) freev.push_back(blk.offset + j);
        }
    }
    {
        std::vector<std::vector<double>> slices(psd.size());
        for (std::size_t i = 0; i < m; ++i) {
            std::vector<bool> touched(psd.size(), false);
            for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
                const int bi = block_of[A.idx[k]];
                if (bi < 0) continue;
                auto &sl = slices[bi];
                if (!touched[bi]) {
                    sl.assign(svec_size(psd[bi].dim), 0.0);
                    touched[bi] = true;
                }
                sl[A.idx[k] - psd[bi].offset] = A.val[k];
            }
            for (std::size_t bi = 0; bi < psd.size(); ++bi)
                if (touched[bi]) {
                    CMatrix cm(psd[bi].dim, psd[bi].dim);
                    unpack(slices[bi].data(), psd[bi].dim, cm);
                    psd[bi].row.push_back(i);
                    psd[bi].coef.push_back(std::move(cm));
                }
        }
    }
    // dense column access for nonneg and free coordinates
    std::vector<std::vector<std::pair<std::size_t, double>>> col(n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k)
            if (block_of[A.idx[k]] < 0) col[A.idx[k]].push_back({i, A.val[k]});

    const std::size_t nf = freev.size();
    double nu = static_cast<double>(nonneg.size());
    for (const auto &p : psd) nu += static_cast<double>(p.dim);

    // starting point
    double anorm = 0.0;
    for (double v : A.val) anorm = std::max(anorm, std::abs(v));
    const double xi = 10.0 * std::max(1.0, inf_norm(b) / std::max(anorm, 1e-12));
    const double eta = 10.0 * std::max({1.0, inf_norm(c), anorm});
    std::vector<CMatrix> X, S;
    for (const auto &p : psd) {
        X.push_back(xi * CMatrix::identity(p.dim));
        S.push_back(eta * CMatrix::identity(p.dim));
    }
    std::vector<double> &x = res.x, &y = res.y, &s = res.s;
    for (std::size_t j : nonneg) {
        x[j] = xi;
        s[j] = eta;
    }
    auto sync = [&]() {
        for (std::size_t bi = 0; bi < psd.size(); ++bi) {
            pack(X[bi], psd[bi].dim, x.data() + psd[bi].offset);
            pack(S[bi], psd[bi].dim, s.data() + psd[bi].offset);
        }
    };
    sync();

    std::vector<double> rp(m), rd(n), aty(n), ax(m), tmp(n);
    const std::size_t dim = m + nf;
    double prev_merit = std::numeric_limits<double>::infinity();
    std::size_t stalls = 0;
    CMatrix work;
    for (std::size_t it = 0; it <= settings.ipm_max_iters; ++it) {
        res.iterations = it;
        A.mul(x.data(), ax.data());
        for (std::size_t i = 0; i < m; ++i) rp[i] = b[i] - ax[i];
        A.mul_t(y.data(), aty.data());
        for (std::size_t j = 0; j < n; ++j) rd[j] = c[j] - aty[j] - s[j];
        double xs = 0.0;
        for (std::size_t bi = 0; bi < psd.size(); ++bi) xs += real_trace_product(X[bi], S[bi]);
        for (std::size_t j : nonneg) xs += x[j] * s[j];
        const double mu = nu > 0.0 ? xs / nu : 0.0;

        res.kkt = kkt_report(A, b, c, rows, x, y, s, unscale, cmax_u);
        if (res.kkt.optimal(settings.tol)) {
            res.status = Status::Optimal;
            return res;
        }
        // infeasibility rays
        {
            double by = 0.0;
            for (std::size_t i = 0; i < m; ++i) by += b[i] * y[i];
            if (by > 0.0) {
                std::vector<double> yc(m), v(n);
                for (std::size_t i = 0; i < m; ++i) yc[i] = -y[i] / by;
                A.mul_t(yc.data(), v.data());
                std::vector<double> proj = v;
                project_dual_cone(blocks, proj.data(), work);
                double dist = 0.0;
                for (std::size_t j = 0; j < n; ++j) dist = std::max(dist, std::abs(proj[j] - v[j]));
                if (dist <= settings.infeasibility_tol) {
                    res.status = Status::Infeasible;
                    res.cert = yc;
                    return res;
                }
            }
            double cx = 0.0;
            for (std::size_t j = 0; j < n; ++j) cx += c[j] * x[j];
            if (cx < 0.0) {
                std::vector<double> xc(n), v(m);
                for (std::size_t j = 0; j < n; ++j) xc[j] = -x[j] / cx;
                A.mul(xc.data(), v.data());
                if (inf_norm(v) <= settings.infeasibility_tol) {
                    std::vector<double> proj = xc;
                    project_cone(blocks, proj.data(), work);
                    double dist = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dist = std::max(dist, std::abs(proj[j] - xc[j]));
                    if (dist <= settings.infeasibility_tol) {
                        res.status = Status::Unbounded;
                        return res;
                    }
                }
            }
        }
        if (it == settings.ipm_max_iters) break;
        const double merit = std::max({res.kkt.pviol, res.kkt.dres / res.kkt.dscale, res.kkt.gap / res.kkt.gscale});
        stalls = merit > 0.9 * prev_merit ? stalls + 1 : 0;
        prev_merit = std::min(prev_merit, merit);
        if (stalls >= 30) break;

        // Schur complement
        std::vector<CMatrix> Sinv;
        for (const auto &Sb : S) Sinv.push_back(hermitian_inverse(Sb));
        std::vector<double> K(dim * dim, 0.0);
        for (std::size_t bi = 0; bi < psd.size(); ++bi) {
            const auto &p = psd[bi];
            for (std::size_t jj = 0; jj < p.row.size(); ++jj) {
                const CMatrix G = X[bi] * p.coef[jj] * Sinv[bi];
                for (std::size_t ii = 0; ii <= jj; ++ii) {
                    const double v = real_trace_product(p.coef[ii], G);
                    K[p.row[ii] * dim + p.row[jj]] += v;
                    if (ii != jj) K[p.row[jj] * dim + p.row[ii]] += v;
                }
            }
        }
        for (std::size_t j : nonneg) {
            const double w = x[j] / s[j];
            for (const auto &[i1, a1] : col[j])
                for (const auto &[i2, a2] : col[j]) K[i1 * dim + i2] += w * a1 * a2;
        }
        for (std::size_t f = 0; f < nf; ++f)
            for (const auto &[i, a] : col[freev[f]]) {
                K[i * dim + m + f] = a;
                K[(m + f) * dim + i] = a;
            }
        // a tiny diagonal shift is used only when the plain system is singular
        auto schur_solve = [&, Kreg = std::vector<double>()](std::vector<double> &r) mutable {
            std::vector<double> r0 = r;
            if (lu_solve(K, dim, r) && std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); })) return true;
            if (Kreg.empty()) {
                Kreg = K;
                double kmax = 0.0;
                for (std::size_t i = 0; i < m; ++i) kmax = std::max(kmax, K[i * dim + i]);
                for (std::size_t i = 0; i < m; ++i) Kreg[i * dim + i] += 1e-14 * std::max(kmax, 1e-300);
            }
            r = std::move(r0);
            return lu_solve(Kreg, dim, r);
        };

        // direction for given centering and second-order terms
        struct Dir {
            std::vector<CMatrix> dX, dS;
            std::vector<double> dx, ds, dy;
        };
        auto direction = [&](double sigma_mu, const Dir *aff, Dir &d) -> bool {
            // h = sigma_mu S^-1 - X - sym(X Rd S^-1) [- sym(dXa dSa S^-1)]
            std::vector<CMatrix> h;
            for (std::size_t bi = 0; bi < psd.size(); ++bi) {
                const std::size_t dd = psd[bi].dim;
                CMatrix Rd(dd, dd);
                unpack(rd.data() + psd[bi].offset, dd, Rd);
                CMatrix hb = sigma_mu * Sinv[bi];
                hb -= X[bi];
                hb -= hermitian_product_sym(X[bi] * Rd, Sinv[bi]);
                if (aff) hb -= hermitian_product_sym(aff->dX[bi] * aff->dS[bi], Sinv[bi]);
                h.push_back(std::move(hb));
            }
            std::vector<double> hn(n, 0.0);
            for (std::size_t j : nonneg) {
                hn[j] = sigma_mu / s[j] - x[j] - x[j] / s[j] * rd[j];
                if (aff) hn[j] -= aff->dx[j] * aff->ds[j] / s[j];
            }
            for (std::size_t bi = 0; bi < psd.size(); ++bi) pack(h[bi], psd[bi].dim, hn.data() + psd[bi].offset);
            std::vector<double> ah(m);
            A.mul(hn.data(), ah.data());
            std::vector<double> rhs(dim);
            for (std::size_t i = 0; i < m; ++i) rhs[i] = rp[i] - ah[i];
            for (std::size_t f = 0; f < nf; ++f) rhs[m + f] = rd[freev[f]];
            if (!schur_solve(rhs)) return false;
            d.dy.assign(rhs.begin(), rhs.begin() + static_cast<std::ptrdiff_t>(m));
            std::vector<double> atdy(n);
            A.mul_t(d.dy.data(), atdy.data());
            d.ds.assign(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) d.ds[j] = rd[j] - atdy[j];
            for (std::size_t j : freev) d.ds[j] = 0.0;
            d.dx = hn;
            for (std::size_t f = 0; f < nf; ++f) d.dx[freev[f]] = rhs[m + f];
            for (std::size_t j : nonneg) d.dx[j] += x[j] / s[j] * atdy[j];
            d.dX.clear();
            d.dS.clear();
            for (std::size_t bi = 0; bi < psd.size(); ++bi) {
                const std::size_t dd = psd[bi].dim;
                CMatrix T(dd, dd), dS(dd, dd);
                unpack(atdy.data() + psd[bi].offset, dd, T);
                unpack(d.ds.data() + psd[bi].offset, dd, dS);
                CMatrix dX = h[bi] + hermitian_product_sym(X[bi] * T, Sinv[bi]);
                pack(dX, dd, d.dx.data() + psd[bi].offset);
                d.dX.push_back(std::move(dX));
                d.dS.push_back(std::move(dS));
            }
            // the Schur system loses precision near the boundary; refine against the linearized rows
            for (int pass = 0; pass < 3; ++pass) {
                std::vector<double> adx(m), r(dim);
                A.mul(d.dx.data(), adx.data());
                double rmax = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    r[i] = rp[i] - adx[i];
                    rmax = std::max(rmax, std::abs(r[i]));
                }
                A.mul_t(d.dy.data(), atdy.data());
                for (std::size_t f = 0; f < nf; ++f) {
                    r[m + f] = rd[freev[f]] - atdy[freev[f]];
                    rmax = std::max(rmax, std::abs(r[m + f]));
                }
                if (rmax <= 1e-15 * (1.0 + inf_norm(rp)) || !schur_solve(r)) break;
                std::vector<double> atd(n);
                A.mul_t(r.data(), atd.data());
                for (std::size_t i = 0; i < m; ++i) d.dy[i] += r[i];
                for (std::size_t f = 0; f < nf; ++f) d.dx[freev[f]] += r[m + f];
                for (std::size_t j : nonneg) {
                    d.ds[j] -= atd[j];
                    d.dx[j] += x[j] / s[j] * atd[j];
                }
                for (std::size_t bi = 0; bi < psd.size(); ++bi) {
                    const std::size_t dd = psd[bi].dim;
                    CMatrix T(dd, dd);
                    unpack(atd.data() + psd[bi].offset, dd, T);
                    d.dS[bi] -= T;
                    d.dX[bi] += hermitian_product_sym(X[bi] * T, Sinv[bi]);
                    pack(d.dX[bi], dd, d.dx.data() + psd[bi].offset);
                    pack(d.dS[bi], dd, d.ds.data() + psd[bi].offset);
                }
            }
            auto finite = [](const std::vector<double> &v) {
                return std::all_of(v.begin(), v.end(), [](double a) { return std::isfinite(a); });
            };
            return finite(d.dx) && finite(d.ds) && finite(d.dy);
        };
        auto steps = [&](const Dir &d, double &ap, double &ad) {
            ap = std::numeric_limits<double>::infinity();
            ad = ap;
            for (std::size_t bi = 0; bi < psd.size(); ++bi) {
                ap = std::min(ap, psd_step_limit(X[bi], d.dX[bi]));
                ad = std::min(ad, psd_step_limit(S[bi], d.dS[bi]));
            }
            for (std::size_t j : nonneg) {
                if (d.dx[j] < 0.0) ap = std::min(ap, -x[j] / d.dx[j]);
                if (d.ds[j] < 0.0) ad = std::min(ad, -s[j] / d.ds[j]);
            }
        };

        Dir aff;
        if (!direction(0.0, nullptr, aff)) break;
        double ap, ad;
        steps(aff, ap, ad);
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        double xs_aff = 0.0;
        for (std::size_t bi = 0; bi < psd.size(); ++bi)
            xs_aff += real_trace_product(X[bi] + ap * aff.dX[bi], S[bi] + ad * aff.dS[bi]);
        for (std::size_t j : nonneg) xs_aff += (x[j] + ap * aff.dx[j]) * (s[j] + ad * aff.ds[j]);
        const double mu_aff = nu > 0.0 ? xs_aff / nu : 0.0;
        const double sig = mu > 0.0 ? std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0) : 0.0;

        Dir d;
        if (!direction(sig * mu, &aff, d)) break;
        steps(d, ap, ad);
        const double gamma = 0.95;
        ap = std::min(1.0, gamma * ap);
        ad = std::min(1.0, gamma * ad);
        for (std::size_t j = 0; j < n; ++j) {
            x[j] += ap * d.dx[j];
            s[j] += ad * d.ds[j];
        }
        for (std::size_t i = 0; i < m; ++i) y[i] += ad * d.dy[i];
        for (std::size_t bi = 0; bi < psd.size(); ++bi) {
            X[bi] += ap * d.dX[bi];
            S[bi] += ad * d.dS[bi];
            X[bi] = X[bi].hermitian_part();
            S[bi] = S[bi].hermitian_part();
        }
        sync();
    }
    res.status = Status::MaxIters;
    return res;
}

} // namespace detail

inline ConicSolution solve(const ConicProblem &problem, const Settings &settings, const WarmStart *warm = nullptr) {
    using namespace detail;
    problem.validate();
    if (!(settings.tol > 0.0) || settings.check_every == 0) throw std::invalid_argument("solve: invalid settings");
    Standard st = to_standard(problem);
    const std::size_t n = st.n, m = st.A.rows;
    CMatrix work;

    // ---- equilibration ----
    std::vector<double> D(n, 1.0), E(m, 1.0);
    Csr A = st.A;
    for (std::size_t it = 0; it < settings.scaling_iters && m > 0; ++it) {
        std::vector<double> cn(n, 0.0), rn(m, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k) {
                const double a = std::abs(A.val[k]);
                cn[A.idx[k]] = std::max(cn[A.idx[k]], a);
                rn[i] = std::max(rn[i], a);
            }
        std::vector<double> dcol(n, 1.0), erow(m, 1.0);
        for (const auto &blk : st.blocks) {
            if (blk.kind == Block::Psd) {
                double mx = 0.0;
                for (std::size_t j = 0; j < blk.size; ++j) mx = std::max(mx, cn[blk.offset + j]);
                const double s = mx > 0.0 ? clamp_scale(1.0 / std::sqrt(mx)) : 1.0;
                for (std::size_t j = 0; j < blk.size; ++j) dcol[blk.offset + j] = s;
            } else {
                for (std::size_t j = 0; j < blk.size; ++j) {
                    const double mx = cn[blk.offset + j];
                    dcol[blk.offset + j] = mx > 0.0 ? clamp_scale(1.0 / std::sqrt(mx)) : 1.0;
                }
            }
        }
        for (std::size_t i = 0; i < m; ++i) erow[i] = rn[i] > 0.0 ? clamp_scale(1.0 / std::sqrt(rn[i])) : 1.0;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k) A.val[k] *= erow[i] * dcol[A.idx[k]];
        for (std::size_t j = 0; j < n; ++j) D[j] *= dcol[j];
        for (std::size_t i = 0; i < m; ++i) E[i] *= erow[i];
    }
    std::vector<double> b(m), c(n);
    for (std::size_t i = 0; i < m; ++i) b[i] = E[i] * st.b[i];
    for (std::size_t j = 0; j < n; ++j) c[j] = D[j] * st.c[j];
    const double cmax = inf_norm(c);
    const double sigma = cmax > 0.0 ? std::clamp(1.0 / cmax, 1e-6, 1e6) : 1.0;
    for (auto &v : c) v *= sigma;

    ConicSolution sol;
    auto finish_values = [&](const std::vector<double> &z) {
        sol.psd_values.clear();
        sol.scalar_values.clear();
        std::vector<double> x(n);
        for (std::size_t j = 0; j < n; ++j) x[j] = D[j] * z[j];
        for (std::size_t v = 0; v < problem.psd_vars().size(); ++v) {
            const std::size_t d = problem.psd_vars()[v].dim;
            CMatrix mtx(d, d);
            unpack(x.data() + st.psd_offset[v], d, mtx);
            sol.psd_values.push_back(mtx);
        }
        for (std::size_t v = 0; v < problem.scalar_vars().size(); ++v) sol.scalar_values.push_back(x[st.scalar_offset[v]]);
        sol.objective = dotv(st.c, x) + st.c0;
        sol.warm.x = x;
    };

    // ---- Gram matrix, rank detection ----
    std::vector<double> G(m * m, 0.0);
    {
        std::vector<double> row(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k) row[A.idx[k]] = A.val[k];
            for (std::size_t j = i; j < m; ++j) {
                double s = 0.0;
                for (std::size_t k = A.ptr[j]; k < A.ptr[j + 1]; ++k) s += A.val[k] * row[A.idx[k]];
                G[i * m + j] = G[j * m + i] = s;
            }
            for (std::size_t k = A.ptr[i]; k < A.ptr[i + 1]; ++k) row[A.idx[k]] = 0.0;
        }
    }
    // pivoted Cholesky on G
    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    std::vector<double> W = G; // working copy, row-major
    double maxdiag = 0.0;
    for (std::size_t i = 0; i < m; ++i) maxdiag = std::max(maxdiag, G[i * m + i]);
    std::size_t rank = 0;
    {
        std::vector<double> Lp(m * m, 0.0); // L in permuted order, row-major
        std::vector<double> diag(m);
        for (std::size_t i = 0; i < m; ++i) diag[i] = G[i * m + i];
        for (std::size_t k = 0; k < m; ++k) {
            std::size_t piv = k;
            for (std::size_t i = k + 1; i < m; ++i)
                if (diag[perm[i]] > diag[perm[piv]]) piv = i;
            if (!(diag[perm[piv]] > 1e-12 * std::max(maxdiag, 1e-300))) break;
            std::swap(perm[k], perm[piv]);
            for (std::size_t j = 0; j < k; ++j) std::swap(Lp[k * m + j], Lp[piv * m + j]);
            const std::size_t pk = perm[k];
            const double lkk = std::sqrt(diag[pk]);
            Lp[k * m + k] = lkk;
            for (std::size_t i = k + 1; i < m; ++i) {
                const std::size_t pi = perm[i];
                double s = G[pi * m + pk];
                for (std::size_t j = 0; j < k; ++j) s -= Lp[i * m + j] * Lp[k * m + j];
                Lp[i * m + k] = s / lkk;
                diag[pi] -= Lp[i * m + k] * Lp[i * m + k];
            }
            ++rank;
        }
        W.swap(Lp);
    }
    Cholesky chol;
    chol.n = rank;
    chol.l.assign(rank * rank, 0.0);
    for (std::size_t i = 0; i < rank; ++i)
        for (std::size_t j = 0; j <= i; ++j) chol.l[i * rank + j] = W[i * m + j];

    // reduced constraint system over independent rows
    std::vector<std::size_t> indep(perm.begin(), perm.begin() + static_cast<long>(rank));
    std::vector<std::size_t> dep(perm.begin() + static_cast<long>(rank), perm.end());
    if (!dep.empty()) {
        for (std::size_t r : dep) {
            std::vector<double> g(rank);
            for (std::size_t i = 0; i < rank; ++i) g[i] = G[indep[i] * m + r];
            chol.solve(g.data());
            double res = b[r], scale = std::abs(b[r]);
            for (std::size_t i = 0; i < rank; ++i) {
                res -= g[i] * b[indep[i]];
                scale += std::abs(g[i] * b[indep[i]]);
            }
            if (std::abs(res) > 1e-9 * (1.0 + scale)) {
                // inconsistent linear system: y = -sign(res) (e_r - sum g_i e_i), scaled so b'y = -1
                std::vector<double> ys(m, 0.0);
                const double sg = res > 0 ? -1.0 : 1.0;
                ys[r] = sg;
                for (std::size_t i = 0; i < rank; ++i) ys[indep[i]] = -sg * g[i];
                sol.status = Status::Infeasible;
                sol.certificate.assign(m, 0.0);
                double by = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    sol.certificate[i] = E[i] * ys[i];
                    by += st.b[i] * sol.certificate[i];
                }
                for (auto &v : sol.certificate) v /= -by;
                finish_values(std::vector<double>(n, 0.0));
                return sol;
            }
        }
    }
    Csr Ar;
    Ar.cols = n;
    Ar.rows = rank;
    std::vector<double> br(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t r = indep[i];
        for (std::size_t k = A.ptr[r]; k < A.ptr[r + 1]; ++k) {
            Ar.idx.push_back(A.idx[k]);
            Ar.val.push_back(A.val[k]);
        }
        Ar.ptr.push_back(Ar.idx.size());
        br[i] = b[r];
    }

    if (settings.method == Method::InteriorPoint) {
        const Unscale us{D, E, sigma};
        auto r = interior_point(st.blocks, Ar, br, c, indep, us, inf_norm(st.c), settings);
        sol.status = r.status;
        sol.iterations = r.iterations;
        sol.primal_residual = r.kkt.pres;
        sol.dual_residual = r.kkt.dres;
        sol.gap = r.kkt.gap;
        if (r.status == Status::Infeasible) {
            sol.certificate.assign(m, 0.0);
            double by = 0.0;
            for (std::size_t i = 0; i < rank; ++i) sol.certificate[indep[i]] = E[indep[i]] * r.cert[i];
            for (std::size_t i = 0; i < m; ++i) by += st.b[i] * sol.certificate[i];
            for (auto &v : sol.certificate) v /= -by;
        }
        finish_values(r.x);
        sol.constraint_duals.assign(m, 0.0);
        for (std::size_t i = 0; i < rank; ++i) sol.constraint_duals[indep[i]] = E[indep[i]] * r.y[i] / sigma;
        sol.warm.s.resize(n);
        for (std::size_t j = 0; j < n; ++j) sol.warm.s[j] = r.s[j] / (D[j] * sigma);
        return sol;
    }

    // ---- ADMM ----
    double rho = settings.rho;
    std::vector<double> z(n, 0.0), u(n, 0.0), x(n), w(n), tmp_m(rank), tmp_n(n), u_old(n), z_old(n);
    if (warm && warm->x.size() == n) {
        for (std::size_t j = 0; j < n; ++j) z[j] = warm->x[j] / D[j];
        project_cone(st.blocks, z.data(), work);
        if (warm->s.size() == n) {
            for (std::size_t j = 0; j < n; ++j) u[j] = -(sigma * D[j] * warm->s[j]) / rho;
            // keep u in the polar cone
            for (auto &v : u) v = -v;
            project_dual_cone(st.blocks, u.data(), work);
            for (auto &v : u) v = -v;
        }
    }

    auto affine_project = [&](std::vector<double> &v) {
        if (rank == 0) return;
        Ar.mul(v.data(), tmp_m.data());
        for (std::size_t i = 0; i < rank; ++i) tmp_m[i] -= br[i];
        chol.solve(tmp_m.data());
        Ar.mul_t(tmp_m.data(), tmp_n.data());
        for (std::size_t j = 0; j < n; ++j) v[j] -= tmp_n[j];
    };
    // least-squares multipliers for a dual slack s: y = (AA')^-1 A (c - s)
    auto dual_from_slack = [&](const std::vector<double> &s, std::vector<double> &y) {
        y.assign(rank, 0.0);
        if (rank == 0) return;
        for (std::size_t j = 0; j < n; ++j) tmp_n[j] = c[j] - s[j];
        Ar.mul(tmp_n.data(), y.data());
        chol.solve(y.data());
    };

    const double alpha = settings.relaxation;
    const double tol = settings.tol;
    std::size_t infeas_hits = 0, unbd_hits = 0;
    std::vector<double> s(n), y, aty(n), r_p(rank), absrow(rank), cert_y(rank);
    const double cmax_u = inf_norm(st.c);
    double scaled_prel = 0.0, scaled_drel = 0.0;

    auto evaluate = [&]() {
        // primal residual, unscaled, per row relative
        for (std::size_t j = 0; j < n; ++j) s[j] = -rho * u[j];
        Ar.mul(z.data(), r_p.data());
        Ar.abs_mul(z.data(), absrow.data());
        double pres = 0.0, pviol = 0.0;
        for (std::size_t i = 0; i < rank; ++i) {
            const double e = E[indep[i]];
            const double ri = (r_p[i] - br[i]) / e;
            const double scale = 1.0 + std::max(std::abs(br[i]), absrow[i]) / e;
            pres = std::max(pres, std::abs(ri));
            pviol = std::max(pviol, std::abs(ri) / scale);
        }
        dual_from_slack(s, y);
        Ar.mul_t(y.data(), aty.data());
        double dres = 0.0, aty_max = 0.0, s_max = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double rd = (aty[j] + s[j] - c[j]) / (D[j] * sigma);
            dres = std::max(dres, std::abs(rd));
            aty_max = std::max(aty_max, std::abs(aty[j] / (D[j] * sigma)));
            s_max = std::max(s_max, std::abs(s[j] / (D[j] * sigma)));
        }
        double cx = 0.0, by = 0.0;
        for (std::size_t j = 0; j < n; ++j) cx += c[j] * z[j];
        for (std::size_t i = 0; i < rank; ++i) by += br[i] * y[i];
        cx /= sigma;
        by /= sigma;
        const double gap = std::abs(cx - by);
        sol.primal_residual = pres;
        sol.dual_residual = dres;
        sol.gap = gap;
        {
            double rp = 0.0, ax = 0.0, rd = 0.0, atys = 0.0;
            for (std::size_t i = 0; i < rank; ++i) {
                rp = std::max(rp, std::abs(r_p[i] - br[i]));
                ax = std::max(ax, std::abs(r_p[i]));
            }
            for (std::size_t j = 0; j < n; ++j) {
                rd = std::max(rd, std::abs(aty[j] + s[j] - c[j]));
                atys = std::max(atys, std::abs(aty[j]));
            }
            scaled_prel = rp / std::max({ax, inf_norm(br), 1e-30});
            scaled_drel = rd / std::max({inf_norm(c), inf_norm(s), atys, 1e-30});
        }
        // primal rows and gap are held an order tighter so the objective is not undercut by more than tol
        return pviol <= 0.1 * tol && dres <= tol * (1.0 + std::max({cmax_u, aty_max, s_max})) &&
               gap <= 0.1 * tol * (1.0 + std::abs(cx) + std::abs(by));
    };

    auto certificate_check = [&]() -> bool {
        // y_cert = -rho (AA')^-1 A du, normalized b'y = -1
        if (rank == 0) return false;
        for (std::size_t j = 0; j < n; ++j) tmp_n[j] = u[j] - u_old[j];
        Ar.mul(tmp_n.data(), cert_y.data());
        chol.solve(cert_y.data());
        double by = 0.0;
        for (std::size_t i = 0; i < rank; ++i) {
            cert_y[i] *= -1.0;
            by += br[i] * cert_y[i];
        }
        if (!(by < 0.0)) return false;
        for (auto &v : cert_y) v /= -by;
        Ar.mul_t(cert_y.data(), aty.data());
        std::vector<double> proj = aty;
        project_dual_cone(st.blocks, proj.data(), work);
        double dist = 0.0;
        for (std::size_t j = 0; j < n; ++j) dist = std::max(dist, std::abs(proj[j] - aty[j]));
        return dist <= settings.infeasibility_tol;
    };

    auto unbounded_check = [&]() -> bool {
        for (std::size_t j = 0; j < n; ++j) tmp_n[j] = z[j] - z_old[j];
        double cv = 0.0;
        for (std::size_t j = 0; j < n; ++j) cv += c[j] * tmp_n[j];
        if (!(cv < 0.0)) return false;
        for (auto &v : tmp_n) v /= -cv;
        if (rank > 0) {
            Ar.mul(tmp_n.data(), tmp_m.data());
            if (inf_norm(tmp_m) > settings.infeasibility_tol) return false;
        }
        std::vector<double> proj = tmp_n;
        project_cone(st.blocks, proj.data(), work);
        double dist = 0.0;
        for (std::size_t j = 0; j < n; ++j) dist = std::max(dist, std::abs(proj[j] - tmp_n[j]));
        return dist <= settings.infeasibility_tol;
    };

    std::size_t k = 0;
    sol.status = Status::MaxIters;
    for (k = 1; k <= settings.max_iters; ++k) {
        u_old = u;
        z_old = z;
        const double irho = 1.0 / rho;
        for (std::size_t j = 0; j < n; ++j) w[j] = z[j] - u[j] - c[j] * irho;
        affine_project(w);
        x.swap(w);
        for (std::size_t j = 0; j < n; ++j) {
            const double xh = alpha * x[j] + (1.0 - alpha) * z[j];
            w[j] = xh + u[j];
        }
        z = w;
        project_cone(st.blocks, z.data(), work);
        for (std::size_t j = 0; j < n; ++j) u[j] = w[j] - z[j];

        if (k % settings.check_every != 0 && k != settings.max_iters) continue;
        if (evaluate()) {
            sol.status = Status::Optimal;
            break;
        }
        if (k >= 50) {
            infeas_hits = certificate_check() ? infeas_hits + 1 : 0;
            if (infeas_hits >= 3) {
                sol.status = Status::Infeasible;
                sol.certificate.assign(m, 0.0);
                double by = 0.0;
                for (std::size_t i = 0; i < rank; ++i) sol.certificate[indep[i]] = E[indep[i]] * cert_y[i];
                for (std::size_t i = 0; i < m; ++i) by += st.b[i] * sol.certificate[i];
                for (auto &v : sol.certificate) v /= -by;
                break;
            }
            unbd_hits = unbounded_check() ? unbd_hits + 1 : 0;
            if (unbd_hits >= 3) {
                sol.status = Status::Unbounded;
                break;
            }
        }
        if (settings.adaptive_rho) {
            // balance scaled primal and dual residuals
            if (scaled_prel > 0.0 && scaled_drel > 0.0) {
                const double ratio = std::sqrt(scaled_prel / scaled_drel);
                if (ratio > 5.0 || ratio < 0.2) {
                    const double nrho = std::clamp(rho * ratio, 1e-6, 1e6);
                    const double f = rho / nrho;
                    for (auto &v : u) v *= f;
                    rho = nrho;
                }
            }
        }
    }
    sol.iterations = std::min(k, settings.max_iters);
    finish_values(z);
    // dual information, unscaled
    sol.constraint_duals.assign(m, 0.0);
    for (std::size_t j = 0; j < n; ++j) s[j] = -rho * u[j];
    dual_from_slack(s, y);
    for (std::size_t i = 0; i < rank; ++i) sol.constraint_duals[indep[i]] = E[indep[i]] * y[i] / sigma;
    sol.warm.s.resize(n);
    for (std::size_t j = 0; j < n; ++j) sol.warm.s[j] = s[j] / (D[j] * sigma);
    return sol;
}

inline ConicSolution solve(const ConicProblem &p, double tol = 1e-7, std::size_t max_iters = 100000) {
    Settings s;
    s.tol = tol;
    s.max_iters = max_iters;
    return solve(p, s);
}

// Evaluate a linear form at a point given as per-variable values.
inline double evaluate(const LinearForm &f, const std::vector<CMatrix> &psd, const std::vector<double> &scalars) {
    double v = f.constant;
    for (const auto &[i, c] : f.psd_terms) v += real_trace_product(c, psd.at(i));
    for (const auto &[i, a] : f.scalar_terms) v += a * scalars.at(i);
    return v;
}

// ---- dump / load ----

namespace detail {

inline nlohmann::json form_to_json(const LinearForm &f) {
    using nlohmann::json;
    json j;
    j["constant"] = f.constant;
    j["psd"] = json::array();
    for (const auto &[v, c] : f.psd_terms) {
        json entries = json::array();
        for (std::size_t col = 0; col < c.cols(); ++col)
            for (std::size_t row = 0; row <= col; ++row)
                if (c(row, col) != cdouble{}) entries.push_back(json::array({row, col, c(row, col).real(), c(row, col).imag()}));
        j["psd"].push_back({{"var", v}, {"entries", entries}});
    }
    j["scalar"] = json::array();
    for (const auto &[v, a] : f.scalar_terms) j["scalar"].push_back(json::array({v, a}));
    return j;
}

inline LinearForm form_from_json(const nlohmann::json &j, const ConicProblem &p) {
    LinearForm f;
    f.constant = j.value("constant", 0.0);
    for (const auto &t : j.at("psd")) {
        const std::size_t v = t.at("var").get<std::size_t>();
        if (v >= p.psd_vars().size()) throw std::invalid_argument("conic load: undeclared PSD variable");
        const std::size_t d = p.psd_vars()[v].dim;
        CMatrix c(d, d);
        for (const auto &e : t.at("entries")) {
            const std::size_t r = e.at(0).get<std::size_t>(), col = e.at(1).get<std::size_t>();
            if (r >= d || col >= d || r > col) throw std::invalid_argument("conic load: bad coefficient index");
            const cdouble val(e.at(2).get<double>(), e.at(3).get<double>());
            c(r, col) = val;
            c(col, r) = std::conj(val);
            if (r == col) c(r, r) = val.real();
        }
        f.psd_terms.emplace_back(v, c);
    }
    for (const auto &t : j.at("scalar")) f.scalar_terms.emplace_back(t.at(0).get<std::size_t>(), t.at(1).get<double>());
    return f;
}

} // namespace detail

inline nlohmann::json dump_json(const ConicProblem &p) {
    using nlohmann::json;
    json j;
    j["format"] = "starisac-conic/1";
    j["psd_vars"] = json::array();
    for (const auto &v : p.psd_vars()) j["psd_vars"].push_back({{"name", v.name}, {"dim", v.dim}});
    j["scalar_vars"] = p.scalar_vars();
    j["objective"] = detail::form_to_json(p.objective());
    j["constraints"] = json::array();
    for (const auto &c : p.constraints())
        j["constraints"].push_back({{"label", c.label}, {"sense", to_string(c.sense)}, {"rhs", c.rhs}, {"form", detail::form_to_json(c.form)}});
    return j;
}

inline ConicProblem load_json(const nlohmann::json &j) {
    if (j.value("format", std::string()) != "starisac-conic/1") throw std::invalid_argument("conic load: unknown format");
    ConicProblem p;
    for (const auto &v : j.at("psd_vars")) p.add_psd(v.at("name").get<std::string>(), v.at("dim").get<std::size_t>());
    for (const auto &v : j.at("scalar_vars")) p.add_scalar(v.get<std::string>());
    p.minimize(detail::form_from_json(j.at("objective"), p));
    for (const auto &c : j.at("constraints")) {
        const auto s = c.at("sense").get<std::string>();
        const Sense sense = s == "==" ? Sense::Eq : s == "<=" ? Sense::Le : s == ">=" ? Sense::Ge : throw std::invalid_argument("conic load: bad sense");
        p.add_constraint(detail::form_from_json(c.at("form"), p), sense, c.at("rhs").get<double>(), c.value("label", std::string()));
    }
    p.validate();
    return p;
}

inline void dump_file(const ConicProblem &p, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("conic dump: cannot open " + path);
    out << dump_json(p).dump(1) << "\n";
}

inline ConicProblem load_file(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("conic load: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return load_json(j);
}

} // namespace starisac::conic
