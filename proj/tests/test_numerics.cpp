#include <catch_amalgamated.hpp>

#include <starisac/numerics.hpp>

#include "oracles/eig_oracle.hpp"
#include "oracles/random_fixtures.hpp"

using namespace starisac;
using Catch::Approx;

TEST_CASE("eig_max identity and diagonal") {
    auto p = hermitian_eig_max(CMatrix::identity(2));
    CHECK(p.value == Approx(1.0));
    CHECK(p.vector.norm() == Approx(1.0));

    auto q = hermitian_eig_max(CMatrix{{1.0, 0.0}, {0.0, 3.0}});
    CHECK(q.value == Approx(3.0));
    CHECK(std::abs(q.vector[0]) < 1e-14);
    CHECK(q.vector[1].real() == Approx(1.0));
    CHECK(q.vector[1].imag() == 0.0);
}

TEST_CASE("eigenvalues match inertia bisection") {
    oracle::Rand rnd(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + trial % 9;
        CMatrix a = rnd.hermitian(n);
        auto ref = oracle::bisection_eigenvalues(a);
        auto ed = hermitian_eig(a);
        for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(ed.values[k] - ref[k]) <= 1e-8);
        // A Z = Z diag(values), Z unitary
        CMatrix z = ed.vectors;
        CMatrix az = a * z;
        double r = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(az(i, j) - z(i, j) * ed.values[j]));
        CHECK(r <= 1e-11 * a.frobenius_norm());
        CMatrix g = z.adjoint() * z - CMatrix::identity(n);
        CHECK(g.max_abs() <= 1e-12);
    }
}

TEST_CASE("eig_max residual and phase gauge") {
    oracle::Rand rnd(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 12;
        CMatrix a = rnd.hermitian(n);
        auto p = hermitian_eig_max(a);
        CVector r = a * p.vector - p.value * p.vector;
        CHECK(r.norm() <= 1e-9 * a.frobenius_norm());
        std::size_t best = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (std::abs(p.vector[i]) > std::abs(p.vector[best])) best = i;
        CHECK(p.vector[best].imag() == Approx(0.0).margin(1e-14));
        CHECK(p.vector[best].real() >= 0.0);
    }
}

TEST_CASE("eig on structured inputs") {
    // already tridiagonal, complex off diagonal
    CMatrix t{{2.0, cdouble(0, 1), 0.0}, {cdouble(0, -1), 2.0, 1.0}, {0.0, 1.0, 2.0}};
    auto ed = hermitian_eig(t);
    auto ref = oracle::bisection_eigenvalues(t);
    for (std::size_t k = 0; k < 3; ++k) CHECK(ed.values[k] == Approx(ref[k]).margin(1e-10));
    // rank one
    CVector u{1.0, cdouble(0, 2), -1.0, 0.5};
    auto p = hermitian_eig_max(CMatrix::outer(u));
    CHECK(p.value == Approx(u.squared_norm()));
    // zero
    auto z = hermitian_eig(CMatrix(3, 3));
    for (double v : z.values) CHECK(v == 0.0);
}

TEST_CASE("non-Hermitian input rejected") {
    CMatrix a{{1.0, 2.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(hermitian_eig_max(a), std::invalid_argument);
    CHECK_THROWS_AS(psd_project(a), std::invalid_argument);
    CHECK_THROWS_AS(hermitian_eig(CMatrix(2, 3)), std::invalid_argument);
}

TEST_CASE("vec and unvec") {
    CMatrix a{{1.0, 3.0}, {2.0, 4.0}};
    CVector v = vec(a);
    REQUIRE(v.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(v[i] == cdouble(i + 1.0));
    oracle::Rand rnd(3);
    for (std::size_t r = 1; r < 5; ++r)
        for (std::size_t c = 1; c < 5; ++c) {
            CMatrix x = rnd.matrix(r, c);
            CHECK(unvec(vec(x), r, c) == x);
        }
    CHECK_THROWS_AS(unvec(v, 3, 2), std::invalid_argument);
}

TEST_CASE("kron basics") {
    CMatrix b{{1.0, 2.0}, {3.0, cdouble(0, 4)}};
    CHECK(kron(CMatrix::identity(1), b) == b);
    CMatrix d = kron(CMatrix{{1.0, 0.0}, {0.0, 2.0}}, CMatrix::identity(2));
    CMatrix expect = CMatrix::diagonal(CVector{1.0, 1.0, 2.0, 2.0});
    CHECK(d == expect);
}

TEST_CASE("kron vec identity against direct product") {
    oracle::Rand rnd(17);
    for (int trial = 0; trial < 50; ++trial) {
        CMatrix a = rnd.matrix(3, 3), b = rnd.matrix(3, 3), x = rnd.matrix(3, 3);
        CVector lhs = kron(b.transpose(), a) * vec(x);
        CVector rhs = vec(a * x * b);
        CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }
}

TEST_CASE("trace quadratic form identity") {
    oracle::Rand rnd(23);
    for (int trial = 0; trial < 200; ++trial) {
        CMatrix e = rnd.hermitian(3), f = rnd.hermitian(3), x = rnd.hermitian(3);
        cdouble direct = (e * x * f * x).trace();
        CVector vx = vec(x);
        CMatrix k = kron(f.transpose(), e);
        cdouble lifted = dot(vx, k * vx);
        CHECK(std::abs(direct - lifted) <= 1e-10 * std::max(1.0, std::abs(direct)));
        CHECK(k.is_hermitian(1e-14));
    }
}

TEST_CASE("psd projection") {
    oracle::Rand rnd(31);
    CMatrix p = rnd.psd(4, 2);
    CHECK((psd_project(p) - p).max_abs() <= 1e-12 * p.max_abs());
    CMatrix c = psd_project(CMatrix{{1.0, 0.0}, {0.0, -1.0}});
    CHECK(c(0, 0).real() == Approx(1.0));
    CHECK(std::abs(c(1, 1)) < 1e-15);
    CHECK(std::abs(c(0, 1)) < 1e-15);

    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + trial % 6;
        CMatrix a = rnd.hermitian(n);
        CMatrix proj = psd_project(a);
        // oracle: eigenvalues from bisection, eigenvectors by inverse iteration
        auto lam = oracle::bisection_eigenvalues(a, 1e-15);
        CMatrix ref(n, n);
        for (std::size_t k = 0; k < n; ++k) {
            if (lam[k] <= 0.0) continue;
            CMatrix s = a;
            for (std::size_t i = 0; i < n; ++i) s(i, i) -= lam[k] + 1e-10;
            CVector v(n, 1.0);
            for (int it = 0; it < 3; ++it) {
                // solve s y = v by Gaussian elimination with partial pivoting
                CMatrix m = s;
                CVector y = v;
                for (std::size_t col = 0; col < n; ++col) {
                    std::size_t piv = col;
                    for (std::size_t r = col + 1; r < n; ++r)
                        if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
                    for (std::size_t cc = 0; cc < n; ++cc) std::swap(m(col, cc), m(piv, cc));
                    std::swap(y[col], y[piv]);
                    for (std::size_t r = col + 1; r < n; ++r) {
                        cdouble l = m(r, col) / m(col, col);
                        for (std::size_t cc = col; cc < n; ++cc) m(r, cc) -= l * m(col, cc);
                        y[r] -= l * y[col];
                    }
                }
                for (std::size_t r = n; r-- > 0;) {
                    for (std::size_t cc = r + 1; cc < n; ++cc) y[r] -= m(r, cc) * y[cc];
                    y[r] /= m(r, r);
                }
                v = (1.0 / y.norm()) * y;
            }
            ref += lam[k] * CMatrix::outer(v);
        }
        CHECK((proj - ref).frobenius_norm() <= 1e-9 * a.frobenius_norm());
        auto ed = hermitian_eig(proj);
        CHECK(ed.values.front() >= -1e-10 * a.frobenius_norm());
    }
}
