#pragma once

// Conic test programs with known answers, and an independent Farkas certificate checker.

#include <string>
#include <vector>

#include <starisac/conic.hpp>

#include "random_fixtures.hpp"

namespace oracle {

using namespace starisac;
using conic::ConicProblem;
using conic::LinearForm;
using conic::Sense;

// min Tr(C X) s.t. Tr(X) = 1, X psd  ->  lambda_min(C)
inline ConicProblem lambda_min_program(const CMatrix &C) {
    ConicProblem p;
    auto X = p.add_psd("X", C.rows());
    p.minimize(LinearForm{}.add(X, C));
    p.add_constraint(LinearForm{}.add(X, CMatrix::identity(C.rows())), Sense::Eq, 1.0, "trace");
    return p;
}

// Checks y against the user-level problem: combination of constraint forms must be
// PSD in every matrix variable, zero in every scalar, respect inequality signs, and
// give a negative right-hand side.
inline bool verify_certificate(const ConicProblem &p, const std::vector<double> &y, double tol, std::string *why = nullptr) {
    auto fail = [&](const std::string &m) {
        if (why) *why = m;
        return false;
    };
    const auto &cons = p.constraints();
    if (y.size() != cons.size()) return fail("certificate length");
    std::vector<CMatrix> S;
    for (const auto &v : p.psd_vars()) S.emplace_back(v.dim, v.dim);
    std::vector<double> sc(p.scalar_vars().size(), 0.0);
    double by = 0.0, ymax = 0.0;
    for (std::size_t i = 0; i < cons.size(); ++i) {
        const auto &c = cons[i];
        ymax = std::max(ymax, std::abs(y[i]));
        if (c.sense == Sense::Le && y[i] < -tol) return fail("sign on <= row");
        if (c.sense == Sense::Ge && y[i] > tol) return fail("sign on >= row");
        for (const auto &[v, m] : c.form.psd_terms) S[v].axpy(y[i], m);
        for (const auto &[v, a] : c.form.scalar_terms) sc[v] += y[i] * a;
        by += y[i] * (c.rhs - c.form.constant);
    }
    if (!(by < 0.0)) return fail("b'y not negative");
    const double scale = -by;
    for (const auto &m : S) {
        auto ed = hermitian_eig(m.hermitian_part());
        if (ed.values.front() < -tol * scale * (1.0 + ymax)) return fail("combination not PSD");
    }
    for (double v : sc)
        if (std::abs(v) > tol * scale * (1.0 + ymax)) return fail("scalar combination nonzero");
    return true;
}

struct NamedProblem {
    std::string name;
    ConicProblem problem;
};

// twenty programs that admit no feasible point
inline std::vector<NamedProblem> contradictory_programs() {
    std::vector<NamedProblem> out;
    Rand rnd(2024);
    for (std::size_t d = 1; d <= 4; ++d) {
        // Tr X = 1 and Tr X = 2
        ConicProblem p;
        auto X = p.add_psd("X", d);
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(d)), Sense::Eq, 1.0);
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(d)), Sense::Eq, 2.0);
        out.push_back({"trace 1 and 2, d=" + std::to_string(d), p});
    }
    for (std::size_t d = 1; d <= 4; ++d) {
        // Tr X = -1 with X psd
        ConicProblem p;
        auto X = p.add_psd("X", d);
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(d)), Sense::Eq, -1.0);
        out.push_back({"negative trace, d=" + std::to_string(d), p});
    }
    for (std::size_t d = 2; d <= 5; ++d) {
        // Tr(P X) <= -0.5 for a random positive definite P
        ConicProblem p;
        auto X = p.add_psd("X", d);
        CMatrix P = rnd.psd(d, d) + CMatrix::identity(d);
        p.add_constraint(LinearForm{}.add(X, P), Sense::Le, -0.5);
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(d)), Sense::Le, 10.0);
        out.push_back({"pd form below zero, d=" + std::to_string(d), p});
    }
    for (int t = 0; t < 4; ++t) {
        // x >= 1 + t, x <= t (scalars), plus an unrelated psd block
        ConicProblem p;
        auto x = p.add_scalar("x");
        auto X = p.add_psd("X", 2);
        p.add_constraint(LinearForm{}.add(x, 1.0), Sense::Ge, 1.0 + t);
        p.add_constraint(LinearForm{}.add(x, 1.0), Sense::Le, static_cast<double>(t));
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(2)), Sense::Eq, 1.0);
        out.push_back({"scalar interval empty " + std::to_string(t), p});
    }
    for (std::size_t d = 2; d <= 5; ++d) {
        // X_00 >= 1 with Tr X <= 0.5
        ConicProblem p;
        auto X = p.add_psd("X", d);
        CMatrix e(d, d);
        e(0, 0) = 1.0;
        p.add_constraint(LinearForm{}.add(X, e), Sense::Ge, 1.0);
        p.add_constraint(LinearForm{}.add(X, CMatrix::identity(d)), Sense::Le, 0.5);
        out.push_back({"entry exceeds trace budget, d=" + std::to_string(d), p});
    }
    return out;
}

} // namespace oracle
