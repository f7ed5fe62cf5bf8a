#include <catch_amalgamated.hpp>

#include <numbers>
#include <sstream>

#include <starisac/starris.hpp>

#include "oracles/random_fixtures.hpp"

using namespace starisac;

namespace {

CVector half_split(std::size_t M) {
    CVector p(M);
    for (auto &x : p) x = std::sqrt(0.5);
    return p;
}

Scenario small(std::uint64_t seed, std::size_t N, std::size_t M) {
    Scenario sc = Scenario::desk_scale(seed);
    sc.num_antennas = N;
    sc.num_elements = M;
    return sc;
}

CVector random_lift(oracle::Rand &rng, std::size_t M) {
    CVector nu(M + 1);
    for (std::size_t m = 0; m < M; ++m) nu[m] = std::polar(rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0 * std::numbers::pi));
    nu[M] = 1.0;
    return nu;
}

double rel(const CMatrix &a, const CMatrix &b) {
    CMatrix d = a;
    d -= b;
    return d.frobenius_norm() / std::max({1e-300, a.frobenius_norm(), b.frobenius_norm()});
}

// psi computed through the real-valued embedding [Re F, -Im F; Im F, Re F] [Re v; Im v]
CVector psi_real_embedded(const CMatrix &F, const CVector &v) {
    const std::size_t n = v.size();
    std::vector<double> re(2 * n, 0.0), x(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = v[i].real();
        x[n + i] = v[i].imag();
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double a = F(i, j).real(), b = F(i, j).imag();
            re[i] += a * x[j] - b * x[n + j];
            re[n + i] += b * x[j] + a * x[n + j];
        }
    CVector psi(n);
    for (std::size_t i = 0; i < n; ++i) psi[i] = cdouble(re[i], re[n + i]);
    return psi;
}

double quad(const CMatrix &F, const CVector &v) { return dot(v, F * v).real(); }

struct Desk {
    Scenario sc;
    ChannelSet ch;
    BeamformingState bf;
    StarRisState ris;
};

Desk desk(std::uint64_t seed, Access access) {
    Desk d{Scenario::desk_scale(seed), {}, {}, {}};
    d.ch = gen_channels(d.sc);
    const CVector phi = half_split(d.sc.M());
    d.ris = make_ris_state(phi, phi);
    B1Options opt;
    opt.access = access;
    if (access == Access::Noma) opt.decode_order = noma_order(d.ch, phi);
    auto init = initial_state(d.ch, phi, phi, d.sc, opt);
    REQUIRE(init);
    d.bf = solve_b1(*init, d.ch, phi, phi, d.sc, opt).state;
    return d;
}

double row_value(const B2Program &prog, const std::string &label, const CMatrix &Vt, const CMatrix &Vr) {
    std::vector<CMatrix> psd;
    for (const auto &v : prog.problem.psd_vars()) psd.emplace_back(v.dim, v.dim);
    psd[prog.V_t.var.index] = Vt;
    psd[prog.V_r.var.index] = Vr;
    const std::vector<double> scalars(prog.problem.scalar_vars().size(), 0.0);
    for (const auto &c : prog.problem.constraints())
        if (c.label == label) return conic::evaluate(c.form, psd, scalars);
    throw std::runtime_error("no row " + label);
}

double worst_row_violation(const B2Program &prog, const CMatrix &Vt, const CMatrix &Vr) {
    std::vector<CMatrix> psd;
    for (const auto &v : prog.problem.psd_vars()) psd.emplace_back(v.dim, v.dim);
    psd[prog.V_t.var.index] = Vt;
    psd[prog.V_r.var.index] = Vr;
    const std::vector<double> scalars(prog.problem.scalar_vars().size(), 0.0);
    double worst = 0.0;
    for (const auto &c : prog.problem.constraints()) {
        const double v = conic::evaluate(c.form, psd, scalars);
        const double s = c.sense == conic::Sense::Ge ? v - c.rhs : c.sense == conic::Sense::Le ? c.rhs - v : -std::abs(v - c.rhs);
        worst = std::max(worst, -s / std::max(1.0, std::abs(c.rhs)));
    }
    return worst;
}

SrocrState relaxed_tracks() {
    SrocrState st;
    st.tracks.resize(2);
    return st;
}

} // namespace

TEST_CASE("surrogate touches the lifted quartic") {
    oracle::Rand rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t N = 2 + trial % 3, M = 1 + trial % 4;
        Scenario sc = small(100 + trial, N, M);
        const auto ch = gen_channels(sc);
        const CMatrix Q = rng.psd(N, 1 + trial % N);
        const double omega = rng.uniform(0.0, 5.0);
        const CVector nu = random_lift(rng, M);
        const Surrogate s = build_surrogate(ch, Q, omega, nu, sc);
        const CMatrix F = kronecker_objective(ch, Q, omega, sc);
        const CVector vhat = vec(CMatrix::outer(nu));
        const double exact = quad(F, vhat);
        const double scale = std::max(std::abs(exact), 1e-300);
        INFO("trial " << trial);
        CHECK(std::abs(s.value(CMatrix::outer(nu)) - exact) <= 1e-9 * scale);
        CHECK(std::abs(-s.constant() - exact) <= 1e-9 * scale);

        // the same number from the composite channels: omega Tr(B_t) - Tr(A_t)
        CVector phi(M);
        for (std::size_t m = 0; m < M; ++m) phi[m] = nu[m];
        const auto t = sensing_traces(ch, phi, Q, SensingParams::from(sc, ch));
        CHECK(std::abs(omega * t.B - t.A - exact) <= 1e-9 * std::max({scale, t.A, omega * t.B}));

        CHECK(F.hermitian_residual() <= 1e-10 * F.frobenius_norm());

        // linear term equals 2 Re(psi^H vec(nu nu^H))
        const double lin = real_trace_product(s.objective_matrix(), CMatrix::outer(nu));
        CHECK(std::abs(lin - 2.0 * dot(s.psi(), vhat).real()) <= 1e-9 * std::max(std::abs(lin), 1e-300));
    }
}

TEST_CASE("closed-form surrogate matrix against the real-embedded path") {
    oracle::Rand rng(5);
    for (std::size_t M : {1u, 1u, 2u, 3u, 5u}) {
        Scenario sc = small(30 + M, 3, M);
        const auto ch = gen_channels(sc);
        const CMatrix Q = rng.psd(3, 2);
        const CVector nu = random_lift(rng, M);
        const Surrogate s = build_surrogate(ch, Q, 1.7, nu, sc);
        const CMatrix F = kronecker_objective(ch, Q, 1.7, sc);
        const CVector psi = psi_real_embedded(F, vec(CMatrix::outer(nu)));
        INFO("M " << M);
        CHECK(rel(unvec(psi, M + 1, M + 1), s.delta_psi.adjoint()) <= 1e-9);
        CHECK(rel(unvec(s.psi(), M + 1, M + 1), unvec(psi, M + 1, M + 1)) <= 1e-9);
    }
}

TEST_CASE("zero covariance zeroes the quartic") {
    Scenario sc = small(3, 3, 2);
    const auto ch = gen_channels(sc);
    const CMatrix Q(3, 3);
    oracle::Rand rng(1);
    const CVector nu = random_lift(rng, 2);
    const Surrogate s = build_surrogate(ch, Q, 2.0, nu, sc);
    CHECK(s.delta_psi.max_abs() == 0.0);
    CHECK(s.touch == 0.0);
    CHECK(kronecker_objective(ch, Q, 2.0, sc).max_abs() == 0.0);

    // the surrogate is linear in Q through the B blocks
    const CMatrix Q1 = rng.psd(3, 2);
    CMatrix Q2 = Q1;
    Q2 *= 3.0;
    const Surrogate a = build_surrogate(ch, Q1, 2.0, nu, sc), b = build_surrogate(ch, Q2, 2.0, nu, sc);
    CMatrix a3 = a.delta_psi;
    a3 *= 3.0;
    CHECK(rel(a3, b.delta_psi) <= 1e-12);
}

TEST_CASE("surrogate input validation") {
    Scenario sc = small(3, 3, 2);
    const auto ch = gen_channels(sc);
    CHECK_THROWS_AS(build_surrogate(ch, CMatrix(3, 3), 1.0, CVector(2), sc), std::invalid_argument);
    CHECK_THROWS_AS(build_surrogate(ch, CMatrix(2, 2), 1.0, CVector(3), sc), std::invalid_argument);
}

TEST_CASE("rate rows on a rank-one reflection matrix") {
    auto d = desk(2, Access::Rsma);
    oracle::Rand rng(8);
    const CVector nu_r = random_lift(rng, d.sc.M());
    CVector phi_r(d.sc.M());
    for (std::size_t m = 0; m < d.sc.M(); ++m) phi_r[m] = nu_r[m];
    const Surrogate s = build_surrogate(d.ch, d.bf.Q(), 1.0, d.ris.nu_t, d.sc);
    B2Options opt;
    const B2Program prog = build_b2_problem(s, d.ch, d.bf, relaxed_tracks(), d.sc, opt);
    const double sum_c = d.bf.c[0] + d.bf.c[1];
    for (std::size_t k = 0; k < d.sc.K(); ++k) {
        const CVector h = composite_gt_channel(d.ch, phi_r, k);
        const double rho = 1.0 / d.sc.noise(k);
        const CMatrix all_p = d.bf.private_sum();
        CMatrix q3(d.sc.N(), d.sc.N());
        for (std::size_t j = 0; j < d.sc.K(); ++j)
            if (j != k) q3 += d.bf.W_p[j];
        const double p1 = quadratic_form(d.bf.W_c + all_p, h), p2 = quadratic_form(all_p, h), p3 = quadratic_form(q3, h);
        const double e1 = std::exp2(sum_c), e2 = std::exp2(d.sc.rate_threshold(k) - d.bf.c[k]);
        const double common = row_value(prog, "common rate" + std::to_string(k), d.ris.V_t, CMatrix::outer(nu_r));
        const double priv = row_value(prog, "private rate" + std::to_string(k), d.ris.V_t, CMatrix::outer(nu_r));
        CHECK(std::abs(common - rho * (p1 - e1 * p2)) <= 1e-9 * rho * (p1 + e1 * p2));
        CHECK(std::abs(priv - rho * (p2 - e2 * p3)) <= 1e-9 * rho * (p2 + e2 * p3));
    }
    // the current coefficients satisfy every row of their own program
    CHECK(worst_row_violation(prog, d.ris.V_t, d.ris.V_r) <= 1e-7);
}

TEST_CASE("all-transmission point violates the rate rows") {
    auto d = desk(1, Access::Rsma);
    for (auto &h : d.ch.h_bk) h *= 0.0;
    const Surrogate s = build_surrogate(d.ch, d.bf.Q(), 1.0, d.ris.nu_t, d.sc);
    const B2Program prog = build_b2_problem(s, d.ch, d.bf, relaxed_tracks(), d.sc, B2Options{});
    const StarRisState all_t = make_ris_state(CVector(d.sc.M(), 1.0), CVector(d.sc.M()));
    double worst = 0.0;
    for (std::size_t k = 0; k < d.sc.K(); ++k) {
        const std::string id = std::to_string(k);
        const double v = row_value(prog, "private rate" + id, all_t.V_t, all_t.V_r);
        worst = std::max(worst, std::exp2(d.sc.rate_threshold(k) - d.bf.c[k]) - 1.0 - v);
    }
    CHECK(worst > 0.5);
    CHECK(worst_row_violation(prog, all_t.V_t, all_t.V_r) > 0.1);
    // the energy rows themselves hold there
    for (std::size_t m = 0; m < d.sc.M(); ++m) CHECK(row_value(prog, "energy" + std::to_string(m), all_t.V_t, all_t.V_r) == 1.0);
}

TEST_CASE("rank rows at the previous iterate") {
    oracle::Rand rng(4);
    auto d = desk(3, Access::Sdma);
    B2Options opt;
    opt.access = Access::Sdma;
    const Surrogate s = build_surrogate(d.ch, d.bf.Q(), 1.0, d.ris.nu_t, d.sc);
    for (int trial = 0; trial < 20; ++trial) {
        const CMatrix Vt = rng.psd(d.sc.M() + 1, 2 + trial % 3), Vr = rng.psd(d.sc.M() + 1, 2 + trial % 4);
        const double dt = 0.5 * (1.0 - eig_ratio(Vt)), dr = 0.5 * (1.0 - eig_ratio(Vr));
        for (double scale : {0.0, 1.0}) {
            SrocrState st;
            st.tracks.push_back(make_track(Vt, scale * dt, 0.0));
            st.tracks.push_back(make_track(Vr, scale * dr, 0.0));
            const B2Program prog = build_b2_problem(s, d.ch, d.bf, st, d.sc, opt);
            REQUIRE_FALSE(prog.V_t.dir);
            REQUIRE_FALSE(prog.V_r.dir);
            // u^H V u - tau Tr V = -delta Tr V: tight with no step, violated by exactly the step otherwise
            const double tt = Vt.trace().real(), tr = Vr.trace().real();
            CHECK(std::abs(row_value(prog, "rank t", Vt, Vr) + scale * dt * tt) <= 1e-12 * tt);
            CHECK(std::abs(row_value(prog, "rank r", Vt, Vr) + scale * dr * tr) <= 1e-12 * tr);
        }
    }
}

TEST_CASE("b2 program input validation") {
    auto d = desk(1, Access::Rsma);
    const Surrogate s = build_surrogate(d.ch, d.bf.Q(), 1.0, d.ris.nu_t, d.sc);
    B2Options opt;
    opt.sides = ElementSides::star(d.sc.M() + 1);
    CHECK_THROWS_AS(build_b2_problem(s, d.ch, d.bf, relaxed_tracks(), d.sc, opt), std::invalid_argument);
    CHECK_THROWS_AS(build_b2_problem(s, d.ch, d.bf, SrocrState{}, d.sc, B2Options{}), std::invalid_argument);
    BeamformingState bad = d.bf;
    bad.c.pop_back();
    CHECK_THROWS_AS(build_b2_problem(s, d.ch, bad, relaxed_tracks(), d.sc, B2Options{}), std::invalid_argument);
}

TEST_CASE("coefficient extraction") {
    oracle::Rand rng(21);
    SECTION("exact rank one") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t M = 1 + trial % 6;
            CVector phi_t(M), phi_r(M);
            for (std::size_t m = 0; m < M; ++m) {
                const double b = rng.uniform();
                phi_t[m] = std::polar(std::sqrt(b), rng.uniform(0.0, 2.0 * std::numbers::pi));
                phi_r[m] = std::polar(std::sqrt(1.0 - b), rng.uniform(0.0, 2.0 * std::numbers::pi));
            }
            const auto src = make_ris_state(phi_t, phi_r);
            const auto out = extract_coeffs(src.V_t, src.V_r);
            for (std::size_t m = 0; m <= M; ++m) {
                CHECK(std::abs(out.nu_t[m] - src.nu_t[m]) <= 1e-10);
                CHECK(std::abs(out.nu_r[m] - src.nu_r[m]) <= 1e-10);
            }
        }
    }
    SECTION("global phase removed") {
        const auto src = make_ris_state(half_split(4), half_split(4));
        CVector nu = src.nu_t;
        nu *= std::polar(1.0, std::numbers::pi / 4.0);
        const auto out = extract_coeffs(CMatrix::outer(nu), src.V_r);
        CHECK(out.nu_t[4] == cdouble(1.0, 0.0));
        for (std::size_t m = 0; m < 4; ++m) CHECK(std::abs(out.phi_t[m] - src.phi_t[m]) <= 1e-12);
    }
    SECTION("near rank one satisfies the coefficient invariants") {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t M = 2 + trial % 7;
            const CVector nt = random_lift(rng, M), nr = random_lift(rng, M);
            auto perturb = [&](const CVector &nu) {
                const CMatrix main = CMatrix::outer(nu);
                CMatrix noise = rng.psd(M + 1, M + 1);
                // e_max / Tr = 0.999 up to the overlap of the perturbation with nu
                noise *= 0.001 * main.trace().real() / noise.trace().real();
                return main + noise;
            };
            const CMatrix Vt = perturb(nt), Vr = perturb(nr);
            REQUIRE(hermitian_eig_max(Vt).value / Vt.trace().real() >= 0.99);
            const auto out = extract_coeffs(Vt, Vr);
            const auto bt = out.beta_t(), br = out.beta_r();
            for (std::size_t m = 0; m < M; ++m) {
                CHECK(std::abs(bt[m] + br[m] - 1.0) <= 1e-14);
                CHECK(bt[m] >= 0.0);
                CHECK(br[m] >= 0.0);
            }
            for (double p : coefficient_phases(out.phi_t)) CHECK((p >= 0.0 && p < 2.0 * std::numbers::pi));
            for (double p : coefficient_phases(out.phi_r)) CHECK((p >= 0.0 && p < 2.0 * std::numbers::pi));
            CHECK(out.nu_t[M] == cdouble(1.0, 0.0));
            CHECK(rel(out.V_t, CMatrix::outer(out.nu_t)) == 0.0);
        }
    }
    SECTION("far from rank one is rejected") {
        const CMatrix I = CMatrix::identity(4);
        CHECK_THROWS_AS(extract_coeffs(I, I), ExtractionError);
    }
    SECTION("conventional split keeps one side per element") {
        const ElementSides sides = ElementSides::split(5);
        CHECK(sides.columns(true) == std::vector<std::size_t>{0, 1, 2, 5});
        CHECK(sides.columns(false) == std::vector<std::size_t>{3, 4, 5});
        const CVector nt{0.3, cdouble(0.0, 0.2), 0.9, 1.0}, nr{0.1, 0.5, 1.0};
        const auto out = extract_coeffs(CMatrix::outer(nt), CMatrix::outer(nr), sides);
        for (std::size_t m = 0; m < 5; ++m) {
            CHECK(std::abs(out.beta_t()[m] - (m < 3 ? 1.0 : 0.0)) <= 1e-15);
            CHECK(std::abs(out.beta_r()[m] - (m < 3 ? 0.0 : 1.0)) <= 1e-15);
        }
        CHECK(std::arg(out.phi_t[1]) == Catch::Approx(std::numbers::pi / 2.0));
    }
}

TEST_CASE("coefficient phases stay in range") {
    const CVector v{std::polar(1.0, -1e-18), cdouble(-1.0, -0.0), cdouble(0.0, -1.0), cdouble(1.0, 0.0)};
    for (double p : coefficient_phases(v)) CHECK((p >= 0.0 && p < 2.0 * std::numbers::pi));
}

TEST_CASE("infeasible rate rows halve to a stall") {
    auto d = desk(1, Access::Rsma);
    Scenario hard = d.sc;
    hard.set_rate_threshold(40.0);
    B2Options opt;
    const auto r = solve_b2(d.ris, d.bf, d.ch, hard, opt);
    CHECK(r.stalled);
    CHECK_FALSE(r.converged);
    CHECK(r.accepted == 0);
    REQUIRE(r.trace.size() >= 2);
    CHECK_FALSE(r.trace.back().solvable);
    CHECK(r.gamma == r.gamma_start);
    CHECK(r.ris.phi_t.values() == d.ris.phi_t.values());
}

TEST_CASE("desk-scale coefficient runs") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (Access access : {Access::Rsma, Access::Sdma, Access::Noma}) {
            INFO("seed " << seed << " access " << static_cast<int>(access));
            auto d = desk(seed, access);
            B2Options opt;
            opt.access = access;
            B1Options rate_opt;
            rate_opt.access = access;
            if (access == Access::Noma) {
                opt.decode_order = noma_order(d.ch, d.ris.phi_r);
                rate_opt.decode_order = opt.decode_order;
            }
            const auto r = solve_b2(d.ris, d.bf, d.ch, d.sc, opt);
            CHECK(r.gamma >= r.gamma_start);
            CHECK(r.gamma == sensing_gamma(d.ch, r.ris.phi_t, d.bf, SensingParams::from(d.sc, d.ch)));
            for (std::size_t i = 1; i < r.trace.size(); ++i) CHECK(r.trace[i].omega >= r.trace[i - 1].omega);
            CHECK(rate_violation(d.ch, r.ris.phi_r, d.bf, d.sc, rate_opt) <= 1e-7);
            const auto bt = r.ris.beta_t(), br = r.ris.beta_r();
            for (std::size_t m = 0; m < d.sc.M(); ++m) CHECK(std::abs(bt[m] + br[m] - 1.0) <= 1e-14);
            CHECK(r.converged);
            for (const auto &t : r.srocr.tracks) CHECK(std::abs(1.0 - t.tau) <= d.sc.epsilon_1);
            // rank-one quality gate
            CHECK(r.gamma_extracted >= 0.99 * r.gamma_lifted);

            // restarting from the output is a fixed point up to the acceptance rule
            const auto again = solve_b2(r.ris, d.bf, d.ch, d.sc, opt);
            CHECK(again.gamma >= r.gamma);
            CHECK(again.gamma <= r.gamma * (1.0 + 1e-2));
        }
    }
}

TEST_CASE("conventional surface run keeps the element split") {
    auto d = desk(2, Access::Rsma);
    CVector pt(d.sc.M()), pr(d.sc.M());
    for (std::size_t m = 0; m < d.sc.M(); ++m) (m < d.sc.M() / 2 ? pt : pr)[m] = 1.0;
    const auto start = make_ris_state(pt, pr);
    B1Options b1;
    auto init = initial_state(d.ch, pt, pr, d.sc, b1);
    REQUIRE(init);
    B2Options opt;
    opt.sides = ElementSides::split(d.sc.M());
    const auto r = solve_b2(start, *init, d.ch, d.sc, opt);
    CHECK(r.gamma >= r.gamma_start);
    for (std::size_t m = 0; m < d.sc.M(); ++m) {
        CHECK(std::abs(r.ris.beta_t()[m] - (m < d.sc.M() / 2 ? 1.0 : 0.0)) <= 1e-15);
        CHECK(std::abs(r.ris.beta_r()[m] - (m < d.sc.M() / 2 ? 0.0 : 1.0)) <= 1e-15);
    }
}

TEST_CASE("coefficient trace as CSV") {
    auto d = desk(2, Access::Rsma);
    const auto r = solve_b2(d.ris, d.bf, d.ch, d.sc, B2Options{});
    std::ostringstream os;
    write_trace_csv(os, r.trace);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "iteration,omega,objective,solvable,tau0,tau1");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == r.trace.size());
}
