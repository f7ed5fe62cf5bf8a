#pragma once

// Coefficient subproblem: Kronecker lift of the quartic sensing objective, first-order surrogate at the
// current transmission coefficients, SROCR on V_t / V_r, and rank-one coefficient extraction.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "beamform.hpp"
#include "conic.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "scenario.hpp"

namespace starisac {

// Which side each element serves. A STAR element serves both; a conventional surface pair splits the
// elements into a transmit-only half and a reflect-only half.
struct ElementSides {
    std::vector<bool> transmit, reflect;

    std::size_t M() const { return transmit.size(); }

    static ElementSides star(std::size_t M) { return {std::vector<bool>(M, true), std::vector<bool>(M, true)}; }
    static ElementSides split(std::size_t M) {
        ElementSides s{std::vector<bool>(M, false), std::vector<bool>(M, false)};
        for (std::size_t m = 0; m < M; ++m) (m < (M + 1) / 2 ? s.transmit : s.reflect)[m] = true;
        return s;
    }
    // active element indices followed by the trailing index M of the lifted vector
    std::vector<std::size_t> columns(bool transmit_side) const {
        const auto &use = transmit_side ? transmit : reflect;
        std::vector<std::size_t> c;
        for (std::size_t m = 0; m < use.size(); ++m)
            if (use[m]) c.push_back(m);
        c.push_back(use.size());
        return c;
    }
};

inline std::vector<std::size_t> all_columns(std::size_t M) {
    std::vector<std::size_t> c(M + 1);
    for (std::size_t m = 0; m <= M; ++m) c[m] = m;
    return c;
}

inline CMatrix select_columns(const CMatrix &a, const std::vector<std::size_t> &cols) {
    CMatrix r(a.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) {
        if (cols[j] >= a.cols()) throw std::invalid_argument("select_columns: index out of range");
        std::copy(a.col_ptr(cols[j]), a.col_ptr(cols[j]) + a.rows(), r.col_ptr(j));
    }
    return r;
}

inline CVector select_entries(const CVector &v, const std::vector<std::size_t> &idx) {
    CVector r(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (idx[j] >= v.size()) throw std::invalid_argument("select_entries: index out of range");
        r[j] = v[idx[j]];
    }
    return r;
}

// One echo path lifted to the coefficient vector: nu^H A nu = ||h||^2 and nu^H B nu = h^H A(theta) Q A(theta)^H h,
// weighted so that sum_e weight_e (nu^H A_e nu)(nu^H B_e nu) = omega Tr(B_t) - Tr(A_t).
struct EchoLift {
    CMatrix A, B;
    double weight;
};

inline std::vector<EchoLift> echo_lifts(const ChannelSet &ch, const CMatrix &Q, double omega, const SensingParams &sp,
                                        const std::vector<std::size_t> &cols) {
    const std::size_t N = ch.N();
    auto one = [&](const CVector &h_ris, const CVector &h_dir, double theta, cdouble beta, double w) {
        const CMatrix F = select_columns(lifting_matrix(ch.H_br, h_ris, h_dir), cols);
        const CMatrix R = response_matrix(theta, beta, N);
        const CMatrix Qe = (R * Q * R.adjoint()).hermitian_part();
        return EchoLift{lifted_gram(F, CMatrix::identity(N)), lifted_gram(F, Qe), w};
    };
    std::vector<EchoLift> out;
    out.push_back(one(ch.h_rt, ch.h_bt, sp.theta_target, sp.beta_target, -sp.gamma()));
    for (std::size_t i = 0; i < ch.I(); ++i)
        out.push_back(one(ch.h_ri.at(i), ch.h_bi.at(i), sp.theta_scatterers.at(i), sp.beta_scatterers.at(i), omega * sp.gamma()));
    return out;
}

// sum_e weight_e (B_e^T kron A_e); (M+1)^2 square, for checks only
inline CMatrix kronecker_objective(const ChannelSet &ch, const CMatrix &Q, double omega, const Scenario &sc,
                                   std::vector<std::size_t> cols = {}) {
    if (cols.empty()) cols = all_columns(ch.M());
    const auto lifts = echo_lifts(ch, Q, omega, SensingParams::from(sc, ch), cols);
    const std::size_t d = cols.size();
    CMatrix F(d * d, d * d);
    for (const auto &e : lifts) F.axpy(e.weight, kron(e.B.transpose(), e.A));
    return F;
}

// First-order model of vec(V)^H F vec(V) at V^(l) = nu nu^H:
//   Tr(V (D + D^H)) - touch,   D = sum_e weight_e B_e nu nu^H A_e.
struct Surrogate {
    CMatrix delta_psi;
    double touch = 0.0; // vec(V^(l))^H F vec(V^(l))

    // F vec(V^(l)); its un-vectorization is delta_psi^H
    CVector psi() const { return vec(delta_psi.adjoint()); }
    double constant() const { return -touch; }
    CMatrix objective_matrix() const { return (delta_psi + delta_psi.adjoint()).hermitian_part(); }
    double value(const CMatrix &V) const { return real_trace_product(objective_matrix(), V) + constant(); }
};

inline Surrogate build_surrogate(const ChannelSet &ch, const CMatrix &Q, double omega, const CVector &nu_t, const Scenario &sc,
                                 std::vector<std::size_t> cols = {}) {
    if (cols.empty()) cols = all_columns(ch.M());
    if (nu_t.size() != cols.size()) throw std::invalid_argument("build_surrogate: expansion point does not match the lifted dimension");
    if (Q.rows() != ch.N() || Q.cols() != ch.N()) throw std::invalid_argument("build_surrogate: covariance dimension mismatch");
    const auto lifts = echo_lifts(ch, Q, omega, SensingParams::from(sc, ch), cols);
    const std::size_t d = cols.size();
    Surrogate s;
    s.delta_psi = CMatrix(d, d);
    for (const auto &e : lifts) {
        const CVector Bn = e.B * nu_t, An = e.A * nu_t;
        s.delta_psi.axpy(e.weight, CMatrix::outer(Bn, An));
        s.touch += e.weight * dot(nu_t, An).real() * dot(nu_t, Bn).real();
    }
    return s;
}

// Tr(A_t) and Tr(B_t) for a lifted (not necessarily rank-one) V_t: sum over echoes of Tr(A V B V)
inline SensingTraces lifted_sensing_traces(const ChannelSet &ch, const CMatrix &Q, const CMatrix &V_t, const Scenario &sc,
                                           std::vector<std::size_t> cols = {}) {
    if (cols.empty()) cols = all_columns(ch.M());
    const auto lifts = echo_lifts(ch, Q, 1.0, SensingParams::from(sc, ch), cols);
    SensingTraces t{0.0, 0.0};
    for (std::size_t e = 0; e < lifts.size(); ++e) {
        const double v = ((lifts[e].A * V_t) * (lifts[e].B * V_t)).trace().real() * std::abs(lifts[e].weight);
        (e == 0 ? t.A : t.B) += v;
    }
    return t;
}

// phases of a coefficient vector in [0, 2 pi)
inline std::vector<double> coefficient_phases(const CVector &phi) {
    std::vector<double> p;
    for (const auto &x : phi) {
        double a = std::arg(x);
        if (a < 0.0) a += 2.0 * std::numbers::pi;
        if (a >= 2.0 * std::numbers::pi) a = 0.0;
        p.push_back(a);
    }
    return p;
}

// sqrt(e_max) u_max with the global phase removed and the trailing entry set to 1
inline CVector principal_lift(const CMatrix &V) {
    const auto ep = hermitian_eig_max(V);
    CVector nu = ep.vector;
    nu *= cdouble(std::sqrt(std::max(0.0, ep.value)), 0.0);
    const cdouble last = nu[nu.size() - 1];
    if (std::abs(last) > 0.0) nu *= std::conj(last) / std::abs(last);
    nu[nu.size() - 1] = 1.0;
    return nu;
}

// Scatters reduced lifted vectors onto the M elements, clips amplitudes to [0, 1] and re-projects
// every element onto beta_t + beta_r = 1.
inline StarRisState coefficients_from(const CVector &nu_t, const CVector &nu_r, const ElementSides &sides) {
    const std::size_t M = sides.M();
    const auto ct = sides.columns(true), cr = sides.columns(false);
    if (nu_t.size() != ct.size() || nu_r.size() != cr.size()) throw std::invalid_argument("coefficients_from: lifted length mismatch");
    CVector pt(M), pr(M);
    for (std::size_t j = 0; j + 1 < ct.size(); ++j) pt[ct[j]] = nu_t[j];
    for (std::size_t j = 0; j + 1 < cr.size(); ++j) pr[cr[j]] = nu_r[j];
    for (std::size_t m = 0; m < M; ++m) {
        const double bt = std::min(1.0, std::norm(pt[m])), br = std::min(1.0, std::norm(pr[m]));
        double t;
        if (sides.transmit[m] && sides.reflect[m]) {
            t = std::clamp(0.5 * (bt - br + 1.0), 0.0, 1.0);
        } else {
            t = sides.transmit[m] ? 1.0 : 0.0;
        }
        const double at = std::abs(pt[m]) > 0.0 ? std::arg(pt[m]) : 0.0;
        const double ar = std::abs(pr[m]) > 0.0 ? std::arg(pr[m]) : 0.0;
        pt[m] = std::polar(std::sqrt(t), at);
        pr[m] = std::polar(std::sqrt(1.0 - t), ar);
    }
    return make_ris_state(pt, pr);
}

class ExtractionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline StarRisState extract_coeffs(const CMatrix &V_t, const CMatrix &V_r, const ElementSides &sides) {
    for (const CMatrix *v : {&V_t, &V_r}) {
        require_hermitian(*v, "extract_coeffs");
        const double tr = v->trace().real();
        if (!(tr > 0.0) || hermitian_eig_max(*v).value / tr < 0.9)
            throw ExtractionError("extract_coeffs: lifted matrix is too far from rank one");
    }
    return coefficients_from(principal_lift(V_t), principal_lift(V_r), sides);
}

inline StarRisState extract_coeffs(const CMatrix &V_t, const CMatrix &V_r) {
    if (V_t.rows() != V_r.rows() || V_t.rows() == 0) throw std::invalid_argument("extract_coeffs: dimension mismatch");
    return extract_coeffs(V_t, V_r, ElementSides::star(V_t.rows() - 1));
}

struct B2Options {
    Access access = Access::Rsma;
    std::vector<std::size_t> decode_order;
    std::optional<ElementSides> sides; // default: every element on both sides
    std::size_t max_iters = 60;
    std::size_t max_relaxed_iters = 20;
    conic::Settings solver = interior_point_settings();
};

struct B2Program {
    conic::ConicProblem problem;
    CovVar V_t, V_r;
    double objective_scale = 1.0;
};

// rank tracks: 0 -> V_t, 1 -> V_r
inline B2Program build_b2_problem(const Surrogate &sur, const ChannelSet &ch, const BeamformingState &bf, const SrocrState &srocr,
                                  const Scenario &sc, const B2Options &opt) {
    using namespace conic;
    const std::size_t N = ch.N(), K = ch.K(), M = ch.M();
    const ElementSides sides = opt.sides.value_or(ElementSides::star(M));
    if (sides.M() != M || sides.reflect.size() != M) throw std::invalid_argument("build_b2_problem: element sides do not match M");
    const auto ct = sides.columns(true), cr = sides.columns(false);
    const std::size_t dt = ct.size(), dr = cr.size();
    if (sur.delta_psi.rows() != dt) throw std::invalid_argument("build_b2_problem: surrogate dimension mismatch");
    if (bf.N() != N || bf.K() != K) throw std::invalid_argument("build_b2_problem: beamformer dimensions do not match the channels");
    if (srocr.tracks.size() != 2) throw std::invalid_argument("build_b2_problem: two rank tracks expected");
    const bool rsma = opt.access == Access::Rsma;
    if (rsma && bf.c.size() != K) throw std::invalid_argument("build_b2_problem: common split has wrong length");

    B2Program prog;
    auto &p = prog.problem;
    // a fixed rank-one direction cannot meet unit-diagonal rows unless its magnitudes are exactly equal
    auto single_sided = [&](bool transmit) {
        for (std::size_t m = 0; m < M; ++m)
            if ((transmit ? sides.transmit[m] : sides.reflect[m]) && !(sides.transmit[m] && sides.reflect[m])) return true;
        return false;
    };
    auto cov = [&](const std::string &name, const SrocrTrack &t, std::size_t d) {
        if (t.active && t.tau >= rank_one_tau && !single_sided(name == "V_t")) {
            if (t.u.size() != d) throw std::invalid_argument("build_b2_problem: rank direction has wrong length");
            return CovVar{p.add_psd(name, 1), t.u};
        }
        return CovVar{p.add_psd(name, d), std::nullopt};
    };
    prog.V_t = cov("V_t", srocr.tracks[0], dt);
    prog.V_r = cov("V_r", srocr.tracks[1], dr);

    {
        CMatrix obj = sur.objective_matrix();
        double s = std::abs(sur.touch) > 0.0 ? 1.0 / std::abs(sur.touch) : 0.0;
        if (!(s > 0.0) || !std::isfinite(s)) {
            const double mx = obj.max_abs();
            s = mx > 0.0 ? 1.0 / mx : 1.0;
        }
        prog.objective_scale = s;
        obj *= s;
        LinearForm f;
        prog.V_t.add_to(f, obj);
        p.minimize(f.add_constant(s * sur.constant()));
    }

    auto unit = [](std::size_t d, std::size_t i) {
        CMatrix e(d, d);
        e(i, i) = 1.0;
        return e;
    };
    // amplitude pairing and the trailing unit entries
    {
        std::size_t jt = 0, jr = 0;
        for (std::size_t m = 0; m < M; ++m) {
            LinearForm f;
            if (sides.transmit[m]) prog.V_t.add_to(f, unit(dt, jt++));
            if (sides.reflect[m]) prog.V_r.add_to(f, unit(dr, jr++));
            if (sides.transmit[m] || sides.reflect[m]) p.add_constraint(std::move(f), Sense::Eq, 1.0, "energy" + std::to_string(m));
        }
        LinearForm ft, fr;
        prog.V_t.add_to(ft, unit(dt, dt - 1));
        prog.V_r.add_to(fr, unit(dr, dr - 1));
        p.add_constraint(std::move(ft), Sense::Eq, 1.0, "V_t unit");
        p.add_constraint(std::move(fr), Sense::Eq, 1.0, "V_r unit");
    }

    // rate rows, linear in V_r with W and c fixed
    std::vector<CMatrix> Fk;
    for (std::size_t k = 0; k < K; ++k) Fk.push_back(select_columns(gt_lifting_matrix(ch, k), cr));
    const CMatrix zero(N, N);
    const CMatrix &W0 = bf.W_0 ? *bf.W_0 : zero;
    if (rsma) {
        const double sum_c = std::accumulate(bf.c.begin(), bf.c.end(), 0.0);
        const CMatrix all_p = bf.private_sum();
        for (std::size_t k = 0; k < K; ++k) {
            const double rho = 1.0 / sc.noise(k);
            CMatrix q3 = W0;
            for (std::size_t j = 0; j < K; ++j)
                if (j != k) q3 += bf.W_p[j];
            const CMatrix g1 = lifted_gram(Fk[k], bf.W_c + all_p + W0);
            const CMatrix g2 = lifted_gram(Fk[k], all_p + W0);
            const CMatrix g3 = lifted_gram(Fk[k], q3);
            const std::string id = std::to_string(k);
            {
                const double e = std::exp2(sum_c);
                LinearForm f;
                prog.V_r.add_to(f, rho * (g1 - e * g2));
                p.add_constraint(std::move(f), Sense::Ge, e - 1.0, "common rate" + id);
            }
            {
                const double e = std::exp2(sc.rate_threshold(k) - bf.c[k]);
                LinearForm f;
                prog.V_r.add_to(f, rho * (g2 - e * g3));
                p.add_constraint(std::move(f), Sense::Ge, e - 1.0, "private rate" + id);
            }
        }
    } else {
        for (const auto &q : sinr_requirements(opt.access, sc, opt.decode_order)) {
            const double rho = 1.0 / sc.noise(q.observer);
            const double t = std::exp2(q.rate) - 1.0;
            CMatrix interf = W0;
            for (std::size_t j : q.interferers) interf += bf.W_p[j];
            const CMatrix g = lifted_gram(Fk[q.observer], bf.W_p[q.stream]);
            const CMatrix gi = lifted_gram(Fk[q.observer], interf);
            LinearForm f;
            prog.V_r.add_to(f, (rho / (1.0 + t)) * g - (rho * t / (1.0 + t)) * gi);
            p.add_constraint(std::move(f), Sense::Ge, t / (1.0 + t), "sinr " + std::to_string(q.stream) + "@" + std::to_string(q.observer));
        }
    }

    for (std::size_t i = 0; i < 2; ++i) {
        const auto &t = srocr.tracks[i];
        const CovVar &v = i == 0 ? prog.V_t : prog.V_r;
        if (!t.active || v.dir) continue;
        const std::size_t d = i == 0 ? dt : dr;
        LinearForm f;
        v.add_to(f, CMatrix::outer(t.u) - t.tau * CMatrix::identity(d));
        p.add_constraint(std::move(f), Sense::Ge, 0.0, i == 0 ? "rank t" : "rank r");
    }
    return prog;
}

struct B2Result {
    StarRisState ris; // best accepted coefficients
    SrocrState srocr;
    std::vector<TraceRow> trace;
    std::size_t iterations = 0;
    std::size_t solves = 0;
    std::size_t accepted = 0;
    bool converged = false;
    bool stalled = false;
    double gamma_start = 0.0;
    double gamma = 0.0;
    // last lifted solution, and the sensing ratio on it versus on the coefficients extracted from it
    CMatrix V_t, V_r;
    double gamma_lifted = 0.0;
    double gamma_extracted = 0.0;
};

// Algorithm: relaxed surrogate steps without rank rows, then SROCR iterations. Each solution is turned into
// coefficients and accepted only if it raises the sensing ratio and keeps every rate requirement.
inline B2Result solve_b2(const StarRisState &start, const BeamformingState &bf, const ChannelSet &ch, const Scenario &sc,
                         const B2Options &opt) {
    const std::size_t M = ch.M(), N = ch.N();
    if (start.M() != M) throw std::invalid_argument("solve_b2: coefficient length does not match the channels");
    const ElementSides sides = opt.sides.value_or(ElementSides::star(M));
    const auto ct = sides.columns(true), cr = sides.columns(false);
    const SensingParams sp = SensingParams::from(sc, ch);
    const CMatrix Q = bf.Q();

    B1Options rate_opt;
    rate_opt.access = opt.access;
    rate_opt.decode_order = opt.decode_order;
    auto violation = [&](const StarRisState &r) { return rate_violation(ch, r.phi_r, bf, sc, rate_opt); };
    auto gamma_of = [&](const StarRisState &r) { return sensing_gamma(ch, r.phi_t, bf, sp); };

    B2Result res;
    StarRisState best = start;
    CVector best_t = select_entries(start.nu_t, ct), best_r = select_entries(start.nu_r, cr);
    double g_best = gamma_of(best);
    res.gamma_start = g_best;
    const double viol_cap = std::max(1e-8, violation(start));

    // line search from the best point toward the candidate; first improving, rate-feasible step wins
    auto consider = [&](const CMatrix &Vt, const CMatrix &Vr) {
        const CVector nt = principal_lift(Vt), nr = principal_lift(Vr);
        for (int h = 0; h <= 6; ++h) {
            const double lam = std::ldexp(1.0, -h);
            CVector ct_(nt.size()), cr_(nr.size());
            for (std::size_t j = 0; j < nt.size(); ++j) ct_[j] = best_t[j] + lam * (nt[j] - best_t[j]);
            for (std::size_t j = 0; j < nr.size(); ++j) cr_[j] = best_r[j] + lam * (nr[j] - best_r[j]);
            StarRisState cand = coefficients_from(ct_, cr_, sides);
            const double g = gamma_of(cand);
            if (g > g_best && violation(cand) <= viol_cap) {
                best = std::move(cand);
                best_t = select_entries(best.nu_t, ct);
                best_r = select_entries(best.nu_r, cr);
                g_best = g;
                ++res.accepted;
                return true;
            }
        }
        return false;
    };

    struct Solved {
        CMatrix V_t, V_r;
        double f;
        double decrease; // surrogate value at the expansion point minus the optimum, normalized
    };
    CVector expansion = best_t;
    auto attempt = [&](const SrocrState &st) -> std::optional<Solved> {
        const Surrogate sur = build_surrogate(ch, Q, g_best, expansion, sc, ct);
        const B2Program prog = build_b2_problem(sur, ch, bf, st, sc, opt);
        const auto sol = conic::solve(prog.problem, opt.solver);
        ++res.solves;
        if (sol.status != conic::Status::Optimal) return std::nullopt;
        return Solved{psd_project(prog.V_t.value(sol)), psd_project(prog.V_r.value(sol)), sol.objective,
                      prog.objective_scale * sur.touch - sol.objective};
    };
    auto record_lifted = [&](const Solved &s) {
        res.V_t = s.V_t;
        res.V_r = s.V_r;
        const auto lt = lifted_sensing_traces(ch, Q, s.V_t, sc, ct);
        res.gamma_lifted = lt.A / (lt.B + static_cast<double>(N));
        res.gamma_extracted = gamma_of(coefficients_from(principal_lift(s.V_t), principal_lift(s.V_r), sides));
    };

    CMatrix ref_t = CMatrix::outer(best_t), ref_r = CMatrix::outer(best_r);
    double f_prev = 0.0;
    bool gap_ok = false;
    for (std::size_t l = 0; l < opt.max_relaxed_iters; ++l) {
        ++res.iterations;
        SrocrState relaxed;
        relaxed.tracks.resize(2);
        const auto s = attempt(relaxed);
        if (!s) break;
        record_lifted(*s);
        ref_t = s->V_t;
        ref_r = s->V_r;
        const bool improved = consider(s->V_t, s->V_r);
        expansion = principal_lift(s->V_t);
        gap_ok = std::abs(s->decrease) <= sc.epsilon_2;
        f_prev = s->f;
        if (!improved || gap_ok) break;
    }
    const std::size_t relaxed_iters = res.iterations;

    auto tracks_from = [&](const std::vector<double> &d) {
        SrocrState st;
        st.tracks.push_back(make_track(ref_t, d[0], 0.0));
        st.tracks.push_back(make_track(ref_r, d[1], 0.0));
        return st;
    };
    SrocrState st = tracks_from({0.5 * (1.0 - eig_ratio(ref_t)), 0.5 * (1.0 - eig_ratio(ref_r))});
    res.trace.push_back({0, g_best, f_prev, detail::track_taus(st), true});
    for (std::size_t l = 1; relaxed_iters + l <= opt.max_iters; ++l) {
        if (st.converged(sc.epsilon_1) && gap_ok && near_rank_one({&ref_t, &ref_r}, 0.0)) break;
        res.iterations = relaxed_iters + l;
        const double omega = g_best;
        const auto s = attempt(st);
        if (s) {
            record_lifted(*s);
            gap_ok = std::abs(s->decrease) <= sc.epsilon_2;
            f_prev = s->f;
            ref_t = s->V_t;
            ref_r = s->V_r;
            consider(s->V_t, s->V_r);
            expansion = principal_lift(s->V_t);
        } else {
            st.halve();
            gap_ok = false;
            if (st.max_delta() < 1e-12) {
                res.stalled = true;
                res.trace.push_back({l, omega, f_prev, detail::track_taus(st), false});
                break;
            }
        }
        st = tracks_from({st.tracks[0].delta, st.tracks[1].delta});
        res.trace.push_back({l, omega, f_prev, detail::track_taus(st), s.has_value()});
    }
    res.converged = !res.stalled && st.converged(sc.epsilon_1) && gap_ok && near_rank_one({&ref_t, &ref_r}, 0.0);
    res.srocr = std::move(st);
    res.ris = std::move(best);
    res.gamma = g_best;
    return res;
}

} // namespace starisac
