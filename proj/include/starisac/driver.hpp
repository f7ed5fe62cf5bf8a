#pragma once

// Outer alternating loop over the beamforming and coefficient subproblems, the benchmark schemes, and the
// final constraint audit.

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "beamform.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "starris.hpp"

namespace starisac {

enum class Scheme { StarRsma, StarRsmaNoSensing, StarNoma, StarSdma, TraditionalRisRsma, RandomRisRsma, NoRisRsma };

inline const std::vector<Scheme> &all_schemes() {
    static const std::vector<Scheme> s{Scheme::StarRsma,           Scheme::StarRsmaNoSensing, Scheme::StarNoma, Scheme::StarSdma,
                                       Scheme::TraditionalRisRsma, Scheme::RandomRisRsma,     Scheme::NoRisRsma};
    return s;
}

inline const char *to_string(Scheme s) {
    switch (s) {
    case Scheme::StarRsma: return "star-rsma";
    case Scheme::StarRsmaNoSensing: return "star-rsma-no-sensing";
    case Scheme::StarNoma: return "star-noma";
    case Scheme::StarSdma: return "star-sdma";
    case Scheme::TraditionalRisRsma: return "traditional-ris-rsma";
    case Scheme::RandomRisRsma: return "random-ris-rsma";
    case Scheme::NoRisRsma: return "no-ris-rsma";
    }
    return "?";
}

inline Scheme scheme_from_string(const std::string &name) {
    for (Scheme s : all_schemes())
        if (name == to_string(s)) return s;
    throw std::invalid_argument("unknown scheme '" + name + "'");
}

enum class Surface { Star, Split, Fixed, Absent };

struct SchemeConfig {
    Scheme scheme = Scheme::StarRsma;
    Access access = Access::Rsma;
    bool with_w0 = false;
    Surface surface = Surface::Star;
    bool optimize_surface = true;
    ElementSides sides;
    StarRisState initial;
};

// Uniform phases and beta_t ~ U[0, 1], drawn from the scenario seed on a stream of its own
inline StarRisState random_coefficients(const Scenario &sc) {
    const rng::Philox gen(sc.seed, 0x52414e44ULL);
    CVector pt(sc.M()), pr(sc.M());
    for (std::size_t m = 0; m < sc.M(); ++m) {
        const auto b = gen.block({m, 0, 0, 0});
        const double bt = rng::to_unit(b[0]);
        pt[m] = std::polar(std::sqrt(bt), 2.0 * std::numbers::pi * rng::to_unit(b[1]));
        pr[m] = std::polar(std::sqrt(1.0 - bt), 2.0 * std::numbers::pi * rng::to_unit(b[2]));
    }
    return make_ris_state(pt, pr);
}

inline SchemeConfig apply_scheme(Scheme scheme, const Scenario &sc) {
    const std::size_t M = sc.M();
    SchemeConfig cfg;
    cfg.scheme = scheme;
    cfg.sides = ElementSides::star(M);
    CVector half(M);
    for (auto &x : half) x = std::sqrt(0.5);
    cfg.initial = make_ris_state(half, half);
    switch (scheme) {
    case Scheme::StarRsma: cfg.with_w0 = true; break;
    case Scheme::StarRsmaNoSensing: break;
    case Scheme::StarNoma: cfg.access = Access::Noma; break;
    case Scheme::StarSdma: cfg.access = Access::Sdma; break;
    case Scheme::TraditionalRisRsma: {
        if (M % 2 != 0) throw std::invalid_argument("apply_scheme: the conventional surface pair needs an even M");
        cfg.surface = Surface::Split;
        cfg.sides = ElementSides::split(M);
        CVector pt(M), pr(M);
        for (std::size_t m = 0; m < M; ++m) (m < M / 2 ? pt : pr)[m] = 1.0;
        cfg.initial = make_ris_state(pt, pr);
        break;
    }
    case Scheme::RandomRisRsma:
        cfg.surface = Surface::Fixed;
        cfg.optimize_surface = false;
        cfg.initial = random_coefficients(sc);
        break;
    case Scheme::NoRisRsma:
        cfg.surface = Surface::Absent;
        cfg.optimize_surface = false;
        cfg.initial = make_ris_state(CVector(M), CVector(M));
        break;
    }
    if (M == 0) cfg.optimize_surface = false;
    return cfg;
}

struct RunOptions {
    std::optional<double> epsilon;     // relative-omega stop; default: scenario epsilon_outer
    std::size_t max_outer = 100;
    std::optional<bool> with_w0;       // override the scheme's mode
};

struct Audit {
    double common_excess = 0.0;  // sum c - min_k R_c,k (RSMA)
    double rate_shortfall = 0.0; // max_k R_th - c_k - R_p,k, or the SINR-rate shortfall for SDMA / NOMA
    double power_ratio = 0.0;    // total power / P_max
    double pairing_error = 0.0;  // max_m |beta_t + beta_r - 1| on elements present, or the mask error
    double min_eigenvalue = 0.0; // smallest eigenvalue over all covariance matrices, relative to P_max
    bool ok = false;
};

struct RunResult {
    Scheme scheme = Scheme::StarRsma;
    std::uint64_t seed = 0;
    std::vector<double> omega_trace; // sensing ratio at the start and after every outer iteration
    double gamma = 0.0;
    BeamformingState state;
    StarRisState ris;
    std::vector<double> c, common_rates, private_rates;
    double trace_w0 = 0.0;
    Audit audit;
    bool feasible = false;  // a feasible start existed and the final state passes the audit
    bool converged = false; // relative-omega test met
    bool degraded = false;  // a subproblem stalled; the last accepted iterate is reported
    std::size_t outer_iters = 0;
    std::size_t b2_stalls = 0;
    std::vector<double> tau_beamforming; // final SROCR thresholds: W_c, then W_p,k
    std::vector<double> tau_surface;     // V_t, V_r
    std::optional<CMatrix> V_t, V_r;     // lifted coefficients of the last coefficient step
    double wall_ms = 0.0;
    std::string note;
};

inline Audit audit_state(const ChannelSet &ch, const StarRisState &ris, const BeamformingState &s, const Scenario &sc,
                         const SchemeConfig &cfg, const std::vector<std::size_t> &decode_order) {
    Audit a;
    if (cfg.access == Access::Rsma) {
        const auto r = gt_rates(ch, ris.phi_r, s, sc);
        const double sum_c = std::accumulate(s.c.begin(), s.c.end(), 0.0);
        a.common_excess = sum_c - *std::min_element(r.common.begin(), r.common.end());
        a.rate_shortfall = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < s.K(); ++k) a.rate_shortfall = std::max(a.rate_shortfall, sc.rate_threshold(k) - s.c[k] - r.priv[k]);
        for (double ck : s.c) a.rate_shortfall = std::max(a.rate_shortfall, -ck);
    } else {
        B1Options o;
        o.access = cfg.access;
        o.decode_order = decode_order;
        a.common_excess = -std::numeric_limits<double>::infinity();
        for (double ck : s.c) a.common_excess = std::max(a.common_excess, std::abs(ck));
        a.rate_shortfall = rate_violation(ch, ris.phi_r, s, sc, o);
    }
    a.power_ratio = s.total_power() / sc.p_max;
    const auto bt = ris.beta_t(), br = ris.beta_r();
    for (std::size_t m = 0; m < ris.M(); ++m) {
        switch (cfg.surface) {
        case Surface::Star:
        case Surface::Fixed: a.pairing_error = std::max(a.pairing_error, std::abs(bt[m] + br[m] - 1.0)); break;
        case Surface::Split:
            a.pairing_error = std::max(a.pairing_error, std::abs(bt[m] - (cfg.sides.transmit[m] ? 1.0 : 0.0)));
            a.pairing_error = std::max(a.pairing_error, std::abs(br[m] - (cfg.sides.reflect[m] ? 1.0 : 0.0)));
            break;
        case Surface::Absent: a.pairing_error = std::max({a.pairing_error, bt[m], br[m]}); break;
        }
    }
    std::vector<const CMatrix *> mats{&s.W_c};
    for (const auto &w : s.W_p) mats.push_back(&w);
    if (s.W_0) mats.push_back(&*s.W_0);
    a.min_eigenvalue = std::numeric_limits<double>::infinity();
    for (const CMatrix *w : mats) a.min_eigenvalue = std::min(a.min_eigenvalue, hermitian_eig(*w).values.front() / sc.p_max);
    a.ok = a.common_excess <= 1e-6 && a.rate_shortfall <= 1e-6 && a.power_ratio <= 1.0 + 1e-8 && a.pairing_error <= 1e-14 &&
           a.min_eigenvalue >= -1e-9;
    return a;
}

namespace detail {

// for SDMA / NOMA the reported rate of GT k is the smallest rate at which its stream is decoded
inline void fill_rates(RunResult &r, const ChannelSet &ch, const Scenario &sc, Access access, const std::vector<std::size_t> &order) {
    const auto g = gt_rates(ch, r.ris.phi_r, r.state, sc);
    r.c = r.state.c;
    r.common_rates = g.common;
    r.private_rates = g.priv;
    if (access != Access::Rsma) {
        r.private_rates.assign(sc.K(), std::numeric_limits<double>::infinity());
        for (const auto &q : sinr_requirements(access, sc, order))
            r.private_rates[q.stream] = std::min(r.private_rates[q.stream], requirement_rate(q, ch, r.ris.phi_r, r.state, sc));
    }
    r.trace_w0 = r.state.W_0 ? r.state.W_0->trace().real() : 0.0;
}

} // namespace detail

// Alternates the beamforming and coefficient subproblems until the relative change of the sensing
// ratio is within epsilon or max_outer iterations have run.
inline RunResult optimize(const Scenario &sc, Scheme scheme, const RunOptions &opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    sc.validate();
    const SchemeConfig cfg = apply_scheme(scheme, sc);
    const ChannelSet ch = gen_channels(sc);
    const SensingParams sp = SensingParams::from(sc, ch);
    const double eps = opt.epsilon.value_or(sc.epsilon_outer);

    RunResult res;
    res.scheme = scheme;
    res.seed = sc.seed;
    res.ris = cfg.initial;

    B1Options b1;
    b1.access = cfg.access;
    b1.with_w0 = opt.with_w0.value_or(cfg.with_w0);
    if (cfg.access == Access::Noma) b1.decode_order = noma_order(ch, res.ris.phi_r);
    B2Options b2;
    b2.access = cfg.access;
    b2.decode_order = b1.decode_order;
    b2.sides = cfg.sides;

    auto finish = [&] {
        res.gamma = sensing_gamma(ch, res.ris.phi_t, res.state, sp);
        detail::fill_rates(res, ch, sc, cfg.access, b1.decode_order);
        res.audit = audit_state(ch, res.ris, res.state, sc, cfg, b1.decode_order);
        res.feasible = res.audit.ok;
        res.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return res;
    };

    auto init = initial_state(ch, res.ris.phi_t, res.ris.phi_r, sc, b1);
    if (!init) {
        res.note = "no feasible starting point";
        res.state.W_c = CMatrix(sc.N(), sc.N());
        res.state.W_p.assign(sc.K(), CMatrix(sc.N(), sc.N()));
        res.state.c.assign(sc.K(), 0.0);
        res.state.a.assign(sc.K(), 0.0);
        res.state.b.assign(sc.K(), 0.0);
        finish();
        res.feasible = false;
        return res;
    }
    res.state = std::move(*init);
    double omega = sensing_gamma(ch, res.ris.phi_t, res.state, sp);
    res.omega_trace.push_back(omega);

    for (std::size_t n = 1; n <= opt.max_outer; ++n) {
        res.outer_iters = n;
        try {
            auto r1 = solve_b1(res.state, ch, res.ris.phi_t, res.ris.phi_r, sc, b1);
            res.tau_beamforming = detail::track_taus(r1.srocr);
            // keep the previous beamformers if the new ones lose ground or break a rate requirement
            const bool keeps_rates = rate_violation(ch, res.ris.phi_r, r1.state, sc, b1) <= 1e-7 &&
                                     r1.state.total_power() <= sc.p_max * (1.0 + 1e-8);
            if (keeps_rates && r1.gamma >= omega) res.state = std::move(r1.state);
        } catch (const B1Stall &e) {
            res.degraded = true;
            res.note = e.what();
            break;
        }
        if (cfg.optimize_surface) {
            try {
                auto r2 = solve_b2(res.ris, res.state, ch, sc, b2);
                if (r2.stalled) ++res.b2_stalls;
                res.tau_surface = detail::track_taus(r2.srocr);
                res.V_t = std::move(r2.V_t);
                res.V_r = std::move(r2.V_r);
                res.ris = std::move(r2.ris);
            } catch (const ExtractionError &e) {
                res.degraded = true;
                res.note = e.what();
                break;
            }
        }
        const double next = sensing_gamma(ch, res.ris.phi_t, res.state, sp);
        res.omega_trace.push_back(next);
        const bool stop = std::abs(next - omega) <= eps * std::abs(omega);
        omega = next;
        if (stop) {
            res.converged = true;
            break;
        }
    }
    return finish();
}

} // namespace starisac
