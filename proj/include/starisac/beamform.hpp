#pragma once

// Beamforming subproblem: transmit covariances W_c, W_p,k (and optionally W_0) for fixed
// STAR-RIS coefficients.  Dinkelbach objective, slack/Taylor rate rows, SROCR rank rows.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "conic.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "scenario.hpp"

namespace starisac {

enum class Access { Rsma, Sdma, Noma };

inline conic::Settings interior_point_settings() {
    conic::Settings s;
    s.method = conic::Method::InteriorPoint;
    return s;
}

struct B1Options {
    Access access = Access::Rsma;
    bool with_w0 = false;
    // NOMA: users from strongest to weakest composite gain
    std::vector<std::size_t> decode_order;
    std::size_t max_iters = 60;
    std::size_t max_relaxed_iters = 20;
    conic::Settings solver = interior_point_settings();
};

// stream k must be decodable at `observer` treating `interferers` (private streams), W_0 and noise as interference
struct SinrRequirement {
    std::size_t observer;
    std::size_t stream;
    std::vector<std::size_t> interferers;
    double rate;
};

inline std::vector<SinrRequirement> sinr_requirements(Access access, const Scenario &sc, const std::vector<std::size_t> &order) {
    const std::size_t K = sc.K();
    std::vector<SinrRequirement> out;
    if (access == Access::Sdma) {
        for (std::size_t k = 0; k < K; ++k) {
            SinrRequirement r{k, k, {}, sc.rate_threshold(k)};
            for (std::size_t j = 0; j < K; ++j)
                if (j != k) r.interferers.push_back(j);
            out.push_back(std::move(r));
        }
    } else if (access == Access::Noma) {
        if (order.size() != K) throw std::invalid_argument("sinr_requirements: NOMA decoding order must list every GT");
        for (std::size_t pos = 0; pos < K; ++pos) {
            const std::size_t k = order[pos];
            std::vector<std::size_t> stronger(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pos));
            for (std::size_t q = 0; q <= pos; ++q) out.push_back({order[q], k, stronger, sc.rate_threshold(k)});
        }
    }
    return out;
}

// descending composite channel gain
inline std::vector<std::size_t> noma_order(const ChannelSet &ch, const CVector &phi_r) {
    std::vector<double> g;
    for (std::size_t k = 0; k < ch.K(); ++k) g.push_back(composite_gt_channel(ch, phi_r, k).squared_norm());
    std::vector<std::size_t> idx(ch.K());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return g[a] > g[b]; });
    return idx;
}

inline double update_omega(const CMatrix &A_t, const CMatrix &B_t, std::size_t N) {
    require_hermitian(B_t, "update_omega: B_t");
    return A_t.trace().real() / (B_t.trace().real() + static_cast<double>(N));
}

inline double srocr_update(const CMatrix &W, double delta) {
    const double tr = W.trace().real();
    if (!(tr > 0.0)) throw std::invalid_argument("srocr_update: trace must be positive");
    const double emax = hermitian_eig_max(W).value;
    return std::min(1.0, emax / tr + delta);
}

struct SrocrTrack {
    double tau = 1.0;
    double delta = 0.0;
    CVector u;
    bool active = false;
};

// track 0: W_c (inactive when absent), track 1 + k: W_p,k
struct SrocrState {
    std::vector<SrocrTrack> tracks;

    bool converged(double eps) const {
        for (const auto &t : tracks)
            if (std::abs(1.0 - t.tau) > eps) return false;
        return true;
    }
    void halve() {
        for (auto &t : tracks) t.delta *= 0.5;
    }
    double max_delta() const {
        double d = 0.0;
        for (const auto &t : tracks) d = std::max(d, t.delta);
        return d;
    }
};

inline double eig_ratio(const CMatrix &W) {
    const double tr = W.trace().real();
    return tr > 0.0 ? hermitian_eig_max(W).value / tr : 1.0;
}

// matrices with negligible trace carry no rank row and count as converged
inline SrocrTrack make_track(const CMatrix &ref, double delta, double min_trace) {
    SrocrTrack t;
    t.delta = delta;
    if (ref.trace().real() <= min_trace) return t;
    const auto ep = hermitian_eig_max(ref);
    t.u = ep.vector;
    t.tau = std::min(1.0, ep.value / ref.trace().real() + delta);
    t.active = true;
    return t;
}

inline std::vector<const CMatrix *> tracked_matrices(const BeamformingState &s) {
    std::vector<const CMatrix *> m{&s.W_c};
    for (const auto &w : s.W_p) m.push_back(&w);
    return m;
}

// The threshold update min(1, ratio + delta) can reach 1 while the iterate is still far from rank one, so
// termination also asks every tracked matrix to be rank one up to this eigenvalue-ratio tolerance.
inline constexpr double rank_ratio_tol = 1e-4;

inline bool near_rank_one(const std::vector<const CMatrix *> &mats, double min_trace) {
    for (const CMatrix *m : mats)
        if (m->trace().real() > min_trace && eig_ratio(*m) < 1.0 - rank_ratio_tol) return false;
    return true;
}

inline SrocrState make_srocr(const BeamformingState &s, const std::vector<double> &deltas, double min_trace) {
    SrocrState st;
    const auto mats = tracked_matrices(s);
    for (std::size_t i = 0; i < mats.size(); ++i) st.tracks.push_back(make_track(*mats[i], deltas.at(i), min_trace));
    return st;
}

inline SrocrState relaxed_srocr(std::size_t K) {
    SrocrState st;
    st.tracks.resize(K + 1);
    return st;
}

struct GtRates {
    std::vector<double> common, priv;
};

inline GtRates gt_rates(const ChannelSet &ch, const CVector &phi_r, const BeamformingState &s, const Scenario &sc) {
    GtRates r;
    const CMatrix *w0 = s.W_0 ? &*s.W_0 : nullptr;
    for (std::size_t k = 0; k < s.K(); ++k) {
        r.common.push_back(common_rate(k, ch, phi_r, s.W_c, s.W_p, w0, sc.noise(k)));
        r.priv.push_back(private_rate(k, ch, phi_r, s.W_p, w0, sc.noise(k)));
    }
    return r;
}

// log2(1 + SINR) of `stream` at `observer`
inline double requirement_rate(const SinrRequirement &q, const ChannelSet &ch, const CVector &phi_r, const BeamformingState &s,
                               const Scenario &sc) {
    const CVector h = composite_gt_channel(ch, phi_r, q.observer);
    double interf = sc.noise(q.observer);
    for (std::size_t j : q.interferers) interf += channel_power(h, s.W_p[j]);
    if (s.W_0) interf += channel_power(h, *s.W_0);
    return std::log2(1.0 + channel_power(h, s.W_p[q.stream]) / interf);
}

// largest violation of the rate requirements (<= 0 when satisfied)
inline double rate_violation(const ChannelSet &ch, const CVector &phi_r, const BeamformingState &s, const Scenario &sc, const B1Options &opt) {
    double v = -std::numeric_limits<double>::infinity();
    if (opt.access == Access::Rsma) {
        const auto r = gt_rates(ch, phi_r, s, sc);
        const double sum_c = std::accumulate(s.c.begin(), s.c.end(), 0.0);
        for (std::size_t k = 0; k < s.K(); ++k) {
            v = std::max(v, sum_c - r.common[k]);
            v = std::max(v, sc.rate_threshold(k) - s.c[k] - r.priv[k]);
            v = std::max(v, -s.c[k]);
        }
    } else {
        for (const auto &q : sinr_requirements(opt.access, sc, opt.decode_order))
            v = std::max(v, q.rate - requirement_rate(q, ch, phi_r, s, sc));
    }
    return v;
}

// Given W, choose the common split as close to `c` as possible while meeting
// c_k >= max(0, R_th - R_p,k) and sum c <= min_k R_c,k.  Returns false if no split exists.
inline bool repair_common_split(std::vector<double> &c, const GtRates &r, const Scenario &sc) {
    const std::size_t K = c.size();
    std::vector<double> lo(K);
    double sum_lo = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        lo[k] = std::max(0.0, sc.rate_threshold(k) - r.priv[k]);
        sum_lo += lo[k];
    }
    const double cap = *std::min_element(r.common.begin(), r.common.end());
    if (sum_lo > cap) {
        for (std::size_t k = 0; k < K; ++k) c[k] = std::max(c[k], lo[k]);
        return false;
    }
    double extra = 0.0;
    for (std::size_t k = 0; k < K; ++k) extra += std::max(0.0, c[k] - lo[k]);
    const double room = cap - sum_lo;
    const double f = extra > room ? room / extra : 1.0;
    for (std::size_t k = 0; k < K; ++k) c[k] = lo[k] + f * std::max(0.0, c[k] - lo[k]);
    return true;
}

// a_k, b_k at their tight values log2 of the rate numerators
inline void tighten_slacks(BeamformingState &s, const ChannelSet &ch, const CVector &phi_r, const Scenario &sc) {
    s.a.assign(s.K(), 0.0);
    s.b.assign(s.K(), 0.0);
    for (std::size_t k = 0; k < s.K(); ++k) {
        const CVector h = composite_gt_channel(ch, phi_r, k);
        const double rho = 1.0 / sc.noise(k);
        double interf = 0.0;
        if (s.W_0) interf += channel_power(h, *s.W_0);
        const double priv = channel_power(h, s.private_sum());
        s.a[k] = std::log2(rho * (channel_power(h, s.W_c) + priv + interf) + 1.0);
        s.b[k] = std::log2(rho * (priv + interf) + 1.0);
    }
}

inline double sensing_gamma(const ChannelSet &ch, const CVector &phi_t, const BeamformingState &s, const SensingParams &sp) {
    const auto t = sensing_traces(ch, phi_t, s.Q(), sp);
    return t.A / (t.B + static_cast<double>(ch.N()));
}

// A transmit covariance in the conic program: a full PSD block, or t u u^H with t >= 0 once its
// rank row has tightened to within rank_one_tau of 1.
inline constexpr double rank_one_tau = 1.0 - 1e-6;

struct CovVar {
    conic::PsdVar var;
    std::optional<CVector> dir;

    void add_to(conic::LinearForm &f, const CMatrix &coef) const {
        if (dir) {
            CMatrix s(1, 1);
            s(0, 0) = quadratic_form(coef, *dir);
            f.add(var, std::move(s));
        } else {
            f.add(var, coef);
        }
    }
    CMatrix value(const conic::ConicSolution &sol) const {
        if (!dir) return sol.value(var).hermitian_part();
        CMatrix w = CMatrix::outer(*dir);
        w *= std::max(0.0, sol.value(var)(0, 0).real());
        return w;
    }
};

struct B1Program {
    conic::ConicProblem problem;
    std::optional<CovVar> W_c;
    std::vector<CovVar> W_p;
    std::optional<conic::PsdVar> W_0;
    std::vector<conic::ScalarVar> a, b, c;
    double objective_scale = 1.0;

    BeamformingState extract(const conic::ConicSolution &sol, std::size_t N) const {
        BeamformingState s;
        s.W_c = W_c ? W_c->value(sol) : CMatrix(N, N);
        for (const auto &v : W_p) s.W_p.push_back(v.value(sol));
        if (W_0) s.W_0 = sol.value(*W_0).hermitian_part();
        for (const auto &v : a) s.a.push_back(sol.value(v));
        for (const auto &v : b) s.b.push_back(sol.value(v));
        for (const auto &v : c) s.c.push_back(std::max(0.0, sol.value(v)));
        if (c.empty()) s.c.assign(W_p.size(), 0.0);
        return s;
    }
};

namespace detail {

inline CMatrix two_by_two(cdouble v00, cdouble v01, cdouble v11) {
    CMatrix m(2, 2);
    m(0, 0) = v00;
    m(0, 1) = v01;
    m(1, 0) = std::conj(v01);
    m(1, 1) = v11;
    return m;
}

// log2 x >= log2 x0 + (1 - x0/x)/ln2, enforced through [[x/x0, 1], [1, t]] psd and y <= log2 x0 + (1 - t)/ln2
inline void add_log_row(conic::ConicProblem &p, const std::string &tag, conic::LinearForm numerator_over_x0, double rhs_over_x0,
                        conic::ScalarVar y, double log2_x0) {
    using namespace conic;
    auto P = p.add_psd("L" + tag, 2);
    numerator_over_x0.add(P, -1.0 * two_by_two(1.0, 0.0, 0.0));
    p.add_constraint(std::move(numerator_over_x0), Sense::Eq, rhs_over_x0, tag + " link");
    p.add_constraint(LinearForm{}.add(P, two_by_two(0.0, 0.5, 0.0)), Sense::Ge, 1.0, tag + " unit");
    p.add_constraint(LinearForm{}.add(y, 1.0).add(P, two_by_two(0.0, 0.0, 1.0 / std::log(2.0))), Sense::Le, log2_x0 + 1.0 / std::log(2.0),
                     tag + " log");
}

} // namespace detail

inline B1Program build_b1_problem(const BeamformingState &state, const SrocrState &srocr, double omega, const ChannelSet &ch,
                                  const CVector &phi_t, const CVector &phi_r, const Scenario &sc, const B1Options &opt) {
    using namespace conic;
    const std::size_t N = ch.N(), K = ch.K();
    if (state.N() != N || state.K() != K) throw std::invalid_argument("build_b1_problem: state dimensions do not match the channels");
    if (srocr.tracks.size() != K + 1) throw std::invalid_argument("build_b1_problem: one rank track per matrix expected");
    const bool rsma = opt.access == Access::Rsma;
    if (rsma && (state.a.size() != K || state.b.size() != K || state.c.size() != K))
        throw std::invalid_argument("build_b1_problem: expansion point has wrong length");

    B1Program prog;
    auto &p = prog.problem;
    auto cov = [&](const std::string &name, const SrocrTrack &t) {
        if (t.active && t.tau >= rank_one_tau) return CovVar{p.add_psd(name, 1), t.u};
        return CovVar{p.add_psd(name, N), std::nullopt};
    };
    if (rsma) prog.W_c = cov("W_c", srocr.tracks[0]);
    for (std::size_t k = 0; k < K; ++k) prog.W_p.push_back(cov("W_p" + std::to_string(k), srocr.tracks[k + 1]));
    if (opt.with_w0) prog.W_0 = p.add_psd("W_0", N);
    if (rsma)
        for (std::size_t k = 0; k < K; ++k) {
            prog.a.push_back(p.add_scalar("a" + std::to_string(k)));
            prog.b.push_back(p.add_scalar("b" + std::to_string(k)));
            prog.c.push_back(p.add_scalar("c" + std::to_string(k)));
        }

    auto all_w = [&](const CMatrix &coef, LinearForm f = {}) {
        if (prog.W_c) prog.W_c->add_to(f, coef);
        for (const auto &v : prog.W_p) v.add_to(f, coef);
        if (prog.W_0) f.add(*prog.W_0, coef);
        return f;
    };

    // objective: s * (omega Tr(C_B Q) + omega N - Tr(C_A Q))
    const SensingParams sp = SensingParams::from(sc, ch);
    const auto coef = sensing_coefficients(ch, phi_t, sp);
    {
        const double ref = omega * (real_trace_product(coef.C_B, state.Q()) + static_cast<double>(N));
        double s = ref > 0.0 ? 1.0 / ref : 0.0;
        if (!(s > 0.0) || !std::isfinite(s)) {
            const double amax = hermitian_eig_max(coef.C_A).value * sc.p_max;
            s = amax > 0.0 ? 1.0 / amax : 1.0;
        }
        prog.objective_scale = s;
        CMatrix c_obj = omega * coef.C_B - coef.C_A;
        c_obj *= s;
        p.minimize(all_w(c_obj).add_constant(s * omega * static_cast<double>(N)));
    }

    // power
    p.add_constraint(all_w(CMatrix::identity(N)), Sense::Le, sc.p_max, "power");

    std::vector<CMatrix> H;
    for (std::size_t k = 0; k < K; ++k) H.push_back(CMatrix::outer(composite_gt_channel(ch, phi_r, k)));

    if (rsma) {
        const double ln2 = std::log(2.0);
        const double sum_c = std::accumulate(state.c.begin(), state.c.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const double rho = 1.0 / sc.noise(k);
            const std::string id = std::to_string(k);
            // common numerator >= 2^a
            {
                const double x0 = std::exp2(state.a[k]);
                CMatrix g = (rho / x0) * H[k];
                starisac::detail::add_log_row(p, "common" + id, all_w(g), -1.0 / x0, prog.a[k], state.a[k]);
            }
            // Taylor of 2^(a - sum c) >= private numerator
            {
                const double u0 = state.a[k] - sum_c;
                const double e = std::exp2(-u0);
                LinearForm f;
                f.add(prog.a[k], ln2);
                for (std::size_t j = 0; j < K; ++j) f.add(prog.c[j], -ln2);
                CMatrix g = (-rho * e) * H[k];
                for (const auto &v : prog.W_p) v.add_to(f, g);
                if (prog.W_0) f.add(*prog.W_0, g);
                p.add_constraint(std::move(f), Sense::Ge, e - 1.0 + ln2 * u0, "common taylor" + id);
            }
            // private numerator >= 2^b
            {
                const double x0 = std::exp2(state.b[k]);
                CMatrix g = (rho / x0) * H[k];
                LinearForm f;
                for (const auto &v : prog.W_p) v.add_to(f, g);
                if (prog.W_0) f.add(*prog.W_0, g);
                starisac::detail::add_log_row(p, "private" + id, std::move(f), -1.0 / x0, prog.b[k], state.b[k]);
            }
            // Taylor of 2^(b + c - R_th) >= interference
            {
                const double rth = sc.rate_threshold(k);
                const double v0 = state.b[k] + state.c[k] - rth;
                const double e = std::exp2(-v0);
                LinearForm f;
                f.add(prog.b[k], ln2).add(prog.c[k], ln2);
                CMatrix g = (-rho * e) * H[k];
                for (std::size_t j = 0; j < K; ++j)
                    if (j != k) prog.W_p[j].add_to(f, g);
                if (prog.W_0) f.add(*prog.W_0, g);
                p.add_constraint(std::move(f), Sense::Ge, e - 1.0 + ln2 * (v0 + rth), "private taylor" + id);
            }
            p.add_constraint(LinearForm{}.add(prog.c[k], 1.0), Sense::Ge, 0.0, "c" + id + " nonneg");
        }
    } else {
        for (const auto &q : sinr_requirements(opt.access, sc, opt.decode_order)) {
            const double rho = 1.0 / sc.noise(q.observer);
            const double t = std::exp2(q.rate) - 1.0;
            LinearForm f;
            prog.W_p[q.stream].add_to(f, (rho / (1.0 + t)) * H[q.observer]);
            CMatrix g = (-rho * t / (1.0 + t)) * H[q.observer];
            for (std::size_t j : q.interferers) prog.W_p[j].add_to(f, g);
            if (prog.W_0) f.add(*prog.W_0, g);
            p.add_constraint(std::move(f), Sense::Ge, t / (1.0 + t),
                             "sinr " + std::to_string(q.stream) + "@" + std::to_string(q.observer));
        }
    }

    // rank rows: u^H W u >= tau Tr(W)
    for (std::size_t i = 0; i < srocr.tracks.size(); ++i) {
        const auto &t = srocr.tracks[i];
        if (!t.active) continue;
        if (i == 0 && !prog.W_c) throw std::invalid_argument("build_b1_problem: rank row on absent W_c");
        const CovVar &v = i == 0 ? *prog.W_c : prog.W_p[i - 1];
        if (v.dir) continue;
        CMatrix g = CMatrix::outer(t.u) - t.tau * CMatrix::identity(N);
        LinearForm f;
        v.add_to(f, g);
        p.add_constraint(std::move(f), Sense::Ge, 0.0, "rank" + std::to_string(i));
    }
    return prog;
}

struct TraceRow {
    std::size_t iteration;
    double omega;
    double objective; // normalized objective of the accepted iterate
    std::vector<double> tau;
    bool solvable;
};

struct B1Result {
    BeamformingState state;
    SrocrState srocr;
    std::vector<TraceRow> trace;
    std::size_t iterations = 0;
    std::size_t solves = 0;
    bool converged = false;
    double gamma = 0.0;
};

class B1Stall : public std::runtime_error {
  public:
    B1Stall(const std::string &what, std::size_t iterations) : std::runtime_error(what), iterations_(iterations) {}
    std::size_t iterations() const { return iterations_; }

  private:
    std::size_t iterations_;
};

namespace detail {

// scale onto the power budget and settle the common split exactly
inline void b1_postprocess(BeamformingState &s, const ChannelSet &ch, const CVector &phi_r, const Scenario &sc, const B1Options &opt) {
    s.W_c = psd_project(s.W_c);
    for (auto &w : s.W_p) w = psd_project(w);
    if (s.W_0) s.W_0 = psd_project(*s.W_0);
    const double pw = s.total_power();
    if (pw > sc.p_max && pw > 0.0) {
        const double f = sc.p_max / pw;
        s.W_c *= f;
        for (auto &w : s.W_p) w *= f;
        if (s.W_0) *s.W_0 *= f;
    }
    if (opt.access == Access::Rsma) {
        repair_common_split(s.c, gt_rates(ch, phi_r, s, sc), sc);
    } else {
        s.c.assign(s.K(), 0.0);
    }
    tighten_slacks(s, ch, phi_r, sc);
}

inline std::vector<double> track_taus(const SrocrState &st) {
    std::vector<double> t;
    for (const auto &x : st.tracks) t.push_back(x.tau);
    return t;
}

} // namespace detail

// Algorithm: one relaxed solve without rank rows, then SROCR iterations from the relaxed point.
inline B1Result solve_b1(BeamformingState state, const ChannelSet &ch, const CVector &phi_t, const CVector &phi_r, const Scenario &sc,
                         const B1Options &opt) {
    const std::size_t N = ch.N(), K = ch.K();
    const SensingParams sp = SensingParams::from(sc, ch);
    const double min_trace = 1e-9 * std::max(sc.p_max, 1e-300);
    B1Result res;

    if (opt.access != Access::Rsma) {
        state.W_c = CMatrix(N, N);
        state.c.assign(K, 0.0);
    }
    if (opt.with_w0 && !state.W_0) state.W_0 = CMatrix(N, N);
    if (!opt.with_w0) state.W_0.reset();
    tighten_slacks(state, ch, phi_r, sc);

    auto normalized = [&](const BeamformingState &from, const BeamformingState &to, double omega) {
        const auto c = sensing_coefficients(ch, phi_t, sp);
        const double den = omega * (real_trace_product(c.C_B, from.Q()) + static_cast<double>(N));
        const double f = omega * (real_trace_product(c.C_B, to.Q()) + static_cast<double>(N)) - real_trace_product(c.C_A, to.Q());
        return den > 0.0 ? f / den : f;
    };

    auto attempt = [&](const BeamformingState &cur, const SrocrState &st, double omega, conic::WarmStart *warm,
                       BeamformingState &out) -> bool {
        const auto prog = build_b1_problem(cur, st, omega, ch, phi_t, phi_r, sc, opt);
        const auto sol = conic::solve(prog.problem, opt.solver, warm && !warm->x.empty() ? warm : nullptr);
        ++res.solves;
        if (sol.status != conic::Status::Optimal) return false;
        if (warm) *warm = sol.warm;
        out = prog.extract(sol, N);
        if (!opt.with_w0) out.W_0.reset();
        detail::b1_postprocess(out, ch, phi_r, sc, opt);
        return true;
    };

    // Relaxed phase: Dinkelbach updates without rank rows until the ratio settles. Rank rows built
    // from a rank-one point lock its principal directions, so they are only added once omega is final.
    double omega = sensing_gamma(ch, phi_t, state, sp);
    double f_prev = 0.0;
    bool gap_ok = false;
    res.iterations = 0;
    for (std::size_t l = 0; l < opt.max_relaxed_iters && !gap_ok; ++l) {
        BeamformingState relaxed;
        ++res.iterations;
        if (!attempt(state, relaxed_srocr(K), omega, nullptr, relaxed)) break;
        f_prev = normalized(state, relaxed, omega);
        gap_ok = std::abs(f_prev) <= sc.epsilon_2;
        state = std::move(relaxed);
        omega = sensing_gamma(ch, phi_t, state, sp);
    }
    const std::size_t relaxed_iters = res.iterations;
    std::vector<double> deltas;
    for (const CMatrix *m : tracked_matrices(state)) deltas.push_back(0.5 * (1.0 - eig_ratio(*m)));
    SrocrState st = make_srocr(state, deltas, min_trace);
    if (opt.access != Access::Rsma) st.tracks[0] = SrocrTrack{};
    res.trace.push_back({0, omega, f_prev, detail::track_taus(st), true});

    conic::WarmStart warm;
    for (std::size_t l = 1; relaxed_iters + l <= opt.max_iters; ++l) {
        if (st.converged(sc.epsilon_1) && gap_ok && near_rank_one(tracked_matrices(state), min_trace)) break;
        res.iterations = relaxed_iters + l;
        omega = sensing_gamma(ch, phi_t, state, sp);
        BeamformingState next;
        const bool ok = attempt(state, st, omega, &warm, next);
        if (ok) {
            const double f = normalized(state, next, omega);
            gap_ok = std::abs(f - f_prev) <= sc.epsilon_2;
            f_prev = f;
            state = std::move(next);
        } else {
            warm = {};
            st.halve();
            gap_ok = false;
            if (st.max_delta() < 1e-12) {
                std::ostringstream os;
                os << "beamforming subproblem stalled after " << l << " iterations (step sizes exhausted; tau:";
                for (const auto &t : st.tracks) os << ' ' << t.tau;
                os << ')';
                throw B1Stall(os.str(), l);
            }
        }
        std::vector<double> d;
        for (const auto &t : st.tracks) d.push_back(t.delta);
        SrocrState nst = make_srocr(state, d, min_trace);
        if (opt.access != Access::Rsma) nst.tracks[0] = SrocrTrack{};
        st = std::move(nst);
        res.trace.push_back({l, omega, f_prev, detail::track_taus(st), ok});
    }
    res.converged = st.converged(sc.epsilon_1) && gap_ok && near_rank_one(tracked_matrices(state), min_trace);
    res.state = std::move(state);
    res.srocr = std::move(st);
    res.gamma = sensing_gamma(ch, phi_t, res.state, sp);
    return res;
}

inline void write_trace_csv(std::ostream &os, const std::vector<TraceRow> &trace) {
    os << "iteration,omega,objective,solvable";
    const std::size_t nt = trace.empty() ? 0 : trace.front().tau.size();
    for (std::size_t i = 0; i < nt; ++i) os << ",tau" << i;
    os << '\n';
    os.precision(17);
    for (const auto &row : trace) {
        os << row.iteration << ',' << row.omega << ',' << row.objective << ',' << (row.solvable ? 1 : 0);
        for (double t : row.tau) os << ',' << t;
        os << '\n';
    }
}

// Moves the dedicated sensing covariance into the communication streams; Q is unchanged.
inline std::pair<CMatrix, std::vector<CMatrix>> reconstruct_no_sensing(const CMatrix &W_c, const std::vector<CMatrix> &W_p, const CMatrix &W_0,
                                                                      double zeta_c, const std::vector<double> &zeta) {
    if (zeta.size() != W_p.size()) throw std::invalid_argument("reconstruct_no_sensing: one weight per private stream expected");
    double total = zeta_c;
    bool nonneg = zeta_c >= 0.0;
    for (double z : zeta) {
        total += z;
        nonneg = nonneg && z >= 0.0;
    }
    if (!nonneg || std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("reconstruct_no_sensing: weights must be nonnegative and sum to 1");
    CMatrix wc = W_c;
    wc.axpy(zeta_c, W_0);
    std::vector<CMatrix> wp = W_p;
    for (std::size_t k = 0; k < wp.size(); ++k) wp[k].axpy(zeta[k], W_0);
    return {wc, wp};
}

// Maximum-ratio start: half the power on a common beam toward the normalized channel sum,
// half split evenly over per-GT beams.  Returns nullopt if it misses the rate targets.
inline std::optional<BeamformingState> mrt_state(const ChannelSet &ch, const CVector &phi_r, const Scenario &sc, const B1Options &opt) {
    const std::size_t N = ch.N(), K = ch.K();
    BeamformingState s;
    CVector sum(N);
    std::vector<CVector> dirs;
    for (std::size_t k = 0; k < K; ++k) {
        CVector h = composite_gt_channel(ch, phi_r, k);
        const double nrm = h.norm();
        if (nrm > 0.0) h *= cdouble(1.0 / nrm, 0.0);
        sum += h;
        dirs.push_back(h);
    }
    const bool rsma = opt.access == Access::Rsma;
    const double pc = rsma ? 0.5 * sc.p_max : 0.0;
    const double pp = (sc.p_max - pc) / static_cast<double>(K);
    s.W_c = CMatrix(N, N);
    if (rsma && sum.norm() > 0.0) {
        sum *= cdouble(1.0 / sum.norm(), 0.0);
        s.W_c = CMatrix::outer(sum);
        s.W_c *= pc;
    }
    for (const auto &d : dirs) {
        CMatrix w = CMatrix::outer(d);
        w *= pp;
        s.W_p.push_back(w);
    }
    if (opt.with_w0) s.W_0 = CMatrix(N, N);
    s.c.assign(K, 0.0);
    if (rsma && !repair_common_split(s.c, gt_rates(ch, phi_r, s, sc), sc)) return std::nullopt;
    if (rate_violation(ch, phi_r, s, sc, opt) > 0.0) return std::nullopt;
    tighten_slacks(s, ch, phi_r, sc);
    return s;
}

// Feasibility search with the common split fixed: the rate targets become linear SINR rows.
inline std::optional<BeamformingState> phase_one_state(const ChannelSet &ch, const CVector &phi_t, const CVector &phi_r, const Scenario &sc,
                                                       const B1Options &opt) {
    using namespace conic;
    const std::size_t N = ch.N(), K = ch.K();
    const bool rsma = opt.access == Access::Rsma;
    std::vector<std::vector<double>> splits;
    if (rsma) {
        std::vector<double> zero(K, 0.0), full(K), half(K);
        for (std::size_t k = 0; k < K; ++k) {
            full[k] = sc.rate_threshold(k);
            half[k] = 0.5 * sc.rate_threshold(k);
        }
        splits = {zero, full, half};
    } else {
        splits = {std::vector<double>(K, 0.0)};
    }
    const SensingParams sp = SensingParams::from(sc, ch);
    const auto coef = sensing_coefficients(ch, phi_t, sp);
    const double amax = hermitian_eig_max(coef.C_A).value * sc.p_max;
    for (const auto &c : splits) {
        ConicProblem p;
        std::optional<PsdVar> Wc;
        if (rsma) Wc = p.add_psd("W_c", N);
        std::vector<PsdVar> Wp;
        for (std::size_t k = 0; k < K; ++k) Wp.push_back(p.add_psd("W_p" + std::to_string(k), N));
        std::optional<PsdVar> W0;
        if (opt.with_w0) W0 = p.add_psd("W_0", N);
        auto all_w = [&](const CMatrix &g) {
            LinearForm f;
            if (Wc) f.add(*Wc, g);
            for (const auto &v : Wp) f.add(v, g);
            if (W0) f.add(*W0, g);
            return f;
        };
        CMatrix obj = -1.0 * coef.C_A;
        if (amax > 0.0) obj *= 1.0 / amax;
        p.minimize(all_w(obj));
        p.add_constraint(all_w(CMatrix::identity(N)), Sense::Le, sc.p_max, "power");
        std::vector<SinrRequirement> reqs;
        if (rsma) {
            for (std::size_t k = 0; k < K; ++k) {
                std::vector<std::size_t> others;
                for (std::size_t j = 0; j < K; ++j)
                    if (j != k) others.push_back(j);
                reqs.push_back({k, k, others, std::max(0.0, sc.rate_threshold(k) - c[k])});
            }
        } else {
            reqs = sinr_requirements(opt.access, sc, opt.decode_order);
        }
        const double sum_c = std::accumulate(c.begin(), c.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const CMatrix H = CMatrix::outer(composite_gt_channel(ch, phi_r, k));
            const double rho = 1.0 / sc.noise(k);
            if (rsma && sum_c > 0.0) {
                const double t = std::exp2(sum_c) - 1.0;
                LinearForm f;
                f.add(*Wc, (rho / (1.0 + t)) * H);
                CMatrix g = (-rho * t / (1.0 + t)) * H;
                for (const auto &v : Wp) f.add(v, g);
                if (W0) f.add(*W0, g);
                p.add_constraint(std::move(f), Sense::Ge, t / (1.0 + t), "common sinr");
            }
        }
        for (const auto &q : reqs) {
            const CMatrix H = CMatrix::outer(composite_gt_channel(ch, phi_r, q.observer));
            const double rho = 1.0 / sc.noise(q.observer);
            const double t = std::exp2(q.rate) - 1.0;
            LinearForm f;
            f.add(Wp[q.stream], (rho / (1.0 + t)) * H);
            CMatrix g = (-rho * t / (1.0 + t)) * H;
            for (std::size_t j : q.interferers) f.add(Wp[j], g);
            if (W0) f.add(*W0, g);
            p.add_constraint(std::move(f), Sense::Ge, t / (1.0 + t), "private sinr");
        }
        const auto sol = solve(p, opt.solver);
        if (sol.status != Status::Optimal) continue;
        BeamformingState s;
        s.W_c = Wc ? sol.value(*Wc).hermitian_part() : CMatrix(N, N);
        for (const auto &v : Wp) s.W_p.push_back(sol.value(v).hermitian_part());
        if (W0) s.W_0 = sol.value(*W0).hermitian_part();
        s.c = rsma ? c : std::vector<double>(K, 0.0);
        starisac::detail::b1_postprocess(s, ch, phi_r, sc, opt);
        if (rate_violation(ch, phi_r, s, sc, opt) > 1e-6) continue;
        return s;
    }
    return std::nullopt;
}

inline std::optional<BeamformingState> initial_state(const ChannelSet &ch, const CVector &phi_t, const CVector &phi_r, const Scenario &sc,
                                                     const B1Options &opt) {
    if (auto s = mrt_state(ch, phi_r, sc, opt)) return s;
    return phase_one_state(ch, phi_t, phi_r, sc, opt);
}

} // namespace starisac
