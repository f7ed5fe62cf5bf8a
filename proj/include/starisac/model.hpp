#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "numerics.hpp"
#include "scenario.hpp"

namespace starisac {

struct BeamformingState {
    CMatrix W_c;
    std::vector<CMatrix> W_p;
    std::optional<CMatrix> W_0;
    std::vector<double> c, a, b;

    std::size_t K() const { return W_p.size(); }
    std::size_t N() const { return W_c.rows(); }

    CMatrix private_sum() const {
        CMatrix s(N(), N());
        for (const auto &w : W_p) s += w;
        return s;
    }
    // W_c + sum W_p (+ W_0)
    CMatrix Q() const {
        CMatrix q = W_c + private_sum();
        if (W_0) q += *W_0;
        return q;
    }
    double total_power() const {
        double p = W_c.trace().real();
        for (const auto &w : W_p) p += w.trace().real();
        if (W_0) p += W_0->trace().real();
        return p;
    }
    double trace_w0() const { return W_0 ? W_0->trace().real() : 0.0; }
};

// STAR-RIS coefficients. phi_t/phi_r hold the diagonals of the coefficient matrices.
struct StarRisState {
    CVector phi_t, phi_r;
    CVector nu_t, nu_r; // [phi; 1]
    CMatrix V_t, V_r;

    std::size_t M() const { return phi_t.size(); }
    CMatrix Phi_t() const { return CMatrix::diagonal(phi_t); }
    CMatrix Phi_r() const { return CMatrix::diagonal(phi_r); }
    std::vector<double> beta_t() const {
        std::vector<double> b;
        for (const auto &p : phi_t) b.push_back(std::norm(p));
        return b;
    }
    std::vector<double> beta_r() const {
        std::vector<double> b;
        for (const auto &p : phi_r) b.push_back(std::norm(p));
        return b;
    }
};

inline CVector lift(const CVector &phi) {
    CVector nu(phi.size() + 1);
    for (std::size_t m = 0; m < phi.size(); ++m) nu[m] = phi[m];
    nu[phi.size()] = 1.0;
    return nu;
}

inline StarRisState make_ris_state(CVector phi_t, CVector phi_r) {
    if (phi_t.size() != phi_r.size()) throw std::invalid_argument("make_ris_state: coefficient length mismatch");
    StarRisState s;
    s.phi_t = std::move(phi_t);
    s.phi_r = std::move(phi_r);
    s.nu_t = lift(s.phi_t);
    s.nu_r = lift(s.phi_r);
    s.V_t = CMatrix::outer(s.nu_t);
    s.V_r = CMatrix::outer(s.nu_r);
    return s;
}

// h_direct + H_br diag(phi) h_ris
inline CVector composite_channel(const CVector &h_direct, const CMatrix &H_br, const CVector &phi, const CVector &h_ris) {
    if (phi.size() != h_ris.size() || H_br.cols() != phi.size() || H_br.rows() != h_direct.size())
        throw std::invalid_argument("composite channel: dimension mismatch");
    return h_direct + H_br * hadamard(phi, h_ris);
}

inline CVector composite_gt_channel(const ChannelSet &ch, const CVector &phi_r, std::size_t k) {
    return composite_channel(ch.h_bk.at(k), ch.H_br, phi_r, ch.h_rk.at(k));
}

inline CVector composite_target_channel(const ChannelSet &ch, const CVector &phi_t) {
    return composite_channel(ch.h_bt, ch.H_br, phi_t, ch.h_rt);
}

inline CVector composite_scatterer_channel(const ChannelSet &ch, const CVector &phi_t, std::size_t i) {
    return composite_channel(ch.h_bi.at(i), ch.H_br, phi_t, ch.h_ri.at(i));
}

// Tr(h h^H W) = h^H W h
inline double channel_power(const CVector &h, const CMatrix &w) { return quadratic_form(w, h); }

inline double common_rate(std::size_t k, const ChannelSet &ch, const CVector &phi_r, const CMatrix &W_c, const std::vector<CMatrix> &W_p,
                          const CMatrix *W_0, double noise) {
    const CVector h = composite_gt_channel(ch, phi_r, k);
    double interf = noise;
    for (const auto &w : W_p) interf += channel_power(h, w);
    if (W_0) interf += channel_power(h, *W_0);
    return std::log2(1.0 + channel_power(h, W_c) / interf);
}

inline double private_rate(std::size_t k, const ChannelSet &ch, const CVector &phi_r, const std::vector<CMatrix> &W_p, const CMatrix *W_0,
                           double noise) {
    const CVector h = composite_gt_channel(ch, phi_r, k);
    double interf = noise;
    for (std::size_t j = 0; j < W_p.size(); ++j)
        if (j != k) interf += channel_power(h, W_p[j]);
    if (W_0) interf += channel_power(h, *W_0);
    return std::log2(1.0 + channel_power(h, W_p.at(k)) / interf);
}

struct SensingParams {
    double theta_target = 0.0;
    std::vector<double> theta_scatterers;
    cdouble beta_target{1.0, 0.0};
    std::vector<cdouble> beta_scatterers;
    double noise = 1e-12;

    double gamma() const { return 1.0 / noise; }

    static SensingParams from(const Scenario &s, const ChannelSet &ch) {
        SensingParams p;
        p.theta_target = ch.theta_target;
        p.theta_scatterers = ch.theta_scatterers;
        p.beta_target = s.target_reflection;
        for (std::size_t i = 0; i < ch.I(); ++i) p.beta_scatterers.push_back(s.scatterer_beta(i));
        p.noise = s.noise_sensing;
        return p;
    }
};

// ||h||^2 Tr(h h^H A Q A^H) / ( sum_i ||h_i||^2 Tr(h_i h_i^H A_i Q A_i^H) + sigma^2 N )
inline double sensing_sinr(const ChannelSet &ch, const CVector &phi_t, const CMatrix &Q, const SensingParams &sp) {
    const std::size_t N = ch.N();
    const CVector ht = composite_target_channel(ch, phi_t);
    auto echo = [&](const CVector &h, double theta, cdouble beta) {
        const CVector a = steering_vector(theta, N);
        return h.squared_norm() * std::norm(beta) * std::norm(dot(a, h)) * quadratic_form(Q, a);
    };
    double clutter = sp.noise * static_cast<double>(N);
    for (std::size_t i = 0; i < ch.I(); ++i)
        clutter += echo(composite_scatterer_channel(ch, phi_t, i), sp.theta_scatterers.at(i), sp.beta_scatterers.at(i));
    return echo(ht, sp.theta_target, sp.beta_target) / clutter;
}

// Hermitian C such that Tr(A_t) = Tr(C_A Q) and Tr(B_t) = Tr(C_B Q), with the 1/sigma_s^2 weights folded in.
struct SensingCoefficients {
    CMatrix C_A, C_B;
};

inline SensingCoefficients sensing_coefficients(const ChannelSet &ch, const CVector &phi_t, const SensingParams &sp) {
    const std::size_t N = ch.N();
    const double g = sp.gamma();
    auto coeff = [&](const CVector &h, double theta, cdouble beta) {
        const CVector a = steering_vector(theta, N);
        CMatrix c = CMatrix::outer(a);
        c *= g * h.squared_norm() * std::norm(beta) * std::norm(dot(a, h));
        return c;
    };
    SensingCoefficients out{coeff(composite_target_channel(ch, phi_t), sp.theta_target, sp.beta_target), CMatrix(N, N)};
    for (std::size_t i = 0; i < ch.I(); ++i)
        out.C_B += coeff(composite_scatterer_channel(ch, phi_t, i), sp.theta_scatterers.at(i), sp.beta_scatterers.at(i));
    return out;
}

struct SensingTraces {
    double A, B; // Tr(A_t), Tr(B_t)
};

inline SensingTraces sensing_traces(const ChannelSet &ch, const CVector &phi_t, const CMatrix &Q, const SensingParams &sp) {
    const auto c = sensing_coefficients(ch, phi_t, sp);
    return {real_trace_product(c.C_A, Q), real_trace_product(c.C_B, Q)};
}

// [H_br diag(h_ris), h_direct]: maps nu = [phi; 1] to the composite channel
inline CMatrix lifting_matrix(const CMatrix &H_br, const CVector &h_ris, const CVector &h_direct) {
    const std::size_t N = H_br.rows(), M = H_br.cols();
    if (h_ris.size() != M || h_direct.size() != N) throw std::invalid_argument("lifting_matrix: dimension mismatch");
    CMatrix f(N, M + 1);
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t n = 0; n < N; ++n) f(n, m) = H_br(n, m) * h_ris[m];
    for (std::size_t n = 0; n < N; ++n) f(n, M) = h_direct[n];
    return f;
}

// F^H Q F
inline CMatrix lifted_gram(const CMatrix &F, const CMatrix &Q) { return (F.adjoint() * Q * F).hermitian_part(); }

struct LiftedPair {
    CMatrix A, B; // A: nu^H A nu = ||h||^2, B: nu^H B nu = h^H Q h
};

inline LiftedPair build_A1_B1(const ChannelSet &ch, const CMatrix &Q) {
    const CMatrix F = lifting_matrix(ch.H_br, ch.h_rt, ch.h_bt);
    return {lifted_gram(F, CMatrix::identity(ch.N())), lifted_gram(F, Q)};
}

inline LiftedPair build_Ai1_Bi1(const ChannelSet &ch, const CMatrix &Q, std::size_t i) {
    const CMatrix F = lifting_matrix(ch.H_br, ch.h_ri.at(i), ch.h_bi.at(i));
    return {lifted_gram(F, CMatrix::identity(ch.N())), lifted_gram(F, Q)};
}

inline CMatrix gt_lifting_matrix(const ChannelSet &ch, std::size_t k) { return lifting_matrix(ch.H_br, ch.h_rk.at(k), ch.h_bk.at(k)); }

struct MQBlocks {
    CMatrix M1, M2, M3;
};

inline MQBlocks build_MQ(const ChannelSet &ch, std::size_t k, const CMatrix &W_c, const std::vector<CMatrix> &W_p) {
    const CMatrix F = gt_lifting_matrix(ch, k);
    const std::size_t N = ch.N();
    CMatrix q2(N, N), q3(N, N);
    for (std::size_t j = 0; j < W_p.size(); ++j) {
        q2 += W_p[j];
        if (j != k) q3 += W_p[j];
    }
    return {lifted_gram(F, W_c + q2), lifted_gram(F, q2), lifted_gram(F, q3)};
}

} // namespace starisac
