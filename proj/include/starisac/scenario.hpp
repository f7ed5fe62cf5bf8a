#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "numerics.hpp"
#include "rng.hpp"

namespace starisac {

struct Position {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline double distance(const Position &a, const Position &b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

// azimuth of b seen from a
inline double azimuth(const Position &a, const Position &b) { return std::atan2(b.y - a.y, b.x - a.x); }

struct Scenario {
    std::size_t num_antennas = 6;  // N
    std::size_t num_elements = 64; // M
    std::size_t num_gts = 4;       // K
    std::size_t num_scatterers = 2;

    double p_max = 10.0;
    std::vector<double> noise_gt{1e-10}; // one entry, or one per GT
    double noise_sensing = 1e-12;
    std::vector<double> rate_thresholds{5.0}; // one entry, or one per GT

    double ref_gain_db = -15.0;
    double pl_exp_bs_gt = 2.7;
    double pl_exp_bs_target = 2.6;
    double pl_exp_ris = 2.8;
    double rician_db = 6.0;

    Position bs_position{0.0, 0.0, 0.0};
    Position ris_position{10.0, 90.0, 10.0};
    Position target_position{89.0, 36.0, 0.0};
    std::vector<Position> gt_positions;        // empty: circle layout
    std::vector<Position> scatterer_positions; // empty: flank the target
    double gt_circle_distance = 40.0;
    double gt_circle_radius = 20.0;
    double scatterer_offset_deg = 30.0;
    double scatterer_extra_range = 10.0;

    cdouble target_reflection{1.0, 0.0};
    std::vector<cdouble> scatterer_reflection{cdouble{1.0, 0.0}};

    std::uint64_t seed = 1;
    double epsilon_1 = 1e-5;
    double epsilon_2 = 1e-5;
    double epsilon_outer = 1e-5;

    std::size_t N() const { return num_antennas; }
    std::size_t M() const { return num_elements; }
    std::size_t K() const { return num_gts; }
    std::size_t I() const { return num_scatterers; }

    double noise(std::size_t k) const { return noise_gt.size() == 1 ? noise_gt[0] : noise_gt.at(k); }
    double rate_threshold(std::size_t k) const {
        return rate_thresholds.size() == 1 ? rate_thresholds[0] : rate_thresholds.at(k);
    }
    cdouble scatterer_beta(std::size_t i) const {
        return scatterer_reflection.size() == 1 ? scatterer_reflection[0] : scatterer_reflection.at(i);
    }
    void set_rate_threshold(double r) { rate_thresholds.assign(1, r); }

    std::vector<Position> resolved_gt_positions() const {
        if (!gt_positions.empty()) return gt_positions;
        const double dir = azimuth(bs_position, ris_position);
        const Position c{bs_position.x + gt_circle_distance * std::cos(dir), bs_position.y + gt_circle_distance * std::sin(dir), 0.0};
        std::vector<Position> out;
        for (std::size_t k = 0; k < num_gts; ++k) {
            const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(num_gts);
            out.push_back({c.x + gt_circle_radius * std::cos(phi), c.y + gt_circle_radius * std::sin(phi), 0.0});
        }
        return out;
    }

    std::vector<Position> resolved_scatterer_positions() const {
        if (!scatterer_positions.empty()) return scatterer_positions;
        const double th0 = azimuth(bs_position, target_position);
        const double range = distance(bs_position, target_position) + scatterer_extra_range;
        const double off = scatterer_offset_deg * std::numbers::pi / 180.0;
        std::vector<Position> out;
        for (std::size_t i = 0; i < num_scatterers; ++i) {
            // alternate sides, widening for more than two
            const double mult = static_cast<double>(i / 2 + 1);
            const double th = th0 + (i % 2 == 0 ? 1.0 : -1.0) * mult * off;
            out.push_back({bs_position.x + range * std::cos(th), bs_position.y + range * std::sin(th), target_position.z});
        }
        return out;
    }

    double target_angle() const { return azimuth(bs_position, target_position); }
    std::vector<double> scatterer_angles() const {
        std::vector<double> out;
        for (const auto &p : resolved_scatterer_positions()) out.push_back(azimuth(bs_position, p));
        return out;
    }

    void validate() const {
        auto fail = [](const std::string &m) { throw std::invalid_argument("scenario: " + m); };
        if (num_antennas < 1) fail("num_antennas must be >= 1");
        if (num_gts < 1) fail("num_gts must be >= 1");
        if (!(p_max > 0.0)) fail("p_max_watts must be > 0");
        if (noise_gt.empty() || (noise_gt.size() != 1 && noise_gt.size() != num_gts)) fail("noise_gt_watts must have 1 or K entries");
        for (double v : noise_gt)
            if (!(v > 0.0)) fail("noise_gt_watts must be > 0");
        if (!(noise_sensing > 0.0)) fail("noise_sensing_watts must be > 0");
        if (rate_thresholds.empty() || (rate_thresholds.size() != 1 && rate_thresholds.size() != num_gts))
            fail("rate_thresholds must have 1 or K entries");
        for (double v : rate_thresholds)
            if (!(v >= 0.0) || !std::isfinite(v)) fail("rate thresholds must be finite and >= 0");
        if (!(pl_exp_bs_gt > 0.0 && pl_exp_bs_target > 0.0 && pl_exp_ris > 0.0)) fail("path-loss exponents must be > 0");
        if (std::isnan(rician_db)) fail("rician_db is NaN");
        if (!gt_positions.empty() && gt_positions.size() != num_gts) fail("gt_positions must have K entries");
        if (!scatterer_positions.empty() && scatterer_positions.size() != num_scatterers)
            fail("scatterer_positions must have I entries");
        if (scatterer_reflection.empty() || (scatterer_reflection.size() != 1 && scatterer_reflection.size() != num_scatterers))
            fail("scatterer_reflection must have 1 or I entries");
        if (!(epsilon_1 > 0.0 && epsilon_2 > 0.0 && epsilon_outer > 0.0)) fail("convergence accuracies must be > 0");
        const double th0 = target_angle();
        for (double th : scatterer_angles())
            if (std::abs(std::sin(th) - std::sin(th0)) < 1e-9) fail("a scatterer shares the target's steering angle");
        auto check_dist = [&](const Position &a, const Position &b) {
            if (!(distance(a, b) > 0.0)) fail("coincident node positions");
        };
        for (const auto &p : resolved_gt_positions()) {
            check_dist(bs_position, p);
            if (num_elements > 0) check_dist(ris_position, p);
        }
        for (const auto &p : resolved_scatterer_positions()) {
            check_dist(bs_position, p);
            if (num_elements > 0) check_dist(ris_position, p);
        }
        check_dist(bs_position, target_position);
        if (num_elements > 0) {
            check_dist(ris_position, target_position);
            check_dist(bs_position, ris_position);
        }
    }

    // Table II values
    static Scenario table_defaults() { return Scenario{}; }

    // small instance used throughout the tests
    static Scenario desk_scale(std::uint64_t seed = 1) {
        Scenario s;
        s.num_antennas = 4;
        s.num_elements = 8;
        s.num_gts = 2;
        s.num_scatterers = 2;
        s.p_max = 1.0;
        s.rate_thresholds = {2.0};
        s.seed = seed;
        return s;
    }
};

inline CVector steering_vector(double theta, std::size_t n) {
    CVector a(n);
    const double s = std::numbers::pi * std::sin(theta);
    for (std::size_t i = 0; i < n; ++i) a[i] = std::polar(1.0, s * static_cast<double>(i));
    return a;
}

inline CMatrix response_matrix(double theta, cdouble beta, std::size_t n) {
    CMatrix r = CMatrix::outer(steering_vector(theta, n));
    r *= beta;
    return r;
}

inline double path_loss(double d, double alpha, double ref_gain_db) {
    if (!(d > 0.0)) throw std::invalid_argument("path_loss: distance must be > 0");
    return std::pow(10.0, ref_gain_db / 10.0) / std::pow(d, alpha);
}

struct ChannelSet {
    std::vector<CVector> h_bk; // K x N
    std::vector<CVector> h_rk; // K x M
    CMatrix H_br;              // N x M
    CVector h_bt;              // N
    CVector h_rt;              // M
    std::vector<CVector> h_bi; // I x N
    std::vector<CVector> h_ri; // I x M

    double theta_target = 0.0;
    std::vector<double> theta_scatterers;

    std::size_t N() const { return h_bt.size(); }
    std::size_t M() const { return h_rt.size(); }
    std::size_t K() const { return h_bk.size(); }
    std::size_t I() const { return h_bi.size(); }
};

enum class Link : std::uint64_t { BsGt = 1, RisGt = 2, BsRis = 3, BsTarget = 4, RisTarget = 5, BsScatterer = 6, RisScatterer = 7 };

namespace detail {

struct RicianWeights {
    double los, nlos;
};

inline RicianWeights rician_weights(double rician_db) {
    if (std::isinf(rician_db)) return rician_db > 0 ? RicianWeights{1.0, 0.0} : RicianWeights{0.0, 1.0};
    const double kappa = std::pow(10.0, rician_db / 10.0);
    return {std::sqrt(kappa / (1.0 + kappa)), std::sqrt(1.0 / (1.0 + kappa))};
}

// entry (i, j) of a link; NLoS draw addressed by (i, j, link, instance)
inline cdouble rician_entry(const rng::Philox &gen, const RicianWeights &w, double gain, cdouble los, std::uint64_t i,
                            std::uint64_t j, Link link, std::uint64_t instance) {
    cdouble v = w.los * los;
    if (w.nlos > 0.0) v += w.nlos * gen.cnormal({i, j, static_cast<std::uint64_t>(link), instance});
    return std::sqrt(gain) * v;
}

inline CVector rician_vector(const rng::Philox &gen, const RicianWeights &w, double gain, const CVector &los, Link link,
                             std::uint64_t instance) {
    CVector h(los.size());
    for (std::size_t i = 0; i < los.size(); ++i) h[i] = rician_entry(gen, w, gain, los[i], i, 0, link, instance);
    return h;
}

} // namespace detail

inline ChannelSet gen_channels(const Scenario &s) {
    s.validate();
    const std::size_t N = s.N(), M = s.M(), K = s.K(), I = s.I();
    const rng::Philox gen(s.seed, 0);
    const auto w = detail::rician_weights(s.rician_db);
    const double ref = s.ref_gain_db;
    const Position &bs = s.bs_position, &ris = s.ris_position, &tg = s.target_position;
    ChannelSet ch;
    const auto gts = s.resolved_gt_positions();
    const auto scs = s.resolved_scatterer_positions();

    for (std::size_t k = 0; k < K; ++k) {
        ch.h_bk.push_back(detail::rician_vector(gen, w, path_loss(distance(bs, gts[k]), s.pl_exp_bs_gt, ref),
                                                steering_vector(azimuth(bs, gts[k]), N), Link::BsGt, k));
        if (M > 0)
            ch.h_rk.push_back(detail::rician_vector(gen, w, path_loss(distance(ris, gts[k]), s.pl_exp_ris, ref),
                                                    steering_vector(azimuth(ris, gts[k]), M), Link::RisGt, k));
        else
            ch.h_rk.emplace_back(0);
    }
    ch.H_br = CMatrix(N, M);
    if (M > 0) {
        const double g = path_loss(distance(bs, ris), s.pl_exp_ris, ref);
        const CVector at = steering_vector(azimuth(bs, ris), N);
        const CVector ar = steering_vector(azimuth(ris, bs), M);
        for (std::size_t j = 0; j < M; ++j)
            for (std::size_t i = 0; i < N; ++i)
                ch.H_br(i, j) = detail::rician_entry(gen, w, g, at[i] * std::conj(ar[j]), i, j, Link::BsRis, 0);
    }
    ch.h_bt = detail::rician_vector(gen, w, path_loss(distance(bs, tg), s.pl_exp_bs_target, ref), steering_vector(azimuth(bs, tg), N),
                                    Link::BsTarget, 0);
    ch.h_rt = M > 0 ? detail::rician_vector(gen, w, path_loss(distance(ris, tg), s.pl_exp_ris, ref), steering_vector(azimuth(ris, tg), M),
                                            Link::RisTarget, 0)
                    : CVector(0);
    for (std::size_t i = 0; i < I; ++i) {
        ch.h_bi.push_back(detail::rician_vector(gen, w, path_loss(distance(bs, scs[i]), s.pl_exp_bs_target, ref),
                                                steering_vector(azimuth(bs, scs[i]), N), Link::BsScatterer, i));
        ch.h_ri.push_back(M > 0 ? detail::rician_vector(gen, w, path_loss(distance(ris, scs[i]), s.pl_exp_ris, ref),
                                                        steering_vector(azimuth(ris, scs[i]), M), Link::RisScatterer, i)
                                : CVector(0));
    }
    ch.theta_target = s.target_angle();
    ch.theta_scatterers = s.scatterer_angles();
    return ch;
}

} // namespace starisac
