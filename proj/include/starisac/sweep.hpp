#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <starisac/config.hpp>
#include <starisac/driver.hpp>

namespace starisac {

enum class SweepParam { PMax, M, RTh, Scheme };

inline std::string to_string(SweepParam p) {
    switch (p) {
    case SweepParam::PMax: return "P_max";
    case SweepParam::M: return "M";
    case SweepParam::RTh: return "R_th";
    case SweepParam::Scheme: return "scheme";
    }
    return "?";
}

inline SweepParam sweep_param_from_string(const std::string &s) {
    for (SweepParam p : {SweepParam::PMax, SweepParam::M, SweepParam::RTh, SweepParam::Scheme})
        if (s == to_string(p)) return p;
    throw std::invalid_argument("unknown sweep parameter '" + s + "' (expected P_max, M, R_th or scheme)");
}

struct SweepSpec {
    std::string config_path;
    SweepParam param = SweepParam::PMax;
    std::vector<std::string> values;
    std::vector<std::uint64_t> seeds;
    std::vector<Scheme> schemes{Scheme::StarRsma};
    std::string out_dir;
    std::size_t jobs = 0; // 0: hardware concurrency
    RunOptions run;
};

struct SweepRow {
    Scheme scheme = Scheme::StarRsma;
    std::string value; // sweep value as given
    Scenario scenario;
    RunResult result;
    bool errored = false;
    std::string error;
};

struct SweepOutcome {
    std::vector<SweepRow> rows;
    std::size_t errors = 0;
};

// The scheme list used for the sweep: swept scheme values replace the configured list.
inline std::vector<Scheme> sweep_schemes(const SweepSpec &spec) {
    if (spec.param != SweepParam::Scheme) return spec.schemes;
    std::vector<Scheme> out;
    for (const auto &v : spec.values) out.push_back(scheme_from_string(v));
    return out;
}

inline double parse_number(const std::string &s, const std::string &what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) throw std::invalid_argument(what + ": '" + s + "' is not a number");
    return v;
}

inline void validate(const SweepSpec &spec) {
    if (spec.values.empty()) throw std::invalid_argument("sweep needs at least one value");
    if (spec.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
    if (spec.param != SweepParam::Scheme && spec.schemes.empty()) throw std::invalid_argument("sweep needs at least one scheme");
    if (spec.out_dir.empty()) throw std::invalid_argument("sweep needs an output directory");
    for (const auto &v : spec.values) {
        switch (spec.param) {
        case SweepParam::Scheme: scheme_from_string(v); break;
        case SweepParam::M: {
            const double m = parse_number(v, "M");
            if (m < 0.0 || m != std::floor(m)) throw std::invalid_argument("M: '" + v + "' is not a non-negative integer");
            break;
        }
        case SweepParam::PMax:
            if (!(parse_number(v, "P_max") > 0.0)) throw std::invalid_argument("P_max: '" + v + "' must be positive");
            break;
        case SweepParam::RTh:
            if (parse_number(v, "R_th") < 0.0) throw std::invalid_argument("R_th: '" + v + "' must be non-negative");
            break;
        }
    }
}

inline Scenario sweep_point(Scenario sc, SweepParam p, const std::string &value, std::uint64_t seed) {
    sc.seed = seed;
    switch (p) {
    case SweepParam::PMax: sc.p_max = parse_number(value, "P_max"); break;
    case SweepParam::M: sc.num_elements = static_cast<std::size_t>(parse_number(value, "M")); break;
    case SweepParam::RTh: sc.set_rate_threshold(parse_number(value, "R_th")); break;
    case SweepParam::Scheme: break;
    }
    return sc;
}

// Recomputes the constraint audit of a finished run from its own scenario.
inline Audit reaudit(const Scenario &sc, const RunResult &r) {
    const SchemeConfig cfg = apply_scheme(r.scheme, sc);
    const ChannelSet ch = gen_channels(sc);
    std::vector<std::size_t> order;
    if (cfg.access == Access::Noma) order = noma_order(ch, cfg.initial.phi_r);
    return audit_state(ch, r.ris, r.state, sc, cfg, order);
}

inline SweepRow run_point(const Scenario &base, SweepParam param, Scheme scheme, const std::string &value, std::uint64_t seed,
                          const RunOptions &opt) {
    SweepRow row;
    row.scheme = scheme;
    row.value = value;
    row.result.scheme = scheme;
    row.result.seed = seed;
    try {
        row.scenario = sweep_point(base, param, value, seed);
        row.result = optimize(row.scenario, scheme, opt);
        if (row.result.feasible && !reaudit(row.scenario, row.result).ok) {
            row.result.feasible = false;
            row.result.note = "re-audit failed";
        }
    } catch (const std::exception &e) {
        row.errored = true;
        row.error = e.what();
        row.result.feasible = false;
        row.result.note = e.what();
    }
    return row;
}

// Rows come back ordered by (scheme, sweep value, seed) in the order those lists were given.
inline SweepOutcome execute_sweep(const Scenario &base, const SweepSpec &spec) {
    validate(spec);
    struct Job {
        Scheme scheme;
        std::string value;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    const auto schemes = sweep_schemes(spec);
    for (Scheme s : schemes)
        for (const auto &v : spec.values) {
            if (spec.param == SweepParam::Scheme && scheme_from_string(v) != s) continue;
            for (std::uint64_t seed : spec.seeds) jobs.push_back({s, v, seed});
        }

    SweepOutcome out;
    out.rows.resize(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++)
            out.rows[i] = run_point(base, spec.param, jobs[i].scheme, jobs[i].value, jobs[i].seed, spec.run);
    };
    std::size_t n = spec.jobs ? spec.jobs : std::max(1u, std::thread::hardware_concurrency());
    n = std::min(n, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto &t : pool) t.join();
    for (const auto &r : out.rows) out.errors += r.errored ? 1 : 0;
    return out;
}

inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string sanitize(const std::string &s) {
    std::string o;
    for (char c : s) o += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
    return o;
}

inline std::string run_stem(const SweepRow &r, SweepParam p) {
    return std::string(to_string(r.scheme)) + "_" + sanitize(to_string(p)) + "-" + sanitize(r.value) + "_seed" + std::to_string(r.result.seed);
}

inline void write_results_csv(std::ostream &os, const std::vector<SweepRow> &rows) {
    std::size_t K = 0;
    for (const auto &r : rows) K = std::max(K, r.scenario.K());
    os << "scheme,seed,P_max,M,K,R_th,outer_iters,gamma_bs,gamma_bs_db,sum_c";
    for (std::size_t k = 0; k < K; ++k) os << ",rate_" << k + 1;
    os << ",trace_W0,feasible,wall_ms\n";
    for (const auto &r : rows) {
        const auto &res = r.result;
        const auto &sc = r.scenario;
        double sum_c = 0.0;
        for (double c : res.c) sum_c += c;
        os << to_string(r.scheme) << ',' << res.seed << ',' << format_number(sc.p_max) << ',' << sc.M() << ',' << sc.K() << ','
           << format_number(sc.K() ? sc.rate_threshold(0) : 0.0) << ',' << res.outer_iters << ',' << format_number(res.gamma) << ','
           << format_number(res.gamma > 0.0 ? 10.0 * std::log10(res.gamma) : -std::numeric_limits<double>::infinity()) << ','
           << format_number(sum_c);
        for (std::size_t k = 0; k < K; ++k) {
            double rate = std::numeric_limits<double>::quiet_NaN();
            if (k < res.private_rates.size()) rate = res.private_rates[k] + (k < res.c.size() ? res.c[k] : 0.0);
            os << ',' << format_number(rate);
        }
        os << ',' << format_number(res.trace_w0) << ',' << (res.feasible ? "true" : "false") << ',' << format_number(res.wall_ms)
           << '\n';
    }
}

inline void write_omega_trace(std::ostream &os, const RunResult &r) {
    os << "iteration,omega\n";
    for (std::size_t i = 0; i < r.omega_trace.size(); ++i) os << i << ',' << format_number(r.omega_trace[i]) << '\n';
}

inline void write_coefficients_csv(std::ostream &os, const std::vector<SweepRow> &rows, SweepParam p) {
    os << "scheme,seed," << to_string(p) << ",element,beta_t,beta_r\n";
    for (const auto &r : rows) {
        const auto bt = r.result.ris.beta_t(), br = r.result.ris.beta_r();
        for (std::size_t m = 0; m < bt.size(); ++m)
            os << to_string(r.scheme) << ',' << r.result.seed << ',' << r.value << ',' << m << ',' << format_number(bt[m]) << ','
               << format_number(br[m]) << '\n';
    }
}

// Writes results.csv, coefficients.csv, errors.txt (when any run errored) and traces/<run>.csv.
inline void write_sweep(const std::filesystem::path &dir, const SweepSpec &spec, const SweepOutcome &out) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "traces");
    auto open = [](const fs::path &p) {
        std::ofstream f(p);
        if (!f) throw std::runtime_error("cannot write " + p.string());
        return f;
    };
    {
        auto f = open(dir / "results.csv");
        write_results_csv(f, out.rows);
    }
    {
        auto f = open(dir / "coefficients.csv");
        write_coefficients_csv(f, out.rows, spec.param);
    }
    for (const auto &r : out.rows) {
        auto f = open(dir / "traces" / (run_stem(r, spec.param) + ".csv"));
        write_omega_trace(f, r.result);
    }
    if (out.errors) {
        auto f = open(dir / "errors.txt");
        for (const auto &r : out.rows)
            if (r.errored) f << run_stem(r, spec.param) << ": " << r.error << '\n';
    }
}

inline SweepOutcome run_sweep(const SweepSpec &spec) {
    validate(spec);
    const Scenario base = load_scenario(spec.config_path);
    SweepOutcome out = execute_sweep(base, spec);
    write_sweep(spec.out_dir, spec, out);
    return out;
}

} // namespace starisac
