#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>

#include <starisac/sweep.hpp>

#include "oracles/property_suites.hpp"

using namespace starisac;

namespace {

nlohmann::json result_json(const Scenario &sc, const RunResult &r) {
    using nlohmann::json;
    auto finite = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    json j;
    j["scheme"] = to_string(r.scheme);
    j["seed"] = r.seed;
    j["feasible"] = r.feasible;
    j["converged"] = r.converged;
    j["degraded"] = r.degraded;
    j["outer_iters"] = r.outer_iters;
    j["gamma_bs"] = r.gamma;
    j["gamma_bs_db"] = finite(r.gamma > 0.0 ? 10.0 * std::log10(r.gamma) : -INFINITY);
    j["omega_trace"] = r.omega_trace;
    j["c"] = r.c;
    json priv = json::array(), common = json::array();
    for (double v : r.private_rates) priv.push_back(finite(v));
    for (double v : r.common_rates) common.push_back(finite(v));
    j["private_rates"] = priv;
    j["common_rates"] = common;
    j["trace_W0"] = r.trace_w0;
    j["beta_t"] = r.ris.beta_t();
    j["beta_r"] = r.ris.beta_r();
    j["audit"] = {{"common_excess", finite(r.audit.common_excess)}, {"rate_shortfall", finite(r.audit.rate_shortfall)},
                  {"power_ratio", r.audit.power_ratio},           {"pairing_error", r.audit.pairing_error},
                  {"min_eigenvalue", r.audit.min_eigenvalue},    {"ok", r.audit.ok}};
    j["b2_stalls"] = r.b2_stalls;
    j["wall_ms"] = r.wall_ms;
    if (!r.note.empty()) j["note"] = r.note;
    j["scenario"] = scenario_to_json(sc);
    return j;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"STAR-RIS assisted ISAC simulator"};
    app.require_subcommand(1);

    SweepSpec spec;
    std::string sweep_param, epsilon_text;
    std::vector<std::string> seed_text, scheme_text{"star-rsma"};
    auto *run = app.add_subcommand("run", "run a seeded parameter sweep and write CSV results");
    run->add_option("--config", spec.config_path, "scenario JSON")->required();
    run->add_option("--sweep", sweep_param, "swept parameter: P_max, M, R_th or scheme")->required();
    run->add_option("--values", spec.values, "comma-separated sweep values")->delimiter(',')->required();
    run->add_option("--seeds", seed_text, "comma-separated seeds")->delimiter(',')->required();
    run->add_option("--schemes", scheme_text, "comma-separated scheme names")->delimiter(',');
    run->add_option("--out", spec.out_dir, "output directory")->required();
    run->add_option("--jobs", spec.jobs, "worker threads (0: all cores)");
    run->add_option("--epsilon", epsilon_text, "relative stopping tolerance of the outer loop");

    std::string solve_config, solve_scheme = "star-rsma";
    std::optional<std::uint64_t> solve_seed;
    auto *solve = app.add_subcommand("solve", "optimize one scenario and print the result as JSON");
    solve->add_option("--config", solve_config, "scenario JSON")->required();
    solve->add_option("--scheme", solve_scheme, "scheme name");
    solve->add_option("--seed", solve_seed, "override the scenario seed");

    std::size_t trials = 1000;
    auto *selftest = app.add_subcommand("selftest", "run the identity and conic oracle suites");
    selftest->add_option("--trials", trials, "trials per identity suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            spec.param = sweep_param_from_string(sweep_param);
            spec.seeds.clear();
            for (const auto &s : seed_text) {
                std::size_t used = 0;
                unsigned long long v = 0;
                try {
                    v = std::stoull(s, &used);
                } catch (const std::exception &) {
                    used = 0;
                }
                if (used == 0 || used != s.size() || s.front() == '-') throw std::invalid_argument("seed '" + s + "' is not a non-negative integer");
                spec.seeds.push_back(v);
            }
            spec.schemes.clear();
            for (const auto &s : scheme_text) spec.schemes.push_back(scheme_from_string(s));
            if (!epsilon_text.empty()) spec.run.epsilon = parse_number(epsilon_text, "epsilon");
            const auto out = run_sweep(spec);
            std::size_t feasible = 0;
            for (const auto &r : out.rows) feasible += r.result.feasible ? 1 : 0;
            std::cerr << out.rows.size() << " runs, " << feasible << " feasible, " << out.errors << " errored; results in " << spec.out_dir
                      << "\n";
            for (const auto &r : out.rows)
                if (r.errored) std::cerr << "error: " << run_stem(r, spec.param) << ": " << r.error << "\n";
            return out.errors ? 1 : 0;
        }
        if (*solve) {
            Scenario sc = load_scenario(solve_config);
            if (solve_seed) sc.seed = *solve_seed;
            const auto r = optimize(sc, scheme_from_string(solve_scheme));
            std::cout << result_json(sc, r).dump(2) << "\n";
            return 0;
        }
        if (*selftest) {
            auto suites = oracle::all_property_suites(trials);
            for (auto &s : oracle::conic_suites()) suites.push_back(s);
            bool ok = true;
            for (const auto &s : suites) {
                std::printf("%s %-32s trials=%zu failures=%zu worst=%.3g\n", s.passed() ? "PASS" : "FAIL", s.name.c_str(), s.trials, s.failures,
                            s.worst);
                ok = ok && s.passed();
            }
            return ok ? 0 : 1;
        }
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument &e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
