#include <catch_amalgamated.hpp>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <starisac/sweep.hpp>

using namespace starisac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("starisac_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path &p, const std::string &text) {
    std::ofstream out(p);
    out << text;
}

struct Exec {
    int code;
    std::string out, err;
};

Exec cli(const std::string &args, const fs::path &dir) {
    const std::string cmd = std::string(STARISAC_CLI_PATH) + " " + args + " > " + (dir / "stdout").string() + " 2> " + (dir / "stderr").string();
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(dir / "stdout"), slurp(dir / "stderr")};
}

std::string without_last_column(const std::string &csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

std::string results_csv(const std::vector<SweepRow> &rows) {
    std::ostringstream os;
    write_results_csv(os, rows);
    return os.str();
}

SweepSpec spec_for(SweepParam p, std::vector<std::string> values, std::vector<std::uint64_t> seeds, std::vector<Scheme> schemes) {
    SweepSpec s;
    s.param = p;
    s.values = std::move(values);
    s.seeds = std::move(seeds);
    s.schemes = std::move(schemes);
    s.out_dir = "unused";
    s.jobs = 1;
    return s;
}

} // namespace

TEST_CASE("sweep parameter names") {
    for (auto p : {SweepParam::PMax, SweepParam::M, SweepParam::RTh, SweepParam::Scheme}) CHECK(sweep_param_from_string(to_string(p)) == p);
    CHECK_THROWS_AS(sweep_param_from_string("N"), std::invalid_argument);
}

TEST_CASE("sweep validation") {
    auto ok = spec_for(SweepParam::PMax, {"1", "2"}, {1}, {Scheme::StarRsma});
    CHECK_NOTHROW(validate(ok));
    auto s = ok;
    s.seeds.clear();
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.values.clear();
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.values = {"1", "two"};
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.values = {"-1"};
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.param = SweepParam::M;
    s.values = {"8.5"};
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.param = SweepParam::Scheme;
    s.values = {"star-rsma", "star-cdma"};
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
    s = ok;
    s.out_dir.clear();
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
}

TEST_CASE("sweep points change only the swept parameter and the seed") {
    const Scenario base = Scenario::desk_scale(1);
    const Scenario a = sweep_point(base, SweepParam::PMax, "5", 9);
    CHECK(a.p_max == 5.0);
    CHECK(a.seed == 9);
    CHECK(a.M() == base.M());
    CHECK(sweep_point(base, SweepParam::M, "16", 1).M() == 16);
    CHECK(sweep_point(base, SweepParam::RTh, "3", 1).rate_threshold(1) == 3.0);
    CHECK(sweep_point(base, SweepParam::Scheme, "no-ris-rsma", 1).p_max == base.p_max);
}

TEST_CASE("single-point sweep reproduces a direct run") {
    const Scenario base = Scenario::desk_scale(1);
    const auto out = execute_sweep(base, spec_for(SweepParam::PMax, {"2"}, {3}, {Scheme::StarRsma}));
    REQUIRE(out.rows.size() == 1);
    Scenario sc = base;
    sc.seed = 3;
    sc.p_max = 2.0;
    const auto direct = optimize(sc, Scheme::StarRsma);
    const auto &r = out.rows[0].result;
    CHECK(r.gamma == direct.gamma);
    CHECK(r.omega_trace == direct.omega_trace);
    CHECK(r.ris.phi_t.values() == direct.ris.phi_t.values());
    CHECK(r.ris.phi_r.values() == direct.ris.phi_r.values());
    CHECK(r.c == direct.c);
}

TEST_CASE("sweep rows are ordered and reproducible across worker counts") {
    const Scenario base = Scenario::desk_scale(1);
    auto spec = spec_for(SweepParam::RTh, {"1", "2"}, {2, 1}, {Scheme::NoRisRsma, Scheme::StarSdma});
    const auto serial = execute_sweep(base, spec);
    spec.jobs = 3;
    const auto pooled = execute_sweep(base, spec);
    REQUIRE(serial.rows.size() == 8);
    std::size_t i = 0;
    for (Scheme s : {Scheme::NoRisRsma, Scheme::StarSdma})
        for (const char *v : {"1", "2"})
            for (std::uint64_t seed : {2u, 1u}) {
                CHECK(serial.rows[i].scheme == s);
                CHECK(serial.rows[i].value == v);
                CHECK(serial.rows[i].result.seed == seed);
                ++i;
            }
    CHECK(without_last_column(results_csv(serial.rows)) == without_last_column(results_csv(pooled.rows)));
}

TEST_CASE("failed runs become rows and the sweep continues") {
    const Scenario base = Scenario::desk_scale(1);
    const auto out = execute_sweep(base, spec_for(SweepParam::M, {"7", "8"}, {1}, {Scheme::TraditionalRisRsma}));
    REQUIRE(out.rows.size() == 2);
    CHECK(out.errors == 1);
    CHECK(out.rows[0].errored);
    CHECK_FALSE(out.rows[0].result.feasible);
    CHECK_FALSE(out.rows[1].errored);
    CHECK(out.rows[1].result.feasible);

    Scenario hard = base;
    hard.set_rate_threshold(40.0);
    const auto inf = execute_sweep(hard, spec_for(SweepParam::PMax, {"1"}, {1}, {Scheme::StarRsma}));
    CHECK(inf.errors == 0);
    CHECK_FALSE(inf.rows[0].result.feasible);
}

TEST_CASE("results table layout") {
    const auto out = execute_sweep(Scenario::desk_scale(1), spec_for(SweepParam::PMax, {"1"}, {4}, {Scheme::StarRsma}));
    const std::string csv = results_csv(out.rows);
    const std::string header = csv.substr(0, csv.find('\n'));
    CHECK(header == "scheme,seed,P_max,M,K,R_th,outer_iters,gamma_bs,gamma_bs_db,sum_c,rate_1,rate_2,trace_W0,feasible,wall_ms");
    std::istringstream row(csv.substr(csv.find('\n') + 1));
    std::vector<std::string> cells;
    for (std::string c; std::getline(row, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 15);
    const auto &r = out.rows[0].result;
    CHECK(cells[0] == "star-rsma");
    CHECK(cells[1] == "4");
    CHECK(std::stod(cells[7]) == r.gamma);
    CHECK(std::stod(cells[8]) == Catch::Approx(10.0 * std::log10(r.gamma)).epsilon(1e-15));
    CHECK(std::stod(cells[10]) == r.c[0] + r.private_rates[0]);
    CHECK(std::stod(cells[10]) >= 2.0 - 1e-6);
    CHECK(cells[13] == "true");
}

TEST_CASE("transmit power sweep is monotone per seed") {
    const auto out = execute_sweep(Scenario::desk_scale(1), spec_for(SweepParam::PMax, {"1", "2", "5", "10"}, {1, 2, 3, 4, 5}, {Scheme::StarRsma}));
    REQUIRE(out.rows.size() == 20);
    for (std::size_t s = 0; s < 5; ++s)
        for (std::size_t v = 1; v < 4; ++v) {
            const auto &lo = out.rows[(v - 1) * 5 + s].result, &hi = out.rows[v * 5 + s].result;
            INFO("seed " << lo.seed << " step " << v);
            CHECK(lo.feasible);
            CHECK(hi.feasible);
            CHECK(hi.gamma >= lo.gamma * (1.0 - 1e-6));
        }
}

TEST_CASE("command line: sweep outputs") {
    const fs::path dir = scratch("run");
    const auto e = cli("run --config " CONFIG_DIR "/desk.json --sweep P_max --values 1,2 --seeds 1,2 --schemes star-rsma,random-ris-rsma --out " +
                           (dir / "out").string(),
                       dir);
    INFO(e.err);
    CHECK(e.code == 0);
    const std::string first = slurp(dir / "out" / "results.csv");
    CHECK(std::count(first.begin(), first.end(), '\n') == 9);
    const std::string coeffs = slurp(dir / "out" / "coefficients.csv");
    CHECK(coeffs.rfind("scheme,seed,P_max,element,beta_t,beta_r\n", 0) == 0);
    CHECK(std::count(coeffs.begin(), coeffs.end(), '\n') == 1 + 8 * 8);
    std::size_t traces = 0;
    for (const auto &f : fs::directory_iterator(dir / "out" / "traces")) {
        ++traces;
        CHECK(slurp(f.path()).rfind("iteration,omega\n0,", 0) == 0);
    }
    CHECK(traces == 8);
    CHECK_FALSE(fs::exists(dir / "out" / "errors.txt"));

    const auto again = cli("run --config " CONFIG_DIR "/desk.json --sweep P_max --values 1,2 --seeds 1,2 --schemes star-rsma,random-ris-rsma --out " +
                               (dir / "again").string() + " --jobs 2",
                           dir);
    CHECK(again.code == 0);
    CHECK(without_last_column(first) == without_last_column(slurp(dir / "again" / "results.csv")));
    CHECK(coeffs == slurp(dir / "again" / "coefficients.csv"));
}

TEST_CASE("command line: exit codes") {
    const fs::path dir = scratch("codes");
    SECTION("a run error gives a nonzero exit and still writes results") {
        const auto e = cli("run --config " CONFIG_DIR "/desk.json --sweep M --values 7 --seeds 1 --schemes traditional-ris-rsma --out " +
                               (dir / "out").string(),
                           dir);
        CHECK(e.code == 1);
        CHECK(fs::exists(dir / "out" / "results.csv"));
        CHECK(slurp(dir / "out" / "errors.txt").find("even") != std::string::npos);
    }
    SECTION("infeasible runs are not errors") {
        write(dir / "hard.json", R"({"preset": "desk_scale", "rate_thresholds": [40.0]})");
        const auto e = cli("run --config " + (dir / "hard.json").string() + " --sweep P_max --values 1 --seeds 1 --out " + (dir / "out").string(), dir);
        CHECK(e.code == 0);
        CHECK(slurp(dir / "out" / "results.csv").find(",false,") != std::string::npos);
    }
    SECTION("broken config reports its line") {
        write(dir / "bad.json", "{\n  \"num_antennas\": 4,\n  \"p_max_watts\": ,\n}\n");
        const auto e = cli("run --config " + (dir / "bad.json").string() + " --sweep P_max --values 1 --seeds 1 --out " + (dir / "out").string(), dir);
        CHECK(e.code == 2);
        CHECK(e.err.find("bad.json:3") != std::string::npos);
    }
    SECTION("missing config") {
        const auto e = cli("solve --config " + (dir / "nope.json").string(), dir);
        CHECK(e.code == 2);
        CHECK(e.err.find("cannot open") != std::string::npos);
    }
    SECTION("unknown sweep parameter and empty seeds") {
        CHECK(cli("run --config " CONFIG_DIR "/desk.json --sweep N --values 1 --seeds 1 --out " + (dir / "o").string(), dir).code == 2);
        CHECK(cli("run --config " CONFIG_DIR "/desk.json --sweep P_max --values 1 --seeds '' --out " + (dir / "o").string(), dir).code == 2);
    }
}

TEST_CASE("command line: solve and selftest") {
    const fs::path dir = scratch("solve");
    const auto e = cli("solve --config " CONFIG_DIR "/desk.json --scheme star-sdma --seed 2", dir);
    REQUIRE(e.code == 0);
    const auto j = nlohmann::json::parse(e.out);
    Scenario sc = load_scenario(CONFIG_DIR "/desk.json");
    sc.seed = 2;
    const auto direct = optimize(sc, Scheme::StarSdma);
    CHECK(j["scheme"] == "star-sdma");
    CHECK(j["seed"] == 2);
    CHECK(j["gamma_bs"].get<double>() == direct.gamma);
    CHECK(j["beta_t"].size() == sc.M());
    CHECK(j["audit"]["ok"].get<bool>());
    CHECK(j["omega_trace"].size() == direct.omega_trace.size());

    const auto t = cli("selftest --trials 50", dir);
    CHECK(t.code == 0);
    CHECK(std::count(t.out.begin(), t.out.end(), '\n') == 8);
    CHECK(t.out.find("FAIL") == std::string::npos);
}
