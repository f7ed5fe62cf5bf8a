#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "scenario.hpp"

namespace starisac {

class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string &source, std::size_t line, const std::string &msg)
        : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

  private:
    std::size_t line_;
};

namespace detail {

inline std::size_t line_of_offset(const std::string &text, std::size_t offset) {
    offset = std::min(offset, text.size());
    std::size_t line = 1;
    for (std::size_t i = 0; i < offset; ++i)
        if (text[i] == '\n') ++line;
    return line;
}

inline std::size_t line_of_key(const std::string &text, const std::string &key) {
    const auto pos = text.find("\"" + key + "\"");
    return pos == std::string::npos ? 0 : line_of_offset(text, pos);
}

} // namespace detail

inline Scenario scenario_from_json(const std::string &text, const std::string &source = "<config>") {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ConfigError(source, detail::line_of_offset(text, e.byte == 0 ? 0 : e.byte - 1), e.what());
    }
    if (!j.is_object()) throw ConfigError(source, 1, "top level must be an object");

    Scenario s;
    if (j.contains("preset")) {
        const std::string p = j["preset"].is_string() ? j["preset"].get<std::string>() : "";
        if (p == "table_ii") s = Scenario::table_defaults();
        else if (p == "desk_scale") s = Scenario::desk_scale();
        else throw ConfigError(source, detail::line_of_key(text, "preset"), "preset must be \"table_ii\" or \"desk_scale\"");
    }

    auto err = [&](const std::string &key, const std::string &msg) {
        throw ConfigError(source, detail::line_of_key(text, key), "key '" + key + "': " + msg);
    };
    auto num = [&](const std::string &key, const json &v) -> double {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto str = v.get<std::string>();
            if (str == "inf") return std::numeric_limits<double>::infinity();
            if (str == "-inf") return -std::numeric_limits<double>::infinity();
        }
        err(key, "expected a number");
        return 0.0;
    };
    auto count = [&](const std::string &key, const json &v) -> std::size_t {
        if (!v.is_number_integer() || v.get<long long>() < 0) err(key, "expected a nonnegative integer");
        return v.get<std::size_t>();
    };
    auto numbers = [&](const std::string &key, const json &v) {
        std::vector<double> out;
        if (v.is_array()) {
            for (const auto &x : v) out.push_back(num(key, x));
            if (out.empty()) err(key, "empty list");
        } else {
            out.push_back(num(key, v));
        }
        return out;
    };
    auto position = [&](const std::string &key, const json &v) {
        if (!v.is_array() || v.size() != 3) err(key, "expected [x, y, z]");
        return Position{num(key, v[0]), num(key, v[1]), num(key, v[2])};
    };
    auto positions = [&](const std::string &key, const json &v) {
        if (!v.is_array()) err(key, "expected a list of [x, y, z]");
        std::vector<Position> out;
        for (const auto &p : v) out.push_back(position(key, p));
        return out;
    };
    auto complex = [&](const std::string &key, const json &v) -> cdouble {
        if (v.is_array() && v.size() == 2) return {num(key, v[0]), num(key, v[1])};
        return {num(key, v), 0.0};
    };

    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string &k = it.key();
        const json &v = it.value();
        if (k == "preset") continue;
        else if (k == "num_gts") s.num_gts = count(k, v);
        else if (k == "num_elements") s.num_elements = count(k, v);
        else if (k == "num_antennas") s.num_antennas = count(k, v);
        else if (k == "num_scatterers") s.num_scatterers = count(k, v);
        else if (k == "rate_thresholds") s.rate_thresholds = numbers(k, v);
        else if (k == "target_position") s.target_position = position(k, v);
        else if (k == "ris_position") s.ris_position = position(k, v);
        else if (k == "bs_position") s.bs_position = position(k, v);
        else if (k == "gt_positions") s.gt_positions = positions(k, v);
        else if (k == "scatterer_positions") s.scatterer_positions = positions(k, v);
        else if (k == "p_max_watts") s.p_max = num(k, v);
        else if (k == "noise_gt_watts") s.noise_gt = numbers(k, v);
        else if (k == "noise_sensing_watts") s.noise_sensing = num(k, v);
        else if (k == "ref_gain_db") s.ref_gain_db = num(k, v);
        else if (k == "pl_exp_bs_gt") s.pl_exp_bs_gt = num(k, v);
        else if (k == "pl_exp_bs_target") s.pl_exp_bs_target = num(k, v);
        else if (k == "pl_exp_ris") s.pl_exp_ris = num(k, v);
        else if (k == "rician_db") s.rician_db = num(k, v);
        else if (k == "seed") {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) err(k, "expected a nonnegative integer");
            s.seed = v.get<std::uint64_t>();
        } else if (k == "epsilon_1") s.epsilon_1 = num(k, v);
        else if (k == "epsilon_2") s.epsilon_2 = num(k, v);
        else if (k == "epsilon_outer") s.epsilon_outer = num(k, v);
        else if (k == "target_reflection") s.target_reflection = complex(k, v);
        else if (k == "scatterer_reflection") {
            s.scatterer_reflection.clear();
            if (v.is_array() && !v.empty() && v[0].is_array())
                for (const auto &x : v) s.scatterer_reflection.push_back(complex(k, x));
            else
                s.scatterer_reflection.push_back(complex(k, v));
        } else if (k == "gt_circle_distance") s.gt_circle_distance = num(k, v);
        else if (k == "gt_circle_radius") s.gt_circle_radius = num(k, v);
        else if (k == "scatterer_offset_deg") s.scatterer_offset_deg = num(k, v);
        else if (k == "scatterer_extra_range") s.scatterer_extra_range = num(k, v);
        else err(k, "unknown key");
    }
    try {
        s.validate();
    } catch (const std::invalid_argument &e) {
        throw ConfigError(source, 0, e.what());
    }
    return s;
}

inline Scenario load_scenario(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str(), path);
}

inline nlohmann::json scenario_to_json(const Scenario &s) {
    using nlohmann::json;
    auto pos = [](const Position &p) { return json::array({p.x, p.y, p.z}); };
    json j;
    j["num_gts"] = s.num_gts;
    j["num_elements"] = s.num_elements;
    j["num_antennas"] = s.num_antennas;
    j["num_scatterers"] = s.num_scatterers;
    j["rate_thresholds"] = s.rate_thresholds;
    j["target_position"] = pos(s.target_position);
    j["ris_position"] = pos(s.ris_position);
    j["bs_position"] = pos(s.bs_position);
    if (!s.gt_positions.empty()) {
        j["gt_positions"] = json::array();
        for (const auto &p : s.gt_positions) j["gt_positions"].push_back(pos(p));
    }
    if (!s.scatterer_positions.empty()) {
        j["scatterer_positions"] = json::array();
        for (const auto &p : s.scatterer_positions) j["scatterer_positions"].push_back(pos(p));
    }
    j["p_max_watts"] = s.p_max;
    j["noise_gt_watts"] = s.noise_gt;
    j["noise_sensing_watts"] = s.noise_sensing;
    j["ref_gain_db"] = s.ref_gain_db;
    j["pl_exp_bs_gt"] = s.pl_exp_bs_gt;
    j["pl_exp_bs_target"] = s.pl_exp_bs_target;
    j["pl_exp_ris"] = s.pl_exp_ris;
    if (std::isinf(s.rician_db)) j["rician_db"] = s.rician_db > 0 ? "inf" : "-inf";
    else j["rician_db"] = s.rician_db;
    j["seed"] = s.seed;
    j["epsilon_1"] = s.epsilon_1;
    j["epsilon_2"] = s.epsilon_2;
    j["epsilon_outer"] = s.epsilon_outer;
    j["target_reflection"] = json::array({s.target_reflection.real(), s.target_reflection.imag()});
    j["scatterer_reflection"] = json::array();
    for (const auto &b : s.scatterer_reflection) j["scatterer_reflection"].push_back(json::array({b.real(), b.imag()}));
    j["gt_circle_distance"] = s.gt_circle_distance;
    j["gt_circle_radius"] = s.gt_circle_radius;
    j["scatterer_offset_deg"] = s.scatterer_offset_deg;
    j["scatterer_extra_range"] = s.scatterer_extra_range;
    return j;
}

} // namespace starisac
