#include "tdm/config_io.hpp"

#include <fstream>
#include <sstream>

namespace tdm {

using nlohmann::json;

namespace {

const json& required(const json& obj, const char* key, const char* context) {
    if (!obj.is_object() || !obj.contains(key) || obj.at(key).is_null()) {
        throw Error(ErrorCode::InvalidConfig, std::string(context) + ": missing required field '" + key + "'");
    }
    return obj.at(key);
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (obj.contains(key) && !obj.at(key).is_null()) {
        return obj.at(key).get<T>();
    }
    return fallback;
}

SwitchSpec switch_from_json(const json& j) {
    SwitchSpec sw;
    sw.r_on_ohm = required(j, "r_on_ohm", "switch").get<double>();
    sw.c_on_f = get_or(j, "c_on_f", 0.0);
    sw.injected_charge_c = get_or(j, "injected_charge_c", 0.0);
    if (j.contains("off_leak_resistance_ohm") && !j.at("off_leak_resistance_ohm").is_null()) {
        sw.off_leak_resistance_ohm = j.at("off_leak_resistance_ohm").get<double>();
    }
    return sw;
}

json switch_to_json(const SwitchSpec& sw) {
    json j{{"r_on_ohm", sw.r_on_ohm}, {"c_on_f", sw.c_on_f}, {"injected_charge_c", sw.injected_charge_c}};
    j["off_leak_resistance_ohm"] = sw.off_leak_resistance_ohm ? json(*sw.off_leak_resistance_ohm) : json(nullptr);
    return j;
}

ChargingMode charging_from_string(const std::string& s) {
    if (s == "two_step") return ChargingMode::TwoStep;
    if (s == "single_step") return ChargingMode::SingleStep;
    throw Error(ErrorCode::InvalidConfig, "topology.charging must be 'two_step' or 'single_step', got '" + s + "'");
}

CrosstalkMatrix crosstalk_from_json(const json& j, std::size_t n) {
    CrosstalkMatrix m(n);
    if (j.is_null()) {
        return m;
    }
    if (j.contains("matrix")) {
        const auto& rows = j.at("matrix");
        if (!rows.is_array() || rows.size() != n) {
            throw Error(ErrorCode::InvalidConfig, "crosstalk.matrix must have one row per electrode");
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (!rows[v].is_array() || rows[v].size() != n) {
                throw Error(ErrorCode::InvalidConfig, "crosstalk.matrix rows must have one entry per electrode");
            }
            for (std::size_t a = 0; a < n; ++a) {
                m.set(v, a, rows[v][a].get<double>());
            }
        }
    }
    if (j.contains("entries")) {
        for (const auto& e : j.at("entries")) {
            const auto v = required(e, "victim", "crosstalk entry").get<std::int64_t>();
            const auto a = required(e, "aggressor", "crosstalk entry").get<std::int64_t>();
            if (v < 0 || a < 0 || static_cast<std::size_t>(v) >= n || static_cast<std::size_t>(a) >= n) {
                throw Error(ErrorCode::InvalidConfig, "crosstalk entry index out of range");
            }
            m.set(static_cast<std::size_t>(v), static_cast<std::size_t>(a),
                  required(e, "coefficient", "crosstalk entry").get<double>());
        }
    }
    return m;
}

}  // namespace

Rational rational_from_json(const json& value, const char* what) {
    if (value.is_number_integer()) {
        return Rational(value.get<std::int64_t>());
    }
    if (value.is_number()) {
        return rational_from_double(value.get<double>());
    }
    if (value.is_string()) {
        const auto s = value.get<std::string>();
        const auto slash = s.find('/');
        try {
            if (slash == std::string::npos) {
                return Rational(std::stoll(s));
            }
            const auto den = std::stoll(s.substr(slash + 1));
            if (den == 0) {
                throw Error(ErrorCode::InvalidConfig, std::string(what) + ": zero denominator");
            }
            return Rational(std::stoll(s.substr(0, slash)), den);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::InvalidConfig, std::string(what) + ": cannot parse rational '" + s + "'");
        }
    }
    throw Error(ErrorCode::InvalidConfig, std::string(what) + ": expected a number or \"num/den\" string");
}

json rational_to_json(const Rational& value) {
    if (value.denominator() == 1) {
        return value.numerator();
    }
    return std::to_string(value.numerator()) + "/" + std::to_string(value.denominator());
}

SystemConfig config_from_json(const json& doc) {
    try {
        SystemConfig cfg;
        cfg.name = get_or<std::string>(doc, "name", "");

        const auto& dac = required(doc, "dac", "config");
        cfg.dac.update_rate_hz = rational_from_json(required(dac, "update_rate_hz", "dac"), "dac.update_rate_hz");
        cfg.dac.resolution_bits = required(dac, "resolution_bits", "dac").get<int>();
        cfg.dac.full_scale_v = required(dac, "full_scale_v", "dac").get<double>();
        cfg.dac.settle_time_constant_s = get_or(dac, "settle_time_constant_s", 0.0);

        const auto& topo = required(doc, "topology", "config");
        cfg.topology.charging = charging_from_string(get_or<std::string>(topo, "charging", "two_step"));
        for (const auto& st : required(topo, "stages", "topology")) {
            DemuxStage stage;
            stage.fanout = required(st, "fanout", "stage").get<int>();
            stage.outputs_used = get_or(st, "outputs_used", stage.fanout);
            stage.has_decoder = get_or(st, "has_decoder", false);
            stage.hold_capacitance_f = get_or(st, "hold_capacitance_f", 0.0);
            stage.sw = switch_from_json(required(st, "switch", "stage"));
            cfg.topology.stages.push_back(stage);
        }

        if (doc.contains("routing") && !doc.at("routing").is_null()) {
            const auto& r = doc.at("routing");
            cfg.routing = DynamicRouting{required(r, "k_demux_outputs", "routing").get<int>(),
                                         required(r, "m_switch_fanout", "routing").get<int>(),
                                         get_or(r, "active_group", 0)};
        }

        if (doc.contains("leakage") && !doc.at("leakage").is_null()) {
            const auto& l = doc.at("leakage");
            cfg.leakage.droop_rate_v_per_s = get_or(l, "droop_rate_v_per_s", 0.0);
            cfg.leakage.reference_voltage_v = get_or(l, "reference_voltage_v", 10.0);
        }

        const int derived_n = cfg.routing ? cfg.routing->electrode_count() : cfg.topology.total_channels();
        cfg.electrode_count = get_or(doc, "electrode_count", derived_n);
        cfg.crosstalk = crosstalk_from_json(doc.value("crosstalk", json(nullptr)),
                                            static_cast<std::size_t>(std::max(cfg.electrode_count, 0)));

        if (doc.contains("per_channel_rate_hz") && !doc.at("per_channel_rate_hz").is_null()) {
            cfg.per_channel_rate_hz = rational_from_json(doc.at("per_channel_rate_hz"), "per_channel_rate_hz");
        } else {
            const int slots = std::max(cfg.topology.slots_per_refresh(), 1);
            cfg.per_channel_rate_hz = cfg.dac.update_rate_hz / Rational(slots);
        }
        cfg.k_settle = get_or(doc, "k_settle", 5);
        cfg.settle_refresh_budget = get_or(doc, "settle_refresh_budget", 8);
        return cfg;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, e.what());
    }
}

json config_to_json(const SystemConfig& cfg) {
    json stages = json::array();
    for (const auto& s : cfg.topology.stages) {
        stages.push_back({{"fanout", s.fanout},
                          {"outputs_used", s.outputs_used},
                          {"has_decoder", s.has_decoder},
                          {"hold_capacitance_f", s.hold_capacitance_f},
                          {"switch", switch_to_json(s.sw)}});
    }
    json entries = json::array();
    for (std::size_t a = 0; a < cfg.crosstalk.size(); ++a) {
        for (std::size_t v = 0; v < cfg.crosstalk.size(); ++v) {
            if (const double c = cfg.crosstalk.at(v, a); c != 0.0) {
                entries.push_back({{"victim", v}, {"aggressor", a}, {"coefficient", c}});
            }
        }
    }
    json doc{
        {"name", cfg.name},
        {"dac",
         {{"update_rate_hz", rational_to_json(cfg.dac.update_rate_hz)},
          {"resolution_bits", cfg.dac.resolution_bits},
          {"full_scale_v", cfg.dac.full_scale_v},
          {"settle_time_constant_s", cfg.dac.settle_time_constant_s}}},
        {"topology",
         {{"charging", cfg.topology.charging == ChargingMode::TwoStep ? "two_step" : "single_step"},
          {"stages", stages}}},
        {"leakage",
         {{"droop_rate_v_per_s", cfg.leakage.droop_rate_v_per_s},
          {"reference_voltage_v", cfg.leakage.reference_voltage_v}}},
        {"crosstalk", {{"entries", entries}}},
        {"per_channel_rate_hz", rational_to_json(cfg.per_channel_rate_hz)},
        {"electrode_count", cfg.electrode_count},
        {"k_settle", cfg.k_settle},
        {"settle_refresh_budget", cfg.settle_refresh_budget},
    };
    if (cfg.routing) {
        doc["routing"] = {{"k_demux_outputs", cfg.routing->k_demux_outputs},
                          {"m_switch_fanout", cfg.routing->m_switch_fanout},
                          {"active_group", cfg.routing->active_group}};
    } else {
        doc["routing"] = nullptr;
    }
    return doc;
}

json load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
}

SystemConfig load_config(const std::filesystem::path& path) {
    return config_from_json(load_json(path));
}

}  // namespace tdm
