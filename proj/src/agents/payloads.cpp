#include "xrchat/agents.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <cmath>
#include <regex>

namespace xrchat::agents {

using nlohmann::json;

std::string_view to_string(AgentKind k) {
    switch (k) {
        case AgentKind::Pdm: return "pdm";
        case AgentKind::Xai: return "xai";
        case AgentKind::Iot: return "iot";
    }
    return "unknown";
}

std::optional<AgentKind> parse_agent_kind(std::string_view s) {
    const std::string lower = text::ascii_lower(s);
    for (auto k : kAllAgents) {
        if (to_string(k) == lower) return k;
    }
    return std::nullopt;
}

std::string_view describe(AgentKind k) {
    switch (k) {
        case AgentKind::Pdm:
            return "pdm: predictive maintenance outputs for an asset (health score, failure mode, horizon)";
        case AgentKind::Xai:
            return "xai: explanation of a model prediction (feature attributions, narrative)";
        case AgentKind::Iot:
            return "iot: current and historical sensor readings from a device";
    }
    return "";
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::BadPayload, what); }

const json& require_object(const json& raw, std::string_view agent) {
    if (!raw.is_object()) bad(std::string(agent) + " payload is not a JSON object");
    return raw;
}

double finite_number(const json& v, const std::string& field) {
    if (!v.is_number()) bad(field + " must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) bad(field + " must be finite");
    return d;
}

std::string id_field(const json& raw, const char* key, std::string_view fallback) {
    if (auto it = raw.find(key); it != raw.end() && !it->is_null()) {
        if (!it->is_string()) bad(std::string(key) + " must be a string");
        return it->get<std::string>();
    }
    return std::string(fallback);
}

std::optional<std::string> optional_string(const json& raw, const char* key) {
    auto it = raw.find(key);
    if (it == raw.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) bad(std::string(key) + " must be a string");
    return it->get<std::string>();
}

}  // namespace

json validate_pdm(const json& raw, std::string_view asset_id) {
    require_object(raw, "pdm");
    json body = json::object();
    body["asset_id"] = id_field(raw, "asset_id", asset_id);

    auto hs = raw.find("health_score");
    if (hs == raw.end()) bad("health_score is required");
    const double score = finite_number(*hs, "health_score");
    if (score < 0.0 || score > 1.0) bad("health_score " + text::format_number(score) + " outside [0, 1]");
    body["health_score"] = score;

    if (auto mode = optional_string(raw, "predicted_failure_mode")) body["predicted_failure_mode"] = *mode;
    if (auto it = raw.find("horizon_days"); it != raw.end() && !it->is_null()) {
        if (!it->is_number_integer()) bad("horizon_days must be an integer");
        if (it->get<long long>() < 0) bad("horizon_days must be non-negative");
        body["horizon_days"] = it->get<long long>();
    }
    return body;
}

std::string render_pdm(const json& body) {
    std::string out = "PdM for asset " + body.at("asset_id").get<std::string>() +
                      ": health score " + text::format_number(body.at("health_score").get<double>());
    if (body.contains("predicted_failure_mode")) {
        out += "; predicted failure mode: " + body["predicted_failure_mode"].get<std::string>();
    }
    if (body.contains("horizon_days")) {
        out += "; horizon " + std::to_string(body["horizon_days"].get<long long>()) + " days";
    }
    return out + ".";
}

json validate_xai(const json& raw, std::string_view prediction_id) {
    require_object(raw, "xai");
    json body = json::object();
    body["prediction_id"] = id_field(raw, "prediction_id", prediction_id);

    struct Feature {
        std::string name;
        double attribution;
    };
    std::vector<Feature> features;
    if (auto it = raw.find("top_features"); it != raw.end() && !it->is_null()) {
        if (!it->is_array()) bad("top_features must be a list");
        for (const auto& f : *it) {
            if (f.is_object()) {
                if (!f.contains("name") || !f["name"].is_string()) bad("feature name must be a string");
                if (!f.contains("attribution")) bad("feature attribution is required");
                features.push_back({f["name"].get<std::string>(), finite_number(f["attribution"], "attribution")});
            } else if (f.is_array() && f.size() == 2 && f[0].is_string()) {
                features.push_back({f[0].get<std::string>(), finite_number(f[1], "attribution")});
            } else {
                bad("feature must be {name, attribution} or [name, attribution]");
            }
        }
    }
    const auto narrative = optional_string(raw, "narrative");
    const bool has_narrative = narrative && !text::trim(*narrative).empty();
    if (features.empty() && !has_narrative) bad("xai payload has neither features nor narrative");

    std::stable_sort(features.begin(), features.end(), [](const Feature& a, const Feature& b) {
        const double fa = std::fabs(a.attribution), fb = std::fabs(b.attribution);
        if (fa != fb) return fa > fb;
        return a.name < b.name;
    });
    json list = json::array();
    for (const auto& f : features) list.push_back({{"name", f.name}, {"attribution", f.attribution}});
    body["top_features"] = std::move(list);
    if (has_narrative) body["narrative"] = *narrative;
    return body;
}

std::string render_xai(const json& body) {
    std::string out = "XAI for prediction " + body.at("prediction_id").get<std::string>() + ":";
    const auto& features = body.at("top_features");
    if (!features.empty()) {
        out += " top features";
        bool first = true;
        for (const auto& f : features) {
            const double a = f.at("attribution").get<double>();
            out += first ? " " : ", ";
            out += f.at("name").get<std::string>() + " (" + (a >= 0 ? "+" : "") + text::format_number(a) + ")";
            first = false;
        }
        out += ".";
    }
    if (body.contains("narrative")) out += " Narrative: " + body["narrative"].get<std::string>();
    return out;
}

json validate_iot(const json& raw, std::string_view device_id, std::chrono::seconds window) {
    require_object(raw, "iot");
    json body = json::object();
    body["device_id"] = id_field(raw, "device_id", device_id);
    body["window_s"] = window.count();

    json readings = json::array();
    if (auto it = raw.find("readings"); it != raw.end() && !it->is_null()) {
        if (!it->is_array()) bad("readings must be a list");
        for (const auto& r : *it) {
            if (!r.is_object()) bad("reading must be an object");
            if (!r.contains("sensor") || !r["sensor"].is_string()) bad("reading sensor must be a string");
            if (!r.contains("timestamp") || !r["timestamp"].is_string()) bad("reading timestamp must be a string");
            const auto ts = r["timestamp"].get<std::string>();
            if (!parse_iso8601(ts)) bad("malformed timestamp '" + ts + "'");
            if (!r.contains("value")) bad("reading value is required");
            const double v = finite_number(r["value"], "value");
            std::string unit;
            if (r.contains("unit") && !r["unit"].is_null()) {
                if (!r["unit"].is_string()) bad("reading unit must be a string");
                unit = r["unit"].get<std::string>();
            }
            readings.push_back({{"sensor", r["sensor"]}, {"timestamp", ts}, {"value", v}, {"unit", unit}});
        }
    }
    body["readings"] = std::move(readings);
    return body;
}

std::string render_iot(const json& body) {
    const std::string head = "IoT device " + body.at("device_id").get<std::string>();
    const auto& readings = body.at("readings");
    const long long window = body.value("window_s", 0LL);
    if (readings.empty()) return head + ": no readings in window (" + std::to_string(window) + " s).";

    struct Stats {
        SystemTime latest_at{};
        double latest = 0, lo = 0, hi = 0;
        std::string latest_ts, unit;
        std::size_t n = 0;
    };
    std::map<std::string, Stats> per_sensor;
    for (const auto& r : readings) {
        const double v = r.at("value").get<double>();
        const auto ts = r.at("timestamp").get<std::string>();
        const auto at = parse_iso8601(ts).value_or(SystemTime{});
        auto& s = per_sensor[r.at("sensor").get<std::string>()];
        if (s.n == 0) {
            s.lo = s.hi = v;
        } else {
            s.lo = std::min(s.lo, v);
            s.hi = std::max(s.hi, v);
        }
        if (s.n == 0 || at >= s.latest_at) {
            s.latest_at = at;
            s.latest = v;
            s.latest_ts = ts;
            s.unit = r.value("unit", "");
        }
        ++s.n;
    }

    std::string out = head + ", last " + std::to_string(window) + " s:";
    for (const auto& [sensor, s] : per_sensor) {
        const std::string u = s.unit.empty() ? "" : " " + s.unit;
        out += "\n- " + sensor + ": latest " + text::format_number(s.latest) + u + " at " + s.latest_ts + ", min " +
               text::format_number(s.lo) + u + ", max " + text::format_number(s.hi) + u + " (" +
               std::to_string(s.n) + (s.n == 1 ? " reading)" : " readings)");
    }
    return out;
}

const std::string& AgentTargets::id_for(AgentKind k) const {
    switch (k) {
        case AgentKind::Pdm: return asset_id;
        case AgentKind::Xai: return prediction_id;
        case AgentKind::Iot: return device_id;
    }
    return asset_id;
}

std::optional<std::string> extract_entity_id(std::string_view query) {
    static const std::regex re(R"((?:^|[^A-Za-z0-9_])id:([A-Za-z0-9_-]+))");
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(query.begin(), query.end(), m, re)) return m[1].str();
    return std::nullopt;
}

}  // namespace xrchat::agents
