#include "xrchat/error.hpp"
#include "xrchat/router.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_set>

namespace xrchat::router {

using agents::AgentKind;
using nlohmann::json;

std::string_view to_string(RoutePolicy p) { return p == RoutePolicy::Llm ? "llm" : "lexical"; }

RoutePolicy parse_route_policy(std::string_view s) {
    const auto v = text::ascii_lower(s);
    if (v == "lexical") return RoutePolicy::Lexical;
    if (v == "llm") return RoutePolicy::Llm;
    throw Error(ErrorCode::InvalidConfig, "unknown routing policy '" + std::string(s) + "'");
}

namespace {

std::unordered_set<std::string> tool_vocabulary(const ToolSpec& t) {
    std::unordered_set<std::string> vocab;
    for (auto& w : text::terms(t.title)) vocab.insert(std::move(w));
    for (const auto& k : t.keywords) {
        for (auto& w : text::terms(k)) vocab.insert(std::move(w));
    }
    for (auto& w : text::content_terms(t.summary)) vocab.insert(std::move(w));
    return vocab;
}

std::string join(const std::vector<std::string>& v, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

bool available_has(const std::vector<AgentKind>& available, AgentKind k) {
    return std::find(available.begin(), available.end(), k) != available.end();
}

// Intent tokens per agent; matches are reported in the rationale.
std::map<AgentKind, std::vector<std::string>> agent_intents(const std::vector<std::string>& words) {
    static const std::set<std::string> iot = {"sensor", "reading", "telemetry", "temperature", "pressure"};
    static const std::set<std::string> pdm = {"predict", "maintenance", "failure", "remaining"};
    static const std::set<std::string> why = {"why", "explain", "explanation"};

    std::vector<std::string> iot_hits, pdm_hits, why_hits, model_hits;
    for (const auto& w : words) {
        if (iot.count(w)) iot_hits.push_back(w);
        if (pdm.count(w)) pdm_hits.push_back(w);
        if (why.count(w)) why_hits.push_back(w);
        if (w.rfind("predict", 0) == 0 || w == "model") model_hits.push_back(w);
    }
    std::map<AgentKind, std::vector<std::string>> out;
    if (!pdm_hits.empty()) out[AgentKind::Pdm] = pdm_hits;
    if (!why_hits.empty() && !model_hits.empty()) {
        auto hits = why_hits;
        hits.insert(hits.end(), model_hits.begin(), model_hits.end());
        out[AgentKind::Xai] = hits;
    }
    if (!iot_hits.empty()) out[AgentKind::Iot] = iot_hits;
    return out;
}

}  // namespace

RoutingDecision route_lexical(std::string_view query, const std::vector<ToolSpec>& tools,
                              const std::vector<AgentKind>& available) {
    RoutingDecision d;
    d.policy = RoutePolicy::Lexical;
    const auto qterms = text::content_terms(query);
    std::vector<std::string> notes;

    struct Scored {
        double score;
        const ToolSpec* tool;
        std::vector<std::string> matched;
    };
    std::vector<Scored> scored;
    if (!qterms.empty()) {
        for (const auto& t : tools) {
            const auto vocab = tool_vocabulary(t);
            Scored s{0.0, &t, {}};
            for (const auto& q : qterms) {
                if (vocab.count(q)) s.matched.push_back(q);
            }
            s.score = static_cast<double>(s.matched.size()) / static_cast<double>(qterms.size());
            if (s.score >= kRouteThreshold) scored.push_back(std::move(s));
        }
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tool->tool_id < b.tool->tool_id;
    });
    if (scored.size() > kMaxRoutedTools) scored.resize(kMaxRoutedTools);
    for (const auto& s : scored) {
        d.selected_tools.push_back(s.tool->tool_id);
        notes.push_back(s.tool->tool_id + " score " + text::format_number(s.score) + " matched [" +
                        join(s.matched, ", ") + "]");
    }

    for (const auto& [kind, hits] : agent_intents(text::terms(query))) {
        if (!available_has(available, kind)) continue;
        d.selected_agents.push_back(kind);
        notes.push_back(std::string(agents::to_string(kind)) + " matched [" + join(hits, ", ") + "]");
    }
    d.rationale = notes.empty() ? "no tool or agent matched" : join(notes, "; ");
    return d;
}

std::string build_route_prompt(std::string_view query, const std::vector<ToolSpec>& tools,
                               const std::vector<AgentKind>& available, const std::vector<Turn>& history) {
    std::ostringstream p;
    p << "You route user questions to retrieval tools and auxiliary agents.\n"
      << "Reply with JSON only, exactly of the form {\"tools\": [tool_id, ...], \"agents\": [agent, ...]}.\n"
      << "Use only the names listed below. Use empty lists when nothing applies.\n\n"
      << "Tools:\n";
    if (tools.empty()) p << "(none)\n";
    for (const auto& t : tools) {
        p << "- " << t.tool_id << ": " << t.title;
        if (!t.version.empty()) p << " (version " << t.version << ")";
        p << ". " << t.summary << "\n";
    }
    p << "\nAgents:\n";
    if (available.empty()) p << "(none)\n";
    for (auto k : available) p << "- " << agents::describe(k) << "\n";
    if (!history.empty()) {
        p << "\nRecent conversation:\n";
        for (const auto& t : history) p << to_string(t.role) << ": " << t.text << "\n";
    }
    p << "\nQuestion: " << query << "\n";
    return p.str();
}

namespace {

std::optional<json> parse_route_reply(const std::string& reply) {
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
    try {
        auto j = json::parse(reply.substr(open, close - open + 1));
        if (!j.is_object()) return std::nullopt;
        return j;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

}  // namespace

RoutingDecision route_llm(std::string_view query, const std::vector<ToolSpec>& tools,
                          const std::vector<AgentKind>& available, const std::vector<Turn>& history,
                          llm::LlmProvider& model) {
    auto fallback = [&](const std::string& why) {
        auto d = route_lexical(query, tools, available);
        d.rationale = "llm routing fell back (" + why + "); " + d.rationale;
        return d;
    };

    std::string reply;
    try {
        reply = model.complete(build_route_prompt(query, tools, available, history), 0.0);
    } catch (const Error& e) {
        return fallback(e.what());
    }
    const auto parsed = parse_route_reply(reply);
    if (!parsed) return fallback("unparseable reply");
    const json& j = *parsed;
    const json empty = json::array();
    const json& jt = j.contains("tools") ? j["tools"] : empty;
    const json& ja = j.contains("agents") ? j["agents"] : empty;
    if (!jt.is_array() || !ja.is_array()) return fallback("tools/agents are not lists");

    RoutingDecision d;
    d.policy = RoutePolicy::Llm;
    std::vector<std::string> dropped;
    std::set<std::string> seen_tools;
    for (const auto& v : jt) {
        if (!v.is_string()) {
            dropped.push_back(v.dump());
            continue;
        }
        const auto name = v.get<std::string>();
        const bool known = std::any_of(tools.begin(), tools.end(), [&](const ToolSpec& t) { return t.tool_id == name; });
        if (!known) {
            dropped.push_back(name);
        } else if (seen_tools.insert(name).second && d.selected_tools.size() < kMaxRoutedTools) {
            d.selected_tools.push_back(name);
        }
    }
    std::set<AgentKind> chosen;
    for (const auto& v : ja) {
        const auto kind = v.is_string() ? agents::parse_agent_kind(v.get<std::string>()) : std::nullopt;
        if (!kind || !available_has(available, *kind)) {
            dropped.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            continue;
        }
        chosen.insert(*kind);
    }
    for (auto k : agents::kAllAgents) {
        if (chosen.count(k)) d.selected_agents.push_back(k);
    }
    if (!dropped.empty() && d.selected_tools.empty() && d.selected_agents.empty()) {
        return fallback("only unknown names: " + join(dropped, ", "));
    }
    d.rationale = "llm selected";
    if (!dropped.empty()) d.rationale += "; dropped unknown names: " + join(dropped, ", ");
    return d;
}

std::vector<Citation> extract_citations(std::string_view answer) {
    static const std::regex re(R"(\[([A-Za-z0-9_.\-]+):([A-Za-z0-9_.\-]+)\])");
    std::vector<Citation> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::regex_iterator<std::string_view::const_iterator> it(answer.begin(), answer.end(), re), end; it != end;
         ++it) {
        Citation c{(*it)[1].str(), (*it)[2].str()};
        if (seen.emplace(c.doc_id, c.chunk_id).second) out.push_back(std::move(c));
    }
    return out;
}

}  // namespace xrchat::router
