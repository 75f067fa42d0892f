#pragma once

#include "xrchat/clock.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace xrchat::agents {

enum class AgentKind { Pdm, Xai, Iot };

std::string_view to_string(AgentKind k);
std::optional<AgentKind> parse_agent_kind(std::string_view s);
inline constexpr AgentKind kAllAgents[] = {AgentKind::Pdm, AgentKind::Xai, AgentKind::Iot};

// One-line description used when listing agents to a routing model.
std::string_view describe(AgentKind k);

struct AgentPayload {
    AgentKind agent = AgentKind::Pdm;
    SystemTime fetched_at{};
    nlohmann::json body;
    std::string summary_text;
};

struct AgentEndpointConfig {
    AgentKind kind = AgentKind::Pdm;
    std::string base_url;
    std::string auth_env_var;
    std::chrono::milliseconds timeout{3000};
    int retries = 2;
};

// Schema validation + rendering. Each throws BadPayload on a schema violation
// and returns the canonical body; summary rendering is a pure function of it.
nlohmann::json validate_pdm(const nlohmann::json& raw, std::string_view asset_id);
nlohmann::json validate_xai(const nlohmann::json& raw, std::string_view prediction_id);
nlohmann::json validate_iot(const nlohmann::json& raw, std::string_view device_id, std::chrono::seconds window);
std::string render_pdm(const nlohmann::json& body);
std::string render_xai(const nlohmann::json& body);
// IoT bodies carry window_s so rendering needs nothing else.
std::string render_iot(const nlohmann::json& body);

// HTTP client for one agent service. timeout bounds the whole call including
// retries; each attempt gets whatever time remains.
class AgentClient {
public:
    explicit AgentClient(AgentEndpointConfig cfg);

    const AgentEndpointConfig& config() const noexcept { return cfg_; }

    AgentPayload fetch_pdm(const std::string& asset_id) const;
    AgentPayload fetch_xai(const std::string& prediction_id) const;
    AgentPayload fetch_iot(const std::string& device_id, std::chrono::seconds window) const;

    bool reachable() const;

private:
    nlohmann::json get_json(const std::string& path) const;

    AgentEndpointConfig cfg_;
};

// Identifiers the agents are asked about for one query.
struct AgentTargets {
    std::string asset_id;
    std::string prediction_id;
    std::string device_id;
    std::chrono::seconds iot_window{3600};

    const std::string& id_for(AgentKind k) const;
};

// Pulls `id:<value>` out of free text.
std::optional<std::string> extract_entity_id(std::string_view query);

struct AgentOutcome {
    AgentKind kind;
    std::optional<AgentPayload> payload;
    std::string error;  // set when payload is empty
};

// Set of configured agent clients. fetch_all runs the requested agents
// concurrently and waits at most max(timeout) for all of them.
class AgentHub {
public:
    AgentHub() = default;
    void add(AgentEndpointConfig cfg);
    bool has(AgentKind k) const;
    std::vector<AgentKind> kinds() const;
    const AgentClient* client(AgentKind k) const;

    std::vector<AgentOutcome> fetch_all(const std::vector<AgentKind>& kinds, const AgentTargets& targets) const;

private:
    std::map<AgentKind, std::shared_ptr<AgentClient>> clients_;
};

// Serves GET /pdm/{id}, /xai/{id}, /iot/{id} from fixture files
// <root>/<kind>/<id>.json, returned verbatim. Unknown ids give 404.
class MockAgentServer {
public:
    struct Options {
        std::filesystem::path fixtures;
        std::string host = "127.0.0.1";
        int port = 0;  // 0 picks a free port
        // Per-kind artificial delay and forced failure for fault injection.
        std::map<AgentKind, std::chrono::milliseconds> delay;
        std::map<AgentKind, int> fail_status;
    };

    explicit MockAgentServer(Options opts);
    ~MockAgentServer();
    MockAgentServer(const MockAgentServer&) = delete;
    MockAgentServer& operator=(const MockAgentServer&) = delete;

    // Binds and serves on a background thread.
    void start();
    // Blocks in the caller's thread until stop().
    void run();
    void stop();

    int port() const noexcept { return port_; }
    std::string base_url() const;

    void set_delay(AgentKind k, std::chrono::milliseconds d);
    void set_fail_status(AgentKind k, int status);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace xrchat::agents
