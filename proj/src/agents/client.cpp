#include "xrchat/agents.hpp"
#include "xrchat/error.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>

#include <algorithm>
#include <future>
#include <thread>

namespace xrchat::agents {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

AgentClient::AgentClient(AgentEndpointConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.timeout <= std::chrono::milliseconds::zero()) {
        throw Error(ErrorCode::InvalidConfig, std::string(to_string(cfg_.kind)) + " agent timeout must be positive");
    }
    if (cfg_.retries < 0) throw Error(ErrorCode::InvalidConfig, "agent retries must be >= 0");
    if (cfg_.base_url.empty()) throw Error(ErrorCode::InvalidConfig, "agent base_url is empty");
    detail::split_url(cfg_.base_url);
}

json AgentClient::get_json(const std::string& path) const {
    const auto url = detail::split_url(cfg_.base_url);
    const std::string full = detail::join_path(url.path, path);
    httplib::Headers headers;
    if (auto key = detail::secret_from_env(cfg_.auth_env_var); !key.empty()) {
        headers.emplace("Authorization", "Bearer " + key);
    }

    const auto deadline = Clock::now() + cfg_.timeout;
    const std::string who = std::string(to_string(cfg_.kind));
    std::string last_error = "timed out";
    for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
        const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (remaining <= std::chrono::milliseconds::zero()) break;

        httplib::Client client(url.origin);
        detail::set_timeouts(client, remaining);
        auto res = client.Get(full, headers);
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw Error(ErrorCode::BadPayload, who + " returned invalid JSON: " + e.what());
            }
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status >= 400 && res->status < 500) break;
    }
    throw Error(ErrorCode::AgentUnavailable, who + " agent at " + cfg_.base_url + ": " + last_error);
}

namespace {

void require_id(const std::string& id, const char* what) {
    if (id.empty()) throw Error(ErrorCode::InvalidArgument, std::string(what) + " must be non-empty");
}

}  // namespace

AgentPayload AgentClient::fetch_pdm(const std::string& asset_id) const {
    require_id(asset_id, "asset_id");
    const auto raw = get_json("/pdm/" + httplib::detail::encode_url(asset_id));
    AgentPayload p;
    p.agent = AgentKind::Pdm;
    p.fetched_at = std::chrono::system_clock::now();
    p.body = validate_pdm(raw, asset_id);
    p.summary_text = render_pdm(p.body);
    return p;
}

AgentPayload AgentClient::fetch_xai(const std::string& prediction_id) const {
    require_id(prediction_id, "prediction_id");
    const auto raw = get_json("/xai/" + httplib::detail::encode_url(prediction_id));
    AgentPayload p;
    p.agent = AgentKind::Xai;
    p.fetched_at = std::chrono::system_clock::now();
    p.body = validate_xai(raw, prediction_id);
    p.summary_text = render_xai(p.body);
    return p;
}

AgentPayload AgentClient::fetch_iot(const std::string& device_id, std::chrono::seconds window) const {
    require_id(device_id, "device_id");
    if (window <= std::chrono::seconds::zero()) throw Error(ErrorCode::InvalidArgument, "iot window must be positive");
    const auto raw = get_json("/iot/" + httplib::detail::encode_url(device_id) +
                              "?window_s=" + std::to_string(window.count()));
    AgentPayload p;
    p.agent = AgentKind::Iot;
    p.fetched_at = std::chrono::system_clock::now();
    p.body = validate_iot(raw, device_id, window);
    p.summary_text = render_iot(p.body);
    return p;
}

bool AgentClient::reachable() const {
    try {
        const auto url = detail::split_url(cfg_.base_url);
        httplib::Client client(url.origin);
        detail::set_timeouts(client, std::min(cfg_.timeout, std::chrono::milliseconds(1000)));
        return static_cast<bool>(client.Get(detail::join_path(url.path, "/")));
    } catch (const std::exception&) {
        return false;
    }
}

void AgentHub::add(AgentEndpointConfig cfg) {
    const auto kind = cfg.kind;
    clients_[kind] = std::make_shared<AgentClient>(std::move(cfg));
}

bool AgentHub::has(AgentKind k) const { return clients_.count(k) != 0; }

std::vector<AgentKind> AgentHub::kinds() const {
    std::vector<AgentKind> out;
    for (const auto& [k, c] : clients_) out.push_back(k);
    return out;
}

const AgentClient* AgentHub::client(AgentKind k) const {
    auto it = clients_.find(k);
    return it == clients_.end() ? nullptr : it->second.get();
}

std::vector<AgentOutcome> AgentHub::fetch_all(const std::vector<AgentKind>& kinds, const AgentTargets& targets) const {
    std::vector<AgentOutcome> out;
    std::vector<std::pair<std::size_t, std::future<AgentPayload>>> pending;
    for (auto k : kinds) {
        AgentOutcome o{k, std::nullopt, {}};
        auto it = clients_.find(k);
        const std::string& id = targets.id_for(k);
        if (it == clients_.end()) {
            o.error = "agent not configured";
        } else if (id.empty()) {
            o.error = "no identifier supplied";
        } else {
            auto client = it->second;
            const auto window = targets.iot_window;
            pending.emplace_back(out.size(), std::async(std::launch::async, [client, k, id, window] {
                                     switch (k) {
                                         case AgentKind::Pdm: return client->fetch_pdm(id);
                                         case AgentKind::Xai: return client->fetch_xai(id);
                                         case AgentKind::Iot: return client->fetch_iot(id, window);
                                     }
                                     throw Error(ErrorCode::InvalidArgument, "unknown agent");
                                 }));
        }
        out.push_back(std::move(o));
    }
    // Each client bounds itself by its own timeout, so waiting on all of them
    // ends within max(timeout).
    for (auto& [idx, fut] : pending) {
        try {
            out[idx].payload = fut.get();
        } catch (const std::exception& e) {
            out[idx].error = e.what();
        }
    }
    return out;
}

}  // namespace xrchat::agents
