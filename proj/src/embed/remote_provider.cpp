#include "xrchat/embedder.hpp"
#include "xrchat/error.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

namespace xrchat::embed {

RemoteEmbeddingProvider::RemoteEmbeddingProvider(ProviderSpec spec, RetryPolicy retry)
    : spec_(std::move(spec)), retry_(retry) {
    detail::split_url(spec_.endpoint);  // validates the URL early
}

std::vector<std::vector<float>> RemoteEmbeddingProvider::embed_raw(std::span<const std::string> texts) {
    const auto url = detail::split_url(spec_.endpoint);
    const nlohmann::json req = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
    const std::string body = req.dump();

    httplib::Headers headers;
    if (auto key = detail::secret_from_env(spec_.auth_env_var); !key.empty()) {
        headers.emplace("Authorization", "Bearer " + key);
    }

    std::string last_error = "no attempt made";
    auto delay = retry_.base_delay;
    for (int attempt = 0; attempt < retry_.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay = std::chrono::milliseconds(static_cast<long long>(delay.count() * retry_.factor));
        }
        httplib::Client client(url.origin);
        detail::set_timeouts(client, retry_.request_timeout);
        auto res = client.Post(url.path.empty() ? "/" : url.path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("vectors").get<std::vector<std::vector<float>>>();
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("bad response: ") + e.what();
        }
    }
    throw Error(ErrorCode::ProviderUnavailable, spec_.provider_id + " failed after " +
                                                    std::to_string(retry_.attempts) + " attempts: " + last_error);
}

bool RemoteEmbeddingProvider::reachable() {
    const auto url = detail::split_url(spec_.endpoint);
    httplib::Client client(url.origin);
    detail::set_timeouts(client, std::chrono::seconds(1));
    return static_cast<bool>(client.Get("/"));
}

}  // namespace xrchat::embed
