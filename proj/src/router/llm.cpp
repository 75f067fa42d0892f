#include "xrchat/llm.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <thread>

namespace xrchat::llm {

std::vector<PromptExcerpt> parse_prompt_excerpts(std::string_view prompt) {
    std::vector<PromptExcerpt> out;
    std::size_t pos = 0;
    while (pos < prompt.size()) {
        const auto nl = prompt.find('\n', pos);
        const auto end = nl == std::string_view::npos ? prompt.size() : nl;
        const std::string_view line = prompt.substr(pos, end - pos);
        pos = end + 1;
        if (line.substr(0, kExcerptOpen.size()) != kExcerptOpen) continue;
        const auto rest = line.substr(kExcerptOpen.size());
        if (rest.empty() || rest.front() != '[') continue;
        const auto close = rest.find(']');
        if (close == std::string_view::npos) continue;

        PromptExcerpt ex;
        ex.tag = std::string(rest.substr(1, close - 1));
        const std::string marker = std::string("\n") + std::string(kExcerptClose);
        std::size_t stop = prompt.find(marker, pos > 0 ? pos - 1 : 0);
        if (stop == std::string_view::npos) stop = prompt.size();
        ex.text = pos <= stop ? std::string(prompt.substr(pos, stop - pos)) : std::string{};
        out.push_back(std::move(ex));
        pos = std::min(prompt.size(), stop + marker.size());
    }
    return out;
}

std::string parse_prompt_question(std::string_view prompt) {
    const auto at = prompt.rfind(kQuestionHeading);
    if (at == std::string_view::npos) return {};
    return text::trim(prompt.substr(at + kQuestionHeading.size()));
}

std::string EchoLlm::complete(const std::string& prompt, double /*temperature*/) {
    const auto excerpts = parse_prompt_excerpts(prompt);
    if (excerpts.empty()) return "I have no source material to answer from.";
    const std::string q = text::ascii_lower(parse_prompt_question(prompt));
    const PromptExcerpt* pick = &excerpts.front();
    if (!q.empty()) {
        for (const auto& ex : excerpts) {
            if (text::ascii_lower(ex.text).find(q) != std::string::npos) {
                pick = &ex;
                break;
            }
        }
    }
    return text::trim(pick->text) + " [" + pick->tag + "]";
}

std::string ExtractiveLlm::complete(const std::string& prompt, double /*temperature*/) {
    std::string out;
    for (const auto& ex : parse_prompt_excerpts(prompt)) {
        if (!out.empty()) out += "\n\n";
        out += text::trim(ex.text) + " [" + ex.tag + "]";
    }
    return out;
}

ScriptedLlm::ScriptedLlm(std::vector<std::string> replies) : replies_(replies.begin(), replies.end()) {}

ScriptedLlm::ScriptedLlm(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}

std::string ScriptedLlm::complete(const std::string& prompt, double /*temperature*/) {
    std::function<std::string(const std::string&)> fn;
    {
        std::lock_guard lock(mu_);
        prompts_.push_back(prompt);
        if (down_) throw Error(ErrorCode::ProviderUnavailable, "scripted llm is down");
        if (!fn_) {
            if (!replies_.empty()) {
                last_ = replies_.front();
                replies_.pop_front();
            }
            return last_;
        }
        fn = fn_;
    }
    return fn(prompt);
}

std::vector<std::string> ScriptedLlm::prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
}

void ScriptedLlm::set_unavailable(bool down) {
    std::lock_guard lock(mu_);
    down_ = down;
}

RemoteLlm::RemoteLlm(RemoteLlmSpec spec) : spec_(std::move(spec)) {
    if (spec_.endpoint.empty()) throw Error(ErrorCode::InvalidConfig, "remote llm needs an endpoint");
    detail::split_url(spec_.endpoint);
}

std::string RemoteLlm::complete(const std::string& prompt, double temperature) {
    const auto url = detail::split_url(spec_.endpoint);
    const nlohmann::json req = {
        {"model", spec_.model},
        {"temperature", temperature},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    httplib::Headers headers;
    if (auto key = detail::secret_from_env(spec_.auth_env_var); !key.empty()) {
        headers.emplace("Authorization", "Bearer " + key);
    }
    const std::string path = detail::join_path(url.path, "/chat/completions");

    std::string last_error = "no attempt made";
    auto delay = spec_.base_delay;
    for (int attempt = 0; attempt < spec_.attempts; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        httplib::Client client(url.origin);
        detail::set_timeouts(client, spec_.request_timeout);
        auto res = client.Post(path, headers, req.dump(), "application/json");
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
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("bad response: ") + e.what();
        }
    }
    throw Error(ErrorCode::ProviderUnavailable, id() + ": " + last_error);
}

bool RemoteLlm::reachable() {
    const auto url = detail::split_url(spec_.endpoint);
    httplib::Client client(url.origin);
    detail::set_timeouts(client, std::chrono::seconds(1));
    return static_cast<bool>(client.Get("/"));
}

}  // namespace xrchat::llm
