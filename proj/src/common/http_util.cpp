#include "http_util.hpp"

#include "xrchat/error.hpp"

#include <cstdlib>

namespace xrchat::detail {

UrlParts split_url(std::string_view url) {
    const auto scheme = url.find("://");
    if (scheme == std::string_view::npos) {
        throw Error(ErrorCode::InvalidConfig, "URL '" + std::string(url) + "' has no scheme");
    }
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string_view::npos) return {std::string(url), ""};
    return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

std::string join_path(std::string_view base_path, std::string_view suffix) {
    std::string out(base_path);
    while (!out.empty() && out.back() == '/') out.pop_back();
    if (suffix.empty() || suffix.front() != '/') out.push_back('/');
    out.append(suffix);
    return out;
}

std::string secret_from_env(const std::string& var) {
    if (var.empty()) return {};
    const char* v = std::getenv(var.c_str());
    return v ? std::string(v) : std::string{};
}

}  // namespace xrchat::detail
