#pragma once

#include <sys/socket.h>

#include <chrono>
#include <string>
#include <string_view>

namespace xrchat::detail {

// "http://host:8080/v1/embed" -> {"http://host:8080", "/v1/embed"}
struct UrlParts {
    std::string origin;
    std::string path;
};

UrlParts split_url(std::string_view url);

std::string join_path(std::string_view base_path, std::string_view suffix);

// Reads a secret from the named environment variable; empty when unset.
std::string secret_from_env(const std::string& var);

// httplib's default adds SO_REUSEPORT, which lets a second server silently
// share the port. Keep SO_REUSEADDR only so a clash fails at bind.
inline void exclusive_port(auto& server) {
    server.set_socket_options([](auto sock) {
        int yes = 1;
        ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });
}

template <typename Rep, typename Period>
void set_timeouts(auto& client, std::chrono::duration<Rep, Period> d) {
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
    const auto sec = static_cast<time_t>(us / 1'000'000);
    const auto usec = static_cast<time_t>(us % 1'000'000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);
}

}  // namespace xrchat::detail
