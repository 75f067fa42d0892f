#pragma once

#include "xrchat/config.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace xrchat::service {

inline constexpr std::string_view kApiKeyHeader = "X-API-Key";

struct ApiKeyRecord {
    std::string label;
    std::string key_hash;  // sha256 hex of the raw key
    bool enabled = true;
};

// Fresh random key, "xrk_" followed by 48 hex digits.
std::string generate_key();
std::string hash_key(std::string_view raw);

// Appends {label, key_hash, enabled} to a JSON-lines keys file.
void append_key_record(const std::filesystem::path& path, const ApiKeyRecord& rec);

// Keys file reader; re-reads the file whenever its mtime or size changes.
class KeyStore {
public:
    explicit KeyStore(std::filesystem::path path);

    // Label of the enabled record matching the raw key.
    std::optional<std::string> verify(std::string_view raw);
    std::vector<ApiKeyRecord> records();

private:
    void refresh_locked();

    std::filesystem::path path_;
    std::mutex mu_;
    std::filesystem::file_time_type mtime_{};
    std::uintmax_t size_ = 0;
    bool loaded_ = false;
    std::vector<ApiKeyRecord> records_;
};

// Wire form of an ingested tool, a session and a query reply.
nlohmann::json session_json(const router::Session& s, const router::ToolRegistry& tools);

class ApiService {
public:
    // log receives one JSON line per request; nullptr disables request logs.
    explicit ApiService(config::Runtime rt, std::ostream* log = nullptr);
    ~ApiService();
    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    // Binds (port 0 picks a free one) and serves on a background thread.
    void start();
    // Binds and serves in the caller's thread until stop().
    void run();
    void stop();

    int port() const noexcept;
    std::string base_url() const;
    config::Runtime& runtime() noexcept;

    // Probes providers now instead of waiting for the refresh interval.
    void refresh_health();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace xrchat::service
