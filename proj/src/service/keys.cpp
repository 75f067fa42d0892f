#include "xrchat/error.hpp"
#include "xrchat/service.hpp"
#include "xrchat/text.hpp"

#include <fstream>

namespace xrchat::service {

namespace fs = std::filesystem;
using nlohmann::json;

std::string generate_key() { return "xrk_" + text::random_hex(24); }

std::string hash_key(std::string_view raw) { return text::sha256_hex(raw); }

void append_key_record(const fs::path& path, const ApiKeyRecord& rec) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
    out << json{{"label", rec.label}, {"key_hash", rec.key_hash}, {"enabled", rec.enabled}}.dump() << '\n';
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
}

KeyStore::KeyStore(fs::path path) : path_(std::move(path)) {}

void KeyStore::refresh_locked() {
    std::error_code ec;
    const auto mtime = fs::last_write_time(path_, ec);
    if (ec) {
        records_.clear();
        loaded_ = false;
        return;
    }
    const auto size = fs::file_size(path_, ec);
    if (loaded_ && mtime == mtime_ && size == size_) return;

    std::vector<ApiKeyRecord> recs;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            ApiKeyRecord r;
            r.label = j.value("label", "");
            r.key_hash = text::ascii_lower(j.at("key_hash").get<std::string>());
            r.enabled = j.value("enabled", true);
            recs.push_back(std::move(r));
        } catch (const json::exception&) {
            // Malformed lines grant nothing.
        }
    }
    records_ = std::move(recs);
    mtime_ = mtime;
    size_ = size;
    loaded_ = true;
}

namespace {

bool equal_ct(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    unsigned char diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
    return diff == 0;
}

}  // namespace

std::optional<std::string> KeyStore::verify(std::string_view raw) {
    if (raw.empty() || path_.empty()) return std::nullopt;
    const auto h = hash_key(raw);
    std::lock_guard lock(mu_);
    refresh_locked();
    for (const auto& r : records_) {
        if (r.enabled && equal_ct(r.key_hash, h)) return r.label;
    }
    return std::nullopt;
}

std::vector<ApiKeyRecord> KeyStore::records() {
    std::lock_guard lock(mu_);
    refresh_locked();
    return records_;
}

}  // namespace xrchat::service
