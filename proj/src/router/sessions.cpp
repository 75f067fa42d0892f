#include "xrchat/error.hpp"
#include "xrchat/router.hpp"
#include "xrchat/text.hpp"

#include <fstream>
#include <iostream>

namespace xrchat::router {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Role r) { return r == Role::Assistant ? "assistant" : "user"; }

json to_json(const Turn& t) {
    json cites = json::array();
    for (const auto& c : t.citations) cites.push_back({{"doc_id", c.doc_id}, {"chunk_id", c.chunk_id}});
    return {
        {"role", to_string(t.role)}, {"text", t.text}, {"citations", cites},
        {"tool_trace", t.tool_trace}, {"at", to_iso8601(t.at)},
    };
}

Turn turn_from_json(const json& j) {
    Turn t;
    const auto role = j.at("role").get<std::string>();
    if (role == "user") {
        t.role = Role::User;
    } else if (role == "assistant") {
        t.role = Role::Assistant;
    } else {
        throw Error(ErrorCode::BadPayload, "unknown role '" + role + "'");
    }
    t.text = j.at("text").get<std::string>();
    for (const auto& c : j.value("citations", json::array())) {
        t.citations.push_back({c.at("doc_id").get<std::string>(), c.at("chunk_id").get<std::string>()});
    }
    t.tool_trace = j.value("tool_trace", std::vector<std::string>{});
    t.at = parse_iso8601(j.value("at", "")).value_or(SystemTime{});
    return t;
}

json to_json(const Session& s) {
    json turns = json::array();
    for (const auto& t : s.turns) turns.push_back(to_json(t));
    return {
        {"session_id", s.session_id},
        {"system_prompt", s.system_prompt},
        {"created_at", to_iso8601(s.created_at)},
        {"last_active", to_iso8601(s.last_active)},
        {"turns", std::move(turns)},
    };
}

namespace {

bool valid_session_id(const std::string& id) {
    if (id.size() != 32) return false;
    for (char c : id) {
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
    }
    return true;
}

void append_line(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
    out << j.dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "cannot append to " + path.string());
}

}  // namespace

SessionStore::SessionStore(fs::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir_.string() + ": " + ec.message());
    replay();
}

fs::path SessionStore::file_for(const std::string& id) const { return dir_ / (id + ".jsonl"); }

void SessionStore::replay() {
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
        const auto id = entry.path().stem().string();
        if (!valid_session_id(id)) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::string line;
        std::optional<Session> s;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception&) {
                // A torn final line from a crash mid-append; everything before it stands.
                break;
            }
            if (!s) {
                if (j.value("type", "") != "session") break;
                s.emplace();
                s->session_id = id;
                s->system_prompt = j.value("system_prompt", "");
                s->created_at = parse_iso8601(j.value("created_at", "")).value_or(SystemTime{});
                s->last_active = s->created_at;
                continue;
            }
            if (j.value("type", "") != "turn") continue;
            try {
                s->turns.push_back(turn_from_json(j));
                s->last_active = std::max(s->last_active, s->turns.back().at);
            } catch (const std::exception&) {
                break;
            }
        }
        if (!s) continue;
        // Keep the user/assistant alternation intact if the tail was cut.
        if (s->turns.size() % 2 == 1) s->turns.pop_back();
        sessions_[id] = std::move(*s);
    }
}

Session SessionStore::create(std::optional<std::string> system_prompt) {
    Session s;
    s.system_prompt = system_prompt.value_or("");
    s.created_at = s.last_active = std::chrono::system_clock::now();
    std::lock_guard lock(mu_);
    do {
        s.session_id = text::random_hex(16);
    } while (sessions_.count(s.session_id));
    if (!dir_.empty()) {
        append_line(file_for(s.session_id), {{"type", "session"},
                                             {"session_id", s.session_id},
                                             {"system_prompt", s.system_prompt},
                                             {"created_at", to_iso8601(s.created_at)}});
    }
    sessions_[s.session_id] = s;
    return s;
}

Session SessionStore::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return it->second;
}

bool SessionStore::exists(const std::string& id) const {
    std::lock_guard lock(mu_);
    return sessions_.count(id) != 0;
}

void SessionStore::remove(const std::string& id) {
    std::lock_guard lock(mu_);
    if (sessions_.erase(id) == 0) return;
    locks_.erase(id);
    if (!dir_.empty()) {
        std::error_code ec;
        fs::remove(file_for(id), ec);
    }
}

std::size_t SessionStore::size() const {
    std::lock_guard lock(mu_);
    return sessions_.size();
}

void SessionStore::append_exchange(const std::string& id, Turn user, Turn assistant) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    user.role = Role::User;
    assistant.role = Role::Assistant;
    if (!dir_.empty()) {
        auto ju = to_json(user);
        auto ja = to_json(assistant);
        ju["type"] = "turn";
        ja["type"] = "turn";
        std::ofstream out(file_for(id), std::ios::binary | std::ios::app);
        if (!out) throw Error(ErrorCode::Io, "cannot append to session " + id);
        out << ju.dump() << '\n' << ja.dump() << '\n';
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "cannot append to session " + id);
    }
    it->second.last_active = assistant.at;
    it->second.turns.push_back(std::move(user));
    it->second.turns.push_back(std::move(assistant));
}

std::shared_ptr<std::mutex> SessionStore::session_lock(const std::string& id) {
    std::lock_guard lock(mu_);
    auto& m = locks_[id];
    if (!m) m = std::make_shared<std::mutex>();
    return m;
}

}  // namespace xrchat::router
