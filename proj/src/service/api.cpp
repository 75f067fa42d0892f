#include "xrchat/error.hpp"
#include "xrchat/service.hpp"
#include "xrchat/text.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <atomic>
#include <condition_variable>
#include <thread>

namespace xrchat::service {

using nlohmann::json;
using SteadyClock = std::chrono::steady_clock;

namespace {

thread_local SteadyClock::time_point t_request_start;
thread_local std::string t_key_label;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view error, std::string_view detail = {}) {
    json body = {{"error", error}};
    if (!detail.empty()) body["detail"] = detail;
    send_json(res, status, body);
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidEncoding:
        case ErrorCode::EmptyDocument:
        case ErrorCode::OversizeSection:
        case ErrorCode::InvalidArgument:
        case ErrorCode::BadPayload:
        case ErrorCode::EmptyText:
            return 400;
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownDocument:
            return 404;
        case ErrorCode::ProviderUnavailable:
        case ErrorCode::DimensionMismatch:
            return 502;
        default:
            return 500;
    }
}

std::string_view error_word(int status) {
    switch (status) {
        case 400: return "bad_request";
        case 401: return "unauthorized";
        case 404: return "not_found";
        case 405: return "method_not_allowed";
        case 413: return "payload_too_large";
        case 422: return "unprocessable_entity";
        case 502: return "bad_gateway";
        case 503: return "service_unavailable";
        default: return status >= 500 ? "internal_error" : "error";
    }
}

std::string title_for(const router::ToolRegistry& tools, const std::string& doc_id) {
    auto t = tools.find(router::tool_id_for(doc_id));
    return t ? t->title : std::string{};
}

json citations_json(const std::vector<router::Citation>& cites, const router::ToolRegistry& tools) {
    json out = json::array();
    for (const auto& c : cites) {
        out.push_back({{"doc_id", c.doc_id}, {"chunk_id", c.chunk_id}, {"title", title_for(tools, c.doc_id)}});
    }
    return out;
}

corpus::SourceFormat parse_format(std::string_view s, std::string_view filename) {
    const auto v = text::ascii_lower(s);
    if (v == "markdown" || v == "md") return corpus::SourceFormat::Markdown;
    if (v == "plain" || v == "text" || v == "txt") return corpus::SourceFormat::Plain;
    if (!v.empty()) throw Error(ErrorCode::InvalidArgument, "format must be markdown or plain");
    const auto name = text::ascii_lower(filename);
    const bool md = name.size() >= 3 && (name.ends_with(".md") || name.ends_with(".markdown"));
    return md || name.empty() ? corpus::SourceFormat::Markdown : corpus::SourceFormat::Plain;
}

std::size_t parse_page_count(const json& v) {
    if (v.is_null()) return 0;
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw Error(ErrorCode::InvalidArgument, "page_count must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

void read_metadata(const json& m, corpus::DocumentMetadata& md) {
    if (!m.is_object()) throw Error(ErrorCode::InvalidArgument, "metadata must be an object");
    auto str = [&](const char* k) -> std::string {
        if (!m.contains(k) || m[k].is_null()) return {};
        if (!m[k].is_string()) throw Error(ErrorCode::InvalidArgument, std::string(k) + " must be a string");
        return m[k].get<std::string>();
    };
    md.title = str("title");
    md.author = str("author");
    md.doc_type = str("doc_type");
    md.version = str("version");
    if (m.contains("page_count")) md.page_count = parse_page_count(m["page_count"]);
}

std::vector<std::string> read_keywords(const json& v) {
    if (v.is_null()) return {};
    if (!v.is_array()) throw Error(ErrorCode::InvalidArgument, "keywords must be a list of strings");
    std::vector<std::string> out;
    for (const auto& k : v) {
        if (!k.is_string()) throw Error(ErrorCode::InvalidArgument, "keywords must be a list of strings");
        out.push_back(k.get<std::string>());
    }
    return out;
}

router::IngestRequest ingest_request(const httplib::Request& req) {
    router::IngestRequest out;
    if (req.is_multipart_form_data()) {
        auto field = [&](const char* name) -> std::string {
            auto it = req.files.find(name);
            return it == req.files.end() ? std::string{} : it->second.content;
        };
        auto file = req.files.find("file");
        if (file == req.files.end()) file = req.files.find("document");
        if (file == req.files.end()) throw Error(ErrorCode::InvalidArgument, "multipart upload needs a 'file' part");
        out.raw = file->second.content;
        if (const auto meta = field("metadata"); !meta.empty()) {
            try {
                read_metadata(json::parse(meta), out.metadata);
            } catch (const json::exception&) {
                throw Error(ErrorCode::InvalidArgument, "metadata part is not JSON");
            }
        }
        for (const auto& [key, dst] : {std::pair{"title", &out.metadata.title}, std::pair{"author", &out.metadata.author},
                                       std::pair{"doc_type", &out.metadata.doc_type},
                                       std::pair{"version", &out.metadata.version}}) {
            if (auto v = field(key); !v.empty()) *dst = v;
        }
        if (auto pc = field("page_count"); !pc.empty()) {
            try {
                out.metadata.page_count = parse_page_count(json::parse(pc));
            } catch (const json::exception&) {
                throw Error(ErrorCode::InvalidArgument, "page_count must be a non-negative integer");
            }
        }
        if (out.metadata.title.empty()) {
            out.metadata.title = std::filesystem::path(file->second.filename).stem().string();
        }
        out.format = parse_format(field("format"), file->second.filename);
        if (auto s = field("summary"); !s.empty()) out.summary = s;
        if (auto kw = field("keywords"); !kw.empty()) {
            for (auto& t : text::terms(kw)) out.keywords.push_back(std::move(t));
        }
        return out;
    }

    json j;
    try {
        j = json::parse(req.body);
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidArgument, "body is not JSON");
    }
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
    if (!j.contains("text") || !j["text"].is_string()) throw Error(ErrorCode::InvalidArgument, "text is required");
    out.raw = j["text"].get<std::string>();
    out.format = parse_format(j.contains("format") && j["format"].is_string() ? j["format"].get<std::string>() : "",
                              "");
    if (j.contains("metadata")) read_metadata(j["metadata"], out.metadata);
    if (j.contains("summary") && !j["summary"].is_null()) {
        if (!j["summary"].is_string()) throw Error(ErrorCode::InvalidArgument, "summary must be a string");
        out.summary = j["summary"].get<std::string>();
    }
    if (j.contains("keywords")) out.keywords = read_keywords(j["keywords"]);
    return out;
}

}  // namespace

json session_json(const router::Session& s, const router::ToolRegistry& tools) {
    json turns = json::array();
    for (const auto& t : s.turns) {
        turns.push_back({
            {"role", router::to_string(t.role)},
            {"text", t.text},
            {"citations", citations_json(t.citations, tools)},
            {"tool_trace", t.tool_trace},
            {"at", to_iso8601(t.at)},
        });
    }
    return {
        {"session_id", s.session_id},       {"system_prompt", s.system_prompt},
        {"created_at", to_iso8601(s.created_at)}, {"last_active", to_iso8601(s.last_active)},
        {"turns", std::move(turns)},
    };
}

struct ApiService::Impl {
    config::Runtime rt;
    std::ostream* log;
    KeyStore keys;
    httplib::Server server;
    std::mutex log_mu;
    std::mutex persist_mu;

    std::mutex health_mu;
    std::condition_variable health_cv;
    json health_providers = json::object();
    std::size_t cached_index_count = 0;
    bool stopping = false;
    std::thread health_thread;
    std::thread serve_thread;
    bool bound = false;
    int port = 0;

    Impl(config::Runtime r, std::ostream* l) : rt(std::move(r)), log(l), keys(rt.cfg.keys_path()) {}

    bool origin_allowed(const std::string& origin) const {
        const auto& allow = rt.cfg.cors_origins;
        return !origin.empty() &&
               std::any_of(allow.begin(), allow.end(), [&](const std::string& o) { return o == "*" || o == origin; });
    }

    void add_cors(const httplib::Request& req, httplib::Response& res) const {
        const auto origin = req.get_header_value("Origin");
        if (!origin_allowed(origin)) return;
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
    }

    void probe() {
        json p = json::object();
        p["embedding"] = rt.embedder->reachable();
        p["llm"] = rt.llm->reachable();
        std::size_t count = 0;
        bool index_ok = true;
        try {
            count = rt.index->size();
        } catch (const std::exception&) {
            index_ok = false;
        }
        p["index"] = index_ok;
        for (auto k : rt.hub->kinds()) p[std::string(agents::to_string(k))] = rt.hub->client(k)->reachable();
        std::lock_guard lock(health_mu);
        health_providers = std::move(p);
        cached_index_count = count;
    }

    void health_loop() {
        std::unique_lock lock(health_mu);
        while (!stopping) {
            if (health_cv.wait_for(lock, rt.cfg.health_refresh, [&] { return stopping; })) break;
            lock.unlock();
            probe();
            lock.lock();
        }
    }

    void log_request(const httplib::Request& req, const httplib::Response& res) {
        if (!log) return;
        const auto ms = std::chrono::duration<double, std::milli>(SteadyClock::now() - t_request_start).count();
        const json line = {
            {"ts", now_iso8601()}, {"method", req.method}, {"path", req.path}, {"status", res.status},
            {"latency_ms", std::round(ms * 100.0) / 100.0}, {"key", t_key_label},
        };
        std::lock_guard lock(log_mu);
        *log << line.dump() << '\n' << std::flush;
    }

    void persist() {
        std::lock_guard lock(persist_mu);
        rt.persist();
    }

    void install_routes() {
        auto& engine = *rt.engine;

        detail::exclusive_port(server);
        server.set_payload_max_length(rt.cfg.max_body_bytes);
        server.new_task_queue = [n = static_cast<std::size_t>(rt.cfg.threads)] { return new httplib::ThreadPool(n); };

        server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            t_request_start = SteadyClock::now();
            t_key_label.clear();
            if (req.method == "OPTIONS") {
                const auto origin = req.get_header_value("Origin");
                if (!origin_allowed(origin)) {
                    send_error(res, 403, "forbidden", "origin not allowed");
                    return httplib::Server::HandlerResponse::Handled;
                }
                res.status = 204;
                res.set_header("Access-Control-Allow-Origin", origin);
                res.set_header("Vary", "Origin");
                res.set_header("Access-Control-Allow-Methods", "GET, POST, DELETE, OPTIONS");
                res.set_header("Access-Control-Allow-Headers", "Content-Type, X-API-Key");
                res.set_header("Access-Control-Max-Age", "600");
                return httplib::Server::HandlerResponse::Handled;
            }
            if (req.path == "/v1/health") return httplib::Server::HandlerResponse::Unhandled;
            const auto label = keys.verify(req.get_header_value(std::string(kApiKeyHeader)));
            if (!label) {
                add_cors(req, res);
                send_error(res, 401, "unauthorized");
                return httplib::Server::HandlerResponse::Handled;
            }
            t_key_label = *label;
            return httplib::Server::HandlerResponse::Unhandled;
        });
        server.set_post_routing_handler([this](const httplib::Request& req, httplib::Response& res) { add_cors(req, res); });
        server.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (res.body.empty()) {
                add_cors(req, res);
                send_error(res, res.status, error_word(res.status));
            }
        });
        server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "unexpected failure";
            try {
                std::rethrow_exception(ep);
            } catch (const Error& e) {
                send_error(res, status_for(e.code()), error_word(status_for(e.code())), e.what());
                return;
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            send_error(res, 500, "internal_error", what);
        });
        server.set_logger([this](const httplib::Request& req, const httplib::Response& res) { log_request(req, res); });

        server.Post("/v1/documents", [this, &engine](const httplib::Request& req, httplib::Response& res) {
            router::IngestRequest ir;
            try {
                ir = ingest_request(req);
            } catch (const Error& e) {
                return send_error(res, 400, "bad_request", e.what());
            }
            if (ir.raw.size() > rt.cfg.max_body_bytes) return send_error(res, 413, "payload_too_large");
            try {
                const auto r = engine.ingest(ir);
                persist();
                send_json(res, 201, {{"doc_id", r.doc_id}, {"chunk_count", r.chunk_count}, {"tool_id", r.tool_id}});
            } catch (const Error& e) {
                const int status = status_for(e.code());
                send_error(res, status, error_word(status), e.what());
            }
        });

        server.Post("/v1/sessions", [&engine](const httplib::Request& req, httplib::Response& res) {
            std::optional<std::string> prompt;
            if (!text::trim(req.body).empty()) {
                json j;
                try {
                    j = json::parse(req.body);
                } catch (const json::exception&) {
                    return send_error(res, 400, "bad_request", "body is not JSON");
                }
                if (!j.is_object()) return send_error(res, 400, "bad_request", "body must be a JSON object");
                if (j.contains("system_prompt") && !j["system_prompt"].is_null()) {
                    if (!j["system_prompt"].is_string()) {
                        return send_error(res, 400, "bad_request", "system_prompt must be a string");
                    }
                    prompt = j["system_prompt"].get<std::string>();
                }
            }
            const auto s = engine.sessions().create(prompt);
            send_json(res, 201, {{"session_id", s.session_id}, {"created_at", to_iso8601(s.created_at)}});
        });

        const std::string session_path = R"(/v1/sessions/([A-Za-z0-9_-]+))";
        server.Get(session_path, [&engine](const httplib::Request& req, httplib::Response& res) {
            try {
                send_json(res, 200, session_json(engine.sessions().get(req.matches[1]), engine.tools()));
            } catch (const Error& e) {
                send_error(res, status_for(e.code()), error_word(status_for(e.code())), e.what());
            }
        });
        server.Delete(session_path, [&engine](const httplib::Request& req, httplib::Response& res) {
            engine.sessions().remove(req.matches[1]);
            res.status = 204;
        });

        server.Post(session_path + "/query", [&engine](const httplib::Request& req, httplib::Response& res) {
            const auto started = SteadyClock::now();
            const std::string id = req.matches[1];
            if (!engine.sessions().exists(id)) return send_error(res, 404, "not_found", "no session '" + id + "'");
            json j;
            try {
                j = json::parse(req.body);
            } catch (const json::exception&) {
                return send_error(res, 400, "bad_request", "body is not JSON");
            }
            if (!j.is_object()) return send_error(res, 400, "bad_request", "body must be a JSON object");
            const bool has_text = j.contains("text") && j["text"].is_string();
            if (!has_text || text::trim(j["text"].get<std::string>()).empty()) {
                return send_error(res, 422, "unprocessable_entity", "text must be a non-empty string");
            }
            router::QueryContext ctx;
            if (j.contains("metadata") && j["metadata"].is_object()) {
                const auto& m = j["metadata"];
                auto opt = [&](const char* k) -> std::optional<std::string> {
                    if (m.contains(k) && m[k].is_string() && !m[k].get<std::string>().empty()) {
                        return m[k].get<std::string>();
                    }
                    return std::nullopt;
                };
                ctx.asset_id = opt("asset_id");
                ctx.prediction_id = opt("prediction_id");
                ctx.device_id = opt("device_id");
                if (m.contains("window_s") && m["window_s"].is_number_integer() && m["window_s"].get<long long>() > 0) {
                    ctx.iot_window = std::chrono::seconds(m["window_s"].get<long long>());
                }
            }
            try {
                const auto r = engine.answer(id, j["text"].get<std::string>(), ctx);
                json agents_used = json::array();
                for (auto k : r.agents_used) agents_used.push_back(agents::to_string(k));
                json selected_agents = json::array();
                for (auto k : r.decision.selected_agents) selected_agents.push_back(agents::to_string(k));
                const double ms = std::chrono::duration<double, std::milli>(SteadyClock::now() - started).count();
                send_json(res, 200,
                          {
                              {"answer", r.turn.text},
                              {"citations", citations_json(r.turn.citations, engine.tools())},
                              {"agents_used", agents_used},
                              {"tools_used", r.tools_used},
                              {"latency_ms", std::round(ms * 100.0) / 100.0},
                              {"refused", r.refused},
                              {"routing",
                               {{"policy", router::to_string(r.decision.policy)},
                                {"rationale", r.decision.rationale},
                                {"selected_tools", r.decision.selected_tools},
                                {"selected_agents", selected_agents}}},
                          });
            } catch (const Error& e) {
                switch (e.code()) {
                    case ErrorCode::UnknownSession: return send_error(res, 404, "not_found", e.what());
                    case ErrorCode::InvalidArgument: return send_error(res, 422, "unprocessable_entity", e.what());
                    case ErrorCode::ProviderUnavailable:
                        return send_error(res, 503, "service_unavailable", e.what());
                    default: {
                        const int status = status_for(e.code());
                        return send_error(res, status, error_word(status), e.what());
                    }
                }
            }
        });

        server.Get("/v1/tools", [&engine](const httplib::Request&, httplib::Response& res) {
            json arr = json::array();
            for (const auto& t : engine.tools().list()) arr.push_back(router::to_json(t));
            send_json(res, 200, arr);
        });

        server.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            json providers;
            std::size_t cached = 0;
            {
                std::lock_guard lock(health_mu);
                providers = health_providers;
                cached = cached_index_count;
            }
            const bool remote = rt.index->kind() == index::BackendKind::Remote;
            const std::size_t count = remote ? cached : rt.index->size();
            bool all_ok = true;
            for (const auto& [k, v] : providers.items()) all_ok = all_ok && v.get<bool>();
            send_json(res, 200,
                      {{"status", all_ok ? "ok" : "degraded"},
                       {"index_count", count},
                       {"tool_count", rt.engine->tools().size()},
                       {"providers", providers}});
        });
    }

    void bind() {
        install_routes();
        const int requested = rt.cfg.port;
        if (requested == 0) {
            port = server.bind_to_any_port(rt.cfg.host);
        } else {
            port = server.bind_to_port(rt.cfg.host, requested) ? requested : -1;
        }
        if (port < 0) throw Error(ErrorCode::Io, "cannot bind " + rt.cfg.host + ":" + std::to_string(requested));
        bound = true;
        probe();
        health_thread = std::thread([this] { health_loop(); });
    }
};

ApiService::ApiService(config::Runtime rt, std::ostream* log) : impl_(std::make_unique<Impl>(std::move(rt), log)) {}

ApiService::~ApiService() { stop(); }

void ApiService::start() {
    impl_->bind();
    impl_->serve_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void ApiService::run() {
    impl_->bind();
    impl_->server.listen_after_bind();
}

void ApiService::stop() {
    {
        std::lock_guard lock(impl_->health_mu);
        impl_->stopping = true;
    }
    impl_->health_cv.notify_all();
    if (impl_->bound) impl_->server.stop();
    if (impl_->serve_thread.joinable()) impl_->serve_thread.join();
    if (impl_->health_thread.joinable()) impl_->health_thread.join();
}

int ApiService::port() const noexcept { return impl_->port; }

std::string ApiService::base_url() const { return "http://" + impl_->rt.cfg.host + ":" + std::to_string(impl_->port); }

config::Runtime& ApiService::runtime() noexcept { return impl_->rt; }

void ApiService::refresh_health() { impl_->probe(); }

}  // namespace xrchat::service
