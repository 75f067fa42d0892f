#include "support.hpp"

#include "xrchat/config.hpp"
#include "xrchat/error.hpp"
#include "xrchat/service.hpp"

#include <catch_amalgamated.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <regex>
#include <sstream>
#include <mutex>
#include <thread>

using namespace xrchat;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kManual =
    "# Shoulder joint\n\nThe shoulder joint bolts take 85 newton metres of torque.\n\n"
    "# Elbow joint\n\nElbow joint bolts take 45 newton metres.\n\n"
    "# Wrist\n\nThe wrist cartridge is replaced as one unit.\n";

// Service on a free port with one provisioned key.
struct Harness {
    xrtest::TempDir dir;
    std::string key;
    std::ostringstream log;
    std::unique_ptr<service::ApiService> api;
    std::unique_ptr<httplib::Client> http;

    explicit Harness(std::map<std::string, std::string> extra = {}, std::shared_ptr<llm::LlmProvider> model = nullptr) {
        key = service::generate_key();
        service::append_key_record(dir / "keys.jsonl", {"tester", service::hash_key(key), true});
        service::append_key_record(dir / "keys.jsonl", {"retired", service::hash_key("xrk_disabled"), false});
        config::Overrides f;
        f.values["data_dir"] = (dir / "data").string();
        f.values["keys_file"] = (dir / "keys.jsonl").string();
        f.values["server.port"] = "0";
        f.values["server.cors_origins"] = "http://localhost:5173";
        for (auto& [k, v] : extra) f.values[k] = v;
        const std::map<std::string, std::string> env;
        auto cfg = config::load(nullptr, f, &env);
        api = std::make_unique<service::ApiService>(config::build_runtime(cfg, std::move(model)), &log);
        api->start();
        http = std::make_unique<httplib::Client>("127.0.0.1", api->port());
        http->set_read_timeout(30, 0);
    }
    ~Harness() { api->stop(); }

    httplib::Headers auth() const { return {{"X-API-Key", key}}; }

    httplib::Result post(const std::string& path, const json& body) {
        return http->Post(path, auth(), body.dump(), "application/json");
    }
    json ingest(const std::string& title, const std::string& text, const std::string& version = "1") {
        auto r = post("/v1/documents", {{"text", text}, {"format", "markdown"}, {"metadata", {{"title", title}, {"version", version}}}});
        REQUIRE(r);
        REQUIRE(r->status == 201);
        return json::parse(r->body);
    }
    std::string new_session() {
        auto r = post("/v1/sessions", json::object());
        REQUIRE(r);
        REQUIRE(r->status == 201);
        return json::parse(r->body).at("session_id").get<std::string>();
    }
};

bool is_iso8601(const json& v) {
    static const std::regex re(R"(^\d{4}-\d\d-\d\dT\d\d:\d\d:\d\d(\.\d+)?Z$)");
    return v.is_string() && std::regex_match(v.get<std::string>(), re);
}

// Minimal structural schema: key -> expected json type.
void expect_shape(const json& j, const std::map<std::string, json::value_t>& shape) {
    REQUIRE(j.is_object());
    for (const auto& [k, t] : shape) {
        INFO("field " << k);
        REQUIRE(j.contains(k));
        if (t == json::value_t::number_unsigned || t == json::value_t::number_integer) {
            CHECK(j[k].is_number_integer());
        } else if (t == json::value_t::number_float) {
            CHECK(j[k].is_number());
        } else {
            CHECK(j[k].type() == t);
        }
    }
}

}  // namespace

TEST_CASE("health needs no key and reports the index size") {
    Harness h;
    auto r = h.http->Get("/v1/health");
    REQUIRE(r);
    CHECK(r->status == 200);
    auto j = json::parse(r->body);
    CHECK(j["status"] == "ok");
    CHECK(j["index_count"] == 0);
    CHECK(j["providers"].is_object());

    const auto doc = h.ingest("Arm Manual", kManual);
    CHECK(doc["chunk_count"] == 3);
    j = json::parse(h.http->Get("/v1/health")->body);
    CHECK(j["index_count"] == 3);
}

TEST_CASE("every keyed endpoint answers 401 before touching the data dir") {
    Harness h;
    h.ingest("Arm Manual", kManual);
    const auto sid = h.new_session();
    const auto before = xrtest::snapshot_tree(h.dir / "data");
    const std::string body = json{{"text", kManual + "\n# Extra\n\nmore text here\n"}, {"metadata", {{"title", "Other"}}}}.dump();

    for (const httplib::Headers& headers :
         {httplib::Headers{}, httplib::Headers{{"X-API-Key", "xrk_wrong"}}, httplib::Headers{{"X-API-Key", "xrk_disabled"}}}) {
        std::vector<httplib::Result> results;
        results.push_back(h.http->Post("/v1/documents", headers, body, "application/json"));
        results.push_back(h.http->Post("/v1/sessions", headers, "{}", "application/json"));
        results.push_back(h.http->Get("/v1/sessions/" + sid, headers));
        results.push_back(h.http->Post("/v1/sessions/" + sid + "/query", headers, R"({"text":"shoulder torque"})", "application/json"));
        results.push_back(h.http->Delete("/v1/sessions/" + sid, headers));
        results.push_back(h.http->Get("/v1/tools", headers));
        for (auto& r : results) {
            REQUIRE(r);
            CHECK(r->status == 401);
            CHECK(json::parse(r->body)["error"] == "unauthorized");
        }
    }
    CHECK(xrtest::snapshot_tree(h.dir / "data") == before);
}

TEST_CASE("session lifecycle over HTTP") {
    Harness h;
    const auto sid = h.new_session();
    auto r = h.http->Get("/v1/sessions/" + sid, h.auth());
    REQUIRE(r);
    CHECK(r->status == 200);
    const auto j = json::parse(r->body);
    CHECK(j["turns"] == json::array());
    expect_shape(j, {{"session_id", json::value_t::string}, {"turns", json::value_t::array}});
    CHECK(is_iso8601(j["created_at"]));

    CHECK(h.http->Get("/v1/sessions/does-not-exist", h.auth())->status == 404);
    CHECK(h.http->Delete("/v1/sessions/" + sid, h.auth())->status == 204);
    CHECK(h.http->Delete("/v1/sessions/" + sid, h.auth())->status == 204);
    CHECK(h.http->Get("/v1/sessions/" + sid, h.auth())->status == 404);
    CHECK(h.post("/v1/sessions/" + sid + "/query", {{"text", "hello there"}})->status == 404);
}

TEST_CASE("query reply carries titled citations and follows the schema") {
    Harness h;
    const auto doc = h.ingest("Arm Manual", kManual);
    const auto sid = h.new_session();
    auto r = h.post("/v1/sessions/" + sid + "/query", {{"text", "shoulder joint bolts torque"}});
    REQUIRE(r);
    REQUIRE(r->status == 200);
    const auto j = json::parse(r->body);
    expect_shape(j, {{"answer", json::value_t::string},
                     {"citations", json::value_t::array},
                     {"agents_used", json::value_t::array},
                     {"tools_used", json::value_t::array},
                     {"latency_ms", json::value_t::number_float}});
    REQUIRE_FALSE(j["citations"].empty());
    for (const auto& c : j["citations"]) {
        expect_shape(c, {{"doc_id", json::value_t::string}, {"chunk_id", json::value_t::string}, {"title", json::value_t::string}});
        CHECK(c["doc_id"] == doc["doc_id"]);
        CHECK(c["title"] == "Arm Manual");
    }
    CHECK(j["latency_ms"].get<double>() >= 0.0);

    const auto hist = json::parse(h.http->Get("/v1/sessions/" + sid, h.auth())->body);
    REQUIRE(hist["turns"].size() == 2);
    CHECK(hist["turns"][0]["role"] == "user");
    CHECK(hist["turns"][1]["role"] == "assistant");
    for (const auto& t : hist["turns"]) CHECK(is_iso8601(t["at"]));
}

TEST_CASE("query validation and refusal") {
    Harness h;
    h.ingest("Arm Manual", kManual);
    const auto sid = h.new_session();
    CHECK(h.post("/v1/sessions/" + sid + "/query", {{"text", "   "}})->status == 422);
    CHECK(h.post("/v1/sessions/" + sid + "/query", json::object())->status == 422);
    CHECK(h.http->Post("/v1/sessions/" + sid + "/query", h.auth(), "not json", "application/json")->status == 400);

    auto r = h.post("/v1/sessions/" + sid + "/query", {{"text", "quantum chromodynamics lecture"}});
    REQUIRE(r->status == 200);
    const auto j = json::parse(r->body);
    CHECK(j["citations"] == json::array());
    CHECK(j["answer"] == std::string(router::kDefaultRefusal));
}

TEST_CASE("unavailable model maps to 503") {
    auto model = std::make_shared<llm::ScriptedLlm>([](const std::string&) { return std::string("fine"); });
    Harness h({}, model);
    h.ingest("Arm Manual", kManual);
    const auto sid = h.new_session();
    model->set_unavailable(true);
    auto r = h.post("/v1/sessions/" + sid + "/query", {{"text", "shoulder joint bolts torque"}});
    REQUIRE(r);
    CHECK(r->status == 503);
    CHECK(json::parse(r->body)["error"] == "service_unavailable");
}

TEST_CASE("document upload errors") {
    Harness h(std::map<std::string, std::string>{{"server.max_body_bytes", "4096"}});
    CHECK(h.http->Post("/v1/documents", h.auth(), "{", "application/json")->status == 400);
    CHECK(h.post("/v1/documents", {{"text", ""}, {"metadata", {{"title", "Empty"}}}})->status == 400);
    auto big = h.post("/v1/documents", {{"text", "# A\n\n" + std::string(8000, 'x')}, {"metadata", {{"title", "Big"}}}});
    REQUIRE(big);
    CHECK(big->status == 413);
    CHECK(json::parse(h.http->Get("/v1/health")->body)["index_count"] == 0);
}

TEST_CASE("multipart upload") {
    Harness h;
    httplib::MultipartFormDataItems items{
        {"file", kManual, "arm_manual.md", "text/markdown"},
        {"metadata", R"({"title":"Arm Manual","version":"2"})", "", ""},
    };
    auto r = h.http->Post("/v1/documents", h.auth(), items);
    REQUIRE(r);
    CHECK(r->status == 201);
    CHECK(json::parse(r->body)["chunk_count"] == 3);
}

TEST_CASE("re-posting a title and version replaces the content") {
    Harness h;
    const auto first = h.ingest("Arm Manual", kManual + "\n# Legacy\n\nThe zebrawood gasket is obsolete.\n");
    CHECK(first["chunk_count"] == 4);
    const auto second = h.ingest("Arm Manual", kManual);
    CHECK(second["doc_id"] == first["doc_id"]);
    CHECK(second["chunk_count"] == 3);

    const auto tools = json::parse(h.http->Get("/v1/tools", h.auth())->body);
    CHECK(tools.size() == 1);
    auto& rt = h.api->runtime();
    CHECK(rt.index->size() == 3);
    for (const auto& item : rt.index->items()) CHECK(item.metadata.at("text").find("zebrawood") == std::string::npos);
    const auto q = embed::embed_one("zebrawood gasket", *rt.embedder);
    for (const auto& hit : rt.index->top_k(q.values, 10)) CHECK(hit.metadata.at("text").find("zebrawood") == std::string::npos);
}

TEST_CASE("tools listing requires a key and lists ingested documents") {
    Harness h;
    CHECK(h.http->Get("/v1/tools")->status == 401);
    h.ingest("Arm Manual", kManual);
    auto r = h.http->Get("/v1/tools", h.auth());
    REQUIRE(r->status == 200);
    const auto j = json::parse(r->body);
    REQUIRE(j.size() == 1);
    expect_shape(j[0], {{"tool_id", json::value_t::string}, {"doc_id", json::value_t::string}, {"title", json::value_t::string}});
}

TEST_CASE("CORS allowlist") {
    Harness h;
    httplib::Headers pre{{"Origin", "http://localhost:5173"}, {"Access-Control-Request-Method", "POST"}};
    auto r = h.http->Options("/v1/sessions", pre);
    REQUIRE(r);
    CHECK(r->status == 204);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    CHECK_THAT(r->get_header_value("Access-Control-Allow-Headers"), Catch::Matchers::ContainsSubstring("X-API-Key"));

    auto denied = h.http->Options("/v1/sessions", httplib::Headers{{"Origin", "http://evil.example"}});
    REQUIRE(denied);
    CHECK(denied->status == 403);

    auto health = h.http->Get("/v1/health", httplib::Headers{{"Origin", "http://localhost:5173"}});
    CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
}

TEST_CASE("concurrent clients keep their histories apart") {
    Harness h(std::map<std::string, std::string>{{"server.threads", "24"}});
    h.ingest("Arm Manual", kManual);
    constexpr int kClients = 20;
    constexpr int kQueries = 10;
    std::vector<std::string> sessions;
    for (int i = 0; i < kClients; ++i) sessions.push_back(h.new_session());
    std::atomic<int> failures{0};
    std::mutex why_mu;
    std::string why;
    std::vector<std::thread> threads;
    for (int c = 0; c < kClients; ++c) {
        threads.emplace_back([&, c] {
            httplib::Client cli("127.0.0.1", h.api->port());
            cli.set_read_timeout(60, 0);
            for (int q = 0; q < kQueries; ++q) {
                const json body{{"text", "client " + std::to_string(c) + " asks " + std::to_string(q) + " shoulder torque"}};
                auto r = cli.Post("/v1/sessions/" + sessions[c] + "/query", h.auth(), body.dump(), "application/json");
                if (!r || r->status != 200) {
                    ++failures;
                    std::lock_guard lk(why_mu);
                    why += r ? std::to_string(r->status) + " " + r->body + "\n" : httplib::to_string(r.error()) + "\n";
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    INFO(why);
    CHECK(failures == 0);
    for (int c = 0; c < kClients; ++c) {
        const auto hist = json::parse(h.http->Get("/v1/sessions/" + sessions[c], h.auth())->body);
        REQUIRE(hist["turns"].size() == 2 * kQueries);
        for (int q = 0; q < kQueries; ++q) {
            CHECK(hist["turns"][2 * q]["text"] ==
                  "client " + std::to_string(c) + " asks " + std::to_string(q) + " shoulder torque");
        }
    }
}

TEST_CASE("request log lines carry the key label and never the key") {
    std::string log;
    std::string key;
    {
        Harness h;
        key = h.key;
        h.ingest("Arm Manual", kManual);
        h.http->Get("/v1/tools");
        h.api->stop();
        log = h.log.str();
    }
    CHECK(log.find(key) == std::string::npos);
    std::istringstream lines(log);
    std::string line;
    int n = 0;
    bool saw_label = false;
    while (std::getline(lines, line)) {
        const auto j = json::parse(line);
        expect_shape(j, {{"method", json::value_t::string},
                         {"path", json::value_t::string},
                         {"status", json::value_t::number_integer},
                         {"latency_ms", json::value_t::number_float},
                         {"key", json::value_t::string}});
        saw_label = saw_label || j["key"] == "tester";
        ++n;
    }
    CHECK(n == 2);
    CHECK(saw_label);
}

TEST_CASE("keys file is reloaded when it changes") {
    Harness h;
    const auto fresh = service::generate_key();
    CHECK(h.http->Get("/v1/tools", httplib::Headers{{"X-API-Key", fresh}})->status == 401);
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    service::append_key_record(h.dir / "keys.jsonl", {"late", service::hash_key(fresh), true});
    CHECK(h.http->Get("/v1/tools", httplib::Headers{{"X-API-Key", fresh}})->status == 200);
    const auto text = xrtest::slurp(h.dir / "keys.jsonl");
    CHECK(text.find(fresh) == std::string::npos);
    CHECK(text.find(service::hash_key(fresh)) != std::string::npos);
}
