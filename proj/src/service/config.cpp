#include "xrchat/config.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace xrchat::config {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path ServiceConfig::keys_path() const {
    if (!keys_file.empty()) return keys_file;
    return data_dir.empty() ? fs::path{} : data_dir / "keys.jsonl";
}
fs::path ServiceConfig::sessions_dir() const { return data_dir.empty() ? fs::path{} : data_dir / "sessions"; }
fs::path ServiceConfig::snapshot_path() const { return data_dir.empty() ? fs::path{} : data_dir / "index.fridx"; }
fs::path ServiceConfig::tools_path() const { return data_dir.empty() ? fs::path{} : data_dir / "tools.json"; }
fs::path ServiceConfig::embedding_cache_path() const {
    return data_dir.empty() ? fs::path{} : data_dir / "embeddings.cache";
}

json default_document() {
    auto agent = [] { return json{{"base_url", ""}, {"auth_env", ""}, {"timeout_ms", 3000}, {"retries", 2}}; };
    return {
        {"server",
         {{"host", "127.0.0.1"},
          {"port", 8080},
          {"threads", 32},
          {"cors_origins", json::array()},
          {"max_body_bytes", 20 * 1024 * 1024},
          {"health_refresh_s", 30}}},
        {"data_dir", ""},
        {"keys_file", ""},
        {"embedding",
         {{"provider_id", std::string(embed::kHashNgramId)},
          {"dim", embed::kHashNgramDim},
          {"endpoint", ""},
          {"auth_env", ""},
          {"batch_limit", 64},
          {"cache", true}}},
        {"index",
         {{"backend", "exact"},
          {"m", 16},
          {"ef_construction", 200},
          {"ef_search", 64},
          {"seed", 0x5eed},
          {"endpoint", ""},
          {"auth_env", ""}}},
        {"llm",
         {{"provider", "mock:echo"},
          {"endpoint", ""},
          {"model", ""},
          {"auth_env", ""},
          {"attempts", 4},
          {"timeout_ms", 60000}}},
        {"chunker", {{"strategy", "semantic"}, {"max_chars", 1024}, {"overlap_chars", 0}, {"semantic_overflow", "split-fixed"}}},
        {"chat",
         {{"k", 5},
          {"history_window", 6},
          {"grounding_required", true},
          {"refusal_text", std::string(router::kDefaultRefusal)},
          {"system_prompt", std::string(router::kDefaultSystemPrompt)},
          {"prompt_template_file", ""},
          {"routing", "lexical"},
          {"temperature", 0.0},
          {"iot_window_s", 3600}}},
        {"agents", {{"pdm", agent()}, {"xai", agent()}, {"iot", agent()}}},
        {"bench", {{"k", 5}, {"corpus", ""}, {"generator", "extractive"}, {"oracle", "rule"}}},
    };
}

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

json toml_to_json(const toml::node& node) {
    if (auto t = node.as_table()) {
        json j = json::object();
        for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
        return j;
    }
    if (auto a = node.as_array()) {
        json j = json::array();
        for (const auto& v : *a) j.push_back(toml_to_json(v));
        return j;
    }
    if (auto v = node.as_string()) return v->get();
    if (auto v = node.as_integer()) return v->get();
    if (auto v = node.as_floating_point()) return v->get();
    if (auto v = node.as_boolean()) return v->get();
    invalid("unsupported TOML value (dates and times are not accepted)");
}

bool same_kind(const json& def, const json& v) {
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_number_integer()) return v.is_number_integer();
    if (def.is_number()) return v.is_number();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); });
    return false;
}

void merge(json& base, const json& layer, const std::string& prefix, const std::string& origin) {
    if (!layer.is_object()) invalid(origin + ": " + (prefix.empty() ? "document" : prefix) + " must be a table");
    for (const auto& [k, v] : layer.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        auto it = base.find(k);
        if (it == base.end()) invalid(origin + ": unknown key '" + key + "'");
        if (it->is_object()) {
            merge(*it, v, key, origin);
        } else if (same_kind(*it, v)) {
            *it = v;
        } else {
            invalid(origin + ": key '" + key + "' has the wrong type (expected like " + it->dump() + ")");
        }
    }
}

json coerce(const json& def, const std::string& raw, const std::string& key, const std::string& origin) {
    const std::string what = origin + " value for '" + key + "'";
    if (def.is_boolean()) {
        const auto v = text::ascii_lower(text::trim(raw));
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        invalid(what + " is not a boolean: " + raw);
    }
    if (def.is_number_integer()) {
        errno = 0;
        char* end = nullptr;
        const auto t = text::trim(raw);
        const long long v = std::strtoll(t.c_str(), &end, 10);
        if (t.empty() || *end != '\0' || errno != 0) invalid(what + " is not an integer: " + raw);
        return v;
    }
    if (def.is_number()) {
        char* end = nullptr;
        const auto t = text::trim(raw);
        const double v = std::strtod(t.c_str(), &end);
        if (t.empty() || *end != '\0') invalid(what + " is not a number: " + raw);
        return v;
    }
    if (def.is_array()) {
        json arr = json::array();
        std::stringstream ss(raw);
        std::string part;
        while (std::getline(ss, part, ',')) {
            auto p = text::trim(part);
            if (!p.empty()) arr.push_back(p);
        }
        return arr;
    }
    return raw;
}

json* leaf_at(json& doc, const std::string& dotted) {
    json* cur = &doc;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object()) return nullptr;
        auto it = cur->find(part);
        if (it == cur->end()) return nullptr;
        cur = &*it;
    }
    return cur->is_object() ? nullptr : cur;
}

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object()) {
            collect_leaves(v, key, out);
        } else {
            out.push_back(key);
        }
    }
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) invalid("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

json read_config_file(const fs::path& path) {
    const std::string content = read_text(path);
    if (path.extension() == ".toml") {
        try {
            return toml_to_json(toml::parse(content, path.string()));
        } catch (const toml::parse_error& e) {
            std::ostringstream ss;
            ss << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
            invalid(ss.str());
        }
    }
    try {
        return json::parse(content);
    } catch (const json::exception& e) {
        invalid(path.string() + ": " + e.what());
    }
}

std::string env_var_for(const std::string& dotted_key) {
    std::string out = "XRCHAT_";
    for (char c : dotted_key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::map<std::string, std::string> process_environment() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        if (kv.rfind("XRCHAT_", 0) != 0) continue;
        const auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        out.emplace(std::string(kv.substr(0, eq)), std::string(kv.substr(eq + 1)));
    }
    return out;
}

json merged_document(const fs::path* file, const Overrides& flags, const std::map<std::string, std::string>* env) {
    json doc = default_document();
    if (file) merge(doc, read_config_file(*file), "", file->string());

    std::vector<std::string> leaves;
    collect_leaves(default_document(), "", leaves);
    const auto penv = env ? *env : process_environment();
    for (const auto& key : leaves) {
        auto it = penv.find(env_var_for(key));
        if (it == penv.end()) continue;
        json* leaf = leaf_at(doc, key);
        *leaf = coerce(*leaf, it->second, key, "environment " + it->first);
    }
    for (const auto& [key, raw] : flags.values) {
        json* leaf = leaf_at(doc, key);
        if (!leaf) invalid("unknown option '" + key + "'");
        *leaf = coerce(*leaf, raw, key, "flag");
    }
    return doc;
}

ServiceConfig from_document(const json& d) {
    ServiceConfig c;
    const auto& s = d.at("server");
    c.host = s.at("host").get<std::string>();
    const auto port = s.at("port").get<long long>();
    if (port < 0 || port > 65535) invalid("server.port out of range");
    c.port = static_cast<int>(port);
    const auto threads = s.at("threads").get<long long>();
    if (threads < 1 || threads > 1024) invalid("server.threads must be in 1..1024");
    c.threads = static_cast<int>(threads);
    c.cors_origins = s.at("cors_origins").get<std::vector<std::string>>();
    const auto max_body = s.at("max_body_bytes").get<long long>();
    if (max_body <= 0) invalid("server.max_body_bytes must be positive");
    c.max_body_bytes = static_cast<std::size_t>(max_body);
    const auto refresh = s.at("health_refresh_s").get<long long>();
    if (refresh <= 0 || refresh > 30) invalid("server.health_refresh_s must be in 1..30");
    c.health_refresh = std::chrono::seconds(refresh);

    c.data_dir = d.at("data_dir").get<std::string>();
    c.keys_file = d.at("keys_file").get<std::string>();

    const auto& e = d.at("embedding");
    c.embedding.provider_id = e.at("provider_id").get<std::string>();
    const auto dim = e.at("dim").get<long long>();
    if (dim <= 0) invalid("embedding.dim must be positive");
    c.embedding.dim = static_cast<std::size_t>(dim);
    c.embedding.endpoint = e.at("endpoint").get<std::string>();
    c.embedding.auth_env_var = e.at("auth_env").get<std::string>();
    const auto batch = e.at("batch_limit").get<long long>();
    if (batch <= 0) invalid("embedding.batch_limit must be positive");
    c.embedding.batch_limit = static_cast<std::size_t>(batch);
    c.embedding_cache = e.at("cache").get<bool>();
    embed::make_provider(c.embedding);  // validates id and endpoint

    const auto& ix = d.at("index");
    c.index.kind = index::parse_backend_kind(ix.at("backend").get<std::string>());
    c.index.dim = c.embedding.dim;
    for (const char* k : {"m", "ef_construction", "ef_search"}) {
        if (ix.at(k).get<long long>() <= 0) invalid(std::string("index.") + k + " must be positive");
    }
    c.index.hnsw.m = ix.at("m").get<std::size_t>();
    c.index.hnsw.ef_construction = ix.at("ef_construction").get<std::size_t>();
    c.index.hnsw.ef_search = ix.at("ef_search").get<std::size_t>();
    c.index.hnsw.seed = ix.at("seed").get<std::uint64_t>();
    c.index.endpoint = ix.at("endpoint").get<std::string>();
    c.index.auth_env_var = ix.at("auth_env").get<std::string>();
    if (c.index.kind == index::BackendKind::Remote && c.index.endpoint.empty()) {
        invalid("index.endpoint is required for the remote backend");
    }

    const auto& l = d.at("llm");
    c.llm.provider = l.at("provider").get<std::string>();
    c.llm.endpoint = l.at("endpoint").get<std::string>();
    c.llm.model = l.at("model").get<std::string>();
    c.llm.auth_env = l.at("auth_env").get<std::string>();
    c.llm.attempts = l.at("attempts").get<int>();
    c.llm.timeout_ms = l.at("timeout_ms").get<long long>();
    if (c.llm.attempts < 1) invalid("llm.attempts must be >= 1");
    if (c.llm.timeout_ms <= 0) invalid("llm.timeout_ms must be positive");
    if (c.llm.provider != "mock:echo" && c.llm.provider != "mock:extractive" && c.llm.provider != "remote") {
        invalid("llm.provider must be mock:echo, mock:extractive or remote");
    }
    if (c.llm.provider == "remote" && (c.llm.endpoint.empty() || c.llm.model.empty())) {
        invalid("llm.endpoint and llm.model are required for the remote provider");
    }

    const auto& ch = d.at("chunker");
    c.chat.chunker.strategy = corpus::parse_strategy(ch.at("strategy").get<std::string>());
    if (ch.at("max_chars").get<long long>() <= 0 || ch.at("overlap_chars").get<long long>() < 0) {
        invalid("chunker.max_chars must be positive and chunker.overlap_chars non-negative");
    }
    c.chat.chunker.max_chars = ch.at("max_chars").get<std::size_t>();
    c.chat.chunker.overlap_chars = ch.at("overlap_chars").get<std::size_t>();
    const auto overflow = ch.at("semantic_overflow").get<std::string>();
    if (overflow == "split-fixed") {
        c.chat.chunker.semantic_overflow = corpus::SemanticOverflow::SplitFixed;
    } else if (overflow == "error") {
        c.chat.chunker.semantic_overflow = corpus::SemanticOverflow::Error;
    } else {
        invalid("chunker.semantic_overflow must be split-fixed or error");
    }
    c.chat.chunker.validate();

    const auto& ct = d.at("chat");
    if (ct.at("k").get<long long>() <= 0) invalid("chat.k must be positive");
    if (ct.at("history_window").get<long long>() < 0) invalid("chat.history_window must be >= 0");
    if (ct.at("iot_window_s").get<long long>() <= 0) invalid("chat.iot_window_s must be positive");
    c.chat.k = ct.at("k").get<std::size_t>();
    c.chat.history_window = ct.at("history_window").get<std::size_t>();
    c.chat.grounding_required = ct.at("grounding_required").get<bool>();
    c.chat.refusal_text = ct.at("refusal_text").get<std::string>();
    c.chat.system_prompt = ct.at("system_prompt").get<std::string>();
    c.chat.routing = router::parse_route_policy(ct.at("routing").get<std::string>());
    c.chat.temperature = ct.at("temperature").get<double>();
    c.chat.iot_window = std::chrono::seconds(ct.at("iot_window_s").get<long long>());
    if (const auto tf = ct.at("prompt_template_file").get<std::string>(); !tf.empty()) {
        c.chat.prompt_template = read_text(tf);
        if (c.chat.prompt_template.find("{query}") == std::string::npos) {
            invalid("prompt template " + tf + " lacks a {query} placeholder");
        }
    }
    if (text::trim(c.chat.refusal_text).empty()) invalid("chat.refusal_text must be non-empty");

    for (auto kind : agents::kAllAgents) {
        const auto& a = d.at("agents").at(std::string(agents::to_string(kind)));
        const auto url = a.at("base_url").get<std::string>();
        if (url.empty()) continue;
        agents::AgentEndpointConfig ac;
        ac.kind = kind;
        ac.base_url = url;
        ac.auth_env_var = a.at("auth_env").get<std::string>();
        const auto timeout = a.at("timeout_ms").get<long long>();
        if (timeout <= 0) invalid("agents." + std::string(agents::to_string(kind)) + ".timeout_ms must be positive");
        ac.timeout = std::chrono::milliseconds(timeout);
        ac.retries = a.at("retries").get<int>();
        if (ac.retries < 0) invalid("agents." + std::string(agents::to_string(kind)) + ".retries must be >= 0");
        agents::AgentClient{ac};  // validates the URL
        c.agents.push_back(ac);
    }

    if (d.at("bench").at("k").get<long long>() <= 0) invalid("bench.k must be positive");
    c.bench_k = d.at("bench").at("k").get<std::size_t>();
    c.bench_corpus = d.at("bench").at("corpus").get<std::string>();
    c.bench_generator = d.at("bench").at("generator").get<std::string>();
    c.bench_oracle = d.at("bench").at("oracle").get<std::string>();
    if (c.bench_generator != "extractive" && c.bench_generator != "llm") {
        invalid("bench.generator must be extractive or llm");
    }
    if (c.bench_oracle != "rule" && c.bench_oracle != "llm") invalid("bench.oracle must be rule or llm");
    return c;
}

ServiceConfig load(const fs::path* file, const Overrides& flags, const std::map<std::string, std::string>* env) {
    return from_document(merged_document(file, flags, env));
}

std::shared_ptr<llm::LlmProvider> make_llm(const LlmConfig& cfg) {
    if (cfg.provider == "mock:echo") return std::make_shared<llm::EchoLlm>();
    if (cfg.provider == "mock:extractive") return std::make_shared<llm::ExtractiveLlm>();
    if (cfg.provider == "remote") {
        llm::RemoteLlmSpec spec;
        spec.endpoint = cfg.endpoint;
        spec.model = cfg.model;
        spec.auth_env_var = cfg.auth_env;
        spec.attempts = cfg.attempts;
        spec.request_timeout = std::chrono::milliseconds(cfg.timeout_ms);
        return std::make_shared<llm::RemoteLlm>(spec);
    }
    invalid("unknown llm provider '" + cfg.provider + "'");
}

void Runtime::persist() const {
    if (cfg.data_dir.empty()) return;
    fs::create_directories(cfg.data_dir);
    if (auto* local = dynamic_cast<index::LocalIndex*>(index.get())) index::save_snapshot(*local, cfg.snapshot_path());
    engine->tools().save(cfg.tools_path());
}

Runtime build_runtime(const ServiceConfig& cfg, std::shared_ptr<llm::LlmProvider> model) {
    Runtime rt;
    rt.cfg = cfg;
    if (!cfg.data_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.data_dir, ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create " + cfg.data_dir.string() + ": " + ec.message());
    }

    rt.embedder = embed::make_provider(cfg.embedding);
    if (cfg.embedding_cache) {
        std::optional<fs::path> file;
        if (!cfg.data_dir.empty()) file = cfg.embedding_cache_path();
        rt.embedder = std::make_shared<embed::CachedEmbeddingProvider>(rt.embedder, file);
    }

    if (cfg.index.kind != index::BackendKind::Remote && !cfg.data_dir.empty() && fs::exists(cfg.snapshot_path())) {
        auto loaded = index::load_snapshot(cfg.snapshot_path(), cfg.index.hnsw);
        if (loaded->dim() != cfg.index.dim || loaded->kind() != cfg.index.kind) {
            throw Error(ErrorCode::InvalidConfig, "snapshot " + cfg.snapshot_path().string() +
                                                      " does not match the configured index backend or dim");
        }
        rt.index = std::move(loaded);
    } else {
        rt.index = index::make_index(cfg.index);
    }

    rt.llm = model ? std::move(model) : make_llm(cfg.llm);
    rt.hub = std::make_shared<agents::AgentHub>();
    for (const auto& a : cfg.agents) rt.hub->add(a);
    rt.sessions = std::make_shared<router::SessionStore>(cfg.sessions_dir());
    rt.engine = std::make_shared<router::ChatEngine>(cfg.chat, rt.embedder, rt.index, rt.llm, rt.hub, rt.sessions);
    if (!cfg.data_dir.empty() && fs::exists(cfg.tools_path())) {
        rt.engine->tools().load(cfg.tools_path());
    }
    return rt;
}

}  // namespace xrchat::config
