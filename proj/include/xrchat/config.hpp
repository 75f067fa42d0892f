#pragma once

#include "xrchat/agents.hpp"
#include "xrchat/corpus.hpp"
#include "xrchat/embedder.hpp"
#include "xrchat/llm.hpp"
#include "xrchat/router.hpp"
#include "xrchat/vector_index.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace xrchat::config {

struct LlmConfig {
    std::string provider = "mock:echo";  // mock:echo | mock:extractive | remote
    std::string endpoint;
    std::string model;
    std::string auth_env;
    int attempts = 4;
    long long timeout_ms = 60000;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    int threads = 32;
    std::vector<std::string> cors_origins;
    std::size_t max_body_bytes = 20u * 1024u * 1024u;
    std::chrono::seconds health_refresh{30};

    std::filesystem::path data_dir;  // empty: nothing persisted
    std::filesystem::path keys_file;  // default <data_dir>/keys.jsonl

    embed::ProviderSpec embedding{std::string(embed::kHashNgramId), embed::kHashNgramDim, {}, {}, 64};
    bool embedding_cache = true;
    index::BackendSpec index;
    LlmConfig llm;
    router::EngineConfig chat;
    std::vector<agents::AgentEndpointConfig> agents;

    std::size_t bench_k = 5;
    std::filesystem::path bench_corpus;
    std::string bench_generator = "extractive";  // extractive | llm
    std::string bench_oracle = "rule";           // rule | llm

    std::filesystem::path keys_path() const;
    std::filesystem::path sessions_dir() const;
    std::filesystem::path snapshot_path() const;
    std::filesystem::path tools_path() const;
    std::filesystem::path embedding_cache_path() const;
};

// Every recognised key with its default value. Layers are merged onto this
// and unknown keys are rejected.
nlohmann::json default_document();

// TOML when the extension is .toml, JSON otherwise.
nlohmann::json read_config_file(const std::filesystem::path& path);

// Dotted key ("server.port", "agents.pdm.base_url") -> XRCHAT_SERVER_PORT, ...
std::string env_var_for(const std::string& dotted_key);

struct Overrides {
    std::map<std::string, std::string> values;  // dotted key -> raw text
};

// Layers, lowest first: defaults, file, XRCHAT_* environment, flags.
// Throws InvalidConfig on unknown keys, bad types or failed validation.
ServiceConfig load(const std::filesystem::path* file, const Overrides& flags = {},
                   const std::map<std::string, std::string>* env = nullptr);

// The merged document before it is turned into a ServiceConfig.
nlohmann::json merged_document(const std::filesystem::path* file, const Overrides& flags,
                               const std::map<std::string, std::string>* env);

ServiceConfig from_document(const nlohmann::json& doc);

std::map<std::string, std::string> process_environment();

std::shared_ptr<llm::LlmProvider> make_llm(const LlmConfig& cfg);

// Concrete objects behind one configured engine.
struct Runtime {
    ServiceConfig cfg;
    std::shared_ptr<embed::EmbeddingProvider> embedder;
    std::shared_ptr<index::VectorIndex> index;
    std::shared_ptr<llm::LlmProvider> llm;
    std::shared_ptr<agents::AgentHub> hub;
    std::shared_ptr<router::SessionStore> sessions;
    std::shared_ptr<router::ChatEngine> engine;

    // Writes the index snapshot (local backends) and the tool registry into
    // data_dir. No-op without a data_dir. Caller holds the ingest mutex.
    void persist() const;
};

// Restores the snapshot and registry from data_dir when present. An explicit
// llm replaces the configured one (tests inject scripted models).
Runtime build_runtime(const ServiceConfig& cfg, std::shared_ptr<llm::LlmProvider> llm = nullptr);

}  // namespace xrchat::config
