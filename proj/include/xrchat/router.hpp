#pragma once

#include "xrchat/agents.hpp"
#include "xrchat/clock.hpp"
#include "xrchat/corpus.hpp"
#include "xrchat/embedder.hpp"
#include "xrchat/llm.hpp"
#include "xrchat/sync.hpp"
#include "xrchat/vector_index.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace xrchat::router {

inline constexpr std::size_t kMaxSummaryChars = 1000;

struct ToolSpec {
    std::string tool_id;
    std::string doc_id;
    std::string title;
    std::string version;
    std::string summary;
    std::vector<std::string> keywords;
    SystemTime created_at{};

    bool operator==(const ToolSpec&) const = default;
};

nlohmann::json to_json(const ToolSpec& t);
ToolSpec tool_from_json(const nlohmann::json& j);

std::string tool_id_for(std::string_view doc_id);

// Leading prose of the body (headings and fences skipped), cut at a word
// boundary to at most max_chars code points. Falls back to the title.
std::string derive_summary(const corpus::Document& doc, std::size_t max_chars = 600);
// Title and heading terms followed by the most frequent body terms.
std::vector<std::string> derive_keywords(const corpus::Document& doc, std::size_t limit = 40);

class ToolRegistry {
public:
    // Supersedes any earlier spec for doc.doc_id. Throws UnknownDocument when
    // the index holds no chunks for the document, InvalidArgument when the
    // summary is empty or longer than kMaxSummaryChars.
    ToolSpec register_tool(const corpus::Document& doc, std::string summary, std::vector<std::string> keywords,
                           const index::VectorIndex& index);

    // Inserts a spec as-is (used when restoring persisted state).
    void restore(ToolSpec spec);
    bool remove_document(const std::string& doc_id);

    // Ordered by tool_id.
    std::vector<ToolSpec> list() const;
    std::optional<ToolSpec> find(const std::string& tool_id) const;
    std::size_t size() const;

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    mutable WriterPreferringMutex mu_;
    std::map<std::string, ToolSpec> tools_;  // by tool_id
};

enum class RoutePolicy { Lexical, Llm };
std::string_view to_string(RoutePolicy p);
RoutePolicy parse_route_policy(std::string_view s);

struct RoutingDecision {
    std::vector<std::string> selected_tools;
    std::vector<agents::AgentKind> selected_agents;
    std::string rationale;
    RoutePolicy policy = RoutePolicy::Lexical;
};

inline constexpr double kRouteThreshold = 0.2;
inline constexpr std::size_t kMaxRoutedTools = 3;

// Only agents listed in `available` can be selected.
RoutingDecision route_lexical(std::string_view query, const std::vector<ToolSpec>& tools,
                              const std::vector<agents::AgentKind>& available = {std::begin(agents::kAllAgents),
                                                                                 std::end(agents::kAllAgents)});

enum class Role { User, Assistant };
std::string_view to_string(Role r);

struct Citation {
    std::string doc_id;
    std::string chunk_id;

    bool operator==(const Citation&) const = default;
};

struct Turn {
    Role role = Role::User;
    std::string text;
    std::vector<Citation> citations;
    std::vector<std::string> tool_trace;
    SystemTime at{};
};

nlohmann::json to_json(const Turn& t);
Turn turn_from_json(const nlohmann::json& j);

std::string build_route_prompt(std::string_view query, const std::vector<ToolSpec>& tools,
                               const std::vector<agents::AgentKind>& available, const std::vector<Turn>& history);

// Asks the model for {"tools": [...], "agents": [...]}; anything unusable
// falls back to route_lexical.
RoutingDecision route_llm(std::string_view query, const std::vector<ToolSpec>& tools,
                          const std::vector<agents::AgentKind>& available, const std::vector<Turn>& history,
                          llm::LlmProvider& model);

// "[doc_id:chunk_id]" tags in order of first appearance.
std::vector<Citation> extract_citations(std::string_view answer);

struct Session {
    std::string session_id;
    std::string system_prompt;
    SystemTime created_at{};
    SystemTime last_active{};
    std::vector<Turn> turns;
};

nlohmann::json to_json(const Session& s);

// Sessions persist as <dir>/<session_id>.jsonl (one header line, then one
// line per turn) and are replayed on construction. An empty dir keeps
// everything in memory.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path dir = {});

    Session create(std::optional<std::string> system_prompt = std::nullopt);
    Session get(const std::string& id) const;  // UnknownSession
    bool exists(const std::string& id) const;
    void remove(const std::string& id);        // idempotent
    std::size_t size() const;

    // Appends a user/assistant pair. UnknownSession if the id is gone.
    void append_exchange(const std::string& id, Turn user, Turn assistant);

    // Serializes work on one session; distinct sessions do not contend.
    std::shared_ptr<std::mutex> session_lock(const std::string& id);

private:
    std::filesystem::path file_for(const std::string& id) const;
    void replay();

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, Session> sessions_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

inline constexpr std::string_view kDefaultPromptTemplate =
    "{system}\n"
    "\n"
    "Answer using only the excerpts and agent data below. Cite every excerpt you use with its tag, "
    "for example [doc_id:chunk_id].\n"
    "\n"
    "### Conversation\n"
    "{history}\n"
    "\n"
    "### Excerpts\n"
    "{context}\n"
    "\n"
    "### Agent data\n"
    "{agents}\n"
    "\n"
    "### Question\n"
    "{query}\n";

inline constexpr std::string_view kDefaultSystemPrompt =
    "You are a maintenance assistant for industrial equipment. Be concise and precise.";

inline constexpr std::string_view kDefaultRefusal =
    "I could not find this in the registered documents or agent data, so I cannot answer it.";

// Fills {system} {history} {context} {agents} {query}; unknown braces are kept.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct EngineConfig {
    std::size_t k = 5;
    std::size_t history_window = 6;
    bool grounding_required = true;
    std::string refusal_text = std::string(kDefaultRefusal);
    std::string system_prompt = std::string(kDefaultSystemPrompt);
    std::string prompt_template = std::string(kDefaultPromptTemplate);
    double temperature = 0.0;
    RoutePolicy routing = RoutePolicy::Lexical;
    corpus::ChunkerConfig chunker;
    std::chrono::seconds iot_window{3600};
};

struct IngestRequest {
    std::string raw;
    corpus::SourceFormat format = corpus::SourceFormat::Markdown;
    corpus::DocumentMetadata metadata;
    std::optional<std::string> summary;
    std::vector<std::string> keywords;  // empty: derived from the document
};

struct IngestResult {
    std::string doc_id;
    std::size_t chunk_count = 0;
    std::string tool_id;
    ToolSpec tool;
};

// Identifiers a client can pass alongside a query; missing ones are taken
// from an `id:` token in the query text.
struct QueryContext {
    std::optional<std::string> asset_id;
    std::optional<std::string> prediction_id;
    std::optional<std::string> device_id;
    std::optional<std::chrono::seconds> iot_window;
};

struct AnswerResult {
    Turn turn;
    RoutingDecision decision;
    std::vector<agents::AgentKind> agents_used;
    std::vector<std::string> tools_used;
    std::string prompt;  // empty for refusals
    bool refused = false;
};

class ChatEngine {
public:
    ChatEngine(EngineConfig cfg, std::shared_ptr<embed::EmbeddingProvider> embedder,
               std::shared_ptr<index::VectorIndex> index, std::shared_ptr<llm::LlmProvider> model,
               std::shared_ptr<agents::AgentHub> hub, std::shared_ptr<SessionStore> sessions);

    // parse -> chunk -> embed -> replace in index -> register tool.
    IngestResult ingest(const IngestRequest& req);

    AnswerResult answer(const std::string& session_id, std::string_view query, const QueryContext& ctx = {});

    const EngineConfig& config() const noexcept { return cfg_; }
    ToolRegistry& tools() noexcept { return tools_; }
    const ToolRegistry& tools() const noexcept { return tools_; }
    SessionStore& sessions() noexcept { return *sessions_; }
    index::VectorIndex& vector_index() noexcept { return *index_; }
    embed::EmbeddingProvider& embedder() noexcept { return *embedder_; }
    llm::LlmProvider& model() noexcept { return *model_; }
    const agents::AgentHub& hub() const noexcept { return *hub_; }

    // Serializes ingestion so the index and the registry change together.
    std::mutex& ingest_mutex() noexcept { return ingest_mu_; }

private:
    EngineConfig cfg_;
    std::shared_ptr<embed::EmbeddingProvider> embedder_;
    std::shared_ptr<index::VectorIndex> index_;
    std::shared_ptr<llm::LlmProvider> model_;
    std::shared_ptr<agents::AgentHub> hub_;
    std::shared_ptr<SessionStore> sessions_;
    ToolRegistry tools_;
    std::mutex ingest_mu_;
};

}  // namespace xrchat::router
