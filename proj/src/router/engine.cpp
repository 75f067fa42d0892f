#include "xrchat/error.hpp"
#include "xrchat/router.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <set>

namespace xrchat::router {

namespace keys = index::keys;

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find('}', open);
        if (close == std::string_view::npos) break;
        out.append(tmpl.substr(pos, open - pos));
        const std::string name(tmpl.substr(open + 1, close - open - 1));
        if (auto it = values.find(name); it != values.end()) {
            out += it->second;
            pos = close + 1;
        } else {
            out += '{';
            pos = open + 1;
        }
    }
    out.append(tmpl.substr(std::min(pos, tmpl.size())));
    return out;
}

ChatEngine::ChatEngine(EngineConfig cfg, std::shared_ptr<embed::EmbeddingProvider> embedder,
                       std::shared_ptr<index::VectorIndex> index, std::shared_ptr<llm::LlmProvider> model,
                       std::shared_ptr<agents::AgentHub> hub, std::shared_ptr<SessionStore> sessions)
    : cfg_(std::move(cfg)),
      embedder_(std::move(embedder)),
      index_(std::move(index)),
      model_(std::move(model)),
      hub_(hub ? std::move(hub) : std::make_shared<agents::AgentHub>()),
      sessions_(sessions ? std::move(sessions) : std::make_shared<SessionStore>()) {
    if (!embedder_ || !index_ || !model_) throw Error(ErrorCode::InvalidConfig, "engine needs embedder, index and llm");
    if (cfg_.k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
    cfg_.chunker.validate();
    if (embedder_->spec().dim != index_->dim()) {
        throw Error(ErrorCode::DimensionMismatch, "embedder dim " + std::to_string(embedder_->spec().dim) +
                                                      " != index dim " + std::to_string(index_->dim()));
    }
}

IngestResult ChatEngine::ingest(const IngestRequest& req) {
    const auto doc = corpus::parse_document(req.raw, req.format, req.metadata);
    const auto chunks = corpus::chunk_document(doc, cfg_.chunker);

    std::string summary = req.summary ? text::trim(*req.summary) : derive_summary(doc);
    if (summary.empty()) throw Error(ErrorCode::InvalidArgument, "tool summary must be non-empty");
    if (text::codepoint_count(summary) > kMaxSummaryChars) {
        throw Error(ErrorCode::InvalidArgument, "tool summary exceeds 1000 characters");
    }
    auto keywords = req.keywords.empty() ? derive_keywords(doc) : req.keywords;

    std::vector<std::string> inputs;
    inputs.reserve(chunks.size());
    for (const auto& c : chunks) {
        // Whitespace-only fixed chunks still need a vector; the title stands in.
        inputs.push_back(text::trim(c.text).empty() ? doc.title : c.text);
    }
    const auto vectors = embed::embed_batch(inputs, *embedder_);

    std::vector<index::ItemInput> items;
    items.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        index::ItemInput it;
        it.doc_id = doc.doc_id;
        it.chunk_id = c.chunk_id;
        it.vector = vectors[i].values;
        it.metadata[std::string(keys::kDocId)] = doc.doc_id;
        it.metadata[std::string(keys::kTitle)] = doc.title;
        it.metadata[std::string(keys::kAuthor)] = doc.author;
        it.metadata[std::string(keys::kDocType)] = doc.doc_type;
        it.metadata[std::string(keys::kVersion)] = doc.version;
        std::string path;
        for (const auto& h : c.heading_path) path += (path.empty() ? "" : " > ") + h;
        it.metadata[std::string(keys::kHeadingPath)] = path;
        it.metadata[std::string(keys::kText)] = c.text;
        items.push_back(std::move(it));
    }

    std::lock_guard lock(ingest_mu_);
    index_->replace_document(doc.doc_id, std::move(items));
    IngestResult r;
    r.doc_id = doc.doc_id;
    r.chunk_count = chunks.size();
    r.tool = tools_.register_tool(doc, std::move(summary), std::move(keywords), *index_);
    r.tool_id = r.tool.tool_id;
    return r;
}

namespace {

struct Excerpt {
    Citation cite;
    std::string header;
    std::string text;
};

std::string history_block(const std::vector<Turn>& turns, std::size_t window) {
    const std::size_t start = turns.size() > window ? turns.size() - window : 0;
    std::string out;
    for (std::size_t i = start; i < turns.size(); ++i) {
        out += std::string(to_string(turns[i].role)) + ": " + turns[i].text + "\n";
    }
    return out.empty() ? "(none)" : out;
}

}  // namespace

AnswerResult ChatEngine::answer(const std::string& session_id, std::string_view query, const QueryContext& ctx) {
    if (!sessions_->exists(session_id)) throw Error(ErrorCode::UnknownSession, "no session '" + session_id + "'");
    const std::string q = text::trim(query);
    if (q.empty()) throw Error(ErrorCode::InvalidArgument, "query text is empty");

    auto session_mu = sessions_->session_lock(session_id);
    std::lock_guard session_lock(*session_mu);
    const Session session = sessions_->get(session_id);
    const auto started = std::chrono::system_clock::now();

    const auto tools = tools_.list();
    const auto available = hub_->kinds();
    const std::size_t hstart =
        session.turns.size() > cfg_.history_window ? session.turns.size() - cfg_.history_window : 0;
    const std::vector<Turn> history(session.turns.begin() + static_cast<std::ptrdiff_t>(hstart), session.turns.end());

    AnswerResult result;
    result.decision = cfg_.routing == RoutePolicy::Llm ? route_llm(q, tools, available, history, *model_)
                                                       : route_lexical(q, tools, available);

    std::vector<Excerpt> excerpts;
    std::set<std::pair<std::string, std::string>> supplied;
    if (!result.decision.selected_tools.empty()) {
        const auto qv = embed::embed_one(q, *embedder_);
        for (const auto& tool_id : result.decision.selected_tools) {
            const auto spec = tools_.find(tool_id);
            if (!spec) continue;
            const auto hits = index_->top_k(qv.values, cfg_.k, index::MetadataFilter::by_doc(spec->doc_id));
            result.tools_used.push_back(tool_id);
            for (const auto& h : hits) {
                if (!supplied.emplace(h.doc_id, h.chunk_id).second) continue;
                Excerpt ex;
                ex.cite = {h.doc_id, h.chunk_id};
                auto md = [&](std::string_view k) {
                    auto it = h.metadata.find(std::string(k));
                    return it == h.metadata.end() ? std::string{} : it->second;
                };
                ex.header = md(keys::kTitle);
                if (const auto path = md(keys::kHeadingPath); !path.empty()) ex.header += " > " + path;
                ex.text = md(keys::kText);
                excerpts.push_back(std::move(ex));
            }
        }
    }

    agents::AgentTargets targets;
    const auto from_query = agents::extract_entity_id(q);
    const std::string fallback_id = from_query.value_or("");
    targets.asset_id = ctx.asset_id.value_or(fallback_id);
    targets.prediction_id = ctx.prediction_id.value_or(fallback_id);
    targets.device_id = ctx.device_id.value_or(fallback_id);
    targets.iot_window = ctx.iot_window.value_or(cfg_.iot_window);

    std::string agent_block;
    for (const auto& o : hub_->fetch_all(result.decision.selected_agents, targets)) {
        if (o.payload) {
            result.agents_used.push_back(o.kind);
            agent_block += o.payload->summary_text + "\n";
        } else {
            agent_block += "agent " + std::string(agents::to_string(o.kind)) + " unavailable (" + o.error + ")\n";
        }
    }

    Turn user;
    user.role = Role::User;
    user.text = q;
    user.at = started;

    Turn reply;
    reply.role = Role::Assistant;
    reply.tool_trace = result.tools_used;
    for (auto k : result.agents_used) reply.tool_trace.emplace_back(agents::to_string(k));

    const bool grounded = !excerpts.empty() || !result.agents_used.empty();
    if (!grounded && cfg_.grounding_required) {
        result.refused = true;
        reply.text = cfg_.refusal_text;
    } else {
        std::string context;
        for (const auto& ex : excerpts) {
            context += std::string(llm::kExcerptOpen) + "[" + ex.cite.doc_id + ":" + ex.cite.chunk_id + "] " +
                       ex.header + "\n" + ex.text;
            if (context.back() != '\n') context += '\n';
            context += std::string(llm::kExcerptClose) + "\n";
        }
        const std::string system = session.system_prompt.empty() ? cfg_.system_prompt : session.system_prompt;
        result.prompt = render_template(cfg_.prompt_template, {
                                                                  {"system", system},
                                                                  {"history", history_block(history, cfg_.history_window)},
                                                                  {"context", context.empty() ? "(none)" : context},
                                                                  {"agents", agent_block.empty() ? "(none)" : agent_block},
                                                                  {"query", q},
                                                              });
        reply.text = model_->complete(result.prompt, cfg_.temperature);
        for (auto& c : extract_citations(reply.text)) {
            if (supplied.count({c.doc_id, c.chunk_id})) reply.citations.push_back(std::move(c));
        }
    }
    reply.at = std::chrono::system_clock::now();

    sessions_->append_exchange(session_id, user, reply);
    result.turn = std::move(reply);
    return result;
}

}  // namespace xrchat::router
