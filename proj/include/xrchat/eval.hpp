#pragma once

#include "xrchat/corpus.hpp"
#include "xrchat/embedder.hpp"
#include "xrchat/llm.hpp"
#include "xrchat/vector_index.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace xrchat::eval {

struct QAItem {
    std::string query;
    std::string ground_truth;
    std::optional<std::string> source_doc_id;
};

// JSON list of {query, ground_truth, source_doc_id?}. Empty texts are BadPayload.
std::vector<QAItem> parse_qa(std::string_view json_text);
std::vector<QAItem> load_qa(const std::filesystem::path& path);

enum class ClaimOrigin { GroundTruth, Response };

struct Claim {
    std::string text;  // normalized
    ClaimOrigin origin = ClaimOrigin::Response;
};

// Lowercase, ASCII punctuation to spaces, whitespace collapsed, trimmed.
std::string normalize_claim_text(std::string_view s);

// Splits after . ! ? when followed by whitespace or end of text. Common
// abbreviations (e.g., i.e., etc.) and single-letter initials do not end a sentence.
std::vector<std::string> split_sentences(std::string_view s);

// Removes "[doc_id:chunk_id]" citation tags.
std::string strip_citation_tags(std::string_view s);

inline constexpr std::size_t kMinClaimTokens = 2;

class ClaimOracle {
public:
    virtual ~ClaimOracle() = default;
    virtual std::string id() const = 0;
    // Normalized claims with fewer than kMinClaimTokens tokens removed.
    virtual std::vector<std::string> claims(std::string_view text) = 0;
    // claim is normalized; context holds raw chunk texts.
    virtual bool entails(std::span<const std::string> context, const std::string& claim) = 0;
};

// Sentence splitting plus normalized substring entailment (matched on token
// boundaries).
class RuleOracle final : public ClaimOracle {
public:
    std::string id() const override { return "rule:substring-v1"; }
    std::vector<std::string> claims(std::string_view text) override;
    bool entails(std::span<const std::string> context, const std::string& claim) override;
};

// Model-prompted decomposition and yes/no judgments. Provider failures
// surface as OracleUnavailable; an unclear judgment counts as "no".
class LlmOracle final : public ClaimOracle {
public:
    explicit LlmOracle(std::shared_ptr<llm::LlmProvider> model);
    std::string id() const override { return "llm:" + model_->id(); }
    std::vector<std::string> claims(std::string_view text) override;
    bool entails(std::span<const std::string> context, const std::string& claim) override;

private:
    std::shared_ptr<llm::LlmProvider> model_;
};

// Throws EmptyText for blank input.
std::vector<Claim> extract_claims(std::string_view text, ClaimOrigin origin, ClaimOracle& oracle);
bool entails(std::span<const std::string> context, const Claim& claim, ClaimOracle& oracle);

struct EvalScores {
    double cr = 0;
    double cp = 0;
    double hallu = 0;
    double faith = 0;
    double self_knowledge = 0;
    bool empty_response = false;
};

// Percentages in [0, 100]. EmptyGroundTruth when the ground truth yields no claims.
EvalScores score(const QAItem& qa, std::span<const std::string> retrieved, std::string_view response,
                 ClaimOracle& oracle);
EvalScores score(const QAItem& qa, std::span<const corpus::Chunk> retrieved, std::string_view response,
                 ClaimOracle& oracle);

double composite(const EvalScores& s);

enum class SweepAxis { Chunking, Embedding, VectorStore };
std::string_view to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view s);
// First column header of the report table.
std::string_view axis_header(SweepAxis a);

struct Variant {
    std::string label;
    corpus::ChunkerConfig chunker;
    embed::ProviderSpec embedding;
    index::BackendSpec store;
};

struct BenchConfig {
    std::size_t k = 5;
    corpus::ChunkerConfig chunker;
    embed::ProviderSpec embedding{std::string(embed::kHashNgramId), embed::kHashNgramDim, {}, {}, 64};
    index::BackendSpec store;
};

// Chunking: "Semantic Context", "Fixed length=2028", "Fixed length=1024".
// Embedding: the configured provider plus hash-ngram at dims 128 and 512.
// Vector store: exact and HNSW, plus remote when the config names an endpoint.
std::vector<Variant> default_variants(SweepAxis axis, const BenchConfig& base);

struct BenchRow {
    std::string label;
    EvalScores mean;
    double composite = 0;
    std::size_t rank = 0;  // 0 for failed variants
    bool failed = false;
    std::string error;
    std::size_t qa_count = 0;
    std::size_t empty_responses = 0;
    std::size_t chunk_count = 0;
    nlohmann::json params;
};

struct BenchReport {
    SweepAxis axis = SweepAxis::Chunking;
    std::vector<BenchRow> rows;  // in variant order
    nlohmann::json provenance;

    bool any_failed() const;
};

// Generator: nullptr uses the extractive mock (retrieved chunks joined by
// blank lines); otherwise the model answers from a prompt of the excerpts.
BenchReport run_bench(const std::vector<corpus::Document>& corpus, const std::vector<QAItem>& qa, SweepAxis axis,
                      const std::vector<Variant>& variants, const BenchConfig& base, ClaimOracle& oracle,
                      llm::LlmProvider* generator = nullptr);

// Sorted by hash of doc_id and body; independent of input order.
std::string corpus_hash(const std::vector<corpus::Document>& corpus);

// Deterministic: no timestamps, fixed key order, numbers rounded to 2 places.
nlohmann::json to_json(const BenchReport& r);
// Columns: <axis> | CR | CP | Hallu. | Faith. | Rank, best value per metric in bold.
std::string to_markdown(const BenchReport& r);

double round2(double v);

}  // namespace xrchat::eval
