#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace xrchat::embed {

struct EmbeddingVector {
    std::vector<float> values;
    std::string provider_id;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

struct ProviderSpec {
    std::string provider_id;  // "test:hash-ngram" or "remote:<model>"
    std::size_t dim = 256;
    std::string endpoint;
    std::string auth_env_var;  // secret is read from this variable at call time
    std::size_t batch_limit = 64;
};

// Pluggable text -> vector backend. Implementations return raw (possibly
// unnormalized) vectors; embed_batch validates and normalizes them.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    virtual const ProviderSpec& spec() const = 0;
    virtual std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) = 0;
    // Cheap liveness check for health reporting.
    virtual bool reachable() { return true; }
};

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider);
EmbeddingVector embed_one(std::string_view text, EmbeddingProvider& provider);

// Throws DimensionMismatch when dims differ.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// In-place L2 normalization; throws EmptyText for an all-zero vector and
// ProviderUnavailable for non-finite components.
void normalize(std::vector<float>& v);

inline constexpr std::size_t kHashNgramDim = 256;
inline constexpr std::string_view kHashNgramId = "test:hash-ngram";

// Deterministic offline embedding: lowercase, whitespace tokens plus their
// character trigrams, FNV-1a 64 bucketed into 256 counts, L2-normalized.
EmbeddingVector test_embed(std::string_view text);

// Raw bucket counts used by test_embed (exposed for diagnostics and tests).
std::vector<float> hash_ngram_counts(std::string_view text, std::size_t dim = kHashNgramDim);

class HashNgramProvider final : public EmbeddingProvider {
public:
    HashNgramProvider();
    explicit HashNgramProvider(ProviderSpec spec);

    const ProviderSpec& spec() const override { return spec_; }
    std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override;

private:
    ProviderSpec spec_;
};

struct RetryPolicy {
    int attempts = 4;  // one call plus three retries
    std::chrono::milliseconds base_delay{500};
    double factor = 2.0;
    std::chrono::milliseconds request_timeout{30000};
};

// POST {endpoint} {"texts": [...]} -> {"vectors": [[...], ...]}
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit RemoteEmbeddingProvider(ProviderSpec spec, RetryPolicy retry = {});

    const ProviderSpec& spec() const override { return spec_; }
    std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override;
    bool reachable() override;

private:
    ProviderSpec spec_;
    RetryPolicy retry_;
};

// Wraps a provider with a (provider_id, sha256(text)) keyed cache that is
// persisted as an append-only file when a path is given.
class CachedEmbeddingProvider final : public EmbeddingProvider {
public:
    CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, std::optional<std::filesystem::path> file);

    const ProviderSpec& spec() const override { return inner_->spec(); }
    std::vector<std::vector<float>> embed_raw(std::span<const std::string> texts) override;
    bool reachable() override { return inner_->reachable(); }

    std::size_t size() const;
    std::size_t hits() const;
    std::size_t misses() const;

private:
    void load();
    void append(const std::string& key, const std::vector<float>& v);

    std::shared_ptr<EmbeddingProvider> inner_;
    std::optional<std::filesystem::path> file_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::vector<float>> cache_;
    std::size_t hits_ = 0;
    std::size_t misses_ = 0;
};

std::shared_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec);

// Provider config file: JSON array of {provider_id, dim, endpoint?, auth_env_var?, batch_limit}.
std::vector<ProviderSpec> load_provider_specs(const std::filesystem::path& path);
std::vector<ProviderSpec> parse_provider_specs(std::string_view json_text);

}  // namespace xrchat::embed
