#include "xrchat/embedder.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace xrchat::embed {

void normalize(std::vector<float>& v) {
    double sq = 0.0;
    for (float x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::ProviderUnavailable, "embedding has non-finite component");
        sq += static_cast<double>(x) * x;
    }
    if (sq == 0.0) throw Error(ErrorCode::EmptyText, "embedding is the zero vector");
    const double inv = 1.0 / std::sqrt(sq);
    for (float& x : v) x = static_cast<float>(x * inv);
}

std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts, EmbeddingProvider& provider) {
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) throw Error(ErrorCode::EmptyText, "text #" + std::to_string(i) + " is empty");
    }
    const auto& spec = provider.spec();
    const std::size_t limit = std::max<std::size_t>(1, spec.batch_limit);

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += limit) {
        const auto batch = texts.subspan(start, std::min(limit, texts.size() - start));
        auto raw = provider.embed_raw(batch);
        if (raw.size() != batch.size()) {
            throw Error(ErrorCode::ProviderUnavailable, "provider " + spec.provider_id + " returned " +
                                                            std::to_string(raw.size()) + " vectors for " +
                                                            std::to_string(batch.size()) + " texts");
        }
        for (auto& v : raw) {
            if (v.size() != spec.dim) {
                throw Error(ErrorCode::DimensionMismatch, "provider " + spec.provider_id + " returned dim " +
                                                              std::to_string(v.size()) + ", expected " +
                                                              std::to_string(spec.dim));
            }
            normalize(v);
            out.push_back({std::move(v), spec.provider_id});
        }
    }
    return out;
}

EmbeddingVector embed_one(std::string_view text, EmbeddingProvider& provider) {
    const std::string t(text);
    return std::move(embed_batch(std::span<const std::string>(&t, 1), provider).front());
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine of dim " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
    return std::clamp(dot, -1.0, 1.0);
}

std::vector<float> hash_ngram_counts(std::string_view input, std::size_t dim) {
    std::vector<float> counts(dim, 0.0f);
    const std::string lowered = text::ascii_lower(input);
    std::istringstream in(lowered);
    std::string token;
    while (in >> token) {
        counts[text::fnv1a64(token) % dim] += 1.0f;
        const auto cps = text::codepoint_offsets(token);
        const std::size_t n = cps.size() - 1;
        for (std::size_t i = 0; i + 3 <= n; ++i) {
            const std::string_view tri(token.data() + cps[i], cps[i + 3] - cps[i]);
            counts[text::fnv1a64(tri) % dim] += 1.0f;
        }
    }
    return counts;
}

EmbeddingVector test_embed(std::string_view text) {
    if (text.empty()) throw Error(ErrorCode::EmptyText, "text is empty");
    auto counts = hash_ngram_counts(text, kHashNgramDim);
    normalize(counts);
    return {std::move(counts), std::string(kHashNgramId)};
}

HashNgramProvider::HashNgramProvider() : HashNgramProvider(ProviderSpec{std::string(kHashNgramId), kHashNgramDim, {}, {}, 256}) {}

HashNgramProvider::HashNgramProvider(ProviderSpec spec) : spec_(std::move(spec)) {
    if (spec_.dim == 0) throw Error(ErrorCode::InvalidConfig, "hash-ngram provider needs a positive dim");
}

std::vector<std::vector<float>> HashNgramProvider::embed_raw(std::span<const std::string> texts) {
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(hash_ngram_counts(t, spec_.dim));
    return out;
}

std::shared_ptr<EmbeddingProvider> make_provider(const ProviderSpec& spec) {
    if (spec.provider_id.rfind("test:hash-ngram", 0) == 0) return std::make_shared<HashNgramProvider>(spec);
    if (spec.provider_id.rfind("remote:", 0) == 0) {
        if (spec.endpoint.empty()) {
            throw Error(ErrorCode::InvalidConfig, "remote provider " + spec.provider_id + " needs an endpoint");
        }
        return std::make_shared<RemoteEmbeddingProvider>(spec);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown embedding provider '" + spec.provider_id + "'");
}

std::vector<ProviderSpec> parse_provider_specs(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("provider config: ") + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::InvalidConfig, "provider config must be a JSON array");
    std::vector<ProviderSpec> out;
    for (const auto& e : j) {
        try {
            ProviderSpec s;
            s.provider_id = e.at("provider_id").get<std::string>();
            s.dim = e.at("dim").get<std::size_t>();
            s.endpoint = e.value("endpoint", "");
            s.auth_env_var = e.value("auth_env_var", "");
            s.batch_limit = e.value("batch_limit", std::size_t{64});
            if (s.dim == 0 || s.batch_limit == 0) {
                throw Error(ErrorCode::InvalidConfig, "dim and batch_limit must be positive for " + s.provider_id);
            }
            out.push_back(std::move(s));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorCode::InvalidConfig, std::string("provider entry: ") + ex.what());
        }
    }
    return out;
}

std::vector<ProviderSpec> load_provider_specs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read provider config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_provider_specs(ss.str());
}

}  // namespace xrchat::embed
