#pragma once

#include "xrchat/sync.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace httplib {
class Server;
}

namespace xrchat::index {

using ItemId = std::uint64_t;
using Metadata = std::map<std::string, std::string>;

// Metadata keys written by the ingestion pipeline.
namespace keys {
inline constexpr std::string_view kDocId = "doc_id";
inline constexpr std::string_view kTitle = "title";
inline constexpr std::string_view kAuthor = "author";
inline constexpr std::string_view kDocType = "doc_type";
inline constexpr std::string_view kVersion = "version";
inline constexpr std::string_view kHeadingPath = "heading_path";
inline constexpr std::string_view kText = "text";
}  // namespace keys

struct ItemInput {
    std::string doc_id;
    std::string chunk_id;
    std::vector<float> vector;
    Metadata metadata;
};

struct IndexedItem {
    ItemId item_id = 0;
    std::string doc_id;
    std::string chunk_id;
    std::vector<float> vector;
    Metadata metadata;

    bool operator==(const IndexedItem&) const = default;
};

// Conjunction of key = value predicates. "doc_id" and "chunk_id" address the
// item's own fields; every other key is looked up in its metadata.
class MetadataFilter {
public:
    MetadataFilter() = default;
    static MetadataFilter by_doc(std::string doc_id);

    MetadataFilter& where(std::string key, std::string value);

    bool empty() const noexcept { return terms_.empty(); }
    const std::vector<std::pair<std::string, std::string>>& terms() const noexcept { return terms_; }
    // Value of the doc_id predicate if present (first one wins).
    const std::string* doc_id() const;

    bool matches(std::string_view doc_id, std::string_view chunk_id, const Metadata& md) const;

private:
    std::vector<std::pair<std::string, std::string>> terms_;
};

struct Hit {
    ItemId item_id = 0;
    double score = 0.0;
    std::string doc_id;
    std::string chunk_id;
    Metadata metadata;
};

// Descending score, then ascending item_id.
bool hit_before(const Hit& a, const Hit& b);

enum class BackendKind : std::uint8_t { Exact = 0, Hnsw = 1, Remote = 2 };

std::string_view to_string(BackendKind k);
BackendKind parse_backend_kind(std::string_view s);

struct HnswParams {
    std::size_t m = 16;
    std::size_t ef_construction = 200;
    std::size_t ef_search = 64;
    std::uint64_t seed = 0x5eed;
};

struct BackendSpec {
    BackendKind kind = BackendKind::Exact;
    std::size_t dim = 256;
    HnswParams hnsw;
    std::string endpoint;
    std::string auth_env_var;
};

class VectorIndex {
public:
    virtual ~VectorIndex() = default;

    virtual BackendKind kind() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t size() const = 0;

    // Throws DimensionMismatch / DuplicateChunk without modifying the index.
    virtual std::vector<ItemId> upsert(std::vector<ItemInput> items) = 0;

    // Empty index or no filter match yields an empty list.
    virtual std::vector<Hit> top_k(std::span<const float> query, std::size_t k,
                                   const MetadataFilter& filter = {}) const = 0;

    virtual std::size_t delete_document(const std::string& doc_id) = 0;

    // delete_document + upsert under one exclusive section.
    virtual std::vector<ItemId> replace_document(const std::string& doc_id, std::vector<ItemInput> items) = 0;

    virtual std::size_t count_document(const std::string& doc_id) const = 0;

    // Live items ordered by item_id.
    virtual std::vector<IndexedItem> items() const = 0;
};

// Shared storage and locking for in-process backends.
class LocalIndex : public VectorIndex {
public:
    explicit LocalIndex(std::size_t dim);

    std::size_t dim() const override { return dim_; }
    std::size_t size() const override;
    std::vector<ItemId> upsert(std::vector<ItemInput> items) override;
    std::vector<Hit> top_k(std::span<const float> query, std::size_t k,
                           const MetadataFilter& filter = {}) const override;
    std::size_t delete_document(const std::string& doc_id) override;
    std::vector<ItemId> replace_document(const std::string& doc_id, std::vector<ItemInput> items) override;
    std::size_t count_document(const std::string& doc_id) const override;
    std::vector<IndexedItem> items() const override;

    ItemId next_item_id() const;
    // Loads previously persisted items (ids preserved). Index must be empty.
    void restore(std::vector<IndexedItem> items, ItemId next_id);

protected:
    struct Slot {
        ItemId item_id;
        std::string doc_id;
        std::string chunk_id;
        Metadata metadata;
        bool live = true;
    };

    const float* vec(std::size_t slot) const { return vectors_.data() + slot * dim_; }
    double exact_score(std::span<const float> q, std::size_t slot) const;
    Hit make_hit(std::size_t slot, double score) const;

    // Live slots that pass a non-empty filter.
    std::vector<std::size_t> filtered_slots(const MetadataFilter& filter) const;
    std::vector<Hit> exact_search(std::span<const float> q, std::size_t k, const std::vector<std::size_t>& slots) const;
    std::vector<Hit> exact_search_all(std::span<const float> q, std::size_t k) const;

    // Hooks for ANN backends; called with the exclusive lock held.
    virtual void on_insert(std::size_t /*slot*/) {}
    // Called with the shared lock held; default is the exact scan.
    virtual std::vector<Hit> search(std::span<const float> q, std::size_t k, const MetadataFilter& filter) const;

    std::vector<ItemId> upsert_locked(std::vector<ItemInput>& items);
    std::size_t delete_locked(const std::string& doc_id);
    void validate_locked(const std::vector<ItemInput>& items, const std::string* replacing) const;

    mutable WriterPreferringMutex mu_;
    std::size_t dim_;
    ItemId next_id_ = 0;
    std::size_t live_ = 0;
    std::vector<Slot> slots_;
    std::vector<float> vectors_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_doc_;
    std::unordered_set<std::string> chunk_keys_;
};

class ExactIndex final : public LocalIndex {
public:
    explicit ExactIndex(std::size_t dim) : LocalIndex(dim) {}
    BackendKind kind() const override { return BackendKind::Exact; }
};

class HnswIndex final : public LocalIndex {
public:
    HnswIndex(std::size_t dim, HnswParams params);
    BackendKind kind() const override { return BackendKind::Hnsw; }
    const HnswParams& params() const noexcept { return params_; }
    // Search-time breadth; the graph is unchanged. Throws InvalidConfig on 0.
    void set_ef_search(std::size_t ef);

protected:
    void on_insert(std::size_t slot) override;
    std::vector<Hit> search(std::span<const float> q, std::size_t k, const MetadataFilter& filter) const override;

private:
    struct Candidate {
        float dist;
        std::uint32_t node;
    };

    float distance(const float* a, const float* b) const;
    int random_level();
    // With a null filter every node is a result candidate (construction);
    // otherwise only live nodes passing the filter are.
    std::vector<Candidate> search_layer(const float* q, std::uint32_t entry, std::size_t ef, int layer,
                                        const MetadataFilter* filter) const;
    std::vector<std::uint32_t> select_neighbors(const float* base, std::vector<Candidate> candidates,
                                                std::size_t m) const;
    std::uint32_t greedy_descend(const float* q, int top_layer, int target_layer, std::uint32_t entry) const;

    HnswParams params_;
    double level_mult_;
    std::uint64_t rng_state_;
    // links_[node][layer] = neighbor nodes; node ids equal slot indices.
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;
    std::uint32_t entry_ = 0;
    int max_level_ = -1;
};

// Client for an index hosted behind the HTTP contract served by IndexHttpService.
class RemoteIndex final : public VectorIndex {
public:
    explicit RemoteIndex(BackendSpec spec);

    BackendKind kind() const override { return BackendKind::Remote; }
    std::size_t dim() const override { return spec_.dim; }
    std::size_t size() const override;
    std::vector<ItemId> upsert(std::vector<ItemInput> items) override;
    std::vector<Hit> top_k(std::span<const float> query, std::size_t k,
                           const MetadataFilter& filter = {}) const override;
    std::size_t delete_document(const std::string& doc_id) override;
    std::vector<ItemId> replace_document(const std::string& doc_id, std::vector<ItemInput> items) override;
    std::size_t count_document(const std::string& doc_id) const override;
    std::vector<IndexedItem> items() const override;

private:
    BackendSpec spec_;
};

// Mounts POST /upsert, POST /query, DELETE /docs/{doc_id}, GET /stats and
// GET /items on an httplib server, backed by any local index.
void mount_index_routes(httplib::Server& server, std::shared_ptr<VectorIndex> index);

std::unique_ptr<VectorIndex> make_index(const BackendSpec& spec);

// Snapshot file: "FRIDX1", u32 dim, u8 kind, u64 count, u64 next_id, then
// u32-length-prefixed records. Written to a temp file and renamed.
void save_snapshot(const LocalIndex& index, const std::filesystem::path& path);
std::unique_ptr<LocalIndex> load_snapshot(const std::filesystem::path& path, const HnswParams& hnsw = {});

}  // namespace xrchat::index
