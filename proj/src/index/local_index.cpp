#include "xrchat/error.hpp"
#include "xrchat/vector_index.hpp"

#include <algorithm>
#include <mutex>

namespace xrchat::index {

namespace {

std::string chunk_key(std::string_view doc_id, std::string_view chunk_id) {
    std::string k;
    k.reserve(doc_id.size() + chunk_id.size() + 1);
    k.append(doc_id);
    k.push_back('\x1f');
    k.append(chunk_id);
    return k;
}

}  // namespace

MetadataFilter MetadataFilter::by_doc(std::string doc_id) {
    MetadataFilter f;
    f.where(std::string(keys::kDocId), std::move(doc_id));
    return f;
}

MetadataFilter& MetadataFilter::where(std::string key, std::string value) {
    terms_.emplace_back(std::move(key), std::move(value));
    return *this;
}

const std::string* MetadataFilter::doc_id() const {
    for (const auto& [k, v] : terms_) {
        if (k == keys::kDocId) return &v;
    }
    return nullptr;
}

bool MetadataFilter::matches(std::string_view doc_id, std::string_view chunk_id, const Metadata& md) const {
    for (const auto& [k, v] : terms_) {
        if (k == keys::kDocId) {
            if (doc_id != v) return false;
        } else if (k == "chunk_id") {
            if (chunk_id != v) return false;
        } else {
            const auto it = md.find(k);
            if (it == md.end() || it->second != v) return false;
        }
    }
    return true;
}

bool hit_before(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item_id < b.item_id;
}

std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Exact: return "exact";
        case BackendKind::Hnsw: return "hnsw";
        case BackendKind::Remote: return "remote";
    }
    return "exact";
}

BackendKind parse_backend_kind(std::string_view s) {
    if (s == "exact") return BackendKind::Exact;
    if (s == "hnsw") return BackendKind::Hnsw;
    if (s == "remote") return BackendKind::Remote;
    throw Error(ErrorCode::InvalidConfig, "unknown index backend '" + std::string(s) + "'");
}

LocalIndex::LocalIndex(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw Error(ErrorCode::InvalidConfig, "index dim must be positive");
}

std::size_t LocalIndex::size() const {
    std::shared_lock lock(mu_);
    return live_;
}

ItemId LocalIndex::next_item_id() const {
    std::shared_lock lock(mu_);
    return next_id_;
}

double LocalIndex::exact_score(std::span<const float> q, std::size_t slot) const {
    const float* v = vec(slot);
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += static_cast<double>(q[i]) * v[i];
    return dot;
}

Hit LocalIndex::make_hit(std::size_t slot, double score) const {
    const auto& s = slots_[slot];
    return Hit{s.item_id, score, s.doc_id, s.chunk_id, s.metadata};
}

void LocalIndex::validate_locked(const std::vector<ItemInput>& items, const std::string* replacing) const {
    std::unordered_set<std::string> batch;
    for (const auto& it : items) {
        if (it.vector.size() != dim_) {
            throw Error(ErrorCode::DimensionMismatch, "item " + it.doc_id + ":" + it.chunk_id + " has dim " +
                                                          std::to_string(it.vector.size()) + ", index dim " +
                                                          std::to_string(dim_));
        }
        auto key = chunk_key(it.doc_id, it.chunk_id);
        const bool replaced = replacing && it.doc_id == *replacing;
        if ((!replaced && chunk_keys_.count(key)) || !batch.insert(std::move(key)).second) {
            throw Error(ErrorCode::DuplicateChunk, it.doc_id + ":" + it.chunk_id + " already indexed");
        }
    }
}

std::vector<ItemId> LocalIndex::upsert_locked(std::vector<ItemInput>& items) {
    std::vector<ItemId> ids;
    ids.reserve(items.size());
    slots_.reserve(slots_.size() + items.size());
    vectors_.reserve(vectors_.size() + items.size() * dim_);
    for (auto& it : items) {
        const std::size_t slot = slots_.size();
        const ItemId id = next_id_++;
        chunk_keys_.insert(chunk_key(it.doc_id, it.chunk_id));
        by_doc_[it.doc_id].push_back(slot);
        vectors_.insert(vectors_.end(), it.vector.begin(), it.vector.end());
        slots_.push_back(Slot{id, std::move(it.doc_id), std::move(it.chunk_id), std::move(it.metadata), true});
        ++live_;
        on_insert(slot);
        ids.push_back(id);
    }
    return ids;
}

std::vector<ItemId> LocalIndex::upsert(std::vector<ItemInput> items) {
    std::unique_lock lock(mu_);
    validate_locked(items, nullptr);
    return upsert_locked(items);
}

std::size_t LocalIndex::delete_locked(const std::string& doc_id) {
    const auto it = by_doc_.find(doc_id);
    if (it == by_doc_.end()) return 0;
    std::size_t removed = 0;
    for (std::size_t slot : it->second) {
        auto& s = slots_[slot];
        if (!s.live) continue;
        s.live = false;
        chunk_keys_.erase(chunk_key(s.doc_id, s.chunk_id));
        ++removed;
    }
    by_doc_.erase(it);
    live_ -= removed;
    return removed;
}

std::size_t LocalIndex::delete_document(const std::string& doc_id) {
    std::unique_lock lock(mu_);
    return delete_locked(doc_id);
}

std::vector<ItemId> LocalIndex::replace_document(const std::string& doc_id, std::vector<ItemInput> items) {
    std::unique_lock lock(mu_);
    for (const auto& it : items) {
        if (it.doc_id != doc_id) {
            throw Error(ErrorCode::InvalidArgument, "replace_document(" + doc_id + ") got item of " + it.doc_id);
        }
    }
    validate_locked(items, &doc_id);
    delete_locked(doc_id);
    return upsert_locked(items);
}

std::size_t LocalIndex::count_document(const std::string& doc_id) const {
    std::shared_lock lock(mu_);
    const auto it = by_doc_.find(doc_id);
    if (it == by_doc_.end()) return 0;
    return static_cast<std::size_t>(
        std::count_if(it->second.begin(), it->second.end(), [&](std::size_t s) { return slots_[s].live; }));
}

std::vector<IndexedItem> LocalIndex::items() const {
    std::shared_lock lock(mu_);
    std::vector<IndexedItem> out;
    out.reserve(live_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        const auto& s = slots_[i];
        if (!s.live) continue;
        out.push_back(IndexedItem{s.item_id, s.doc_id, s.chunk_id, std::vector<float>(vec(i), vec(i) + dim_),
                                  s.metadata});
    }
    return out;
}

void LocalIndex::restore(std::vector<IndexedItem> items, ItemId next_id) {
    std::unique_lock lock(mu_);
    if (!slots_.empty()) throw Error(ErrorCode::InvalidArgument, "restore into a non-empty index");
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.item_id < b.item_id; });
    for (auto& it : items) {
        if (it.vector.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "snapshot item has wrong dim");
        const std::size_t slot = slots_.size();
        chunk_keys_.insert(chunk_key(it.doc_id, it.chunk_id));
        by_doc_[it.doc_id].push_back(slot);
        vectors_.insert(vectors_.end(), it.vector.begin(), it.vector.end());
        slots_.push_back(Slot{it.item_id, std::move(it.doc_id), std::move(it.chunk_id), std::move(it.metadata), true});
        ++live_;
        next_id = std::max(next_id, it.item_id + 1);
        on_insert(slot);
    }
    next_id_ = next_id;
}

std::vector<std::size_t> LocalIndex::filtered_slots(const MetadataFilter& filter) const {
    std::vector<std::size_t> out;
    if (const std::string* doc = filter.doc_id()) {
        const auto it = by_doc_.find(*doc);
        if (it == by_doc_.end()) return out;
        for (std::size_t slot : it->second) {
            const auto& s = slots_[slot];
            if (s.live && filter.matches(s.doc_id, s.chunk_id, s.metadata)) out.push_back(slot);
        }
        return out;
    }
    for (std::size_t slot = 0; slot < slots_.size(); ++slot) {
        const auto& s = slots_[slot];
        if (s.live && filter.matches(s.doc_id, s.chunk_id, s.metadata)) out.push_back(slot);
    }
    return out;
}

std::vector<Hit> LocalIndex::exact_search(std::span<const float> q, std::size_t k,
                                          const std::vector<std::size_t>& slots) const {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(slots.size());
    for (std::size_t slot : slots) scored.emplace_back(exact_score(q, slot), slot);
    const auto before = [this](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return slots_[a.second].item_id < slots_[b.second].item_id;
    };
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), before);
    std::vector<Hit> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(make_hit(scored[i].second, scored[i].first));
    return out;
}

std::vector<Hit> LocalIndex::exact_search_all(std::span<const float> q, std::size_t k) const {
    std::vector<std::size_t> slots;
    slots.reserve(live_);
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (slots_[i].live) slots.push_back(i);
    }
    return exact_search(q, k, slots);
}

std::vector<Hit> LocalIndex::search(std::span<const float> q, std::size_t k, const MetadataFilter& filter) const {
    if (filter.empty()) return exact_search_all(q, k);
    return exact_search(q, k, filtered_slots(filter));
}

std::vector<Hit> LocalIndex::top_k(std::span<const float> query, std::size_t k, const MetadataFilter& filter) const {
    if (query.size() != dim_) {
        throw Error(ErrorCode::DimensionMismatch,
                    "query dim " + std::to_string(query.size()) + ", index dim " + std::to_string(dim_));
    }
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    std::shared_lock lock(mu_);
    if (live_ == 0) return {};
    return search(query, k, filter);
}

std::unique_ptr<VectorIndex> make_index(const BackendSpec& spec) {
    switch (spec.kind) {
        case BackendKind::Exact: return std::make_unique<ExactIndex>(spec.dim);
        case BackendKind::Hnsw: return std::make_unique<HnswIndex>(spec.dim, spec.hnsw);
        case BackendKind::Remote: return std::make_unique<RemoteIndex>(spec);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown backend kind");
}

}  // namespace xrchat::index
