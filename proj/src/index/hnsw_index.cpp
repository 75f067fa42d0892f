#include "xrchat/error.hpp"
#include "xrchat/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace xrchat::index {

namespace {

// Below this many filter matches a filtered query scans the matches exactly.
constexpr std::size_t kBruteForceFilterLimit = 4096;

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct FarthestFirst {
    template <typename C>
    bool operator()(const C& a, const C& b) const {
        return a.dist < b.dist;
    }
};

struct NearestFirst {
    template <typename C>
    bool operator()(const C& a, const C& b) const {
        return a.dist > b.dist;
    }
};

}  // namespace

HnswIndex::HnswIndex(std::size_t dim, HnswParams params)
    : LocalIndex(dim), params_(params), level_mult_(0.0), rng_state_(params.seed) {
    if (params_.m < 2) throw Error(ErrorCode::InvalidConfig, "hnsw M must be at least 2");
    if (params_.ef_construction == 0 || params_.ef_search == 0) {
        throw Error(ErrorCode::InvalidConfig, "hnsw ef parameters must be positive");
    }
    level_mult_ = 1.0 / std::log(static_cast<double>(params_.m));
}

void HnswIndex::set_ef_search(std::size_t ef) {
    if (ef == 0) throw Error(ErrorCode::InvalidConfig, "ef_search must be positive");
    std::unique_lock lock(mu_);
    params_.ef_search = ef;
}

float HnswIndex::distance(const float* a, const float* b) const {
    float dot = 0.0f;
    const std::size_t n = dim_;
#pragma omp simd reduction(+ : dot)
    for (std::size_t i = 0; i < n; ++i) dot += a[i] * b[i];
    return 1.0f - dot;
}

int HnswIndex::random_level() {
    // uniform in (0, 1]
    const double u = (static_cast<double>(splitmix64(rng_state_) >> 11) + 1.0) * 0x1.0p-53;
    return static_cast<int>(std::floor(-std::log(u) * level_mult_));
}

std::vector<HnswIndex::Candidate> HnswIndex::search_layer(const float* q, std::uint32_t entry, std::size_t ef,
                                                          int layer, const MetadataFilter* filter) const {
    const auto accept = [&](std::uint32_t node) {
        if (!filter) return true;
        const auto& s = slots_[node];
        return s.live && filter->matches(s.doc_id, s.chunk_id, s.metadata);
    };

    std::vector<char> visited(links_.size(), 0);
    std::priority_queue<Candidate, std::vector<Candidate>, NearestFirst> frontier;
    std::priority_queue<Candidate, std::vector<Candidate>, FarthestFirst> results;

    const float d0 = distance(q, vec(entry));
    visited[entry] = 1;
    frontier.push({d0, entry});
    if (accept(entry)) results.push({d0, entry});
    float bound = results.empty() ? std::numeric_limits<float>::max() : d0;

    while (!frontier.empty()) {
        const Candidate cur = frontier.top();
        if (cur.dist > bound && results.size() >= ef) break;
        frontier.pop();
        const auto& adj = links_[cur.node];
        if (static_cast<std::size_t>(layer) >= adj.size()) continue;
        for (std::uint32_t nb : adj[static_cast<std::size_t>(layer)]) {
            if (visited[nb]) continue;
            visited[nb] = 1;
            const float d = distance(q, vec(nb));
            if (results.size() < ef || d < bound) {
                frontier.push({d, nb});
                if (accept(nb)) {
                    results.push({d, nb});
                    if (results.size() > ef) results.pop();
                }
                if (!results.empty()) bound = results.top().dist;
            }
        }
    }

    std::vector<Candidate> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(const float* /*base*/, std::vector<Candidate> candidates,
                                                       std::size_t m) const {
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.node < b.node;
    });
    std::vector<std::uint32_t> out;
    if (candidates.size() <= m) {
        for (const auto& c : candidates) out.push_back(c.node);
        return out;
    }
    // keep a candidate only if it is closer to the base than to every kept neighbor
    for (const auto& c : candidates) {
        if (out.size() >= m) break;
        bool keep = true;
        for (std::uint32_t r : out) {
            if (distance(vec(c.node), vec(r)) < c.dist) {
                keep = false;
                break;
            }
        }
        if (keep) out.push_back(c.node);
    }
    return out;
}

std::uint32_t HnswIndex::greedy_descend(const float* q, int top_layer, int target_layer, std::uint32_t entry) const {
    std::uint32_t cur = entry;
    float cur_d = distance(q, vec(cur));
    for (int layer = top_layer; layer > target_layer; --layer) {
        bool moved = true;
        while (moved) {
            moved = false;
            const auto& adj = links_[cur];
            if (static_cast<std::size_t>(layer) >= adj.size()) break;
            for (std::uint32_t nb : adj[static_cast<std::size_t>(layer)]) {
                const float d = distance(q, vec(nb));
                if (d < cur_d) {
                    cur_d = d;
                    cur = nb;
                    moved = true;
                }
            }
        }
    }
    return cur;
}

void HnswIndex::on_insert(std::size_t slot) {
    const auto node = static_cast<std::uint32_t>(slot);
    const int level = random_level();
    links_.emplace_back(static_cast<std::size_t>(level) + 1);
    if (max_level_ < 0) {
        entry_ = node;
        max_level_ = level;
        return;
    }

    const float* q = vec(slot);
    std::uint32_t ep = greedy_descend(q, max_level_, level, entry_);
    for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
        auto cands = search_layer(q, ep, params_.ef_construction, layer, nullptr);
        // the new node is not linked yet, so it never shows up in cands
        const std::size_t max_links = layer == 0 ? 2 * params_.m : params_.m;
        auto neighbors = select_neighbors(q, cands, params_.m);
        links_[node][static_cast<std::size_t>(layer)] = neighbors;

        for (std::uint32_t nb : neighbors) {
            auto& nb_links = links_[nb][static_cast<std::size_t>(layer)];
            nb_links.push_back(node);
            if (nb_links.size() <= max_links) continue;
            std::vector<Candidate> pool;
            pool.reserve(nb_links.size());
            for (std::uint32_t x : nb_links) pool.push_back({distance(vec(nb), vec(x)), x});
            nb_links = select_neighbors(vec(nb), std::move(pool), max_links);
        }
        if (!cands.empty()) ep = cands.front().node;
    }
    if (level > max_level_) {
        max_level_ = level;
        entry_ = node;
    }
}

std::vector<Hit> HnswIndex::search(std::span<const float> q, std::size_t k, const MetadataFilter& filter) const {
    if (!filter.empty()) {
        auto slots = filtered_slots(filter);
        if (slots.size() <= kBruteForceFilterLimit || slots.size() * 4 <= live_) return exact_search(q, k, slots);
    }
    if (max_level_ < 0) return {};

    const std::size_t ef = std::max(params_.ef_search, k);
    const std::uint32_t ep = greedy_descend(q.data(), max_level_, 0, entry_);
    const auto found = search_layer(q.data(), ep, ef, 0, &filter);

    std::vector<Hit> hits;
    hits.reserve(found.size());
    for (const auto& c : found) hits.push_back(make_hit(c.node, exact_score(q, c.node)));
    std::sort(hits.begin(), hits.end(), hit_before);
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace xrchat::index
