#include "xrchat/embedder.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace xrchat::embed {

namespace {

constexpr char kMagic[6] = {'F', 'R', 'E', 'C', 'C', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

}  // namespace

CachedEmbeddingProvider::CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                 std::optional<std::filesystem::path> file)
    : inner_(std::move(inner)), file_(std::move(file)) {
    if (file_) load();
}

void CachedEmbeddingProvider::load() {
    std::ifstream in(*file_, std::ios::binary);
    if (!in) return;
    char magic[6];
    if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0) {
        throw Error(ErrorCode::Io, "embedding cache " + file_->string() + " has a bad header");
    }
    // A torn trailing record (crash mid-append) is ignored.
    while (true) {
        std::uint32_t klen = 0, dim = 0;
        if (!get_u32(in, klen)) break;
        std::string key(klen, '\0');
        if (!in.read(key.data(), klen) || !get_u32(in, dim)) break;
        std::vector<float> v(dim);
        if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(dim * sizeof(float)))) break;
        cache_[std::move(key)] = std::move(v);
    }
}

void CachedEmbeddingProvider::append(const std::string& key, const std::vector<float>& v) {
    const bool fresh = !std::filesystem::exists(*file_);
    std::ofstream out(*file_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot append to embedding cache " + file_->string());
    if (fresh) out.write(kMagic, 6);
    put_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<std::vector<float>> CachedEmbeddingProvider::embed_raw(std::span<const std::string> texts) {
    const auto& pid = inner_->spec().provider_id;
    std::vector<std::string> keys;
    keys.reserve(texts.size());
    for (const auto& t : texts) keys.push_back(pid + "\n" + text::sha256_hex(t));

    std::vector<std::vector<float>> out(texts.size());
    std::vector<std::string> todo;
    std::unordered_map<std::string, std::size_t> todo_index;  // key -> position in todo
    {
        std::lock_guard lock(mu_);
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (auto it = cache_.find(keys[i]); it != cache_.end()) {
                out[i] = it->second;
                ++hits_;
            } else if (!todo_index.count(keys[i])) {
                todo_index.emplace(keys[i], todo.size());
                todo.push_back(texts[i]);
            }
        }
    }
    if (todo.empty()) return out;

    auto fresh = inner_->embed_raw(todo);
    if (fresh.size() != todo.size()) {
        throw Error(ErrorCode::ProviderUnavailable, "provider " + pid + " returned a short batch");
    }
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (!out[i].empty()) continue;
        const auto& v = fresh[todo_index.at(keys[i])];
        out[i] = v;
        // wrong-dim vectors are rejected downstream and must not be remembered
        if (v.size() != inner_->spec().dim) continue;
        if (cache_.emplace(keys[i], v).second) {
            ++misses_;
            if (file_) append(keys[i], v);
        }
    }
    return out;
}

std::size_t CachedEmbeddingProvider::size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

std::size_t CachedEmbeddingProvider::hits() const {
    std::lock_guard lock(mu_);
    return hits_;
}

std::size_t CachedEmbeddingProvider::misses() const {
    std::lock_guard lock(mu_);
    return misses_;
}

}  // namespace xrchat::embed
