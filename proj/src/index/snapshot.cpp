#include "xrchat/error.hpp"
#include "xrchat/vector_index.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace xrchat::index {

namespace {

constexpr char kMagic[6] = {'F', 'R', 'I', 'D', 'X', '1'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void f32(float f) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
    }
    void raw(std::string_view s) { buf_.append(s); }
    std::string& data() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
        return v;
    }
    std::string str() {
        const auto n = u32();
        return std::string(take(n));
    }
    float f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
    }
    std::string_view take(std::size_t n) {
        if (pos_ + n > data_.size()) throw Error(ErrorCode::Io, "snapshot truncated");
        auto out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_snapshot(const LocalIndex& index, const std::filesystem::path& path) {
    const auto items = index.items();
    Writer w;
    w.raw(std::string_view(kMagic, 6));
    w.u32(static_cast<std::uint32_t>(index.dim()));
    w.u8(static_cast<std::uint8_t>(index.kind()));
    w.u64(items.size());
    w.u64(index.next_item_id());
    for (const auto& it : items) {
        Writer rec;
        rec.u64(it.item_id);
        rec.str(it.doc_id);
        rec.str(it.chunk_id);
        rec.u32(static_cast<std::uint32_t>(it.metadata.size()));
        for (const auto& [k, v] : it.metadata) {
            rec.str(k);
            rec.str(v);
        }
        for (float f : it.vector) rec.f32(f);
        w.u32(static_cast<std::uint32_t>(rec.data().size()));
        w.raw(rec.data());
    }

    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
        out.flush();
        if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot rename snapshot into place: " + ec.message());
}

std::unique_ptr<LocalIndex> load_snapshot(const std::filesystem::path& path, const HnswParams& hnsw) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read snapshot " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string data = ss.str();

    Reader r(data);
    if (r.take(6) != std::string_view(kMagic, 6)) throw Error(ErrorCode::Io, path.string() + " is not an FRIDX1 snapshot");
    const std::uint32_t dim = r.u32();
    const auto kind = static_cast<BackendKind>(r.u8());
    const std::uint64_t count = r.u64();
    const std::uint64_t next_id = r.u64();

    std::vector<IndexedItem> items;
    items.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t len = r.u32();
        Reader rec(r.take(len));
        IndexedItem it;
        it.item_id = rec.u64();
        it.doc_id = rec.str();
        it.chunk_id = rec.str();
        const std::uint32_t nmeta = rec.u32();
        for (std::uint32_t m = 0; m < nmeta; ++m) {
            auto k = rec.str();
            it.metadata.emplace(std::move(k), rec.str());
        }
        it.vector.resize(dim);
        for (auto& f : it.vector) f = rec.f32();
        if (!rec.done()) throw Error(ErrorCode::Io, "snapshot record has trailing bytes");
        items.push_back(std::move(it));
    }
    if (!r.done()) throw Error(ErrorCode::Io, "snapshot has trailing bytes");

    std::unique_ptr<LocalIndex> index;
    switch (kind) {
        case BackendKind::Exact: index = std::make_unique<ExactIndex>(dim); break;
        case BackendKind::Hnsw: index = std::make_unique<HnswIndex>(dim, hnsw); break;
        default: throw Error(ErrorCode::Io, "snapshot has unsupported backend kind");
    }
    index->restore(std::move(items), next_id);
    return index;
}

}  // namespace xrchat::index
