#include "xrchat/error.hpp"
#include "xrchat/router.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <unordered_map>
#include <unordered_set>

namespace xrchat::router {

using nlohmann::json;

std::string tool_id_for(std::string_view doc_id) { return "rag:" + std::string(doc_id); }

json to_json(const ToolSpec& t) {
    return {
        {"tool_id", t.tool_id},   {"doc_id", t.doc_id},     {"title", t.title},
        {"version", t.version},   {"summary", t.summary},   {"keywords", t.keywords},
        {"created_at", to_iso8601(t.created_at)},
    };
}

ToolSpec tool_from_json(const json& j) {
    ToolSpec t;
    t.tool_id = j.at("tool_id").get<std::string>();
    t.doc_id = j.at("doc_id").get<std::string>();
    t.title = j.at("title").get<std::string>();
    t.version = j.value("version", "");
    t.summary = j.at("summary").get<std::string>();
    t.keywords = j.value("keywords", std::vector<std::string>{});
    const auto at = parse_iso8601(j.value("created_at", ""));
    if (!at) throw Error(ErrorCode::BadPayload, "tool " + t.tool_id + " has a malformed created_at");
    t.created_at = *at;
    return t;
}

namespace {

bool is_fence(std::string_view line) {
    const auto t = text::trim(line);
    return t.rfind("```", 0) == 0 || t.rfind("~~~", 0) == 0;
}

bool is_setext_underline(std::string_view line) {
    const auto t = text::trim(line);
    if (t.size() < 3) return false;
    return std::all_of(t.begin(), t.end(), [](char c) { return c == '='; }) ||
           std::all_of(t.begin(), t.end(), [](char c) { return c == '-'; });
}

std::vector<std::string_view> lines_of(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto nl = s.find('\n', pos);
        const auto end = nl == std::string_view::npos ? s.size() : nl;
        out.push_back(s.substr(pos, end - pos));
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

// Cuts at a word boundary so the result has at most max_chars code points.
std::string clip_words(std::string_view s, std::size_t max_chars) {
    const auto offs = text::codepoint_offsets(s);
    if (offs.size() - 1 <= max_chars) return std::string(s);
    std::size_t cut = offs[max_chars];
    const auto space = s.substr(0, cut).find_last_of(" \n\t");
    if (space != std::string_view::npos && space > cut / 2) cut = space;
    return text::trim(s.substr(0, cut));
}

}  // namespace

std::string derive_summary(const corpus::Document& doc, std::size_t max_chars) {
    max_chars = std::min(max_chars, kMaxSummaryChars);
    const auto headings = corpus::find_headings(doc.body);
    std::unordered_set<std::size_t> heading_lines;
    for (const auto& h : headings) heading_lines.insert(h.line_begin);

    std::string prose;
    bool in_fence = false;
    const auto lines = lines_of(doc.body);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = lines[i];
        const std::size_t begin = offset;
        offset += line.size() + 1;
        if (is_fence(line)) {
            in_fence = !in_fence;
            continue;
        }
        if (in_fence || heading_lines.count(begin)) continue;
        if (is_setext_underline(line) && i > 0 && !text::trim(lines[i - 1]).empty()) continue;
        const auto t = text::trim(line);
        if (t.empty()) continue;
        if (!prose.empty()) prose += ' ';
        prose += t;
        if (text::codepoint_count(prose) > max_chars) break;
    }
    std::string summary = clip_words(prose, max_chars);
    if (summary.empty()) summary = clip_words(doc.title, max_chars);
    return summary;
}

std::vector<std::string> derive_keywords(const corpus::Document& doc, std::size_t limit) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    auto add = [&](const std::string& t) {
        if (out.size() < limit && t.size() > 1 && seen.insert(t).second) out.push_back(t);
    };
    for (const auto& t : text::content_terms(doc.title)) add(t);
    for (const auto& h : corpus::find_headings(doc.body)) {
        for (const auto& t : text::content_terms(h.text)) add(t);
    }

    std::unordered_map<std::string, std::size_t> freq;
    std::vector<std::string> order;
    for (const auto& t : text::terms(doc.body)) {
        if (t.size() < 3 || text::is_stopword(t)) continue;
        if (std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) continue;
        if (freq[t]++ == 0) order.push_back(t);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::string& a, const std::string& b) { return freq[a] > freq[b]; });
    for (const auto& t : order) add(t);
    return out;
}

ToolSpec ToolRegistry::register_tool(const corpus::Document& doc, std::string summary,
                                     std::vector<std::string> keywords, const index::VectorIndex& index) {
    summary = text::trim(summary);
    if (summary.empty()) throw Error(ErrorCode::InvalidArgument, "tool summary must be non-empty");
    if (text::codepoint_count(summary) > kMaxSummaryChars) {
        throw Error(ErrorCode::InvalidArgument, "tool summary exceeds 1000 characters");
    }
    if (index.count_document(doc.doc_id) == 0) {
        throw Error(ErrorCode::UnknownDocument, "document " + doc.doc_id + " is not in the index");
    }
    ToolSpec spec;
    spec.doc_id = doc.doc_id;
    spec.tool_id = tool_id_for(doc.doc_id);
    spec.title = doc.title;
    spec.version = doc.version;
    spec.summary = std::move(summary);
    for (auto& k : keywords) {
        auto t = text::trim(k);
        if (!t.empty()) spec.keywords.push_back(std::move(t));
    }
    spec.created_at = std::chrono::system_clock::now();

    std::unique_lock lock(mu_);
    tools_[spec.tool_id] = spec;
    return spec;
}

void ToolRegistry::restore(ToolSpec spec) {
    std::unique_lock lock(mu_);
    tools_[spec.tool_id] = std::move(spec);
}

bool ToolRegistry::remove_document(const std::string& doc_id) {
    std::unique_lock lock(mu_);
    return tools_.erase(tool_id_for(doc_id)) != 0;
}

std::vector<ToolSpec> ToolRegistry::list() const {
    std::shared_lock lock(mu_);
    std::vector<ToolSpec> out;
    out.reserve(tools_.size());
    for (const auto& [id, t] : tools_) out.push_back(t);
    return out;
}

std::optional<ToolSpec> ToolRegistry::find(const std::string& tool_id) const {
    std::shared_lock lock(mu_);
    auto it = tools_.find(tool_id);
    if (it == tools_.end()) return std::nullopt;
    return it->second;
}

std::size_t ToolRegistry::size() const {
    std::shared_lock lock(mu_);
    return tools_.size();
}

void ToolRegistry::save(const std::filesystem::path& path) const {
    json arr = json::array();
    for (const auto& t : list()) arr.push_back(to_json(t));
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
        out << arr.dump(2) << '\n';
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void ToolRegistry::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    json arr;
    try {
        arr = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadPayload, path.string() + ": " + e.what());
    }
    std::map<std::string, ToolSpec> loaded;
    for (const auto& j : arr) {
        auto t = tool_from_json(j);
        loaded[t.tool_id] = std::move(t);
    }
    std::unique_lock lock(mu_);
    tools_ = std::move(loaded);
}

}  // namespace xrchat::router
