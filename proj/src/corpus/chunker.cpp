#include "xrchat/corpus.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <algorithm>

namespace xrchat::corpus {

void ChunkerConfig::validate() const {
    if (max_chars == 0) throw Error(ErrorCode::InvalidConfig, "max_chars must be positive");
    if (overlap_chars >= max_chars) {
        throw Error(ErrorCode::InvalidConfig, "overlap_chars must be smaller than max_chars");
    }
}

std::string_view to_string(ChunkStrategy s) { return s == ChunkStrategy::Semantic ? "semantic" : "fixed"; }

ChunkStrategy parse_strategy(std::string_view s) {
    if (s == "semantic") return ChunkStrategy::Semantic;
    if (s == "fixed") return ChunkStrategy::Fixed;
    throw Error(ErrorCode::InvalidConfig, "unknown chunking strategy '" + std::string(s) + "'");
}

std::string make_chunk_id(std::size_t ordinal) { return "c" + std::to_string(ordinal); }

namespace {

bool is_ws(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Splits body[begin, end) into spans of at most max_chars code points. `cps` holds
// code point start offsets of the whole body (see text::codepoint_offsets).
std::vector<CharSpan> split_fixed(std::string_view body, const std::vector<std::size_t>& cps, std::size_t begin,
                                  std::size_t end, std::size_t max_chars, std::size_t overlap) {
    std::vector<CharSpan> spans;
    // indices into cps
    auto first = static_cast<std::size_t>(std::lower_bound(cps.begin(), cps.end(), begin) - cps.begin());
    const auto last = static_cast<std::size_t>(std::lower_bound(cps.begin(), cps.end(), end) - cps.begin());

    while (first < last) {
        if (last - first <= max_chars) {
            spans.push_back({cps[first], cps[last]});
            break;
        }
        const std::size_t limit = first + max_chars;
        std::size_t cut = 0;
        for (std::size_t p = limit; p > first; --p) {
            const std::size_t off = cps[p];
            if (is_ws(body[off - 1]) || is_ws(body[off])) {
                cut = p;
                break;
            }
        }
        if (cut == 0) cut = limit;  // single word longer than the window
        spans.push_back({cps[first], cps[cut]});
        first = (overlap > 0 && cut - overlap > first) ? cut - overlap : cut;
    }
    return spans;
}

std::string_view line_at(std::string_view body, std::size_t begin, std::size_t& next) {
    const auto nl = body.find('\n', begin);
    if (nl == std::string_view::npos) {
        next = body.size();
        return body.substr(begin);
    }
    next = nl + 1;
    return body.substr(begin, nl - begin);
}

std::size_t leading_spaces(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && line[n] == ' ') ++n;
    return n;
}

// Returns the fence character ('`' or '~') and its run length, or 0.
std::pair<char, std::size_t> fence_of(std::string_view line) {
    const auto ind = leading_spaces(line);
    if (ind > 3 || ind >= line.size()) return {0, 0};
    const char c = line[ind];
    if (c != '`' && c != '~') return {0, 0};
    std::size_t n = 0;
    while (ind + n < line.size() && line[ind + n] == c) ++n;
    return n >= 3 ? std::pair{c, n} : std::pair{char{0}, std::size_t{0}};
}

bool parse_atx(std::string_view line, int& level, std::string& out) {
    const auto ind = leading_spaces(line);
    if (ind > 3) return false;
    std::size_t n = 0;
    while (ind + n < line.size() && line[ind + n] == '#') ++n;
    if (n == 0 || n > 6) return false;
    const std::size_t rest = ind + n;
    if (rest < line.size() && line[rest] != ' ' && line[rest] != '\t') return false;
    std::string_view content = rest < line.size() ? line.substr(rest) : std::string_view{};
    std::string t = text::trim(content);
    // optional closing sequence
    auto closing = t.find_last_not_of('#');
    if (closing == std::string::npos) {
        t.clear();
    } else if (closing + 1 < t.size() && (t[closing] == ' ' || t[closing] == '\t')) {
        t = text::trim(std::string_view(t).substr(0, closing));
    }
    level = static_cast<int>(n);
    out = std::move(t);
    return true;
}

int setext_level(std::string_view line) {
    const auto ind = leading_spaces(line);
    if (ind > 3 || ind >= line.size()) return 0;
    const char c = line[ind];
    if (c != '=' && c != '-') return 0;
    std::size_t n = 0;
    std::size_t i = ind;
    while (i < line.size() && line[i] == c) {
        ++n;
        ++i;
    }
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    if (i != line.size() || n < 3) return 0;
    return c == '=' ? 1 : 2;
}

}  // namespace

std::vector<Heading> find_headings(std::string_view body) {
    struct Line {
        std::size_t begin;
        std::string_view text;
    };
    std::vector<Line> lines;
    for (std::size_t pos = 0, next = 0; pos < body.size(); pos = next) {
        lines.push_back({pos, line_at(body, pos, next)});
    }

    std::vector<Heading> out;
    char fence = 0;
    std::size_t fence_len = 0;
    bool prev_is_paragraph = false;  // previous line may carry a setext underline
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& ln = lines[i];
        const auto [fc, flen] = fence_of(ln.text);
        if (fence != 0) {
            if (fc == fence && flen >= fence_len && text::trim(ln.text).find_first_not_of(fc) == std::string::npos) {
                fence = 0;
            }
            prev_is_paragraph = false;
            continue;
        }
        if (fc != 0) {
            fence = fc;
            fence_len = flen;
            prev_is_paragraph = false;
            continue;
        }
        int level = 0;
        std::string heading;
        if (parse_atx(ln.text, level, heading)) {
            out.push_back({ln.begin, level, std::move(heading)});
            prev_is_paragraph = false;
            continue;
        }
        if (prev_is_paragraph) {
            if (const int sl = setext_level(ln.text); sl != 0) {
                const auto& para = lines[i - 1];
                out.push_back({para.begin, sl, text::trim(para.text)});
                prev_is_paragraph = false;
                continue;
            }
        }
        prev_is_paragraph = !text::trim(ln.text).empty() && leading_spaces(ln.text) <= 3;
    }
    return out;
}

std::vector<Chunk> chunk_fixed(const Document& doc, const ChunkerConfig& cfg) {
    cfg.validate();
    const auto cps = text::codepoint_offsets(doc.body);
    std::vector<Chunk> out;
    for (const auto& span : split_fixed(doc.body, cps, 0, doc.body.size(), cfg.max_chars, cfg.overlap_chars)) {
        Chunk c;
        c.ordinal = out.size();
        c.chunk_id = make_chunk_id(c.ordinal);
        c.doc_id = doc.doc_id;
        c.span = span;
        c.text = doc.body.substr(span.begin, span.end - span.begin);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<Chunk> chunk_semantic(const Document& doc, const ChunkerConfig& cfg) {
    cfg.validate();
    const std::string_view body = doc.body;
    const auto headings = find_headings(body);
    const auto cps = text::codepoint_offsets(body);

    struct Section {
        std::size_t begin;
        std::size_t end;
        std::vector<std::string> path;
    };
    std::vector<Section> sections;
    if (headings.empty() || headings.front().line_begin > 0) {
        sections.push_back({0, headings.empty() ? body.size() : headings.front().line_begin, {}});
    }
    std::vector<std::pair<int, std::string>> stack;
    for (std::size_t i = 0; i < headings.size(); ++i) {
        const auto& h = headings[i];
        while (!stack.empty() && stack.back().first >= h.level) stack.pop_back();
        stack.emplace_back(h.level, h.text);
        Section s;
        s.begin = h.line_begin;
        s.end = i + 1 < headings.size() ? headings[i + 1].line_begin : body.size();
        for (const auto& [lvl, t] : stack) s.path.push_back(t);
        sections.push_back(std::move(s));
    }

    std::vector<Chunk> out;
    auto emit = [&](const CharSpan& span, const std::vector<std::string>& path) {
        Chunk c;
        c.ordinal = out.size();
        c.chunk_id = make_chunk_id(c.ordinal);
        c.doc_id = doc.doc_id;
        c.span = span;
        c.text = doc.body.substr(span.begin, span.end - span.begin);
        c.heading_path = path;
        out.push_back(std::move(c));
    };

    for (const auto& s : sections) {
        if (s.begin >= s.end) continue;
        const auto b = static_cast<std::size_t>(std::lower_bound(cps.begin(), cps.end(), s.begin) - cps.begin());
        const auto e = static_cast<std::size_t>(std::lower_bound(cps.begin(), cps.end(), s.end) - cps.begin());
        if (e - b <= cfg.max_chars) {
            emit({s.begin, s.end}, s.path);
            continue;
        }
        if (cfg.semantic_overflow == SemanticOverflow::Error) {
            const std::string where = s.path.empty() ? std::string("(preamble)") : s.path.back();
            throw Error(ErrorCode::OversizeSection, "section '" + where + "' has " + std::to_string(e - b) +
                                                        " chars, limit " + std::to_string(cfg.max_chars));
        }
        for (const auto& span : split_fixed(body, cps, s.begin, s.end, cfg.max_chars, cfg.overlap_chars)) {
            emit(span, s.path);
        }
    }
    return out;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkerConfig& cfg) {
    return cfg.strategy == ChunkStrategy::Semantic ? chunk_semantic(doc, cfg) : chunk_fixed(doc, cfg);
}

}  // namespace xrchat::corpus
