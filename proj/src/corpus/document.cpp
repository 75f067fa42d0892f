#include "xrchat/corpus.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <cstdio>

namespace xrchat::corpus {

namespace {

bool is_blank_char(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

}  // namespace

std::string normalize_body(std::string_view raw) {
    if (raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);

    std::string out;
    out.reserve(raw.size());
    int blank_run = 0;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const auto nl = raw.find('\n', pos);
        const bool has_nl = nl != std::string_view::npos;
        std::string_view line = raw.substr(pos, has_nl ? nl - pos : std::string_view::npos);
        while (!line.empty() && is_blank_char(line.back())) line.remove_suffix(1);

        if (line.empty()) {
            ++blank_run;
        } else {
            blank_run = 0;
        }
        if (blank_run <= 2) {
            out.append(line);
            if (has_nl) out.push_back('\n');
        }
        if (!has_nl) break;
        pos = nl + 1;
    }
    return out;
}

std::string derive_doc_id(std::string_view title) {
    std::string slug = text::slugify(title);
    if (slug.size() > 48) {
        slug.resize(48);
        while (!slug.empty() && slug.back() == '-') slug.pop_back();
    }
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "%06llx",
                  static_cast<unsigned long long>(text::fnv1a64(title) & 0xFFFFFFULL));
    return slug.empty() ? std::string("doc-") + suffix : slug + "-" + suffix;
}

Document parse_document(std::string_view raw, SourceFormat format, const DocumentMetadata& meta) {
    if (text::trim(meta.title).empty()) {
        throw Error(ErrorCode::InvalidArgument, "document title must be non-empty");
    }
    if (!text::is_valid_utf8(raw)) {
        throw Error(ErrorCode::InvalidEncoding, "document '" + meta.title + "' is not valid UTF-8");
    }
    Document doc;
    doc.body = normalize_body(raw);
    if (text::trim(doc.body).empty()) {
        throw Error(ErrorCode::EmptyDocument, "document '" + meta.title + "' is empty after normalization");
    }
    doc.title = meta.title;
    doc.author = meta.author;
    doc.doc_type = meta.doc_type;
    doc.version = meta.version;
    doc.page_count = meta.page_count;
    doc.format = format;
    doc.doc_id = meta.doc_id.empty() ? derive_doc_id(meta.title) : meta.doc_id;
    return doc;
}

}  // namespace xrchat::corpus
