#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace xrchat::corpus {

enum class SourceFormat { Plain, Markdown };

struct DocumentMetadata {
    std::string title;
    std::string author;
    std::string doc_type;
    std::string version;
    std::size_t page_count = 0;
    // Empty means derive from the title.
    std::string doc_id;
};

struct Document {
    std::string doc_id;
    std::string title;
    std::string author;
    std::string doc_type;
    std::string version;
    std::string body;
    SourceFormat format = SourceFormat::Markdown;
    std::size_t page_count = 0;
};

// Byte offsets into Document::body, half-open.
struct CharSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    bool operator==(const CharSpan&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t ordinal = 0;
    std::string text;
    std::vector<std::string> heading_path;
    CharSpan span;

    bool operator==(const Chunk&) const = default;
};

enum class ChunkStrategy { Semantic, Fixed };
enum class SemanticOverflow { SplitFixed, Error };

// Lengths are counted in Unicode code points.
struct ChunkerConfig {
    ChunkStrategy strategy = ChunkStrategy::Semantic;
    std::size_t max_chars = 1024;
    std::size_t overlap_chars = 0;
    SemanticOverflow semantic_overflow = SemanticOverflow::SplitFixed;

    // Throws InvalidConfig when max_chars == 0 or overlap_chars >= max_chars.
    void validate() const;
};

std::string_view to_string(ChunkStrategy s);
ChunkStrategy parse_strategy(std::string_view s);

// CRLF -> LF, trailing blanks stripped per line, runs of 3+ blank lines collapsed to 2.
std::string normalize_body(std::string_view raw);

std::string derive_doc_id(std::string_view title);

Document parse_document(std::string_view raw, SourceFormat format, const DocumentMetadata& meta);

std::vector<Chunk> chunk_semantic(const Document& doc, const ChunkerConfig& cfg);
std::vector<Chunk> chunk_fixed(const Document& doc, const ChunkerConfig& cfg);

// Dispatches on cfg.strategy.
std::vector<Chunk> chunk_document(const Document& doc, const ChunkerConfig& cfg);

std::string make_chunk_id(std::size_t ordinal);

// Heading lines recognised by the semantic chunker (ATX and setext, outside code fences).
struct Heading {
    std::size_t line_begin = 0;  // byte offset of the first line of the heading
    int level = 1;
    std::string text;
};
std::vector<Heading> find_headings(std::string_view body);

}  // namespace xrchat::corpus
