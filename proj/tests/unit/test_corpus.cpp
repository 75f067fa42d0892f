#include "oracles.hpp"
#include "support.hpp"

#include "xrchat/corpus.hpp"
#include "xrchat/error.hpp"
#include "xrchat/text.hpp"

#include <catch_amalgamated.hpp>

using namespace xrchat;
using namespace xrchat::corpus;
namespace oracle = xrtest::oracle;
using Catch::Matchers::ContainsSubstring;

namespace {

Document md(std::string_view raw, std::string title = "M") {
    DocumentMetadata meta;
    meta.title = std::move(title);
    return parse_document(raw, SourceFormat::Markdown, meta);
}

ChunkerConfig cfg(ChunkStrategy s, std::size_t max_chars, std::size_t overlap = 0) {
    ChunkerConfig c;
    c.strategy = s;
    c.max_chars = max_chars;
    c.overlap_chars = overlap;
    return c;
}

std::string concat(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) out += c.text;
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::Io;
}

}  // namespace

TEST_CASE("parse_document normalizes newlines and trailing blanks") {
    const auto d = md("# A\r\nx\r\n");
    CHECK(d.body == "# A\nx\n");

    const auto d2 = md("a  \t\nb\n\n\n\n\nc\n");
    CHECK(d2.body == "a\nb\n\n\nc\n");
}

TEST_CASE("parse_document errors") {
    DocumentMetadata meta;
    meta.title = "T";
    CHECK(code_of([&] { parse_document("", SourceFormat::Plain, meta); }) == ErrorCode::EmptyDocument);
    CHECK(code_of([&] { parse_document(" \n\t\n", SourceFormat::Plain, meta); }) == ErrorCode::EmptyDocument);
    CHECK(code_of([&] { parse_document("ok\xff\xfe", SourceFormat::Plain, meta); }) == ErrorCode::InvalidEncoding);
    meta.title = "  ";
    CHECK(code_of([&] { parse_document("body", SourceFormat::Plain, meta); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("parse_document passes page_count and metadata through") {
    DocumentMetadata meta;
    meta.title = "Converted Manual";
    meta.author = "QA";
    meta.doc_type = "manual";
    meta.version = "3";
    meta.page_count = 74;
    const auto d = parse_document("# Intro\ntext\n", SourceFormat::Markdown, meta);
    CHECK(d.page_count == 74);
    CHECK(d.author == "QA");
    CHECK(d.doc_type == "manual");
    CHECK(d.version == "3");
    CHECK_FALSE(d.doc_id.empty());
    CHECK(d.doc_id == derive_doc_id("Converted Manual"));
    CHECK(derive_doc_id("Converted Manual") != derive_doc_id("Converted Manual 2"));
}

TEST_CASE("semantic chunks follow headings") {
    const auto d = md("# A\npa\n## B\npb\n# C\npc");
    const auto chunks = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1024));
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].heading_path == std::vector<std::string>{"A"});
    CHECK(chunks[1].heading_path == std::vector<std::string>{"A", "B"});
    CHECK(chunks[2].heading_path == std::vector<std::string>{"C"});
    CHECK(concat(chunks) == d.body);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        CHECK(chunks[i].ordinal == i);
        CHECK(chunks[i].doc_id == d.doc_id);
    }
}

TEST_CASE("semantic chunking without headings yields one chunk") {
    const std::string body(100, 'x');
    const auto d = md(body);
    const auto chunks = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1024));
    REQUIRE(chunks.size() == 1);
    CHECK(chunks[0].heading_path.empty());
    CHECK(chunks[0].text == d.body);
}

TEST_CASE("oversize section is sub-split and keeps its heading path") {
    std::string section = "## Big\n";
    while (oracle::cp_len(section) < 3000) section += "word ";
    section.resize(3000);
    const auto d = md("# Top\n" + section);
    const auto c = cfg(ChunkStrategy::Semantic, 1024);
    const auto chunks = chunk_semantic(d, c);

    std::string big_text;
    std::size_t big_chunks = 0;
    for (const auto& ch : chunks) {
        CHECK(oracle::cp_len(ch.text) <= 1024);
        if (ch.heading_path == std::vector<std::string>{"Top", "Big"}) {
            big_text += ch.text;
            ++big_chunks;
        }
    }
    CHECK(big_chunks == 3);
    CHECK(big_text == d.body.substr(d.body.find("## Big")));

    auto strict = c;
    strict.semantic_overflow = SemanticOverflow::Error;
    CHECK(code_of([&] { chunk_semantic(d, strict); }) == ErrorCode::OversizeSection);
}

TEST_CASE("setext headings and fenced code") {
    const auto d = md("Title\n=====\nintro\n\nPart\n----\nbody\n```\n# not a heading\n```\ntail\n");
    const auto chunks = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1024));
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].heading_path == std::vector<std::string>{"Title"});
    CHECK(chunks[1].heading_path == std::vector<std::string>{"Title", "Part"});
    CHECK_THAT(chunks[1].text, ContainsSubstring("# not a heading"));
}

TEST_CASE("preamble before the first heading is its own chunk") {
    const auto d = md("intro line\n\n# A\nbody\n");
    const auto chunks = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1024));
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].text == "intro line\n\n");
    CHECK(chunks[0].heading_path.empty());
}

TEST_CASE("fixed chunking of 4-char words") {
    std::string body;
    while (body.size() < 2048) body += "abc ";
    body.resize(2047);
    body += "d";
    const auto d = md(body);
    const auto chunks = chunk_fixed(d, cfg(ChunkStrategy::Fixed, 1024));
    CHECK(chunks.size() >= 2);
    CHECK(chunks.size() <= 3);
    for (const auto& c : chunks) CHECK(oracle::cp_len(c.text) <= 1024);
    CHECK(concat(chunks) == d.body);
    // split at word boundaries: no chunk except the last ends mid-word
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
        const char last = chunks[i].text.back();
        const char next = chunks[i + 1].text.front();
        CHECK((last == ' ' || next == ' '));
    }
}

TEST_CASE("fixed chunking short body and hard split") {
    const auto d = md("short body");
    const auto one = chunk_fixed(d, cfg(ChunkStrategy::Fixed, 1024));
    REQUIRE(one.size() == 1);
    CHECK(one[0].text == d.body);

    const auto w = md(std::string(1500, 'q'));
    const auto hard = chunk_fixed(w, cfg(ChunkStrategy::Fixed, 1024));
    REQUIRE(hard.size() == 2);
    CHECK(hard[0].text.size() == 1024);
    CHECK(hard[0].span == CharSpan{0, 1024});
    CHECK(hard[1].span.begin == 1024);
}

TEST_CASE("fixed chunking counts code points, not bytes") {
    std::string body;
    for (int i = 0; i < 600; ++i) body += "\xc3\xa9";  // é, 2 bytes each
    const auto d = md(body);
    const auto chunks = chunk_fixed(d, cfg(ChunkStrategy::Fixed, 500));
    REQUIRE(chunks.size() == 2);
    CHECK(oracle::cp_len(chunks[0].text) == 500);
    CHECK(text::is_valid_utf8(chunks[0].text));
    CHECK(text::is_valid_utf8(chunks[1].text));
}

TEST_CASE("overlap shares text between consecutive chunks") {
    std::string body;
    for (int i = 0; i < 400; ++i) body += "tok" + std::to_string(i % 10) + " ";
    const auto d = md(body);
    const auto chunks = chunk_fixed(d, cfg(ChunkStrategy::Fixed, 200, 50));
    REQUIRE(chunks.size() > 2);
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
        CHECK(oracle::cp_len(chunks[i].text) <= 200);
        CHECK(chunks[i + 1].span.begin < chunks[i].span.end);
        CHECK(chunks[i].span.end - chunks[i + 1].span.begin <= 50);
    }
    CHECK(chunks.back().span.end == d.body.size());
}

TEST_CASE("chunker config validation") {
    CHECK(code_of([] { cfg(ChunkStrategy::Fixed, 0).validate(); }) == ErrorCode::InvalidConfig);
    CHECK(code_of([] { cfg(ChunkStrategy::Fixed, 10, 10).validate(); }) == ErrorCode::InvalidConfig);
    CHECK_NOTHROW(cfg(ChunkStrategy::Fixed, 2028).validate());
    CHECK(parse_strategy("fixed") == ChunkStrategy::Fixed);
    CHECK(parse_strategy("semantic") == ChunkStrategy::Semantic);
    CHECK(code_of([] { parse_strategy("tokens"); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("chunking properties on random markdown") {
    std::mt19937_64 rng(GENERATE(1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u));
    const auto raw = xrtest::random_markdown(rng, 2000 + rng() % 30000);
    const auto d = md(raw);
    const std::size_t max_chars = GENERATE(64u, 333u, 1024u, 2028u);

    for (auto strategy : {ChunkStrategy::Semantic, ChunkStrategy::Fixed}) {
        const auto c = cfg(strategy, max_chars);
        const auto chunks = chunk_document(d, c);
        CHECK(concat(chunks) == d.body);
        std::size_t pos = 0;
        for (const auto& ch : chunks) {
            CHECK_FALSE(ch.text.empty());
            CHECK(oracle::cp_len(ch.text) <= max_chars);
            CHECK(ch.span.begin == pos);
            CHECK(ch.span.end == pos + ch.text.size());
            CHECK(d.body.substr(ch.span.begin, ch.text.size()) == ch.text);
            pos = ch.span.end;
        }
        CHECK(chunks == chunk_document(d, c));
    }

    // heading alignment: each semantic section starts at a heading line or 0
    const auto headings = find_headings(d.body);
    const auto sem = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1u << 30));
    for (const auto& ch : sem) {
        const bool at_heading = std::any_of(headings.begin(), headings.end(),
                                            [&](const Heading& h) { return h.line_begin == ch.span.begin; });
        CHECK((ch.span.begin == 0 || at_heading));
    }
}

TEST_CASE("semantic sections agree with an independent ATX scanner") {
    // Only ATX headings, no setext or stray '#' lines, so the scanner is exact.
    std::mt19937_64 rng(99);
    for (int round = 0; round < 20; ++round) {
        std::string raw;
        const int sections = 1 + static_cast<int>(rng() % 8);
        for (int s = 0; s < sections; ++s) {
            raw += std::string(1 + rng() % 4, '#') + " heading " + std::to_string(s) + "\n";
            const int lines = static_cast<int>(rng() % 5);
            for (int l = 0; l < lines; ++l) raw += "line " + std::to_string(rng() % 1000) + " of text\n";
        }
        const auto d = md(raw);
        const auto sem = chunk_semantic(d, cfg(ChunkStrategy::Semantic, 1u << 30));
        const auto expect = oracle::atx_sections(d.body);
        REQUIRE(sem.size() == expect.size());
        for (std::size_t i = 0; i < sem.size(); ++i) {
            CHECK(sem[i].span.begin == expect[i].first);
            CHECK(sem[i].span.end == expect[i].second);
        }
    }
}
