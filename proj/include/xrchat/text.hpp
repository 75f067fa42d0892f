#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 and tokenization helpers shared by ingestion, routing and evaluation.
namespace xrchat::text {

bool is_valid_utf8(std::string_view s);

// Byte offsets of every code point start, plus a final entry equal to s.size().
std::vector<std::size_t> codepoint_offsets(std::string_view s);

std::size_t codepoint_count(std::string_view s);

// ASCII-only lowercasing; multi-byte sequences pass through untouched.
std::string ascii_lower(std::string_view s);

std::string trim(std::string_view s);

// Lowercased alphanumeric runs; every other byte below 0x80 separates terms.
std::vector<std::string> terms(std::string_view s);

bool is_stopword(std::string_view term);

// terms() with stopwords removed, deduplicated, in first-seen order.
std::vector<std::string> content_terms(std::string_view s);

std::uint64_t fnv1a64(std::string_view s);

std::string sha256_hex(std::string_view s);

// Shortest "%.6g"-style rendering that always carries a decimal point ("3" -> "3.0").
std::string format_number(double v);

std::string slugify(std::string_view s);

// Hex of nbytes from the OS CSPRNG.
std::string random_hex(std::size_t nbytes);

}  // namespace xrchat::text
