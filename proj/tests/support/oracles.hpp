#pragma once

// Reference implementations written from the contract, not from the library
// code. Tests compare library output against these.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace xrtest::oracle {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// UTF-8 code point starts in s.
inline std::vector<std::size_t> cp_starts(std::string_view s) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) out.push_back(i);
    }
    return out;
}

inline std::size_t cp_len(std::string_view s) { return cp_starts(s).size(); }

// Bucket counts for the hash-ngram embedder.
inline std::vector<double> ngram_counts(std::string_view text, std::size_t dim = 256) {
    std::vector<double> c(dim, 0.0);
    std::string lower;
    for (char ch : text) lower += (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
    std::size_t i = 0;
    while (i < lower.size()) {
        while (i < lower.size() && std::isspace(static_cast<unsigned char>(lower[i]))) ++i;
        std::size_t j = i;
        while (j < lower.size() && !std::isspace(static_cast<unsigned char>(lower[j]))) ++j;
        if (j > i) {
            const std::string tok = lower.substr(i, j - i);
            c[fnv1a(tok) % dim] += 1;
            auto st = cp_starts(tok);
            st.push_back(tok.size());
            for (std::size_t a = 0; a + 3 < st.size(); ++a) c[fnv1a(tok.substr(st[a], st[a + 3] - st[a])) % dim] += 1;
        }
        i = j;
    }
    return c;
}

inline std::vector<double> l2_normalized(std::vector<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
    return v;
}

// (item position, score) of the k best by dot product; ties by position.
inline std::vector<std::pair<std::size_t, double>> brute_force_top_k(const std::vector<std::vector<float>>& items,
                                                                     const std::vector<float>& q, std::size_t k) {
    std::vector<std::pair<std::size_t, double>> all;
    for (std::size_t i = 0; i < items.size(); ++i) {
        double d = 0;
        for (std::size_t j = 0; j < q.size(); ++j) d += static_cast<double>(q[j]) * static_cast<double>(items[i][j]);
        all.emplace_back(i, d);
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    all.resize(std::min(k, all.size()));
    return all;
}

// Lowercase, ASCII punctuation to blanks, single spaces.
inline std::string norm(std::string_view s) {
    std::string out;
    bool space = true;
    for (unsigned char c : s) {
        const bool keep = c >= 0x80 || std::isalnum(c);
        if (keep) {
            out += static_cast<char>(std::tolower(c));
            space = false;
        } else if (!space) {
            out += ' ';
            space = true;
        }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Claim contained in text on token boundaries after normalization.
inline bool contains_claim(std::string_view text, std::string_view claim) {
    const std::string hay = " " + norm(text) + " ";
    const std::string needle = " " + norm(claim) + " ";
    return hay.find(needle) != std::string::npos;
}

// Section spans [begin, end) of a markdown body: a new section starts at each
// ATX heading line outside code fences.
inline std::vector<std::pair<std::size_t, std::size_t>> atx_sections(std::string_view body) {
    std::vector<std::size_t> starts{0};
    bool fence = false;
    std::size_t pos = 0;
    while (pos < body.size()) {
        std::size_t eol = body.find('\n', pos);
        if (eol == std::string_view::npos) eol = body.size();
        const auto line = body.substr(pos, eol - pos);
        if (line.rfind("```", 0) == 0) fence = !fence;
        else if (!fence && !line.empty() && line[0] == '#') {
            std::size_t h = 0;
            while (h < line.size() && line[h] == '#') ++h;
            if (h <= 6 && (h == line.size() || line[h] == ' ') && pos != 0) starts.push_back(pos);
        }
        pos = eol + 1;
    }
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        out.emplace_back(starts[i], i + 1 < starts.size() ? starts[i + 1] : body.size());
    }
    return out;
}

// Fixed windows: at most n code points, cut at the last whitespace edge.
inline std::vector<std::string> fixed_windows(const std::string& body, std::size_t n) {
    auto starts = cp_starts(body);
    const std::size_t count = starts.size();
    starts.push_back(body.size());
    auto ws = [&](std::size_t off) {
        return off < body.size() && (body[off] == ' ' || body[off] == '\n' || body[off] == '\t' || body[off] == '\r');
    };
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < count) {
        std::size_t j = std::min(count, i + n);
        if (j < count) {
            std::size_t k = j;
            while (k > i && !ws(starts[k] - 1) && !ws(starts[k])) --k;
            if (k > i) j = k;
        }
        out.push_back(body.substr(starts[i], starts[j] - starts[i]));
        i = j;
    }
    return out;
}

}  // namespace xrtest::oracle
