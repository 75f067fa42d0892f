#include "xrchat/error.hpp"
#include "xrchat/eval.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

namespace xrchat::eval {

std::string normalize_claim_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        const bool word = c >= 0x80 || std::isalnum(c);
        if (!word) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    }
    return out;
}

namespace {

const std::set<std::string>& abbreviations() {
    static const std::set<std::string> a = {
        "e.g.", "i.e.", "etc.", "vs.", "cf.", "fig.", "figs.", "no.", "nos.", "approx.", "min.", "max.",
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "al.", "ca.", "resp.", "ref.", "eq.", "vol.", "pp.",
    };
    return a;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Word ending at (and including) the '.' at position dot.
bool is_abbreviation(std::string_view s, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && !is_space(s[b - 1]) && s[b - 1] != '(' && s[b - 1] != '"') --b;
    const std::string word = text::ascii_lower(s.substr(b, dot - b + 1));
    if (abbreviations().count(word)) return true;
    // Single capital initial such as "J." in a name.
    return dot - b == 1 && std::isupper(static_cast<unsigned char>(s[b]));
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    auto emit = [&](std::size_t end) {
        auto piece = text::trim(s.substr(start, end - start));
        if (!piece.empty()) out.push_back(std::move(piece));
        start = end;
    };
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i + 1;
        while (j < s.size() && (s[j] == '.' || s[j] == '!' || s[j] == '?' || s[j] == '"' || s[j] == '\'' ||
                                s[j] == ')')) {
            ++j;
        }
        if (j < s.size() && !is_space(s[j])) continue;
        if (c == '.' && j == i + 1 && is_abbreviation(s, i)) continue;
        emit(j);
        i = j - 1;
    }
    emit(s.size());
    return out;
}

std::string strip_citation_tags(std::string_view s) {
    static const std::regex re(R"(\s*\[[A-Za-z0-9_.\-]+:[A-Za-z0-9_.\-]+\])");
    return std::regex_replace(std::string(s), re, "");
}

namespace {

std::size_t token_count(const std::string& normalized) {
    if (normalized.empty()) return 0;
    return static_cast<std::size_t>(std::count(normalized.begin(), normalized.end(), ' ')) + 1;
}

std::vector<std::string> keep_claims(const std::vector<std::string>& pieces) {
    std::vector<std::string> out;
    for (const auto& p : pieces) {
        auto n = normalize_claim_text(p);
        if (token_count(n) >= kMinClaimTokens) out.push_back(std::move(n));
    }
    return out;
}

bool contains_on_token_boundary(const std::string& haystack, const std::string& needle) {
    if (needle.empty()) return false;
    std::size_t pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string::npos) {
        const bool left = pos == 0 || haystack[pos - 1] == ' ';
        const std::size_t end = pos + needle.size();
        const bool right = end == haystack.size() || haystack[end] == ' ';
        if (left && right) return true;
        ++pos;
    }
    return false;
}

}  // namespace

std::vector<std::string> RuleOracle::claims(std::string_view t) { return keep_claims(split_sentences(t)); }

bool RuleOracle::entails(std::span<const std::string> context, const std::string& claim) {
    for (const auto& c : context) {
        if (contains_on_token_boundary(normalize_claim_text(c), claim)) return true;
    }
    return false;
}

LlmOracle::LlmOracle(std::shared_ptr<llm::LlmProvider> model) : model_(std::move(model)) {
    if (!model_) throw Error(ErrorCode::InvalidConfig, "llm oracle needs a model");
}

std::vector<std::string> LlmOracle::claims(std::string_view t) {
    const std::string prompt =
        "Break the text below into short, self-contained factual claims. Output one claim per line and "
        "nothing else.\n\nText:\n" +
        std::string(t) + "\n";
    std::string reply;
    try {
        reply = model_->complete(prompt, 0.0);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::OracleUnavailable, e.what());
    }
    std::vector<std::string> lines;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line)) {
        static const std::regex marker(R"(^\s*(?:[-*]|\d+[.)])\s+)");
        lines.push_back(text::trim(std::regex_replace(line, marker, "", std::regex_constants::format_first_only)));
    }
    return keep_claims(lines);
}

bool LlmOracle::entails(std::span<const std::string> context, const std::string& claim) {
    if (context.empty()) return false;
    std::string prompt = "Context:\n";
    for (const auto& c : context) prompt += "---\n" + c + "\n";
    prompt += "---\nDoes the context support this claim? Answer yes or no.\nClaim: " + claim + "\n";
    std::string reply;
    try {
        reply = model_->complete(prompt, 0.0);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::OracleUnavailable, e.what());
    }
    const auto r = text::ascii_lower(text::trim(reply));
    return r.rfind("yes", 0) == 0;
}

std::vector<Claim> extract_claims(std::string_view t, ClaimOrigin origin, ClaimOracle& oracle) {
    if (text::trim(t).empty()) throw Error(ErrorCode::EmptyText, "cannot extract claims from empty text");
    std::vector<Claim> out;
    for (auto& c : oracle.claims(t)) out.push_back({std::move(c), origin});
    return out;
}

bool entails(std::span<const std::string> context, const Claim& claim, ClaimOracle& oracle) {
    return oracle.entails(context, claim.text);
}

EvalScores score(const QAItem& qa, std::span<const std::string> retrieved, std::string_view response,
                 ClaimOracle& oracle) {
    if (text::trim(qa.ground_truth).empty()) throw Error(ErrorCode::EmptyGroundTruth, "ground truth is empty");
    const auto gt = extract_claims(qa.ground_truth, ClaimOrigin::GroundTruth, oracle);
    if (gt.empty()) throw Error(ErrorCode::EmptyGroundTruth, "ground truth yields no claims");

    const std::string cleaned = strip_citation_tags(response);
    std::vector<Claim> resp;
    if (!text::trim(cleaned).empty()) resp = extract_claims(cleaned, ClaimOrigin::Response, oracle);

    EvalScores s;
    std::size_t recalled = 0;
    for (const auto& g : gt) recalled += entails(retrieved, g, oracle) ? 1 : 0;
    s.cr = 100.0 * static_cast<double>(recalled) / static_cast<double>(gt.size());

    if (!retrieved.empty()) {
        std::size_t relevant = 0;
        for (const auto& c : retrieved) {
            const std::span<const std::string> one(&c, 1);
            for (const auto& g : gt) {
                if (entails(one, g, oracle)) {
                    ++relevant;
                    break;
                }
            }
        }
        s.cp = 100.0 * static_cast<double>(relevant) / static_cast<double>(retrieved.size());
    }

    if (resp.empty()) {
        s.empty_response = true;
        s.self_knowledge = 100.0;
        return s;
    }
    const std::string gt_text = qa.ground_truth;
    const std::span<const std::string> gt_ctx(&gt_text, 1);
    std::size_t faithful = 0, hallucinated = 0;
    for (const auto& r : resp) {
        if (entails(retrieved, r, oracle)) {
            ++faithful;
        } else if (!entails(gt_ctx, r, oracle)) {
            ++hallucinated;
        }
    }
    const double n = static_cast<double>(resp.size());
    s.faith = 100.0 * static_cast<double>(faithful) / n;
    s.hallu = 100.0 * static_cast<double>(hallucinated) / n;
    s.self_knowledge = 100.0 * static_cast<double>(resp.size() - faithful - hallucinated) / n;
    return s;
}

EvalScores score(const QAItem& qa, std::span<const corpus::Chunk> retrieved, std::string_view response,
                 ClaimOracle& oracle) {
    std::vector<std::string> texts;
    texts.reserve(retrieved.size());
    for (const auto& c : retrieved) texts.push_back(c.text);
    return score(qa, texts, response, oracle);
}

double composite(const EvalScores& s) { return (s.cr + s.cp + (100.0 - s.hallu) + s.faith) / 4.0; }

}  // namespace xrchat::eval
