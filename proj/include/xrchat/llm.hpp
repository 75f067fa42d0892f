#pragma once

#include <chrono>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace xrchat::llm {

// Text-in/text-out completion. Implementations throw
// Error(ProviderUnavailable) when the backend cannot answer.
class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    virtual std::string id() const = 0;
    virtual std::string complete(const std::string& prompt, double temperature) = 0;
    virtual bool reachable() { return true; }
};

// Markers used by the default prompt template. The offline providers below
// locate excerpts and the question through them.
inline constexpr std::string_view kExcerptOpen = "<<< ";
inline constexpr std::string_view kExcerptClose = ">>>";
inline constexpr std::string_view kQuestionHeading = "### Question";

struct PromptExcerpt {
    std::string tag;  // "doc_id:chunk_id"
    std::string text;
};

// Excerpts in prompt order.
std::vector<PromptExcerpt> parse_prompt_excerpts(std::string_view prompt);
// Text after the question heading, trimmed; empty if absent.
std::string parse_prompt_question(std::string_view prompt);

// Replies with one excerpt followed by its citation tag: the first excerpt
// containing the question verbatim (case-insensitive), else the first excerpt.
// With no excerpts it replies with a fixed apology and no tag.
class EchoLlm final : public LlmProvider {
public:
    std::string id() const override { return "mock:echo"; }
    std::string complete(const std::string& prompt, double temperature) override;
};

// Concatenates every excerpt in prompt order, each followed by its tag.
class ExtractiveLlm final : public LlmProvider {
public:
    std::string id() const override { return "mock:extractive"; }
    std::string complete(const std::string& prompt, double temperature) override;
};

// Returns queued replies in order (the last one repeats); records prompts.
class ScriptedLlm final : public LlmProvider {
public:
    explicit ScriptedLlm(std::vector<std::string> replies);
    // Called instead of the queue when set.
    explicit ScriptedLlm(std::function<std::string(const std::string&)> fn);

    std::string id() const override { return "mock:scripted"; }
    std::string complete(const std::string& prompt, double temperature) override;

    std::vector<std::string> prompts() const;
    void set_unavailable(bool down);

private:
    mutable std::mutex mu_;
    std::deque<std::string> replies_;
    std::string last_;
    std::function<std::string(const std::string&)> fn_;
    std::vector<std::string> prompts_;
    bool down_ = false;
};

struct RemoteLlmSpec {
    std::string endpoint;  // base URL of an OpenAI-compatible API, e.g. http://host:8000/v1
    std::string model;
    std::string auth_env_var;
    int attempts = 4;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds request_timeout{60000};
};

// POST {endpoint}/chat/completions with a single user message.
class RemoteLlm final : public LlmProvider {
public:
    explicit RemoteLlm(RemoteLlmSpec spec);
    std::string id() const override { return "remote:" + spec_.model; }
    std::string complete(const std::string& prompt, double temperature) override;
    bool reachable() override;

private:
    RemoteLlmSpec spec_;
};

}  // namespace xrchat::llm
