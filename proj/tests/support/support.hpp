#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace xrtest {

namespace fs = std::filesystem;

inline fs::path fixtures_dir() { return fs::path(XRCHAT_FIXTURES_DIR); }

// Removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        const auto tag = std::to_string(rd()) + std::to_string(rd());
        path_ = fs::temp_directory_path() / ("xrchat-test-" + tag);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

// path -> contents for every regular file below root.
inline std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    if (!fs::exists(root)) return out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

// Markdown with fuzzed headings, paragraphs, code fences, setext headings,
// CRLF-free and already normalized-looking, roughly target_bytes long.
inline std::string random_markdown(std::mt19937_64& rng, std::size_t target_bytes) {
    static const std::vector<std::string> words = {
        "pump", "seal", "torque", "valve", "bearing", "grease", "bolt", "flange", "sensor", "motor",
        "alignment", "shim", "coupling", "pressure", "bar", "check", "replace", "inspect", "the", "a",
        "of", "to", "and", "Nm", "40", "0.5", "mm", "überprüfen", "température", "軸受", "x"};
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    std::string out;
    if (pick(3) == 0) out += "Preamble text before any heading.\n\n";
    while (out.size() < target_bytes) {
        const auto kind = pick(10);
        if (kind < 3) {
            const int level = static_cast<int>(pick(6)) + 1;
            out += std::string(level, '#') + " " + words[pick(words.size())] + " " + words[pick(words.size())] + "\n\n";
        } else if (kind == 3) {
            out += words[pick(words.size())] + " heading\n" + (pick(2) ? "===" : "---") + "\n\n";
        } else if (kind == 4) {
            out += "```\n# not a heading\ncode " + words[pick(words.size())] + "\n```\n\n";
        } else if (kind == 5 && pick(4) == 0) {
            // one long word to force hard splits
            out += std::string(200 + pick(1500), 'w') + "\n\n";
        } else {
            const auto n = 5 + pick(120);
            for (std::size_t i = 0; i < n; ++i) {
                out += words[pick(words.size())];
                out += (pick(12) == 0) ? ".\n" : " ";
            }
            out += "\n\n";
        }
    }
    return out;
}

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> v(dim);
    double n = 0;
    for (auto& x : v) {
        x = nd(rng);
        n += x * x;
    }
    n = std::sqrt(n);
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

}  // namespace xrtest
