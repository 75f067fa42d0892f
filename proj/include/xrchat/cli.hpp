#pragma once

#include "xrchat/corpus.hpp"
#include "xrchat/router.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace xrchat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// args excludes the program name. Human output goes to out, diagnostics to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in);

// Makes a running `serve` or `mock-agents` return. Also triggered by SIGINT/SIGTERM.
void request_shutdown();

// A source file plus optional metadata from "<file>.meta.json"
// ({title, author, doc_type, version, page_count, summary, keywords}).
// Without a title the first level-1 heading or the file stem is used.
router::IngestRequest load_document_file(const std::filesystem::path& path);

// Regular files of a directory in name order, skipping *.meta.json; a file
// path yields itself.
std::vector<std::filesystem::path> list_inputs(const std::filesystem::path& input);

}  // namespace xrchat::cli
