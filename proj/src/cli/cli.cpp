#include "xrchat/cli.hpp"
#include "xrchat/config.hpp"
#include "xrchat/error.hpp"
#include "xrchat/eval.hpp"
#include "xrchat/service.hpp"
#include "xrchat/text.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace xrchat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_shutdown{false};

extern "C" void on_signal(int) { g_shutdown = true; }

void wait_for_shutdown() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_shutdown) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::Io, "cannot read " + p.string());
    return ss.str();
}

bool is_markdown(const fs::path& p) {
    const auto ext = text::ascii_lower(p.extension().string());
    return ext == ".md" || ext == ".markdown";
}

}  // namespace

void request_shutdown() { g_shutdown = true; }

router::IngestRequest load_document_file(const fs::path& path) {
    router::IngestRequest req;
    req.raw = read_file(path);
    req.format = is_markdown(path) ? corpus::SourceFormat::Markdown : corpus::SourceFormat::Plain;

    const fs::path meta_path = path.string() + ".meta.json";
    if (fs::exists(meta_path)) {
        json m;
        try {
            m = json::parse(read_file(meta_path));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::BadPayload, meta_path.string() + ": " + e.what());
        }
        if (!m.is_object()) throw Error(ErrorCode::BadPayload, meta_path.string() + " must hold an object");
        req.metadata.title = m.value("title", "");
        req.metadata.author = m.value("author", "");
        req.metadata.doc_type = m.value("doc_type", "");
        req.metadata.version = m.value("version", "");
        req.metadata.page_count = m.value("page_count", std::size_t{0});
        if (m.contains("summary") && m["summary"].is_string()) req.summary = m["summary"].get<std::string>();
        if (m.contains("keywords") && m["keywords"].is_array()) {
            req.keywords = m["keywords"].get<std::vector<std::string>>();
        }
    }
    if (req.metadata.title.empty() && req.format == corpus::SourceFormat::Markdown &&
        text::is_valid_utf8(req.raw)) {
        for (const auto& h : corpus::find_headings(corpus::normalize_body(req.raw))) {
            if (h.level == 1) {
                req.metadata.title = h.text;
                break;
            }
        }
    }
    if (req.metadata.title.empty()) req.metadata.title = path.stem().string();
    return req;
}

std::vector<fs::path> list_inputs(const fs::path& input) {
    std::error_code ec;
    if (fs::is_regular_file(input, ec)) return {input};
    if (!fs::is_directory(input, ec)) throw Error(ErrorCode::Io, "cannot read " + input.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(input)) {
        if (!e.is_regular_file()) continue;
        const auto name = e.path().filename().string();
        if (name.ends_with(".meta.json") || name.starts_with(".")) continue;
        out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

struct Common {
    std::string config;
    std::vector<std::string> sets;

    config::Overrides overrides;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config,-c", config, "Config file (.toml or .json)");
        cmd->add_option("--set", sets, "Override a config key, e.g. --set chat.k=8")->type_name("KEY=VALUE");
    }

    config::ServiceConfig load() {
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw Error(ErrorCode::InvalidConfig, "--set expects KEY=VALUE, got '" + s + "'");
            }
            overrides.values[s.substr(0, eq)] = s.substr(eq + 1);
        }
        if (config.empty()) return config::load(nullptr, overrides);
        const fs::path p(config);
        if (!fs::exists(p)) throw Error(ErrorCode::InvalidConfig, "config file " + config + " does not exist");
        return config::load(&p, overrides);
    }
};

void put_flag(config::Overrides& o, const std::string& key, const std::string& value) {
    if (!value.empty()) o.values[key] = value;
}

int cmd_ingest(Common& common, const std::string& input, const std::string& strategy, const std::string& max_chars,
               const std::string& data_dir, std::ostream& out, std::ostream& err) {
    put_flag(common.overrides, "chunker.strategy", strategy);
    put_flag(common.overrides, "chunker.max_chars", max_chars);
    put_flag(common.overrides, "data_dir", data_dir);
    const auto cfg = common.load();
    if (cfg.data_dir.empty()) throw Error(ErrorCode::InvalidConfig, "ingest needs data_dir (config, XRCHAT_DATA_DIR or --data-dir)");

    std::vector<fs::path> files;
    try {
        files = list_inputs(input);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    auto rt = config::build_runtime(cfg);
    std::size_t failed = 0;
    for (const auto& f : files) {
        try {
            const auto r = rt.engine->ingest(load_document_file(f));
            out << json{{"path", f.string()}, {"doc_id", r.doc_id}, {"chunks", r.chunk_count}, {"tool_id", r.tool_id}}
                       .dump()
                << "\n";
        } catch (const std::exception& e) {
            ++failed;
            err << "error: " << f.string() << ": " << e.what() << "\n";
        }
    }
    {
        std::lock_guard lock(rt.engine->ingest_mutex());
        rt.persist();
    }
    if (files.empty()) {
        err << "error: no input files under " << input << "\n";
        return kExitRuntime;
    }
    return failed ? kExitRuntime : kExitOk;
}

int cmd_bench(Common& common, const std::string& qa_path, const std::string& sweep, const std::string& out_dir,
              const std::string& corpus_dir, std::ostream& out, std::ostream& err) {
    put_flag(common.overrides, "bench.corpus", corpus_dir);
    const auto cfg = common.load();
    const auto axis = eval::parse_sweep_axis(sweep);

    std::vector<eval::QAItem> qa;
    try {
        qa = eval::load_qa(qa_path);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    if (qa.empty()) {
        err << "error: no QA items in " << qa_path << "\n";
        return kExitUsage;
    }
    if (cfg.bench_corpus.empty()) throw Error(ErrorCode::InvalidConfig, "bench needs a corpus (bench.corpus or --corpus)");

    std::vector<corpus::Document> docs;
    for (const auto& f : list_inputs(cfg.bench_corpus)) {
        const auto req = load_document_file(f);
        docs.push_back(corpus::parse_document(req.raw, req.format, req.metadata));
    }

    eval::BenchConfig base;
    base.k = cfg.bench_k;
    base.chunker = cfg.chat.chunker;
    base.embedding = cfg.embedding;
    base.store = cfg.index;
    base.store.dim = cfg.embedding.dim;

    std::unique_ptr<eval::ClaimOracle> oracle;
    if (cfg.bench_oracle == "llm") {
        oracle = std::make_unique<eval::LlmOracle>(config::make_llm(cfg.llm));
    } else {
        oracle = std::make_unique<eval::RuleOracle>();
    }
    std::shared_ptr<llm::LlmProvider> generator;
    if (cfg.bench_generator == "llm") generator = config::make_llm(cfg.llm);

    const auto report =
        eval::run_bench(docs, qa, axis, eval::default_variants(axis, base), base, *oracle, generator.get());

    fs::create_directories(out_dir);
    {
        std::ofstream j(fs::path(out_dir) / "report.json", std::ios::binary | std::ios::trunc);
        j << eval::to_json(report).dump(2) << "\n";
        if (!j) throw Error(ErrorCode::Io, "cannot write report.json in " + out_dir);
    }
    const auto md = eval::to_markdown(report);
    {
        std::ofstream m(fs::path(out_dir) / "report.md", std::ios::binary | std::ios::trunc);
        m << md;
        if (!m) throw Error(ErrorCode::Io, "cannot write report.md in " + out_dir);
    }
    out << md;
    for (const auto& row : report.rows) {
        if (row.failed) err << "error: variant " << row.label << " failed: " << row.error << "\n";
    }
    return report.any_failed() ? kExitRuntime : kExitOk;
}

int cmd_chat(Common& common, const std::string& session, std::ostream& out, std::ostream& err, std::istream& in) {
    const auto cfg = common.load();
    auto rt = config::build_runtime(cfg);
    std::string id = session;
    if (id.empty()) {
        id = rt.sessions->create().session_id;
        out << "session " << id << "\n";
    } else if (!rt.sessions->exists(id)) {
        err << "error: no session '" << id << "'\n";
        return kExitRuntime;
    }

    std::string line;
    while (std::getline(in, line)) {
        const auto q = text::trim(line);
        if (q.empty()) continue;
        if (q == "/quit" || q == "/exit") break;
        try {
            const auto r = rt.engine->answer(id, q);
            out << r.turn.text << "\n";
            if (!r.turn.citations.empty()) {
                out << "Sources:\n";
                for (const auto& c : r.turn.citations) {
                    const auto tool = rt.engine->tools().find(router::tool_id_for(c.doc_id));
                    out << "- " << (tool ? tool->title : c.doc_id) << " (" << c.doc_id << ":" << c.chunk_id << ")\n";
                }
            }
            out << std::flush;
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
        }
    }
    return kExitOk;
}

int cmd_serve(Common& common, const std::string& host, const std::string& port, std::ostream& out,
              std::ostream& err) {
    put_flag(common.overrides, "server.host", host);
    put_flag(common.overrides, "server.port", port);
    const auto cfg = common.load();
    if (cfg.keys_path().empty() || !fs::exists(cfg.keys_path())) {
        err << "warning: no keys file at '" << cfg.keys_path().string()
            << "'; every authenticated request will be rejected (see `keygen`)\n";
    }
    g_shutdown = false;
    service::ApiService svc(config::build_runtime(cfg), &out);
    svc.start();
    err << "listening on " << svc.base_url() << "\n" << std::flush;
    wait_for_shutdown();
    svc.stop();
    return kExitOk;
}

int cmd_mock_agents(const std::string& fixtures, const std::string& host, int port, std::ostream& err) {
    if (!fs::is_directory(fixtures)) {
        err << "error: fixtures directory " << fixtures << " does not exist\n";
        return kExitUsage;
    }
    agents::MockAgentServer::Options opts;
    opts.fixtures = fixtures;
    opts.host = host;
    opts.port = port;
    g_shutdown = false;
    agents::MockAgentServer server(opts);
    server.start();
    err << "mock agents on " << server.base_url() << "\n" << std::flush;
    wait_for_shutdown();
    server.stop();
    return kExitOk;
}

int cmd_keygen(Common& common, const std::string& label, const std::string& keys_file, std::ostream& out) {
    put_flag(common.overrides, "keys_file", keys_file);
    const auto cfg = common.load();
    const auto path = cfg.keys_path();
    if (path.empty()) throw Error(ErrorCode::InvalidConfig, "keygen needs keys_file or data_dir");
    const auto key = service::generate_key();
    service::append_key_record(path, {label, service::hash_key(key), true});
    out << key << "\n";
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Document-grounded maintenance chat: ingestion, retrieval, evaluation and API service", "xrchat"};
    app.require_subcommand(1);

    Common common;
    std::string input, strategy, max_chars, data_dir;
    auto* ingest = app.add_subcommand("ingest", "Parse, chunk, embed and index documents");
    common.add_to(ingest);
    ingest->add_option("--input,-i", input, "File or directory")->required();
    ingest->add_option("--strategy", strategy, "semantic | fixed");
    ingest->add_option("--max-chars", max_chars, "Chunk length limit in characters");
    ingest->add_option("--data-dir", data_dir, "Data directory");

    std::string qa, sweep, out_dir, corpus_dir;
    auto* bench = app.add_subcommand("bench", "Run a benchmark sweep");
    common.add_to(bench);
    bench->add_option("--qa", qa, "QA set (JSON)")->required();
    bench->add_option("--sweep", sweep, "chunking | embedding | vector_store")
        ->required()
        ->check(CLI::IsMember({"chunking", "embedding", "vector_store"}));
    bench->add_option("--out,-o", out_dir, "Output directory")->required();
    bench->add_option("--corpus", corpus_dir, "Corpus directory");

    std::string session;
    auto* chat = app.add_subcommand("chat", "Interactive chat on stdin/stdout");
    common.add_to(chat);
    chat->add_option("--session", session, "Resume an existing session");

    std::string host, port;
    auto* serve = app.add_subcommand("serve", "Run the HTTP API until interrupted");
    common.add_to(serve);
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Bind port");

    std::string fixtures, mock_host = "127.0.0.1";
    int mock_port = 8090;
    auto* mock = app.add_subcommand("mock-agents", "Serve PdM/XAI/IoT fixture payloads");
    mock->add_option("--fixtures", fixtures, "Fixture root (<kind>/<id>.json)")->required();
    mock->add_option("--port", mock_port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
    mock->add_option("--host", mock_host, "Bind address");

    std::string label, keys_file;
    auto* keygen = app.add_subcommand("keygen", "Create an API key and append its hash to the keys file");
    common.add_to(keygen);
    keygen->add_option("--label", label, "Key label")->required();
    keygen->add_option("--keys-file", keys_file, "Keys file (JSON lines)");

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.push_back("xrchat");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*ingest) return cmd_ingest(common, input, strategy, max_chars, data_dir, out, err);
        if (*bench) return cmd_bench(common, qa, sweep, out_dir, corpus_dir, out, err);
        if (*chat) return cmd_chat(common, session, out, err, in);
        if (*serve) return cmd_serve(common, host, port, out, err);
        if (*mock) return cmd_mock_agents(fixtures, mock_host, mock_port, err);
        if (*keygen) return cmd_keygen(common, label, keys_file, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::InvalidConfig ? kExitUsage : kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace xrchat::cli
