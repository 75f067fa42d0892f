#include "xrchat/error.hpp"
#include "xrchat/eval.hpp"
#include "xrchat/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace xrchat::eval {

using nlohmann::json;

std::vector<QAItem> parse_qa(std::string_view json_text) {
    json arr;
    try {
        arr = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadPayload, std::string("QA file is not JSON: ") + e.what());
    }
    if (!arr.is_array()) throw Error(ErrorCode::BadPayload, "QA file must hold a JSON list");
    std::vector<QAItem> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& j = arr[i];
        const std::string where = "QA item " + std::to_string(i);
        if (!j.is_object() || !j.contains("query") || !j["query"].is_string() || !j.contains("ground_truth") ||
            !j["ground_truth"].is_string()) {
            throw Error(ErrorCode::BadPayload, where + " needs string query and ground_truth");
        }
        QAItem q;
        q.query = j["query"].get<std::string>();
        q.ground_truth = j["ground_truth"].get<std::string>();
        if (text::trim(q.query).empty() || text::trim(q.ground_truth).empty()) {
            throw Error(ErrorCode::BadPayload, where + " has an empty query or ground_truth");
        }
        if (j.contains("source_doc_id") && j["source_doc_id"].is_string()) {
            q.source_doc_id = j["source_doc_id"].get<std::string>();
        }
        out.push_back(std::move(q));
    }
    return out;
}

std::vector<QAItem> load_qa(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_qa(ss.str());
}

std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::Chunking: return "chunking";
        case SweepAxis::Embedding: return "embedding";
        case SweepAxis::VectorStore: return "vector_store";
    }
    return "chunking";
}

SweepAxis parse_sweep_axis(std::string_view s) {
    const auto v = text::ascii_lower(s);
    if (v == "chunking") return SweepAxis::Chunking;
    if (v == "embedding") return SweepAxis::Embedding;
    if (v == "vector_store" || v == "vector-store") return SweepAxis::VectorStore;
    throw Error(ErrorCode::InvalidArgument, "unknown sweep axis '" + std::string(s) + "'");
}

std::string_view axis_header(SweepAxis a) {
    switch (a) {
        case SweepAxis::Chunking: return "Chunking";
        case SweepAxis::Embedding: return "Embedding";
        case SweepAxis::VectorStore: return "Vector DB";
    }
    return "Variant";
}

std::vector<Variant> default_variants(SweepAxis axis, const BenchConfig& base) {
    auto make = [&](std::string label) {
        Variant v;
        v.label = std::move(label);
        v.chunker = base.chunker;
        v.embedding = base.embedding;
        v.store = base.store;
        v.store.dim = v.embedding.dim;
        return v;
    };
    std::vector<Variant> out;
    switch (axis) {
        case SweepAxis::Chunking: {
            auto sem = make("Semantic Context");
            sem.chunker.strategy = corpus::ChunkStrategy::Semantic;
            sem.chunker.overlap_chars = 0;
            out.push_back(sem);
            for (std::size_t len : {std::size_t{2028}, std::size_t{1024}}) {
                auto fx = make("Fixed length=" + std::to_string(len));
                fx.chunker.strategy = corpus::ChunkStrategy::Fixed;
                fx.chunker.max_chars = len;
                fx.chunker.overlap_chars = 0;
                out.push_back(fx);
            }
            break;
        }
        case SweepAxis::Embedding: {
            out.push_back(make(base.embedding.provider_id + "/" + std::to_string(base.embedding.dim)));
            for (std::size_t dim : {std::size_t{128}, std::size_t{512}}) {
                if (base.embedding.provider_id == embed::kHashNgramId && dim == base.embedding.dim) continue;
                auto v = make(std::string(embed::kHashNgramId) + "/" + std::to_string(dim));
                v.embedding = {std::string(embed::kHashNgramId), dim, {}, {}, 64};
                v.store.dim = dim;
                out.push_back(v);
            }
            break;
        }
        case SweepAxis::VectorStore: {
            auto ex = make("Exact");
            ex.store.kind = index::BackendKind::Exact;
            out.push_back(ex);
            auto hn = make("HNSW");
            hn.store.kind = index::BackendKind::Hnsw;
            out.push_back(hn);
            if (!base.store.endpoint.empty()) {
                auto rm = make("Remote");
                rm.store.kind = index::BackendKind::Remote;
                out.push_back(rm);
            }
            break;
        }
    }
    return out;
}

bool BenchReport::any_failed() const {
    return std::any_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.failed; });
}

double round2(double v) {
    const double r = std::round(v * 100.0) / 100.0;
    return r == 0.0 ? 0.0 : r;  // no "-0.0"
}

std::string corpus_hash(const std::vector<corpus::Document>& corpus) {
    std::vector<std::string> parts;
    parts.reserve(corpus.size());
    for (const auto& d : corpus) {
        parts.push_back(text::sha256_hex(d.doc_id + "\n" + d.title + "\n" + d.version + "\n" + d.body));
    }
    std::sort(parts.begin(), parts.end());
    std::string joined;
    for (const auto& p : parts) joined += p + "\n";
    return text::sha256_hex(joined);
}

namespace {

json variant_params(const Variant& v) {
    return {
        {"chunker",
         {{"strategy", corpus::to_string(v.chunker.strategy)},
          {"max_chars", v.chunker.max_chars},
          {"overlap_chars", v.chunker.overlap_chars},
          {"semantic_overflow",
           v.chunker.semantic_overflow == corpus::SemanticOverflow::Error ? "error" : "split-fixed"}}},
        {"embedding", {{"provider_id", v.embedding.provider_id}, {"dim", v.embedding.dim}}},
        {"store",
         {{"kind", index::to_string(v.store.kind)},
          {"dim", v.store.dim},
          {"m", v.store.hnsw.m},
          {"ef_construction", v.store.hnsw.ef_construction},
          {"ef_search", v.store.hnsw.ef_search},
          {"seed", v.store.hnsw.seed},
          {"endpoint", v.store.endpoint}}},
    };
}

std::string generate(llm::LlmProvider* generator, const QAItem& qa, const std::vector<index::Hit>& hits,
                     const std::vector<std::string>& texts) {
    if (!generator) {
        std::string out;
        for (const auto& t : texts) {
            if (!out.empty()) out += "\n\n";
            out += t;
        }
        return out;
    }
    std::string prompt = "Answer the question using only these excerpts.\n\n";
    for (std::size_t i = 0; i < hits.size(); ++i) {
        prompt += std::string(llm::kExcerptOpen) + "[" + hits[i].doc_id + ":" + hits[i].chunk_id + "]\n" + texts[i] +
                  "\n" + std::string(llm::kExcerptClose) + "\n";
    }
    prompt += "\n" + std::string(llm::kQuestionHeading) + "\n" + qa.query + "\n";
    return generator->complete(prompt, 0.0);
}

BenchRow run_variant(const std::vector<corpus::Document>& corpus, const std::vector<QAItem>& qa, const Variant& v,
                     std::size_t k, ClaimOracle& oracle, llm::LlmProvider* generator) {
    BenchRow row;
    row.label = v.label;
    row.params = variant_params(v);
    row.qa_count = qa.size();

    v.chunker.validate();
    auto provider = embed::make_provider(v.embedding);
    auto store = v.store;
    store.dim = v.embedding.dim;
    auto index = index::make_index(store);

    for (const auto& doc : corpus) {
        const auto chunks = corpus::chunk_document(doc, v.chunker);
        std::vector<std::string> inputs;
        for (const auto& c : chunks) inputs.push_back(text::trim(c.text).empty() ? doc.title : c.text);
        const auto vecs = embed::embed_batch(inputs, *provider);
        std::vector<index::ItemInput> items;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            index::ItemInput it;
            it.doc_id = doc.doc_id;
            it.chunk_id = chunks[i].chunk_id;
            it.vector = vecs[i].values;
            it.metadata[std::string(index::keys::kText)] = chunks[i].text;
            it.metadata[std::string(index::keys::kTitle)] = doc.title;
            items.push_back(std::move(it));
        }
        index->replace_document(doc.doc_id, std::move(items));
        row.chunk_count += chunks.size();
    }

    EvalScores sum;
    for (const auto& item : qa) {
        const auto qv = embed::embed_one(item.query, *provider);
        const auto hits = index->top_k(qv.values, k);
        std::vector<std::string> texts;
        for (const auto& h : hits) {
            auto it = h.metadata.find(std::string(index::keys::kText));
            texts.push_back(it == h.metadata.end() ? std::string{} : it->second);
        }
        const auto response = generate(generator, item, hits, texts);
        const auto s = score(item, texts, response, oracle);
        sum.cr += s.cr;
        sum.cp += s.cp;
        sum.hallu += s.hallu;
        sum.faith += s.faith;
        sum.self_knowledge += s.self_knowledge;
        if (s.empty_response) ++row.empty_responses;
    }
    const double n = static_cast<double>(qa.size());
    row.mean = {sum.cr / n, sum.cp / n, sum.hallu / n, sum.faith / n, sum.self_knowledge / n, false};
    row.composite = composite(row.mean);
    return row;
}

}  // namespace

BenchReport run_bench(const std::vector<corpus::Document>& corpus, const std::vector<QAItem>& qa, SweepAxis axis,
                      const std::vector<Variant>& variants, const BenchConfig& base, ClaimOracle& oracle,
                      llm::LlmProvider* generator) {
    if (variants.empty()) throw Error(ErrorCode::InvalidArgument, "benchmark needs at least one variant");
    if (qa.empty()) throw Error(ErrorCode::InvalidArgument, "no QA items");
    if (corpus.empty()) throw Error(ErrorCode::InvalidArgument, "benchmark corpus is empty");
    if (base.k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");

    BenchReport report;
    report.axis = axis;
    for (const auto& v : variants) {
        try {
            report.rows.push_back(run_variant(corpus, qa, v, base.k, oracle, generator));
        } catch (const std::exception& e) {
            BenchRow failed;
            failed.label = v.label;
            failed.params = variant_params(v);
            failed.qa_count = qa.size();
            failed.failed = true;
            failed.error = e.what();
            report.rows.push_back(std::move(failed));
        }
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        if (!report.rows[i].failed) order.push_back(i);
    }
    // Rank on the rounded values that are reported, so the table never shows
    // a tie broken by invisible digits.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = report.rows[a];
        const auto& rb = report.rows[b];
        const double ca = round2(ra.composite), cb = round2(rb.composite);
        if (ca != cb) return ca > cb;
        const double ha = round2(ra.mean.hallu), hb = round2(rb.mean.hallu);
        if (ha != hb) return ha < hb;
        return a < b;
    });
    for (std::size_t r = 0; r < order.size(); ++r) report.rows[order[r]].rank = r + 1;

    std::string qa_blob;
    for (const auto& q : qa) qa_blob += q.query + "\n" + q.ground_truth + "\n" + q.source_doc_id.value_or("") + "\n";
    json docs = json::array();
    std::vector<const corpus::Document*> sorted;
    for (const auto& d : corpus) sorted.push_back(&d);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->doc_id < b->doc_id; });
    for (const auto* d : sorted) {
        docs.push_back({{"doc_id", d->doc_id}, {"title", d->title}, {"version", d->version},
                        {"chars", text::codepoint_count(d->body)}});
    }
    report.provenance = {
        {"axis", to_string(axis)},
        {"k", base.k},
        {"corpus_hash", corpus_hash(corpus)},
        {"corpus", docs},
        {"qa_count", qa.size()},
        {"qa_hash", text::sha256_hex(qa_blob)},
        {"oracle", oracle.id()},
        {"generator", generator ? generator->id() : "mock:extractive-concat"},
        {"retrieval_filter", "none"},
        {"composite", "(cr + cp + (100 - hallu) + faith) / 4; ties by lower hallu, then variant order"},
        {"conventions",
         {{"empty_response", "faith = hallu = 0, self_knowledge = 100"},
          {"empty_retrieval", "cp = 0"},
          {"rounding", "2 decimals"}}},
    };
    return report;
}

json to_json(const BenchReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json j = {
            {"label", row.label},
            {"failed", row.failed},
            {"params", row.params},
            {"qa_count", row.qa_count},
        };
        if (row.failed) {
            j["error"] = row.error;
            j["rank"] = nullptr;
        } else {
            j["rank"] = row.rank;
            j["chunk_count"] = row.chunk_count;
            j["empty_responses"] = row.empty_responses;
            j["composite"] = round2(row.composite);
            j["scores"] = {
                {"cr", round2(row.mean.cr)},       {"cp", round2(row.mean.cp)},
                {"hallu", round2(row.mean.hallu)}, {"faith", round2(row.mean.faith)},
                {"self_knowledge", round2(row.mean.self_knowledge)},
            };
        }
        rows.push_back(std::move(j));
    }
    return {{"axis", to_string(r.axis)}, {"rows", rows}, {"provenance", r.provenance}};
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", round2(v));
    return buf;
}

}  // namespace

std::string to_markdown(const BenchReport& r) {
    std::vector<const BenchRow*> ok, failed;
    for (const auto& row : r.rows) (row.failed ? failed : ok).push_back(&row);
    std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->rank < b->rank; });

    double best_cr = -1, best_cp = -1, best_faith = -1, best_hallu = 1e9;
    for (const auto* row : ok) {
        best_cr = std::max(best_cr, round2(row->mean.cr));
        best_cp = std::max(best_cp, round2(row->mean.cp));
        best_faith = std::max(best_faith, round2(row->mean.faith));
        best_hallu = std::min(best_hallu, round2(row->mean.hallu));
    }
    auto cell = [](double v, double best) {
        const auto s = fixed2(v);
        return round2(v) == best ? "**" + s + "**" : s;
    };

    std::vector<std::vector<std::string>> table;
    table.push_back({std::string(axis_header(r.axis)), "CR", "CP", "Hallu.", "Faith.", "Rank"});
    for (const auto* row : ok) {
        table.push_back({row->label, cell(row->mean.cr, best_cr), cell(row->mean.cp, best_cp),
                         cell(row->mean.hallu, best_hallu), cell(row->mean.faith, best_faith),
                         std::to_string(row->rank)});
    }
    for (const auto* row : failed) table.push_back({row->label, "failed", "failed", "failed", "failed", "-"});

    std::vector<std::size_t> width(6, 3);
    for (const auto& line : table) {
        for (std::size_t c = 0; c < 6; ++c) width[c] = std::max(width[c], text::codepoint_count(line[c]));
    }
    auto pad = [](const std::string& s, std::size_t w, bool right) {
        const std::size_t n = text::codepoint_count(s);
        const std::string fill(w > n ? w - n : 0, ' ');
        return right ? fill + s : s + fill;
    };

    std::string out;
    for (std::size_t i = 0; i < table.size(); ++i) {
        out += "|";
        for (std::size_t c = 0; c < 6; ++c) out += " " + pad(table[i][c], width[c], c > 0 && i > 0) + " |";
        out += "\n";
        if (i == 0) {
            out += "|";
            for (std::size_t c = 0; c < 6; ++c) {
                out += c == 0 ? " " + std::string(width[c], '-') + " |" : " " + std::string(width[c] - 1, '-') + ": |";
            }
            out += "\n";
        }
    }
    out += "\nBold values indicate the best performance for each metric.\n";
    for (const auto* row : failed) out += "\nVariant \"" + row->label + "\" failed: " + row->error + "\n";
    return out;
}

}  // namespace xrchat::eval
