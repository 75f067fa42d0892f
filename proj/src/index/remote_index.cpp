#include "xrchat/error.hpp"
#include "xrchat/vector_index.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace xrchat::index {

using nlohmann::json;

namespace {

std::string encode_segment(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(ch);
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        }
    }
    return out;
}

json item_to_json(const IndexedItem& it) {
    return {{"item_id", it.item_id},
            {"doc_id", it.doc_id},
            {"chunk_id", it.chunk_id},
            {"vector", it.vector},
            {"metadata", it.metadata}};
}

json hit_to_json(const Hit& h) {
    return {{"item_id", h.item_id},
            {"score", h.score},
            {"doc_id", h.doc_id},
            {"chunk_id", h.chunk_id},
            {"metadata", h.metadata}};
}

Hit hit_from_json(const json& j) {
    return Hit{j.at("item_id").get<ItemId>(), j.at("score").get<double>(), j.at("doc_id").get<std::string>(),
               j.at("chunk_id").get<std::string>(), j.value("metadata", Metadata{})};
}

json error_body(const Error& e) { return {{"error", std::string(to_string(e.code()))}, {"detail", e.what()}}; }

class Client {
public:
    explicit Client(const BackendSpec& spec) : url_(detail::split_url(spec.endpoint)), client_(url_.origin) {
        detail::set_timeouts(client_, std::chrono::seconds(10));
        if (auto key = detail::secret_from_env(spec.auth_env_var); !key.empty()) {
            headers_.emplace("Authorization", "Bearer " + key);
        }
    }

    json call(const std::string& method, std::string_view path, const json* body = nullptr) {
        const std::string full = detail::join_path(url_.path, path);
        httplib::Result res = method == "POST"     ? client_.Post(full, headers_, body->dump(), "application/json")
                              : method == "DELETE" ? client_.Delete(full, headers_)
                                                   : client_.Get(full, headers_);
        if (!res) {
            throw Error(ErrorCode::ProviderUnavailable,
                        "remote index " + url_.origin + ": " + httplib::to_string(res.error()));
        }
        json j = json::parse(res->body, nullptr, false);
        if (res->status == 200) {
            if (j.is_discarded()) throw Error(ErrorCode::ProviderUnavailable, "remote index returned invalid JSON");
            return j;
        }
        const std::string err = j.is_object() ? j.value("error", "") : "";
        const std::string detail = j.is_object() ? j.value("detail", err) : res->body;
        if (err == "DuplicateChunk") throw Error(ErrorCode::DuplicateChunk, detail);
        if (err == "DimensionMismatch") throw Error(ErrorCode::DimensionMismatch, detail);
        if (err == "InvalidArgument") throw Error(ErrorCode::InvalidArgument, detail);
        throw Error(ErrorCode::ProviderUnavailable, "remote index HTTP " + std::to_string(res->status) + ": " + detail);
    }

private:
    detail::UrlParts url_;
    httplib::Client client_;
    httplib::Headers headers_;
};

json items_to_json(const std::vector<ItemInput>& items) {
    json arr = json::array();
    for (const auto& it : items) {
        arr.push_back({{"doc_id", it.doc_id}, {"chunk_id", it.chunk_id}, {"vector", it.vector}, {"metadata", it.metadata}});
    }
    return arr;
}

}  // namespace

RemoteIndex::RemoteIndex(BackendSpec spec) : spec_(std::move(spec)) {
    if (spec_.endpoint.empty()) throw Error(ErrorCode::InvalidConfig, "remote index needs an endpoint");
    detail::split_url(spec_.endpoint);
}

std::size_t RemoteIndex::size() const { return Client(spec_).call("GET", "/stats").at("count").get<std::size_t>(); }

std::vector<ItemId> RemoteIndex::upsert(std::vector<ItemInput> items) {
    for (const auto& it : items) {
        if (it.vector.size() != spec_.dim) throw Error(ErrorCode::DimensionMismatch, "item dim does not match index");
    }
    const json body = {{"items", items_to_json(items)}};
    return Client(spec_).call("POST", "/upsert", &body).at("item_ids").get<std::vector<ItemId>>();
}

std::vector<Hit> RemoteIndex::top_k(std::span<const float> query, std::size_t k, const MetadataFilter& filter) const {
    if (query.size() != spec_.dim) throw Error(ErrorCode::DimensionMismatch, "query dim does not match index");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    json f = json::object();
    for (const auto& [key, v] : filter.terms()) {
        if (f.contains(key) && f[key] != v) return {};  // contradictory conjunction
        f[key] = v;
    }
    const json body = {{"vector", std::vector<float>(query.begin(), query.end())}, {"k", k}, {"filter", f}};
    const auto res = Client(spec_).call("POST", "/query", &body);
    std::vector<Hit> hits;
    for (const auto& h : res.at("hits")) hits.push_back(hit_from_json(h));
    return hits;
}

std::size_t RemoteIndex::delete_document(const std::string& doc_id) {
    return Client(spec_).call("DELETE", "/docs/" + encode_segment(doc_id)).at("removed").get<std::size_t>();
}

std::vector<ItemId> RemoteIndex::replace_document(const std::string& doc_id, std::vector<ItemInput> items) {
    // The wire contract has no transactional replace; this is delete-then-upsert.
    delete_document(doc_id);
    return upsert(std::move(items));
}

std::size_t RemoteIndex::count_document(const std::string& doc_id) const {
    return Client(spec_).call("GET", "/docs/" + encode_segment(doc_id)).at("count").get<std::size_t>();
}

std::vector<IndexedItem> RemoteIndex::items() const {
    const auto res = Client(spec_).call("GET", "/items");
    std::vector<IndexedItem> out;
    for (const auto& j : res.at("items")) {
        out.push_back(IndexedItem{j.at("item_id").get<ItemId>(), j.at("doc_id").get<std::string>(),
                                  j.at("chunk_id").get<std::string>(), j.at("vector").get<std::vector<float>>(),
                                  j.value("metadata", Metadata{})});
    }
    return out;
}

void mount_index_routes(httplib::Server& server, std::shared_ptr<VectorIndex> index) {
    const auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    const auto guarded = [reply](auto fn) {
        return [fn, reply](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                const int status = e.code() == ErrorCode::DuplicateChunk ? 409 : 400;
                reply(res, status, error_body(e));
            } catch (const json::exception& e) {
                reply(res, 400, {{"error", "BadRequest"}, {"detail", e.what()}});
            }
        };
    };

    server.Post("/upsert", guarded([index, reply](const httplib::Request& req, httplib::Response& res) {
                    const auto body = json::parse(req.body);
                    std::vector<ItemInput> items;
                    for (const auto& j : body.at("items")) {
                        items.push_back(ItemInput{j.at("doc_id").get<std::string>(), j.at("chunk_id").get<std::string>(),
                                                  j.at("vector").get<std::vector<float>>(),
                                                  j.value("metadata", Metadata{})});
                    }
                    reply(res, 200, {{"item_ids", index->upsert(std::move(items))}});
                }));
    server.Post("/query", guarded([index, reply](const httplib::Request& req, httplib::Response& res) {
                    const auto body = json::parse(req.body);
                    MetadataFilter filter;
                    const json terms = body.value("filter", json::object());
                    for (const auto& [k, v] : terms.items()) {
                        filter.where(k, v.get<std::string>());
                    }
                    const auto q = body.at("vector").get<std::vector<float>>();
                    json hits = json::array();
                    for (const auto& h : index->top_k(q, body.at("k").get<std::size_t>(), filter)) {
                        hits.push_back(hit_to_json(h));
                    }
                    reply(res, 200, {{"hits", hits}});
                }));
    server.Delete(R"(/docs/([^/]+))", guarded([index, reply](const httplib::Request& req, httplib::Response& res) {
                      reply(res, 200, {{"removed", index->delete_document(req.matches[1].str())}});
                  }));
    server.Get(R"(/docs/([^/]+))", guarded([index, reply](const httplib::Request& req, httplib::Response& res) {
                   reply(res, 200, {{"count", index->count_document(req.matches[1].str())}});
               }));
    server.Get("/stats", guarded([index, reply](const httplib::Request&, httplib::Response& res) {
                   reply(res, 200, {{"count", index->size()}, {"dim", index->dim()}});
               }));
    server.Get("/items", guarded([index, reply](const httplib::Request&, httplib::Response& res) {
                   json arr = json::array();
                   for (const auto& it : index->items()) arr.push_back(item_to_json(it));
                   reply(res, 200, {{"items", arr}});
               }));
}

}  // namespace xrchat::index
