#include "oracles.hpp"
#include "support.hpp"

#include "xrchat/embedder.hpp"
#include "xrchat/error.hpp"

#include <catch_amalgamated.hpp>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace xrchat;
using namespace xrchat::embed;
namespace oracle = xrtest::oracle;
using Catch::Approx;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::Io;
}

double norm2(const std::vector<float>& v) {
    double s = 0;
    for (float x : v) s += static_cast<double>(x) * x;
    return s;
}

// Minimal embedding endpoint: {"texts": [...]} -> {"vectors": [...]}.
struct FakeEmbedServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> requests{0};
    std::atomic<int> fail_first{0};
    std::size_t dim = 8;
    std::string seen_auth;
    std::mutex mu;

    FakeEmbedServer() {
        server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = ++requests;
            {
                std::lock_guard lock(mu);
                seen_auth = req.get_header_value("Authorization");
            }
            if (n <= fail_first) {
                res.status = 500;
                return;
            }
            const auto j = nlohmann::json::parse(req.body);
            nlohmann::json vecs = nlohmann::json::array();
            for (const auto& t : j.at("texts")) {
                std::vector<float> v(dim, 0.0f);
                const auto s = t.get<std::string>();
                for (std::size_t i = 0; i < dim; ++i) v[i] = static_cast<float>((s.size() + i) % 7 + 1);
                vecs.push_back(v);
            }
            res.set_content(nlohmann::json{{"vectors", vecs}}.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeEmbedServer() {
        server.stop();
        thread.join();
    }
    ProviderSpec spec(std::size_t declared_dim, std::size_t batch = 64) const {
        return {"remote:fake", declared_dim, "http://127.0.0.1:" + std::to_string(port) + "/embed", "XRCHAT_TEST_EMBED_KEY",
                batch};
    }
};

RetryPolicy fast_retry() {
    RetryPolicy r;
    r.base_delay = std::chrono::milliseconds(5);
    r.request_timeout = std::chrono::milliseconds(2000);
    return r;
}

}  // namespace

TEST_CASE("identical texts embed identically") {
    HashNgramProvider p;
    const std::vector<std::string> texts{"abc", "abc"};
    const auto v = embed_batch(texts, p);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == v[1]);
    CHECK(v[0].provider_id == "test:hash-ngram");
}

TEST_CASE("empty text is rejected") {
    HashNgramProvider p;
    const std::vector<std::string> texts{""};
    CHECK(code_of([&] { embed_batch(texts, p); }) == ErrorCode::EmptyText);
    CHECK(code_of([] { test_embed(""); }) == ErrorCode::EmptyText);
}

TEST_CASE("hash-ngram vector has unit norm by independent arithmetic") {
    const auto v = test_embed("pump seal torque");
    REQUIRE(v.dim() == 256);
    double s = 0;
    for (float x : v.values) s += static_cast<double>(x) * static_cast<double>(x);
    CHECK(s == Approx(1.0).margin(1e-6));
}

TEST_CASE("hash-ngram buckets match the reference oracle") {
    for (const char* t : {"pump seal torque", "Tighten to 40 Nm", "a", "überprüfen Lager", "x  y\tz\nw", "abcdefgh"}) {
        const auto expect = oracle::l2_normalized(oracle::ngram_counts(t));
        const auto got = test_embed(t);
        REQUIRE(got.values.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got.values[i] == Approx(expect[i]).margin(1e-6));
    }
}

TEST_CASE("'a a' and 'a' embed identically") {
    const auto c1 = oracle::ngram_counts("a a");
    const auto c2 = oracle::ngram_counts("a");
    CHECK(c1 != c2);
    CHECK(oracle::l2_normalized(c1) == oracle::l2_normalized(c2));
    CHECK(test_embed("a a") == test_embed("a"));
}

TEST_CASE("'abc' and 'xyz' differ") {
    CHECK(oracle::ngram_counts("abc") != oracle::ngram_counts("xyz"));
    CHECK(cosine(test_embed("abc"), test_embed("xyz")) < 1.0);
}

TEST_CASE("cosine identities") {
    const auto v = test_embed("bearing grease interval");
    CHECK(cosine(v, v) == Approx(1.0).margin(1e-6));

    EmbeddingVector e1{{1.0f, 0.0f}, "t"}, e2{{0.0f, 1.0f}, "t"};
    CHECK(cosine(e1, e2) == Approx(0.0).margin(1e-12));

    EmbeddingVector neg = v;
    for (auto& x : neg.values) x = -x;
    CHECK(cosine(v, neg) == Approx(-1.0).margin(1e-6));

    const auto w = test_embed("seal");
    CHECK(cosine(v, w) == cosine(w, v));
    CHECK(code_of([&] { cosine(v, e1); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("normalize rejects zero and non-finite vectors") {
    std::vector<float> z(4, 0.0f);
    CHECK(code_of([&] { normalize(z); }) == ErrorCode::EmptyText);
    std::vector<float> n{1.0f, std::numeric_limits<float>::quiet_NaN()};
    CHECK(code_of([&] { normalize(n); }) == ErrorCode::ProviderUnavailable);
}

TEST_CASE("batch permutation permutes output") {
    std::mt19937_64 rng(7);
    std::vector<std::string> texts;
    for (int i = 0; i < 40; ++i) texts.push_back("item " + std::to_string(rng() % 1000) + " seal " + std::to_string(i));
    HashNgramProvider p;
    const auto base = embed_batch(texts, p);
    std::vector<std::size_t> perm(texts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> shuffled;
    for (auto i : perm) shuffled.push_back(texts[i]);
    const auto out = embed_batch(shuffled, p);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(out[i] == base[perm[i]]);
    for (const auto& v : out) {
        CHECK(norm2(v.values) == Approx(1.0).margin(1e-6));
        for (std::size_t j = 0; j < base.size(); j += 7) {
            const double c = cosine(v, base[j]);
            CHECK(c <= 1.0 + 1e-9);
            CHECK(c >= -1.0 - 1e-9);
        }
    }
}

TEST_CASE("hash-ngram provider honours its configured dim") {
    HashNgramProvider p({"test:hash-ngram", 128, {}, {}, 64});
    const auto v = embed_one("pressure dew point", p);
    CHECK(v.dim() == 128);
}

TEST_CASE("cache serves repeats and persists across instances") {
    xrtest::TempDir dir;
    const auto file = dir / "cache.bin";
    auto inner = std::make_shared<HashNgramProvider>();
    const std::vector<std::string> texts{"alpha beta", "gamma", "alpha beta"};
    std::vector<EmbeddingVector> first;
    {
        auto cache = std::make_shared<CachedEmbeddingProvider>(inner, file);
        first = embed_batch(texts, *cache);
        CHECK(cache->size() == 2);
        CHECK(cache->misses() == 2);
        const auto again = embed_batch(texts, *cache);
        CHECK(again == first);
        CHECK(cache->hits() >= 3);
    }
    CachedEmbeddingProvider reopened(inner, file);
    CHECK(reopened.size() == 2);
    const auto from_disk = embed_batch(texts, reopened);
    CHECK(from_disk == first);
    CHECK(reopened.misses() == 0);

    // a torn tail is ignored
    {
        std::ofstream out(file, std::ios::binary | std::ios::app);
        out << "\x05\x00";
    }
    CachedEmbeddingProvider torn(inner, file);
    CHECK(torn.size() == 2);
}

TEST_CASE("cache is safe under concurrent batches") {
    auto cache = std::make_shared<CachedEmbeddingProvider>(std::make_shared<HashNgramProvider>(), std::nullopt);
    std::vector<std::thread> threads;
    std::atomic<int> mismatches{0};
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&, t] {
            for (int i = 0; i < 50; ++i) {
                const std::vector<std::string> texts{"shared " + std::to_string(i % 10), "own " + std::to_string(t)};
                const auto v = embed_batch(texts, *cache);
                if (v[0] != test_embed(texts[0])) ++mismatches;
            }
        });
    }
    for (auto& th : threads) th.join();
    CHECK(mismatches == 0);
    CHECK(cache->size() == 18);
}

TEST_CASE("remote provider re-batches, sends the bearer token and retries") {
    FakeEmbedServer srv;
    ::setenv("XRCHAT_TEST_EMBED_KEY", "s3cret", 1);
    RemoteEmbeddingProvider p(srv.spec(8, 2), fast_retry());
    const std::vector<std::string> texts{"a", "bb", "ccc", "dddd", "eeeee"};
    const auto v = embed_batch(texts, p);
    REQUIRE(v.size() == 5);
    CHECK(srv.requests == 3);
    CHECK(srv.seen_auth == "Bearer s3cret");
    for (const auto& e : v) CHECK(norm2(e.values) == Approx(1.0).margin(1e-6));

    srv.requests = 0;
    srv.fail_first = 2;
    const auto retried = embed_batch(std::vector<std::string>{"a"}, p);
    CHECK(srv.requests == 3);
    CHECK(retried[0] == v[0]);
    ::unsetenv("XRCHAT_TEST_EMBED_KEY");
}

TEST_CASE("remote provider failures") {
    FakeEmbedServer srv;
    SECTION("wrong dimension") {
        RemoteEmbeddingProvider p(srv.spec(16), fast_retry());
        CHECK(code_of([&] { embed_batch(std::vector<std::string>{"x"}, p); }) == ErrorCode::DimensionMismatch);
    }
    SECTION("retries exhausted") {
        srv.fail_first = 100;
        RemoteEmbeddingProvider p(srv.spec(8), fast_retry());
        CHECK(code_of([&] { embed_batch(std::vector<std::string>{"x"}, p); }) == ErrorCode::ProviderUnavailable);
        CHECK(srv.requests == 4);
    }
    SECTION("nothing listening") {
        auto spec = srv.spec(8);
        spec.endpoint = "http://127.0.0.1:1/embed";
        RemoteEmbeddingProvider p(spec, fast_retry());
        CHECK_FALSE(p.reachable());
        CHECK(code_of([&] { embed_batch(std::vector<std::string>{"x"}, p); }) == ErrorCode::ProviderUnavailable);
    }
}

TEST_CASE("provider config file") {
    const auto specs = parse_provider_specs(
        R"([{"provider_id":"test:hash-ngram","dim":256,"batch_limit":32},
            {"provider_id":"remote:mpnet","dim":768,"endpoint":"http://h:1/e","auth_env_var":"K","batch_limit":16}])");
    REQUIRE(specs.size() == 2);
    CHECK(specs[1].dim == 768);
    CHECK(specs[1].auth_env_var == "K");
    CHECK(code_of([] { parse_provider_specs(R"([{"provider_id":"x","dim":0,"batch_limit":1}])"); }) ==
          ErrorCode::InvalidConfig);
    CHECK(code_of([] { make_provider({"remote:m", 8, "", "", 4}); }) == ErrorCode::InvalidConfig);
}
