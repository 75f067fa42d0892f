#include "xrchat/agents.hpp"
#include "xrchat/error.hpp"

#include "../common/http_util.hpp"

#include <httplib.h>

#include <fstream>
#include <mutex>
#include <sstream>

namespace xrchat::agents {

struct MockAgentServer::Impl {
    Options opts;
    httplib::Server server;
    std::mutex mu;
    std::atomic<bool> stopping{false};
    bool bound = false;

    void handle(AgentKind kind, const httplib::Request& req, httplib::Response& res) {
        std::chrono::milliseconds delay{0};
        int fail = 0;
        {
            std::lock_guard lock(mu);
            if (auto it = opts.delay.find(kind); it != opts.delay.end()) delay = it->second;
            if (auto it = opts.fail_status.find(kind); it != opts.fail_status.end()) fail = it->second;
        }
        const auto until = std::chrono::steady_clock::now() + delay;
        while (!stopping && std::chrono::steady_clock::now() < until) {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        if (fail != 0) {
            res.status = fail;
            res.set_content(R"({"error":"injected failure"})", "application/json");
            return;
        }
        const std::string id = req.matches[1];
        const auto path = opts.fixtures / std::string(to_string(kind)) / (id + ".json");
        std::ifstream in(path, std::ios::binary);
        if (id.find("..") != std::string::npos || !in) {
            res.status = 404;
            res.set_content(R"({"error":"not found"})", "application/json");
            return;
        }
        std::ostringstream ss;
        ss << in.rdbuf();
        res.status = 200;
        res.set_content(ss.str(), "application/json");
    }

    void bind(int port, int& bound_port) {
        detail::exclusive_port(server);
        for (auto k : kAllAgents) {
            const std::string pattern = "/" + std::string(to_string(k)) + R"(/([A-Za-z0-9_.\-]+))";
            server.Get(pattern, [this, k](const httplib::Request& req, httplib::Response& res) { handle(k, req, res); });
        }
        server.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok"})", "application/json");
        });
        if (port == 0) {
            bound_port = server.bind_to_any_port(opts.host);
        } else {
            bound_port = server.bind_to_port(opts.host, port) ? port : -1;
        }
        if (bound_port < 0) {
            throw Error(ErrorCode::Io, "mock agents cannot bind " + opts.host + ":" + std::to_string(port));
        }
        bound = true;
    }
};

MockAgentServer::MockAgentServer(Options opts) : impl_(std::make_unique<Impl>()) { impl_->opts = std::move(opts); }

MockAgentServer::~MockAgentServer() { stop(); }

void MockAgentServer::start() {
    impl_->bind(impl_->opts.port, port_);
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void MockAgentServer::run() {
    impl_->bind(impl_->opts.port, port_);
    impl_->server.listen_after_bind();
}

void MockAgentServer::stop() {
    impl_->stopping = true;
    if (impl_->bound) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

std::string MockAgentServer::base_url() const { return "http://" + impl_->opts.host + ":" + std::to_string(port_); }

void MockAgentServer::set_delay(AgentKind k, std::chrono::milliseconds d) {
    std::lock_guard lock(impl_->mu);
    impl_->opts.delay[k] = d;
}

void MockAgentServer::set_fail_status(AgentKind k, int status) {
    std::lock_guard lock(impl_->mu);
    if (status == 0) {
        impl_->opts.fail_status.erase(k);
    } else {
        impl_->opts.fail_status[k] = status;
    }
}

}  // namespace xrchat::agents
