#include "difflens/server.hpp"

#include <httplib.h>

#include "difflens/error.hpp"

namespace difflens {

struct HttpServer::Impl {
    ApiService& service;
    ServerOptions options;
    httplib::Server server;
    int port = -1;

    Impl(ApiService& s, ServerOptions o) : service(s), options(std::move(o)) {}

    void forward(const httplib::Request& req, httplib::Response& res) {
        ApiRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [key, value] : req.params) r.query.emplace(key, value);
        r.body = req.body;
        auto out = service.handle(r);
        res.status = out.status;
        for (const auto& [key, value] : out.headers) res.set_header(key, value);
        if (out.status != 204) res.set_content(out.body, out.content_type);
    }
};

HttpServer::HttpServer(ApiService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    auto& srv = impl_->server;
    auto handler = [impl = impl_.get()](const httplib::Request& req, httplib::Response& res) { impl->forward(req, res); };
    srv.Get(R"(/api/.*)", handler);
    srv.Post(R"(/api/.*)", handler);
    srv.Options(R"(/api/.*)", handler);
    if (impl_->options.static_dir && !srv.set_mount_point("/", impl_->options.static_dir->string())) {
        throw Error(ErrorKind::io, "cannot serve static files", impl_->options.static_dir->string());
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(o.host);
    } else {
        impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
    }
    if (impl_->port < 0) throw Error(ErrorKind::io, "cannot bind", o.host + ":" + std::to_string(o.port));
    return impl_->port;
}

void HttpServer::listen() {
    if (impl_->port < 0) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace difflens
