#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "difflens/api.hpp"

namespace difflens {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8642;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;  // mounted at "/"
};

// HTTP/1.1 adapter over ApiService.
class HttpServer {
public:
    HttpServer(ApiService& service, ServerOptions options);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds the socket; returns the bound port. Throws Error(io) on failure.
    int bind();
    // Blocks serving requests until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace difflens
