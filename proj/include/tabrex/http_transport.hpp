#pragma once

// Kept apart from gateway.hpp so only binaries that talk HTTP pull in httplib.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "tabrex/gateway.hpp"

namespace tabrex {

struct ParsedUrl {
    std::string origin;  ///< scheme://host[:port]
    std::string path;    ///< starts with '/'
};

inline ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw GatewayError(GatewayError::Kind::transport, "bad URL '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline Transport make_http_transport() {
    return [](const HttpRequest& req) -> HttpResponse {
        const auto url = split_url(req.url);
        httplib::Client client(url.origin);
        const auto timeout = static_cast<time_t>(req.timeout_seconds);
        client.set_connection_timeout(timeout, 0);
        client.set_read_timeout(timeout, 0);
        client.set_write_timeout(timeout, 0);
        httplib::Headers headers;
        if (!req.api_key.empty()) headers.emplace("Authorization", "Bearer " + req.api_key);
        auto res = client.Post(url.path, headers, req.body, "application/json");
        if (!res) {
            const auto err = res.error();
            const auto kind = (err == httplib::Error::Read || err == httplib::Error::Write)
                                  ? GatewayError::Kind::timeout
                                  : GatewayError::Kind::transport;
            throw GatewayError(kind, httplib::to_string(err) + " (" + url.origin + ")");
        }
        return {res->status, res->body};
    };
}

} // namespace tabrex
