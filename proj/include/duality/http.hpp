#pragma once

// HTTP transport for ServiceCore.

#include <string>

// before httplib: <resolv.h> defines a `_res` macro that breaks Eigen
#include "duality/service.hpp"

#include <httplib.h>

namespace duality {

/// Registers every /api route of `core` on `server`. CORS is open so the
/// browser UI can be served from elsewhere.
inline void mount(httplib::Server& server, ServiceCore& core) {
    auto forward = [&core](const httplib::Request& req, httplib::Response& res) {
        auto r = core.handle(req.method, req.path, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json; charset=utf-8");
    };
    server.Get(R"(/api/.*)", forward);
    server.Post(R"(/api/.*)", forward);
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
}

} // namespace duality
