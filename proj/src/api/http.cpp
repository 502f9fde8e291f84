#include "riot/api/http.hpp"

#include "httplib.h"
#include "riot/error.hpp"

namespace riot::api {

struct HttpServer::Impl {
  Service& svc;
  httplib::Server server;
  explicit Impl(Service& s) : svc(s) {}
};

namespace {

void reply_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

Json body_json(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      reply_json(res, error_body(api_code(e.code()), e.what(), e.detail()), http_status(e.code()));
    } catch (const std::exception& e) {
      reply_json(res, error_body("internal", e.what()), 500);
    }
  };
}

}  // namespace

HttpServer::HttpServer(Service& svc) : impl_(std::make_unique<Impl>(svc)) {
  auto& s = impl_->server;
  Service& api = impl_->svc;
  s.Get("/api/v1/health", guarded([&api](const auto&, auto& res) { reply_json(res, api.health()); }));
  s.Get("/api/v1/scenarios", guarded([&api](const auto&, auto& res) { reply_json(res, api.scenarios()); }));
  s.Post("/api/v1/simulate/node",
         guarded([&api](const auto& req, auto& res) { reply_json(res, api.simulate_node(body_json(req))); }));
  s.Post("/api/v1/simulate/ap",
         guarded([&api](const auto& req, auto& res) { reply_json(res, api.simulate_ap(body_json(req))); }));
  s.Post("/api/v1/datasets",
         guarded([&api](const auto& req, auto& res) { reply_json(res, api.create_dataset(body_json(req)), 201); }));
  s.Get(R"(/api/v1/datasets/([^/]+))", guarded([&api](const httplib::Request& req, auto& res) {
          const std::string id = req.matches[1];
          const auto accept = req.get_header_value("Accept");
          if (accept.find("application/json") != std::string::npos) {
            reply_json(res, api.dataset_info(id));
          } else {
            res.set_content(api.dataset_csv(id), "text/csv");
          }
        }));
  s.Post("/api/v1/models", guarded([&api](const auto& req, auto& res) {
           const auto out = api.create_model(body_json(req));
           reply_json(res, out, out.contains("job_id") ? 202 : 201);
         }));
  s.Get(R"(/api/v1/models/([^/]+))", guarded([&api](const httplib::Request& req, auto& res) {
          reply_json(res, api.model_info(req.matches[1]));
        }));
  s.Post(R"(/api/v1/models/([^/]+)/predict)", guarded([&api](const httplib::Request& req, auto& res) {
           reply_json(res, api.predict(req.matches[1], body_json(req)));
         }));
  s.Get(R"(/api/v1/jobs/([^/]+))",
        guarded([&api](const httplib::Request& req, auto& res) { reply_json(res, api.job(req.matches[1])); }));
  s.Get("/api/v1/collect/sessions", guarded([&api](const auto&, auto& res) { reply_json(res, api.collect_sessions()); }));
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.body.empty()) {
      const std::string code = res.status == 404 ? "not_found" : res.status == 405 ? "validation" : "internal";
      res.set_content(error_body(code, "no route for " + req.method + " " + req.path).dump(), "application/json");
    }
  });
}

HttpServer::~HttpServer() { stop(); }

std::uint16_t HttpServer::bind(const std::string& addr, std::uint16_t port) {
  auto& s = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = s.bind_to_any_port(addr);
  } else if (!s.bind_to_port(addr, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind HTTP server to " + addr + ":" + std::to_string(port));
  return static_cast<std::uint16_t>(bound);
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace riot::api
