#include "ppos/service.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include <httplib.h>

#include "ppos/api.hpp"

namespace ppos::service {

namespace {

using api::Json;

constexpr std::string_view kPrefix = "/api/v1/";

bool served(std::string_view command) {
  return command == "pos" || command == "succ-ia" || command == "betabinom" || command == "curves";
}

HttpResponse json_response(int status, const Json& body) {
  HttpResponse r;
  r.status = status;
  r.body = api::canonical(body);
  r.headers["Content-Type"] = "application/json";
  return r;
}

HttpResponse error_response(int status, ErrorCode code, const std::string& message) {
  return json_response(status, api::error_body(Error(code, message)));
}

void add_cors(const ServiceConfig& cfg, HttpResponse& r) {
  if (cfg.cors_origin.empty()) return;
  r.headers["Access-Control-Allow-Origin"] = cfg.cors_origin;
  r.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
  r.headers["Access-Control-Allow-Headers"] = "Content-Type";
}

HttpResponse dispatch(const ServiceConfig& cfg, std::string_view method, std::string_view path,
                      std::string_view body) {
  if (path == "/healthz") {
    if (method != "GET") return error_response(405, ErrorCode::schema, "use GET /healthz");
    return json_response(200, Json{{"status", "ok"}, {"version", api::version()}});
  }
  if (path.substr(0, kPrefix.size()) != kPrefix || !served(path.substr(kPrefix.size()))) {
    return error_response(404, ErrorCode::schema, "unknown route " + std::string(path));
  }
  if (method == "OPTIONS") {
    HttpResponse r;
    r.status = 204;
    return r;
  }
  if (method != "POST") return error_response(405, ErrorCode::schema, "use POST for " + std::string(path));
  if (body.size() > cfg.max_body_bytes) {
    return error_response(413, ErrorCode::size_cap,
                          "request body exceeds " + std::to_string(cfg.max_body_bytes) + " bytes");
  }

  const Json request = Json::parse(body, nullptr, false);
  if (request.is_discarded()) return error_response(400, ErrorCode::schema, "request body is not valid JSON");
  api::RunOptions options;
  options.threads = cfg.threads;
  options.betabinom_cap = cfg.betabinom_cap;
  try {
    return json_response(200, api::run(path.substr(kPrefix.size()), request, options));
  } catch (const Error& e) {
    return json_response(api::http_status(e.code()), api::error_body(e));
  } catch (const Json::exception& e) {
    return error_response(400, ErrorCode::schema, e.what());
  }
}

std::string log_line(std::string_view method, std::string_view path, int status, std::size_t bytes,
                     double ms) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  Json line{{"ts_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
            {"method", method},
            {"path", path},
            {"status", status},
            {"bytes", bytes},
            {"ms", ms}};
  return line.dump();
}

}  // namespace

ServiceConfig config_from_env(ServiceConfig base) {
  const auto env = [](const char* name) -> const char* { return std::getenv(name); };
  if (const char* v = env("PPOS_HOST")) base.host = v;
  if (const char* v = env("PPOS_PORT")) base.port = std::atoi(v);
  if (const char* v = env("PPOS_BETABINOM_CAP")) base.betabinom_cap = std::atoll(v);
  if (const char* v = env("PPOS_MAX_BODY")) base.max_body_bytes = static_cast<std::size_t>(std::atoll(v));
  if (const char* v = env("PPOS_CORS_ORIGIN")) base.cors_origin = v;
  return base;
}

HttpResponse handle(const ServiceConfig& cfg, std::string_view method, std::string_view path,
                    std::string_view body) {
  HttpResponse r = dispatch(cfg, method, path, body);
  add_cors(cfg, r);
  return r;
}

struct Server::Impl {
  httplib::Server http;
  std::mutex log_mutex;
};

Server::Server(ServiceConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  // The handler enforces the documented cap with a JSON error; the transport
  // limit only stops runaway uploads.
  impl_->http.set_payload_max_length(cfg_.max_body_bytes * 4 + 1024);

  const auto serve = [this](const httplib::Request& req, httplib::Response& res) {
    const auto start = std::chrono::steady_clock::now();
    const HttpResponse out = handle(cfg_, req.method, req.path, req.body);
    res.status = out.status;
    for (const auto& [k, v] : out.headers) {
      if (k != "Content-Type") res.set_header(k, v);
    }
    if (!out.body.empty()) res.set_content(out.body, "application/json");
    if (cfg_.log_requests) {
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      std::lock_guard lock(impl_->log_mutex);
      std::cerr << log_line(req.method, req.path, out.status, out.body.size(), ms) << std::endl;
    }
  };
  impl_->http.Get(".*", serve);
  impl_->http.Post(".*", serve);
  impl_->http.Options(".*", serve);
  impl_->http.Put(".*", serve);
  impl_->http.Delete(".*", serve);
}

Server::~Server() = default;

bool Server::bind() {
  if (cfg_.port == 0) {
    port_ = impl_->http.bind_to_any_port(cfg_.host);
    return port_ > 0;
  }
  if (!impl_->http.bind_to_port(cfg_.host, cfg_.port)) return false;
  port_ = cfg_.port;
  return true;
}

bool Server::listen() { return impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

}  // namespace ppos::service
