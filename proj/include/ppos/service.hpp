#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>

namespace ppos::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::int64_t betabinom_cap = 4'000'000;
  std::size_t max_body_bytes = 64 * 1024;
  std::string cors_origin = "*";  // empty disables CORS headers
  int threads = 1;                // workers for one betabinom request
  bool log_requests = true;
};

// Overrides from PPOS_HOST, PPOS_PORT, PPOS_BETABINOM_CAP, PPOS_MAX_BODY and
// PPOS_CORS_ORIGIN when set.
ServiceConfig config_from_env(ServiceConfig base = {});

struct HttpResponse {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;
};

// Transport-free request handler; the HTTP server is a thin shell around it.
HttpResponse handle(const ServiceConfig& cfg, std::string_view method, std::string_view path,
                    std::string_view body);

// httplib server around handle(): POST /api/v1/{pos,succ-ia,betabinom,curves},
// GET /healthz, CORS preflight, JSON request logs on standard error.
class Server {
 public:
  explicit Server(ServiceConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds to cfg.port, or to an ephemeral port when cfg.port == 0.
  bool bind();
  int port() const { return port_; }
  bool listen();  // blocking
  void stop();

 private:
  struct Impl;
  ServiceConfig cfg_;
  int port_ = 0;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ppos::service
