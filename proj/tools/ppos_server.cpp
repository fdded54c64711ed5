#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ppos/api.hpp"
#include "ppos/service.hpp"

int main(int argc, char** argv) {
  ppos::service::ServiceConfig cfg = ppos::service::config_from_env();

  CLI::App app{"JSON-over-HTTP service for CP, PPoS and PoS"};
  app.name("ppos_server");
  app.set_version_flag("--version", ppos::api::version());
  app.add_option("--host", cfg.host, "bind address")->capture_default_str();
  app.add_option("--port", cfg.port, "port, 0 picks a free one")->capture_default_str();
  app.add_option("--betabinom-cap", cfg.betabinom_cap, "max indicator evaluations per request")
      ->capture_default_str();
  app.add_option("--max-body", cfg.max_body_bytes, "max request body in bytes")->capture_default_str();
  app.add_option("--cors-origin", cfg.cors_origin, "Access-Control-Allow-Origin value, empty disables")
      ->capture_default_str();
  app.add_option("--threads", cfg.threads, "workers per betabinom request")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  ppos::service::Server server(cfg);
  if (!server.bind()) {
    std::cerr << "cannot bind " << cfg.host << ":" << cfg.port << "\n";
    return 1;
  }
  std::cerr << "listening on " << cfg.host << ":" << server.port() << std::endl;
  return server.listen() ? 0 : 1;
}
