#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "riot/api/service.hpp"

namespace riot::api {

/// HTTP/1.1 front end for Service under /api/v1.
class HttpServer {
 public:
  explicit HttpServer(Service& svc);
  ~HttpServer();
  /// Binds; port 0 picks an ephemeral port. Returns the bound port.
  std::uint16_t bind(const std::string& addr, std::uint16_t port);
  /// Serves until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace riot::api
