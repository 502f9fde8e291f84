#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>

#include "riot/collect/protocol.hpp"
#include "riot/error.hpp"

namespace riot::collect {

class TimeoutError : public IoError {
 public:
  using IoError::IoError;
};

/// Peer closed the connection.
class DisconnectedError : public IoError {
 public:
  using IoError::IoError;
};

using Millis = std::chrono::milliseconds;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(o.release()) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  int release();
  void close();
  /// Stops further reads/writes without releasing the descriptor.
  void shutdown();

  void send_all(std::string_view bytes);
  /// Reads exactly n bytes or throws Timeout/Disconnected.
  std::string recv_exact(std::size_t n, Millis timeout);

  void send_message(const Message& m);
  Message recv_message(Millis timeout);

 private:
  int fd_ = -1;
};

Socket connect_tcp(const std::string& host, std::uint16_t port, Millis timeout = Millis(5000));

class Listener {
 public:
  /// Port 0 picks an ephemeral port.
  Listener(const std::string& bind_addr, std::uint16_t port);
  std::uint16_t port() const { return port_; }
  /// nullopt on timeout.
  std::optional<Socket> accept(Millis timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  std::uint16_t port_ = 0;
};

/// Port from RIOT_LAB_PORT, else the default.
std::uint16_t port_from_env();

}  // namespace riot::collect
