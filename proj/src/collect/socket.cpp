#include "riot/collect/socket.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

namespace riot::collect {

namespace {

std::string errno_text() { return std::strerror(errno); }

bool wait_fd(int fd, short events, Millis timeout) {
  pollfd p{fd, events, 0};
  for (;;) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r > 0) return true;
    if (r == 0) return false;
    if (errno != EINTR) throw IoError("poll failed: " + errno_text());
  }
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.release();
  }
  return *this;
}

int Socket::release() {
  const int f = fd_;
  fd_ = -1;
  return f;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::string_view bytes) {
  while (!bytes.empty()) {
    const ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw DisconnectedError("peer closed the connection");
      throw IoError("send failed: " + errno_text());
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::string Socket::recv_exact(std::size_t n, Millis timeout) {
  std::string out(n, '\0');
  std::size_t got = 0;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (got < n) {
    const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !wait_fd(fd_, POLLIN, left)) throw TimeoutError("receive timed out");
    const ssize_t r = ::recv(fd_, out.data() + got, n - got, 0);
    if (r == 0) throw DisconnectedError("peer closed the connection");
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == ECONNRESET) throw DisconnectedError("connection reset by peer");
      throw IoError("recv failed: " + errno_text());
    }
    got += static_cast<std::size_t>(r);
  }
  return out;
}

void Socket::send_message(const Message& m) { send_all(encode(m)); }

Message Socket::recv_message(Millis timeout) {
  const auto n = read_length_prefix(recv_exact(4, timeout));
  return decode_body(recv_exact(n, timeout));
}

Socket connect_tcp(const std::string& host, std::uint16_t port, Millis timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw IoError("cannot resolve host '" + host + "': " + gai_strerror(rc));
  std::string last = "no addresses";
  for (addrinfo* a = res; a != nullptr; a = a->ai_next) {
    Socket s(::socket(a->ai_family, a->ai_socktype, a->ai_protocol));
    if (!s.valid()) continue;
    const int flags = ::fcntl(s.fd(), F_GETFL, 0);
    ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(s.fd(), a->ai_addr, a->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      if (wait_fd(s.fd(), POLLOUT, timeout)) {
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(s.fd(), F_SETFL, flags);
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      ::freeaddrinfo(res);
      return s;
    }
    last = errno_text();
  }
  ::freeaddrinfo(res);
  throw IoError("cannot connect to " + host + ":" + std::to_string(port) + ": " + last);
}

Listener::Listener(const std::string& bind_addr, std::uint16_t port) {
  sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
  if (!sock_.valid()) throw IoError("socket failed: " + errno_text());
  int one = 1;
  ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_addr.c_str(), &addr.sin_addr) != 1)
    throw ValidationError("bind address must be an IPv4 literal: " + bind_addr);
  if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0)
    throw IoError("cannot bind " + bind_addr + ":" + std::to_string(port) + ": " + errno_text());
  if (::listen(sock_.fd(), 16) < 0) throw IoError("listen failed: " + errno_text());
  socklen_t len = sizeof addr;
  ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

std::optional<Socket> Listener::accept(Millis timeout) {
  if (!sock_.valid() || !wait_fd(sock_.fd(), POLLIN, timeout)) return std::nullopt;
  const int fd = ::accept(sock_.fd(), nullptr, nullptr);
  if (fd < 0) {
    if (errno == EINTR || errno == EAGAIN || errno == ECONNABORTED) return std::nullopt;
    throw IoError("accept failed: " + errno_text());
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

std::uint16_t port_from_env() {
  const char* v = std::getenv("RIOT_LAB_PORT");
  if (v == nullptr || *v == '\0') return kDefaultPort;
  char* end = nullptr;
  const long p = std::strtol(v, &end, 10);
  if (*end != '\0' || p <= 0 || p > 65535) throw ValidationError(std::string("RIOT_LAB_PORT is not a valid port: ") + v);
  return static_cast<std::uint16_t>(p);
}

}  // namespace riot::collect
