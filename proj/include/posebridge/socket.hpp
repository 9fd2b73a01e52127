// SPDX-License-Identifier: Apache-2.0
//
// Minimal blocking TCP transport (POSIX) for length-prefixed frames.
#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>
#include <string>
#include <utility>

#include "posebridge/error.hpp"
#include "posebridge/wire.hpp"

namespace posebridge::net {

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 >= text.size())
    throw Error(ErrorCode::ConfigError, "endpoint '" + text + "' is not host:port");
  Endpoint ep{text.substr(0, colon), 0};
  if (ep.host.empty()) ep.host = "127.0.0.1";
  try {
    std::size_t used = 0;
    const int port = std::stoi(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "endpoint '" + text + "' has an invalid port");
  }
  return ep;
}

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }

  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  void shutdown() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res)
    throw Error(ErrorCode::BindError, "cannot resolve host '" + ep.host + "'");
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

}  // namespace detail

/// Connected stream carrying length-prefixed WireFrames.
class FrameStream {
 public:
  explicit FrameStream(Socket s)
      : sock_(std::move(s)), reader_([this](std::uint8_t* dst, std::size_t n) -> std::size_t {
          while (true) {
            const ssize_t got = ::recv(sock_.fd(), dst, n, 0);
            if (got >= 0) return static_cast<std::size_t>(got);
            if (errno == EINTR) continue;
            return 0;
          }
        }) {
    const int one = 1;
    ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  FrameStream(FrameStream&&) = delete;

  static std::unique_ptr<FrameStream> connect(const Endpoint& ep) {
    Socket s(::socket(AF_INET, SOCK_STREAM, 0));
    if (!s.valid()) throw Error(ErrorCode::IoError, std::string("socket: ") + std::strerror(errno));
    const sockaddr_in addr = detail::resolve(ep);
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
      throw Error(ErrorCode::BindError, "cannot connect to " + ep.str() + ": " + std::strerror(errno));
    return std::make_unique<FrameStream>(std::move(s));
  }

  std::optional<wire::WireFrame> read() { return reader_.next(); }

  void write(const wire::WireFrame& frame) {
    const wire::Bytes rec = wire::encode_record(frame);
    std::size_t sent = 0;
    while (sent < rec.size()) {
      const ssize_t n = ::send(sock_.fd(), rec.data() + sent, rec.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::Disconnected, std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void shutdown() { sock_.shutdown(); }

 private:
  Socket sock_;
  wire::RecordReader reader_;
};

class Listener {
 public:
  explicit Listener(const Endpoint& ep) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw Error(ErrorCode::BindError, std::string("socket: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const sockaddr_in addr = detail::resolve(ep);
    if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0)
      throw Error(ErrorCode::BindError, "cannot bind " + ep.str() + ": " + std::strerror(errno));
    if (::listen(sock_.fd(), 4) != 0)
      throw Error(ErrorCode::BindError, "cannot listen on " + ep.str() + ": " + std::strerror(errno));
  }

  /// Actual bound port (useful with port 0).
  std::uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  Socket accept() {
    while (true) {
      const int fd = ::accept(sock_.fd(), nullptr, nullptr);
      if (fd >= 0) return Socket(fd);
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, std::string("accept failed: ") + std::strerror(errno));
    }
  }

 private:
  Socket sock_;
};

}  // namespace posebridge::net
