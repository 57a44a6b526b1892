#pragma once

/**
 * Wire protocol of the blob-cache server, plus the small POSIX socket layer
 * under it. TCP, all integers big-endian.
 *
 *   request  = "DPC1" ‖ opcode u8 ‖ body
 *   response = status u8 ‖ status-specific body
 *
 * Opcodes: 0x01 PUT (key u64 ‖ blob_len u32 ‖ blob), 0x02 GET (key u64),
 * 0x03 CATALOG_PULL (since_version u64), 0x05 PING.
 * Statuses: 0x80 OK, 0x81 NOT_FOUND, 0x82 NOT_MODIFIED,
 * 0x8F ERR (reason_len u16 ‖ UTF-8 reason).
 */

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>

namespace dpc::wire {

inline constexpr char kRequestMagic[4] = {'D', 'P', 'C', '1'};

enum class Opcode : uint8_t {
  Put = 0x01,
  Get = 0x02,
  CatalogPull = 0x03,
  Ping = 0x05,
};

enum class Status : uint8_t {
  Ok = 0x80,
  NotFound = 0x81,
  NotModified = 0x82,
  Err = 0x8F,
};

/// Move-only RAII wrapper over a socket fd.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  Socket& operator=(Socket&& other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Unblocks any thread parked in accept/read on this socket.
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

 private:
  int fd_ = -1;
};

inline bool read_exact(int fd, void* buf, size_t n) {
  auto* p = static_cast<uint8_t*>(buf);
  while (n > 0) {
    ssize_t r = ::recv(fd, p, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<size_t>(r);
  }
  return true;
}

inline bool write_all(int fd, const void* buf, size_t n) {
  const auto* p = static_cast<const uint8_t*>(buf);
  while (n > 0) {
    ssize_t r = ::send(fd, p, n, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += r;
    n -= static_cast<size_t>(r);
  }
  return true;
}

/// Binds and listens on host:port; port 0 picks an ephemeral port.
/// Returns the socket and the bound port, or an invalid socket on failure.
inline std::pair<Socket, uint16_t> tcp_listen(const std::string& host, uint16_t port,
                                              int backlog = 64) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) return {Socket{}, 0};
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) return {Socket{}, 0};
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) return {Socket{}, 0};
  if (::listen(s.fd(), backlog) != 0) return {Socket{}, 0};
  socklen_t len = sizeof addr;
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  return {std::move(s), ntohs(addr.sin_port)};
}

inline Socket tcp_connect(const std::string& host, uint16_t port) {
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) return Socket{};
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) return Socket{};
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) return Socket{};
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

}  // namespace dpc::wire
