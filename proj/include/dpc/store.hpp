#pragma once

/**
 * The blob-cache server ("cache box") and its client connectors.
 *
 * ServerState is the shared store core: a key → StateBlob map plus the
 * master catalog, mutated atomically per request. Every stored key is
 * inserted into the master catalog under the same lock, so the catalog
 * always over-approximates the store. BlobServer exposes it over the wire
 * protocol; connectors give the orchestrator a uniform call surface whether
 * the store is in-process or across TCP.
 *
 * A NOT_FOUND on a catalog-positive key is the Bloom false-positive case
 * and a normal outcome for clients, not an error. A transport failure maps
 * to Unavailable; callers fall back to local decode.
 */

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "dpc/blob.hpp"
#include "dpc/bytes.hpp"
#include "dpc/catalog.hpp"
#include "dpc/core.hpp"
#include "dpc/protocol.hpp"

namespace dpc {

inline constexpr size_t kDefaultMaxBlobBytes = 64ull << 20;  // 64 MiB
inline constexpr uint64_t kDefaultCatalogCapacity = 1'000'000;
inline constexpr double kDefaultCatalogFpr = 0.01;

enum class PutStatus : uint8_t { Ok, RejectedBlob, TooLarge, Unavailable, Error };
enum class GetStatus : uint8_t { Ok, NotFound, Unavailable, Error };
enum class PullStatus : uint8_t { Ok, NotModified, Unavailable, Error };

struct GetReply {
  GetStatus status = GetStatus::Error;
  StateBlob blob;
};

struct PullReply {
  PullStatus status = PullStatus::Error;
  uint64_t version = 0;
  std::vector<uint8_t> catalog_bytes;
};

struct ServerConfig {
  size_t max_blob_bytes = kDefaultMaxBlobBytes;
  uint64_t catalog_capacity = kDefaultCatalogCapacity;
  double catalog_fpr = kDefaultCatalogFpr;
  std::string persist_path;  // empty = persistence off
};

class ServerState {
 public:
  explicit ServerState(ServerConfig config = {})
      : config_(config), master_(config.catalog_capacity, config.catalog_fpr) {
    if (!config_.persist_path.empty()) {
      replay_aof();
      aof_.open(config_.persist_path, std::ios::binary | std::ios::app);
    }
  }

  PutStatus put(CacheKey key, const StateBlob& blob) {
    if (blob.meta_digest != key.digest) return PutStatus::RejectedBlob;
    if (blob.wire_size() > config_.max_blob_bytes) return PutStatus::TooLarge;
    std::lock_guard lock(mu_);
    blobs_[key.digest] = blob;  // last writer wins
    master_.insert(key);
    if (aof_.is_open()) append_aof(key, blob);
    return PutStatus::Ok;
  }

  std::optional<StateBlob> get(CacheKey key) const {
    std::lock_guard lock(mu_);
    auto it = blobs_.find(key.digest);
    if (it == blobs_.end()) return std::nullopt;
    return it->second;
  }

  struct CatalogSnapshot {
    uint64_t version;
    std::vector<uint8_t> bytes;
  };

  /// Full serialized master catalog when it moved past since_version,
  /// nullopt (NOT_MODIFIED) otherwise.
  std::optional<CatalogSnapshot> pull_catalog(uint64_t since_version) const {
    std::lock_guard lock(mu_);
    if (master_.version() <= since_version) return std::nullopt;
    return CatalogSnapshot{master_.version(), master_.serialize()};
  }

  size_t blob_count() const {
    std::lock_guard lock(mu_);
    return blobs_.size();
  }

  uint64_t catalog_version() const {
    std::lock_guard lock(mu_);
    return master_.version();
  }

  size_t max_blob_bytes() const { return config_.max_blob_bytes; }

  /// Test/diagnostic introspection: checks that every stored key is
  /// catalog-positive (the catalog must over-approximate the store).
  bool catalog_covers_store() const {
    std::lock_guard lock(mu_);
    for (const auto& [digest, blob] : blobs_) {
      if (!master_.contains(CacheKey{digest})) return false;
    }
    return true;
  }

 private:
  // Append-only persistence record: key u64 BE ‖ blob_len u32 BE ‖ blob.
  void append_aof(CacheKey key, const StateBlob& blob) {
    ByteWriter w;
    w.u64be(key.digest);
    auto enc = blob.encode();
    w.u32be(static_cast<uint32_t>(enc.size()));
    w.bytes(enc);
    const auto& buf = w.view();
    aof_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    aof_.flush();
  }

  void replay_aof() {
    std::ifstream in(config_.persist_path, std::ios::binary);
    if (!in.is_open()) return;
    std::vector<uint8_t> all((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    ByteReader r(all);
    while (r.remaining() >= 12) {
      uint64_t digest = r.u64be();
      uint32_t len = r.u32be();
      if (len > r.remaining()) break;  // torn tail record; ignore
      auto body = r.bytes(len);
      try {
        auto blob = StateBlob::decode(body);
        if (blob.meta_digest == digest && blob.wire_size() <= config_.max_blob_bytes) {
          blobs_[digest] = std::move(blob);
          master_.insert(CacheKey{digest});
        }
      } catch (const DecodeError&) {
        break;
      }
    }
  }

  ServerConfig config_;
  mutable std::mutex mu_;
  std::unordered_map<uint64_t, StateBlob> blobs_;
  Catalog master_;
  std::ofstream aof_;
};

// ---------------------------------------------------------------------------
// TCP server
// ---------------------------------------------------------------------------

class BlobServer {
 public:
  /// Binds immediately; throws on bind failure. Port 0 = ephemeral.
  BlobServer(std::shared_ptr<ServerState> state, const std::string& host, uint16_t port)
      : state_(std::move(state)) {
    auto [sock, bound] = wire::tcp_listen(host, port);
    if (!sock.valid()) throw std::runtime_error("BlobServer: cannot bind " + host + ":" +
                                                std::to_string(port));
    listener_ = std::move(sock);
    port_ = bound;
  }

  ~BlobServer() { stop(); }

  void start() {
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    listener_.shutdown_both();
    listener_.close_fd();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::shared_ptr<wire::Socket>> socks;
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(conn_mu_);
      socks = conn_sockets_;
      threads = std::move(conn_threads_);
      conn_threads_.clear();
    }
    // Unblock threads parked in recv, then join without holding the lock
    // (exiting threads need it to deregister).
    for (auto& sock : socks)
      if (sock) sock->shutdown_both();
    for (auto& t : threads)
      if (t.joinable()) t.join();
    std::lock_guard lock(conn_mu_);
    conn_sockets_.clear();
  }

  uint16_t port() const { return port_; }
  ServerState& state() { return *state_; }

 private:
  void accept_loop() {
    while (running_) {
      int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {
        if (running_ && errno == EINTR) continue;
        break;
      }
      auto sock = std::make_shared<wire::Socket>(fd);
      std::lock_guard lock(conn_mu_);
      conn_sockets_.push_back(sock);
      conn_threads_.emplace_back([this, sock] { serve_connection(std::move(sock)); });
    }
  }

  // One request/response exchange at a time per connection; a protocol
  // violation closes that connection only.
  void serve_connection(std::shared_ptr<wire::Socket> sock) {
    while (running_) {
      uint8_t header[5];
      if (!wire::read_exact(sock->fd(), header, sizeof header)) break;
      if (std::memcmp(header, wire::kRequestMagic, 4) != 0) break;
      auto opcode = static_cast<wire::Opcode>(header[4]);
      bool ok = false;
      switch (opcode) {
        case wire::Opcode::Put: ok = handle_put(sock->fd()); break;
        case wire::Opcode::Get: ok = handle_get(sock->fd()); break;
        case wire::Opcode::CatalogPull: ok = handle_pull(sock->fd()); break;
        case wire::Opcode::Ping: ok = send_status(sock->fd(), wire::Status::Ok); break;
        default: ok = false;  // unknown opcode: drop the connection
      }
      if (!ok) break;
    }
    // Deregister under the lock so stop()'s shutdown sweep cannot race the
    // close; the final reference then closes the socket.
    std::lock_guard lock(conn_mu_);
    std::erase(conn_sockets_, sock);
  }

  static bool send_status(int fd, wire::Status s) {
    uint8_t b = static_cast<uint8_t>(s);
    return wire::write_all(fd, &b, 1);
  }

  static bool send_err(int fd, const std::string& reason) {
    ByteWriter w;
    w.u8(static_cast<uint8_t>(wire::Status::Err));
    w.u16be(static_cast<uint16_t>(reason.size()));
    w.str(reason);
    const auto& buf = w.view();
    return wire::write_all(fd, buf.data(), buf.size());
  }

  bool handle_put(int fd) {
    uint8_t head[12];
    if (!wire::read_exact(fd, head, sizeof head)) return false;
    ByteReader r(std::span<const uint8_t>(head, sizeof head));
    uint64_t key = r.u64be();
    uint32_t len = r.u32be();
    // generous framing bound; semantic size policy is the store's
    if (len > (256u << 20)) return false;
    std::vector<uint8_t> body(len);
    if (!wire::read_exact(fd, body.data(), len)) return false;
    StateBlob blob;
    try {
      blob = StateBlob::decode(body);
    } catch (const DecodeError& e) {
      send_err(fd, std::string("malformed blob: ") + e.what());
      return false;
    }
    switch (state_->put(CacheKey{key}, blob)) {
      case PutStatus::Ok: return send_status(fd, wire::Status::Ok);
      case PutStatus::RejectedBlob: return send_err(fd, "rejected: digest mismatch");
      case PutStatus::TooLarge: return send_err(fd, "rejected: blob too large");
      default: return send_err(fd, "internal error");
    }
  }

  bool handle_get(int fd) {
    uint8_t head[8];
    if (!wire::read_exact(fd, head, sizeof head)) return false;
    ByteReader r(std::span<const uint8_t>(head, sizeof head));
    uint64_t key = r.u64be();
    auto blob = state_->get(CacheKey{key});
    if (!blob) return send_status(fd, wire::Status::NotFound);
    ByteWriter w;
    w.u8(static_cast<uint8_t>(wire::Status::Ok));
    auto enc = blob->encode();
    w.u32be(static_cast<uint32_t>(enc.size()));
    w.bytes(enc);
    const auto& buf = w.view();
    return wire::write_all(fd, buf.data(), buf.size());
  }

  bool handle_pull(int fd) {
    uint8_t head[8];
    if (!wire::read_exact(fd, head, sizeof head)) return false;
    ByteReader r(std::span<const uint8_t>(head, sizeof head));
    uint64_t since = r.u64be();
    auto snap = state_->pull_catalog(since);
    if (!snap) return send_status(fd, wire::Status::NotModified);
    ByteWriter w;
    w.u8(static_cast<uint8_t>(wire::Status::Ok));
    w.u64be(snap->version);
    w.u32be(static_cast<uint32_t>(snap->bytes.size()));
    w.bytes(snap->bytes);
    const auto& buf = w.view();
    return wire::write_all(fd, buf.data(), buf.size());
  }

  std::shared_ptr<ServerState> state_;
  wire::Socket listener_;
  uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::vector<std::thread> conn_threads_;
  std::vector<std::shared_ptr<wire::Socket>> conn_sockets_;
};

// ---------------------------------------------------------------------------
// Connectors
// ---------------------------------------------------------------------------

/// Client-side store surface. One in-flight request per connector; the
/// orchestrator owns one for the request path, the sync task another.
class StoreConnector {
 public:
  virtual ~StoreConnector() = default;
  virtual PutStatus put(CacheKey key, const StateBlob& blob) = 0;
  virtual GetReply get(CacheKey key) = 0;
  virtual PullReply pull_catalog(uint64_t since_version) = 0;
  virtual bool ping() = 0;
};

/// Direct connector for in-process servers (simulation and tests).
/// set_down() makes every call report Unavailable, for outage injection.
class InProcessConnector final : public StoreConnector {
 public:
  explicit InProcessConnector(std::shared_ptr<ServerState> state) : state_(std::move(state)) {}

  void set_down(bool down) { down_ = down; }

  PutStatus put(CacheKey key, const StateBlob& blob) override {
    if (down_) return PutStatus::Unavailable;
    return state_->put(key, blob);
  }

  GetReply get(CacheKey key) override {
    if (down_) return {GetStatus::Unavailable, {}};
    auto blob = state_->get(key);
    if (!blob) return {GetStatus::NotFound, {}};
    return {GetStatus::Ok, std::move(*blob)};
  }

  PullReply pull_catalog(uint64_t since_version) override {
    if (down_) return {PullStatus::Unavailable, 0, {}};
    auto snap = state_->pull_catalog(since_version);
    if (!snap) return {PullStatus::NotModified, 0, {}};
    return {PullStatus::Ok, snap->version, std::move(snap->bytes)};
  }

  bool ping() override { return !down_; }

 private:
  std::shared_ptr<ServerState> state_;
  std::atomic<bool> down_{false};
};

/// TCP connector. Connects lazily, reconnects after failures; any
/// transport error surfaces as Unavailable and the next call retries.
class TcpStoreConnector final : public StoreConnector {
 public:
  TcpStoreConnector(std::string host, uint16_t port) : host_(std::move(host)), port_(port) {}

  PutStatus put(CacheKey key, const StateBlob& blob) override {
    ByteWriter w;
    w.str(std::string_view(wire::kRequestMagic, 4));
    w.u8(static_cast<uint8_t>(wire::Opcode::Put));
    w.u64be(key.digest);
    auto enc = blob.encode();
    w.u32be(static_cast<uint32_t>(enc.size()));
    w.bytes(enc);
    if (!roundtrip_header(w.view())) return PutStatus::Unavailable;
    switch (last_status_) {
      case wire::Status::Ok: return PutStatus::Ok;
      case wire::Status::Err:
        return last_err_.find("too large") != std::string::npos ? PutStatus::TooLarge
                                                                : PutStatus::RejectedBlob;
      default: return PutStatus::Error;
    }
  }

  GetReply get(CacheKey key) override {
    ByteWriter w;
    w.str(std::string_view(wire::kRequestMagic, 4));
    w.u8(static_cast<uint8_t>(wire::Opcode::Get));
    w.u64be(key.digest);
    if (!roundtrip_header(w.view())) return {GetStatus::Unavailable, {}};
    if (last_status_ == wire::Status::NotFound) return {GetStatus::NotFound, {}};
    if (last_status_ != wire::Status::Ok) return {GetStatus::Error, {}};
    uint8_t lenb[4];
    if (!wire::read_exact(sock_.fd(), lenb, 4)) return fail_get();
    ByteReader lr(std::span<const uint8_t>(lenb, 4));
    uint32_t len = lr.u32be();
    std::vector<uint8_t> body(len);
    if (!wire::read_exact(sock_.fd(), body.data(), len)) return fail_get();
    try {
      return {GetStatus::Ok, StateBlob::decode(body)};
    } catch (const DecodeError&) {
      return {GetStatus::Error, {}};
    }
  }

  PullReply pull_catalog(uint64_t since_version) override {
    ByteWriter w;
    w.str(std::string_view(wire::kRequestMagic, 4));
    w.u8(static_cast<uint8_t>(wire::Opcode::CatalogPull));
    w.u64be(since_version);
    if (!roundtrip_header(w.view())) return {PullStatus::Unavailable, 0, {}};
    if (last_status_ == wire::Status::NotModified) return {PullStatus::NotModified, 0, {}};
    if (last_status_ != wire::Status::Ok) return {PullStatus::Error, 0, {}};
    uint8_t head[12];
    if (!wire::read_exact(sock_.fd(), head, sizeof head)) return fail_pull();
    ByteReader hr(std::span<const uint8_t>(head, sizeof head));
    uint64_t version = hr.u64be();
    uint32_t len = hr.u32be();
    std::vector<uint8_t> body(len);
    if (!wire::read_exact(sock_.fd(), body.data(), len)) return fail_pull();
    return {PullStatus::Ok, version, std::move(body)};
  }

  bool ping() override {
    ByteWriter w;
    w.str(std::string_view(wire::kRequestMagic, 4));
    w.u8(static_cast<uint8_t>(wire::Opcode::Ping));
    return roundtrip_header(w.view()) && last_status_ == wire::Status::Ok;
  }

 private:
  bool ensure_connected() {
    if (sock_.valid()) return true;
    sock_ = wire::tcp_connect(host_, port_);
    return sock_.valid();
  }

  /// Sends a request and reads the status byte (plus ERR reason). Returns
  /// false on transport failure, with the connection dropped for reconnect.
  bool roundtrip_header(const std::vector<uint8_t>& request) {
    if (!ensure_connected()) return false;
    if (!wire::write_all(sock_.fd(), request.data(), request.size())) return drop();
    uint8_t status;
    if (!wire::read_exact(sock_.fd(), &status, 1)) return drop();
    last_status_ = static_cast<wire::Status>(status);
    last_err_.clear();
    if (last_status_ == wire::Status::Err) {
      uint8_t lenb[2];
      if (!wire::read_exact(sock_.fd(), lenb, 2)) return drop();
      uint16_t len = static_cast<uint16_t>(lenb[0] << 8 | lenb[1]);
      last_err_.resize(len);
      if (len && !wire::read_exact(sock_.fd(), last_err_.data(), len)) return drop();
    }
    return true;
  }

  bool drop() {
    sock_.close_fd();
    return false;
  }

  GetReply fail_get() {
    drop();
    return {GetStatus::Unavailable, {}};
  }

  PullReply fail_pull() {
    drop();
    return {PullStatus::Unavailable, 0, {}};
  }

  std::string host_;
  uint16_t port_;
  wire::Socket sock_;
  wire::Status last_status_ = wire::Status::Err;
  std::string last_err_;
};

}  // namespace dpc
