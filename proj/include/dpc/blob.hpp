#pragma once

/**
 * StateBlob: a serialized engine state with a self-validating header. The
 * stored digest must match the storage key, and the embedded token prefix
 * lets a downloader check the blob against its own prompt before trusting
 * it — a catalog false positive or key collision therefore degrades to a
 * miss, never to a wrong answer.
 */

#include <cstdint>
#include <span>
#include <vector>

#include "dpc/bytes.hpp"
#include "dpc/core.hpp"
#include "dpc/errors.hpp"

namespace dpc {

struct StateBlob {
  uint64_t meta_digest = 0;   // cache_key(meta, prefix); must equal the storage key
  TokenSequence prefix;       // full token prefix the state encodes
  std::vector<uint8_t> payload;  // opaque engine state

  /// Wire layout (big-endian): meta_digest u64 ‖ prefix_len u32 ‖
  /// prefix tokens u32... ‖ payload_len u32 ‖ payload.
  std::vector<uint8_t> encode() const {
    ByteWriter w;
    w.u64be(meta_digest);
    w.u32be(static_cast<uint32_t>(prefix.size()));
    for (TokenId t : prefix) w.u32be(t);
    w.u32be(static_cast<uint32_t>(payload.size()));
    w.bytes(payload);
    return w.take();
  }

  static StateBlob decode(std::span<const uint8_t> data) {
    ByteReader r(data);
    StateBlob b;
    b.meta_digest = r.u64be();
    uint32_t prefix_len = r.u32be();
    if (static_cast<size_t>(prefix_len) * 4 > r.remaining())
      throw DecodeError("blob: prefix length exceeds frame");
    b.prefix.reserve(prefix_len);
    for (uint32_t i = 0; i < prefix_len; ++i) b.prefix.push_back(r.u32be());
    uint32_t payload_len = r.u32be();
    if (payload_len > r.remaining()) throw DecodeError("blob: payload length exceeds frame");
    auto p = r.bytes(payload_len);
    b.payload.assign(p.begin(), p.end());
    r.expect_end("blob");
    return b;
  }

  size_t wire_size() const { return 8 + 4 + 4 * prefix.size() + 4 + payload.size(); }

  bool operator==(const StateBlob&) const = default;
};

}  // namespace dpc
