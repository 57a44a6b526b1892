#pragma once

/**
 * Bloom-filter catalog: a compact, mergeable summary of which cache keys
 * exist on the blob server. Local replicas answer membership probes with
 * zero network cost and absorb the master's bitmap asynchronously.
 *
 * Bit positions come from Kirsch–Mitzenmacher double hashing over the two
 * 64-bit values already at hand (the key digest and its FNV rehash), so
 * any two implementations of this header agree bit-for-bit.
 */

#include <cmath>
#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <vector>

#include "dpc/bytes.hpp"
#include "dpc/core.hpp"
#include "dpc/errors.hpp"
#include "dpc/hash.hpp"

namespace dpc {

struct CatalogParams {
  uint64_t capacity_n = 0;
  double target_fpr_p = 0.0;
  uint64_t bit_count_m = 0;
  uint32_t hash_count_k = 0;

  /// Standard Bloom sizing: m = ceil(-n ln p / (ln 2)^2), k = round(m/n ln 2),
  /// k floored at 1.
  static CatalogParams derive(uint64_t capacity_n, double target_fpr_p) {
    if (capacity_n < 1) throw InvalidInput("catalog: capacity must be >= 1");
    if (!(target_fpr_p > 0.0 && target_fpr_p < 1.0))
      throw InvalidInput("catalog: target FPR must be in (0,1)");
    const double ln2 = std::log(2.0);
    double bits = std::ceil(-static_cast<double>(capacity_n) * std::log(target_fpr_p) / (ln2 * ln2));
    uint64_t m = static_cast<uint64_t>(bits);
    uint32_t k = static_cast<uint32_t>(std::llround(static_cast<double>(m) /
                                                    static_cast<double>(capacity_n) * ln2));
    if (k < 1) k = 1;
    return CatalogParams{capacity_n, target_fpr_p, m, k};
  }

  /// Structural identity; target_fpr_p is derivable metadata and not compared.
  friend bool operator==(const CatalogParams& a, const CatalogParams& b) {
    return a.capacity_n == b.capacity_n && a.bit_count_m == b.bit_count_m &&
           a.hash_count_k == b.hash_count_k;
  }
};

namespace wire {
inline constexpr char kCatalogMagic[4] = {'D', 'P', 'C', 'B'};
inline constexpr uint8_t kCatalogFormatVersion = 1;
inline constexpr size_t kCatalogHeaderBytes = 4 + 1 + 3 + 8 + 8 + 4 + 8;
}  // namespace wire

class Catalog {
 public:
  Catalog(uint64_t capacity_n, double target_fpr_p)
      : Catalog(CatalogParams::derive(capacity_n, target_fpr_p)) {}

  explicit Catalog(CatalogParams params)
      : params_(params), bits_((params.bit_count_m + 7) / 8, 0) {
    if (params_.bit_count_m == 0 || params_.hash_count_k == 0)
      throw InvalidInput("catalog: degenerate parameters");
  }

  const CatalogParams& params() const { return params_; }
  uint64_t version() const { return version_; }
  uint64_t inserted_count() const { return inserted_; }
  size_t bitmap_bytes() const { return bits_.size(); }
  std::span<const uint8_t> bitmap() const { return bits_; }

  /// Sets the k derived bit positions. Monotone: never unsets bits.
  void insert(CacheKey key) {
    const auto [h1, h2] = hashes(key);
    for (uint32_t i = 0; i < params_.hash_count_k; ++i) {
      uint64_t pos = (h1 + static_cast<uint64_t>(i) * h2) % params_.bit_count_m;
      bits_[pos >> 3] |= static_cast<uint8_t>(1u << (pos & 7));
    }
    ++version_;
    ++inserted_;
  }

  /// True iff all k derived positions are set. False positives are possible
  /// at roughly the target rate when loaded to capacity; false negatives
  /// are not.
  bool contains(CacheKey key) const {
    const auto [h1, h2] = hashes(key);
    for (uint32_t i = 0; i < params_.hash_count_k; ++i) {
      uint64_t pos = (h1 + static_cast<uint64_t>(i) * h2) % params_.bit_count_m;
      if (!(bits_[pos >> 3] & (1u << (pos & 7)))) return false;
    }
    return true;
  }

  /// OR-in a master bitmap. Conflict-free: any key visible in either input
  /// is visible afterwards. Version advances to the max of the two.
  void merge_from(std::span<const uint8_t> master_bits, uint64_t master_bit_count,
                  uint64_t master_version) {
    if (master_bit_count != params_.bit_count_m || master_bits.size() != bits_.size())
      throw CatalogMismatch("catalog: bitmap geometry differs from local parameters");
    for (size_t i = 0; i < bits_.size(); ++i) bits_[i] |= master_bits[i];
    if (master_version > version_) version_ = master_version;
  }

  void merge_from(const Catalog& master) {
    if (!(master.params_ == params_))
      throw CatalogMismatch("catalog: parameter mismatch on merge");
    merge_from(master.bits_, master.params_.bit_count_m, master.version_);
  }

  /**
   * Wire format: "DPCB" ‖ format u8=1 ‖ reserved 3x00 ‖ capacity u64 BE ‖
   * bit_count u64 BE ‖ hash_count u32 BE ‖ version u64 BE ‖ bitmap bytes
   * (bit j lives in byte j/8 at position j%8, LSB first).
   */
  std::vector<uint8_t> serialize() const {
    ByteWriter w;
    w.str(std::string_view(wire::kCatalogMagic, 4));
    w.u8(wire::kCatalogFormatVersion);
    w.u8(0);
    w.u8(0);
    w.u8(0);
    w.u64be(params_.capacity_n);
    w.u64be(params_.bit_count_m);
    w.u32be(params_.hash_count_k);
    w.u64be(version_);
    w.bytes(bits_);
    return w.take();
  }

  static Catalog deserialize(std::span<const uint8_t> data) {
    ByteReader r(data);
    if (data.size() < wire::kCatalogHeaderBytes) throw DecodeError("catalog: truncated header");
    auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), wire::kCatalogMagic))
      throw DecodeError("catalog: bad magic");
    if (r.u8() != wire::kCatalogFormatVersion) throw DecodeError("catalog: unknown format version");
    r.bytes(3);
    CatalogParams p;
    p.capacity_n = r.u64be();
    p.bit_count_m = r.u64be();
    p.hash_count_k = r.u32be();
    uint64_t version = r.u64be();
    if (p.capacity_n == 0 || p.bit_count_m == 0 || p.hash_count_k == 0)
      throw DecodeError("catalog: degenerate header");
    size_t bitmap_len = (p.bit_count_m + 7) / 8;
    if (r.remaining() != bitmap_len) throw DecodeError("catalog: bitmap length mismatch");
    Catalog c{p};
    auto bm = r.bytes(bitmap_len);
    std::copy(bm.begin(), bm.end(), c.bits_.begin());
    c.version_ = version;
    return c;
  }

  /// Serialized-visible state only; inserted_count is a local statistic and
  /// has no wire representation.
  friend bool operator==(const Catalog& a, const Catalog& b) {
    return a.params_ == b.params_ && a.version_ == b.version_ && a.bits_ == b.bits_;
  }

 private:
  static std::pair<uint64_t, uint64_t> hashes(CacheKey key) {
    uint64_t h1 = key.digest;
    uint64_t h2 = fnv1a64_u64le(kFnvOffsetBasis, key.digest) | 1ULL;
    return {h1, h2};
  }

  CatalogParams params_;
  std::vector<uint8_t> bits_;
  uint64_t version_ = 0;
  uint64_t inserted_ = 0;
};

/**
 * Concurrent wrapper: shared-lock probes on the request path, exclusive
 * insert/merge from the uploader and the background sync task. A probe
 * concurrent with a merge sees either the pre- or post-merge bitmap.
 */
class SharedCatalog {
 public:
  explicit SharedCatalog(Catalog cat) : cat_(std::move(cat)) {}
  SharedCatalog(uint64_t capacity_n, double target_fpr_p) : cat_(capacity_n, target_fpr_p) {}

  bool contains(CacheKey key) const {
    std::shared_lock lock(mu_);
    return cat_.contains(key);
  }

  void insert(CacheKey key) {
    std::unique_lock lock(mu_);
    cat_.insert(key);
  }

  uint64_t version() const {
    std::shared_lock lock(mu_);
    return cat_.version();
  }

  CatalogParams params() const {
    std::shared_lock lock(mu_);
    return cat_.params();
  }

  std::vector<uint8_t> serialize() const {
    std::shared_lock lock(mu_);
    return cat_.serialize();
  }

  /// Applies a pulled master snapshot: merge when parameters agree, adopt
  /// wholesale when they do not (the full bitmap is already in hand, so
  /// "discard and re-pull" collapses to a swap).
  void sync_apply(Catalog master) {
    std::unique_lock lock(mu_);
    if (master.params() == cat_.params()) {
      cat_.merge_from(master);
    } else {
      cat_ = std::move(master);
    }
  }

  /// Snapshot copy for tests and diagnostics.
  Catalog snapshot() const {
    std::shared_lock lock(mu_);
    return cat_;
  }

 private:
  mutable std::shared_mutex mu_;
  Catalog cat_;
};

}  // namespace dpc
