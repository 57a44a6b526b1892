#pragma once

/**
 * Pluggable inference-engine abstraction: prefill, state save/restore, and
 * greedy token generation, with per-operation virtual costs.
 *
 * MockEngine keeps a rolling FNV-1a chain over the consumed tokens as its
 * whole "internal state". That is the cheapest structure for which
 * "restore a prefix, then decode the suffix" has to reproduce the
 * full-decode state exactly, which is the correctness property the whole
 * cache scheme rests on. Integer arithmetic only, so results are identical
 * across processes and platforms.
 */

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dpc/bytes.hpp"
#include "dpc/core.hpp"
#include "dpc/errors.hpp"
#include "dpc/hash.hpp"

namespace dpc {

/**
 * Cumulative prefill cost by token position, piecewise-linear between
 * anchor points. An empty curve means "not calibrated"; callers fall back
 * to a flat per-token rate. Positions past the last anchor extrapolate the
 * final segment's slope.
 */
class PrefillCurve {
 public:
  PrefillCurve() = default;

  /// anchors: (position, cumulative ms), strictly increasing in both.
  explicit PrefillCurve(std::vector<std::pair<uint64_t, double>> anchors)
      : anchors_(std::move(anchors)) {
    if (anchors_.empty()) return;
    if (anchors_.front().first != 0) anchors_.insert(anchors_.begin(), {0, 0.0});
    for (size_t i = 1; i < anchors_.size(); ++i) {
      if (anchors_[i].first <= anchors_[i - 1].first ||
          anchors_[i].second < anchors_[i - 1].second)
        throw InvalidInput("PrefillCurve: anchors must increase");
    }
  }

  bool empty() const { return anchors_.empty(); }

  double cumulative_ms(uint64_t pos) const {
    if (anchors_.empty()) return 0.0;
    if (pos >= anchors_.back().first) {
      // extrapolate with the last segment's slope
      if (anchors_.size() == 1) return anchors_.back().second;
      const auto& [p1, c1] = anchors_[anchors_.size() - 2];
      const auto& [p2, c2] = anchors_.back();
      double slope = (c2 - c1) / static_cast<double>(p2 - p1);
      return c2 + slope * static_cast<double>(pos - p2);
    }
    size_t hi = 1;
    while (anchors_[hi].first < pos) ++hi;
    const auto& [p1, c1] = anchors_[hi - 1];
    const auto& [p2, c2] = anchors_[hi];
    double t = static_cast<double>(pos - p1) / static_cast<double>(p2 - p1);
    return c1 + t * (c2 - c1);
  }

  double cost_ms(uint64_t from_pos, uint64_t to_pos) const {
    return cumulative_ms(to_pos) - cumulative_ms(from_pos);
  }

 private:
  std::vector<std::pair<uint64_t, double>> anchors_;
};

/// Per-operation virtual costs of an engine on a given device.
struct EngineCost {
  double tokenize_ms = 0.0;            // flat per query
  double prefill_ms_per_token = 0.0;   // prompt decode (P-decode)
  double response_ms_per_token = 0.0;  // response decode (R-decode)
  double sample_ms_per_token = 0.0;    // greedy sampling
  PrefillCurve prefill_curve;          // optional position-dependent calibration

  double prefill_cost_ms(uint64_t from_pos, uint64_t to_pos) const {
    if (!prefill_curve.empty()) return prefill_curve.cost_ms(from_pos, to_pos);
    return prefill_ms_per_token * static_cast<double>(to_pos - from_pos);
  }
};

/**
 * Engine state after prefilling some token sequence. digest_chain is the
 * FNV-1a fold over the 4-byte little-endian encodings of the consumed
 * tokens, i.e. a pure function of the consumed sequence.
 */
struct EngineState {
  TokenSequence consumed;
  uint64_t digest_chain = kFnvOffsetBasis;

  bool operator==(const EngineState&) const = default;
};

struct GenerateResult {
  TokenSequence tokens;
  double cost_ms = 0.0;
};

/// Token that terminates generation. Checked on derived tokens only;
/// prompt tokens may legitimately carry this id.
inline constexpr TokenId kStopToken = 0;

class Engine {
 public:
  virtual ~Engine() = default;

  /// Appends tokens to the state; returns the virtual prefill cost in ms.
  virtual double prefill(EngineState& state, std::span<const TokenId> tokens) = 0;

  /// Serializes the internal state to an opaque payload.
  virtual std::vector<uint8_t> save_state(const EngineState& state) const = 0;

  /// Inverse of save_state. Throws DecodeError on malformed payloads.
  virtual EngineState restore_state(std::span<const uint8_t> payload) const = 0;

  /// Greedy generation: up to max_tokens, stopping early on the stop token.
  virtual GenerateResult generate(EngineState& state, size_t max_tokens) = 0;

  virtual const EngineCost& cost() const = 0;
};

namespace wire {
inline constexpr char kStateMagic[4] = {'D', 'P', 'C', 'E'};
inline constexpr uint32_t kStateFormatVersion = 1;
}  // namespace wire

class MockEngine final : public Engine {
 public:
  MockEngine(uint32_t vocab_size, EngineCost cost)
      : vocab_size_(vocab_size), cost_(std::move(cost)) {
    if (vocab_size_ == 0) throw InvalidInput("MockEngine: vocab_size must be positive");
  }

  double prefill(EngineState& state, std::span<const TokenId> tokens) override {
    uint64_t from = state.consumed.size();
    state.consumed.reserve(state.consumed.size() + tokens.size());
    for (TokenId t : tokens) {
      state.digest_chain = fnv1a64_u32le(state.digest_chain, t);
      state.consumed.push_back(t);
    }
    return cost_.prefill_cost_ms(from, state.consumed.size());
  }

  /**
   * Payload layout (little-endian):
   *   "DPCE" ‖ format u32 ‖ token count u32 ‖ tokens u32... ‖ digest u64
   * i.e. 12 + 4n + 8 bytes.
   */
  std::vector<uint8_t> save_state(const EngineState& state) const override {
    ByteWriter w;
    w.str(std::string_view(wire::kStateMagic, 4));
    w.u32le(wire::kStateFormatVersion);
    w.u32le(static_cast<uint32_t>(state.consumed.size()));
    for (TokenId t : state.consumed) w.u32le(t);
    w.u64le(state.digest_chain);
    return w.take();
  }

  EngineState restore_state(std::span<const uint8_t> payload) const override {
    ByteReader r(payload);
    if (payload.size() < 12 + 8) throw DecodeError("engine state: truncated payload");
    auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), wire::kStateMagic))
      throw DecodeError("engine state: bad magic");
    if (r.u32le() != wire::kStateFormatVersion)
      throw DecodeError("engine state: unknown format version");
    uint32_t count = r.u32le();
    if (r.remaining() != static_cast<size_t>(count) * 4 + 8)
      throw DecodeError("engine state: length mismatch");
    EngineState state;
    state.consumed.reserve(count);
    uint64_t chain = kFnvOffsetBasis;
    for (uint32_t i = 0; i < count; ++i) {
      TokenId t = r.u32le();
      chain = fnv1a64_u32le(chain, t);
      state.consumed.push_back(t);
    }
    uint64_t stored = r.u64le();
    if (stored != chain) throw DecodeError("engine state: digest mismatch");
    state.digest_chain = chain;
    return state;
  }

  /// Mock greedy sampling: the next token is digest_chain mod vocab_size
  /// and the state advances as if it had been prefilled. Same state in,
  /// same tokens out, always.
  GenerateResult generate(EngineState& state, size_t max_tokens) override {
    GenerateResult out;
    for (size_t i = 0; i < max_tokens; ++i) {
      TokenId next = static_cast<TokenId>(state.digest_chain % vocab_size_);
      if (next == kStopToken) break;
      state.digest_chain = fnv1a64_u32le(state.digest_chain, next);
      state.consumed.push_back(next);
      out.tokens.push_back(next);
    }
    out.cost_ms = (cost_.response_ms_per_token + cost_.sample_ms_per_token) *
                  static_cast<double>(out.tokens.size());
    return out;
  }

  const EngineCost& cost() const override { return cost_; }
  uint32_t vocab_size() const { return vocab_size_; }

 private:
  uint32_t vocab_size_;
  EngineCost cost_;
};

}  // namespace dpc
