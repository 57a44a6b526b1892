#pragma once

/**
 * Core domain types shared by every module: token sequences, model
 * metadata, prompt structure, canonical hash input, and cache keys.
 *
 * A cache key binds a token prefix to the model that produced it, so
 * states saved under one model or quantization never collide with
 * another. All types are immutable values after construction and all
 * operations are pure.
 */

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpc/bytes.hpp"
#include "dpc/errors.hpp"
#include "dpc/hash.hpp"

namespace dpc {

using TokenId = uint32_t;
using TokenSequence = std::vector<TokenId>;

/// First n tokens of a sequence (n <= size).
inline TokenSequence prefix_of(const TokenSequence& tokens, size_t n) {
  return TokenSequence(tokens.begin(), tokens.begin() + std::min(n, tokens.size()));
}

/**
 * Identity of the model a cached state belongs to. config_params must be
 * unique keys in lexicographic order; that is the canonical order fed to
 * the hash, so two processes describing the same model always agree.
 */
struct ModelMeta {
  std::string model_name;
  std::vector<std::pair<std::string, std::string>> config_params;
  uint32_t vocab_size = 0;

  /// Builds a meta with params sorted into canonical order. Throws on
  /// duplicate keys or a zero vocabulary.
  static ModelMeta make(std::string name,
                        std::vector<std::pair<std::string, std::string>> params,
                        uint32_t vocab) {
    std::sort(params.begin(), params.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (size_t i = 1; i < params.size(); ++i) {
      if (params[i].first == params[i - 1].first)
        throw InvalidInput("ModelMeta: duplicate config key '" + params[i].first + "'");
    }
    if (vocab == 0) throw InvalidInput("ModelMeta: vocab_size must be positive");
    return ModelMeta{std::move(name), std::move(params), vocab};
  }

  void validate() const {
    if (vocab_size == 0) throw InvalidInput("ModelMeta: vocab_size must be positive");
    for (size_t i = 1; i < config_params.size(); ++i) {
      if (!(config_params[i - 1].first < config_params[i].first))
        throw InvalidInput("ModelMeta: config_params not in canonical order");
    }
  }

  bool operator==(const ModelMeta&) const = default;
};

/**
 * Logical segmentation of a prompt: instruction, N few-shot examples,
 * target question. Candidate reuse ranges are derived from the segment
 * boundaries.
 */
struct PromptLayout {
  TokenSequence instruction;
  std::vector<TokenSequence> examples;
  TokenSequence question;

  size_t total_tokens() const {
    size_t n = instruction.size() + question.size();
    for (const auto& e : examples) n += e.size();
    return n;
  }

  /// Concatenation instruction ‖ examples... ‖ question.
  TokenSequence full() const {
    TokenSequence out;
    out.reserve(total_tokens());
    out.insert(out.end(), instruction.begin(), instruction.end());
    for (const auto& e : examples) out.insert(out.end(), e.begin(), e.end());
    out.insert(out.end(), question.begin(), question.end());
    return out;
  }

  bool operator==(const PromptLayout&) const = default;
};

enum class RangeLabel : uint8_t {
  InstructionOnly,
  InstructionPlusFirstExample,
  InstructionPlusAllExamples,
  FullPrompt,
};

inline const char* to_string(RangeLabel l) {
  switch (l) {
    case RangeLabel::InstructionOnly: return "instruction";
    case RangeLabel::InstructionPlusFirstExample: return "instruction+first-example";
    case RangeLabel::InstructionPlusAllExamples: return "instruction+all-examples";
    case RangeLabel::FullPrompt: return "full-prompt";
  }
  return "?";
}

/// Candidate reuse range: the prompt prefix ending at end_index (exclusive).
struct PrefixRange {
  size_t end_index = 0;
  RangeLabel label = RangeLabel::FullPrompt;

  bool operator==(const PrefixRange&) const = default;
};

/// 64-bit digest binding (model meta, token prefix); the lookup key for
/// both the catalog and the blob store.
struct CacheKey {
  uint64_t digest = 0;

  bool operator==(const CacheKey&) const = default;
};

/**
 * Canonical hash input for a (meta, prefix) pair:
 *
 *   name ‖ 0x00 ‖ (key ‖ 0x01 ‖ value ‖ 0x01)* ‖ 0x00 ‖ token u32-LE ...
 *
 * The token section begins after the second 0x00 terminator, so distinct
 * inputs can never serialize ambiguously even if field values contain the
 * separator bytes.
 */
inline std::vector<uint8_t> canonical_bytes(const ModelMeta& meta, const TokenSequence& prefix) {
  meta.validate();
  if (prefix.empty()) throw InvalidInput("canonical_bytes: empty prefix");
  ByteWriter w;
  w.str(meta.model_name);
  w.u8(0x00);
  for (const auto& [k, v] : meta.config_params) {
    w.str(k);
    w.u8(0x01);
    w.str(v);
    w.u8(0x01);
  }
  w.u8(0x00);
  for (TokenId t : prefix) w.u32le(t);
  return w.take();
}

/// FNV-1a 64 digest of the canonical bytes. Deterministic and
/// platform-independent; equal (meta, prefix) inputs always agree.
inline CacheKey cache_key(const ModelMeta& meta, const TokenSequence& prefix) {
  meta.validate();
  if (prefix.empty()) throw InvalidInput("cache_key: empty prefix");
  uint64_t h = kFnvOffsetBasis;
  h = fnv1a64(meta.model_name, h);
  h = fnv1a64_step(h, 0x00);
  for (const auto& [k, v] : meta.config_params) {
    h = fnv1a64(k, h);
    h = fnv1a64_step(h, 0x01);
    h = fnv1a64(v, h);
    h = fnv1a64_step(h, 0x01);
  }
  h = fnv1a64_step(h, 0x00);
  for (TokenId t : prefix) h = fnv1a64_u32le(h, t);
  return CacheKey{h};
}

/**
 * The candidate reuse ranges of a layout, in increasing end_index order:
 * instruction alone, instruction + first example, instruction + all
 * examples, full prompt. Coinciding boundaries collapse to the longest
 * label (N=1 merges the two example ranges; an empty question merges
 * all-examples into full-prompt).
 */
inline std::vector<PrefixRange> derive_ranges(const PromptLayout& layout) {
  if (layout.instruction.empty()) throw InvalidInput("derive_ranges: empty instruction");

  std::vector<PrefixRange> out;
  auto push = [&out](size_t end, RangeLabel label) {
    if (!out.empty() && out.back().end_index == end) {
      out.back().label = label;  // later label spans a longer logical unit
    } else {
      out.push_back({end, label});
    }
  };

  size_t end = layout.instruction.size();
  push(end, RangeLabel::InstructionOnly);
  if (!layout.examples.empty()) {
    push(end + layout.examples.front().size(), RangeLabel::InstructionPlusFirstExample);
    size_t all = end;
    for (const auto& e : layout.examples) all += e.size();
    push(all, RangeLabel::InstructionPlusAllExamples);
  }
  push(layout.total_tokens(), RangeLabel::FullPrompt);
  return out;
}

}  // namespace dpc
