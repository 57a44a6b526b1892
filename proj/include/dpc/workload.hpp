#pragma once

/**
 * Seeded synthetic workload in the shape of multiple-choice exam prompts:
 * per domain one instruction, N shared few-shot examples, and Q distinct
 * target questions. A toy whitespace tokenizer (word -> FNV-derived id mod
 * vocab) stands in for a real tokenizer; prompts are byte-identical for a
 * given spec, so whole experiment runs replay exactly.
 */

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dpc/core.hpp"
#include "dpc/hash.hpp"

namespace dpc {

inline TokenId toy_token_id(std::string_view word, uint32_t vocab_size) {
  return static_cast<TokenId>(fnv1a64(word) % vocab_size);
}

/// Whitespace-splitting toy tokenizer.
inline TokenSequence toy_tokenize(std::string_view text, uint32_t vocab_size) {
  TokenSequence out;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(toy_token_id(text.substr(i, j - i), vocab_size));
    i = j;
  }
  return out;
}

struct WorkloadSpec {
  uint32_t domains = 57;
  uint32_t examples_per_domain = 5;   // N
  uint32_t questions_per_domain = 2;  // Q
  uint32_t max_question_words = 256;
  uint64_t seed = 1;
};

struct WorkItem {
  uint32_t domain = 0;
  uint32_t question_index = 0;
  PromptLayout layout;
};

namespace detail {

inline std::string make_word(SplitMix& rng) {
  size_t len = 3 + rng.bounded(6);
  std::string w(len, 'a');
  for (auto& c : w) c = static_cast<char>('a' + rng.bounded(26));
  return w;
}

inline std::string make_sentence(SplitMix& rng, size_t words) {
  std::string s;
  for (size_t i = 0; i < words; ++i) {
    if (i) s += ' ';
    s += make_word(rng);
  }
  return s;
}

}  // namespace detail

/**
 * Deterministic under the seed: per-domain substreams mean neither domain
 * count nor question count perturbs other domains' content. Instruction
 * and examples are shared by all of a domain's prompts; questions differ.
 */
inline std::vector<WorkItem> generate_workload(const WorkloadSpec& spec, const ModelMeta& meta) {
  std::vector<WorkItem> items;
  items.reserve(static_cast<size_t>(spec.domains) * spec.questions_per_domain);
  const uint32_t vocab = meta.vocab_size;
  for (uint32_t d = 0; d < spec.domains; ++d) {
    SplitMix rng(substream(spec.seed, 0x646F6D00ULL + d));

    PromptLayout shared;
    std::string domain_tag = "domain" + std::to_string(d);
    shared.instruction = toy_tokenize(
        "answer the following multiple choice question about " + domain_tag + " " +
            detail::make_sentence(rng, 5 + rng.bounded(6)),
        vocab);
    for (uint32_t e = 0; e < spec.examples_per_domain; ++e) {
      size_t words = 8 + rng.bounded(20);
      TokenSequence ex = toy_tokenize(
          detail::make_sentence(rng, words) + " answer " + detail::make_word(rng), vocab);
      shared.examples.push_back(std::move(ex));
    }

    for (uint32_t q = 0; q < spec.questions_per_domain; ++q) {
      size_t cap = spec.max_question_words >= 3 ? spec.max_question_words : 3;
      size_t words = 3 + rng.bounded(cap - 2);  // 3..cap words
      WorkItem item;
      item.domain = d;
      item.question_index = q;
      item.layout = shared;
      item.layout.question = toy_tokenize(detail::make_sentence(rng, words), vocab);
      items.push_back(std::move(item));
    }
  }
  return items;
}

/**
 * Fixed-length layout for calibration scenarios: total_tokens tokens with
 * five examples and segment boundaries scaled from the 405-token reference
 * shape {10, 57, 340, 405}. Token values are seeded per domain.
 */
inline PromptLayout make_reference_layout(uint32_t domain, uint64_t total_tokens, uint64_t seed,
                                          uint32_t vocab_size) {
  if (total_tokens < 16) throw InvalidInput("reference layout needs at least 16 tokens");
  auto scaled = [total_tokens](uint64_t b) {
    return (b * total_tokens + 202) / 405;  // rounded b * total / 405
  };
  uint64_t b1 = scaled(10), b2 = scaled(57), b3 = scaled(340);
  if (b1 < 1) b1 = 1;
  if (b2 <= b1) b2 = b1 + 1;
  if (b3 <= b2) b3 = b2 + 1;
  if (b3 >= total_tokens) b3 = total_tokens - 1;

  SplitMix rng(substream(seed, 0x72656600ULL + domain));
  auto tokens = [&rng, vocab_size](uint64_t n) {
    TokenSequence t(n);
    for (auto& x : t) x = static_cast<TokenId>(rng.bounded(vocab_size));
    return t;
  };

  PromptLayout l;
  l.instruction = tokens(b1);
  l.examples.push_back(tokens(b2 - b1));
  uint64_t remaining = b3 - b2;
  for (int e = 0; e < 4; ++e) {
    uint64_t chunk = e == 3 ? remaining : remaining / (4 - e);
    if (chunk == 0) chunk = 1;
    if (chunk > remaining) chunk = remaining;
    l.examples.push_back(tokens(chunk));
    remaining -= chunk;
  }
  l.question = tokens(total_tokens - b3);
  return l;
}

/// One reference prompt per domain (used by the latency-ratio scenarios).
inline std::vector<WorkItem> reference_workload(uint32_t domains, uint64_t total_tokens,
                                                uint64_t seed, uint32_t vocab_size) {
  std::vector<WorkItem> items;
  items.reserve(domains);
  for (uint32_t d = 0; d < domains; ++d) {
    WorkItem item;
    item.domain = d;
    item.layout = make_reference_layout(d, total_tokens, seed, vocab_size);
    items.push_back(std::move(item));
  }
  return items;
}

/// Default model identity used by the harness and CLI.
inline ModelMeta default_meta() {
  return ModelMeta::make("mock-lm-270m", {{"ctx", "2048"}, {"quant", "q8_0"}}, 32000);
}

}  // namespace dpc
