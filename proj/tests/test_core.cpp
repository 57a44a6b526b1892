#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <dpc/core.hpp>

#include <set>

using namespace dpc;

namespace {

ModelMeta basic_meta() {
  return ModelMeta::make("mock-lm", {{"quant", "q8_0"}, {"ctx", "2048"}}, 32000);
}

TokenSequence random_tokens(SplitMix& rng, size_t n, uint32_t vocab = 32000) {
  TokenSequence t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.bounded(vocab));
  return t;
}

PromptLayout random_layout(SplitMix& rng) {
  PromptLayout l;
  l.instruction = random_tokens(rng, 1 + rng.bounded(20));
  size_t n_examples = rng.bounded(6);
  for (size_t i = 0; i < n_examples; ++i)
    l.examples.push_back(random_tokens(rng, 1 + rng.bounded(30)));
  l.question = random_tokens(rng, rng.bounded(40));
  return l;
}

}  // namespace

// ---------------------------------------------------------------------------
// FNV-1a reference vectors
// ---------------------------------------------------------------------------

TEST_CASE("fnv1a64 known vectors") {
  CHECK(fnv1a64(std::span<const uint8_t>{}) == 14695981039346656037ULL);
  const uint8_t a = 0x61;
  CHECK(fnv1a64(std::span<const uint8_t>(&a, 1)) == 0xAF63DC4C8601EC8CULL);
  CHECK(fnv1a64(std::string_view("a")) == 0xAF63DC4C8601EC8CULL);
}

TEST_CASE("splitmix64 is a bijection on small ranges") {
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 10000; ++i) seen.insert(splitmix64(i));
  CHECK(seen.size() == 10000);
}

// ---------------------------------------------------------------------------
// canonical_bytes
// ---------------------------------------------------------------------------

TEST_CASE("canonical_bytes hand-serialized example") {
  auto meta = ModelMeta::make("a", {}, 16);
  auto bytes = canonical_bytes(meta, {1});
  std::vector<uint8_t> expected = {0x61, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00};
  CHECK(bytes == expected);
}

TEST_CASE("canonical_bytes is deterministic") {
  auto meta = basic_meta();
  TokenSequence p = {5, 9, 130};
  CHECK(canonical_bytes(meta, p) == canonical_bytes(meta, p));
}

TEST_CASE("canonical_bytes rejects empty prefix") {
  CHECK_THROWS_AS(canonical_bytes(basic_meta(), {}), InvalidInput);
  CHECK_THROWS_AS(cache_key(basic_meta(), {}), InvalidInput);
}

TEST_CASE("canonical_bytes differs when any single field differs") {
  auto meta = basic_meta();
  TokenSequence p = {1, 2, 3};
  auto base = canonical_bytes(meta, p);

  auto m2 = meta;
  m2.model_name = "mock-ln";
  CHECK(canonical_bytes(m2, p) != base);

  auto m3 = ModelMeta::make("mock-lm", {{"quant", "q4_0"}, {"ctx", "2048"}}, 32000);
  CHECK(canonical_bytes(m3, p) != base);

  auto m4 = ModelMeta::make("mock-lm", {{"quant", "q8_0"}, {"ctx", "4096"}}, 32000);
  CHECK(canonical_bytes(m4, p) != base);

  for (size_t i = 0; i < p.size(); ++i) {
    auto q = p;
    q[i] ^= 1;
    CHECK(canonical_bytes(meta, q) != base);
  }
}

TEST_CASE("ModelMeta::make sorts params and rejects duplicates") {
  auto m = ModelMeta::make("x", {{"b", "2"}, {"a", "1"}}, 10);
  CHECK(m.config_params.front().first == "a");
  CHECK_NOTHROW(m.validate());
  CHECK_THROWS_AS(ModelMeta::make("x", {{"a", "1"}, {"a", "2"}}, 10), InvalidInput);
  CHECK_THROWS_AS(ModelMeta::make("x", {}, 0), InvalidInput);
}

// ---------------------------------------------------------------------------
// cache_key
// ---------------------------------------------------------------------------

TEST_CASE("cache_key equals FNV-1a of canonical_bytes") {
  SplitMix rng(11);
  for (int i = 0; i < 200; ++i) {
    auto meta = ModelMeta::make("m" + std::to_string(rng.bounded(4)),
                                {{"k", std::to_string(rng.bounded(8))}}, 32000);
    auto p = random_tokens(rng, 1 + rng.bounded(64));
    CHECK(cache_key(meta, p).digest == fnv1a64(std::span<const uint8_t>(canonical_bytes(meta, p))));
  }
}

TEST_CASE("cache_key distinguishes prefixes and quantization settings") {
  auto meta = basic_meta();
  CHECK(cache_key(meta, {1, 2}) != cache_key(meta, {1, 3}));
  auto q4 = ModelMeta::make("mock-lm", {{"quant", "q4_0"}, {"ctx", "2048"}}, 32000);
  CHECK(cache_key(meta, {1, 2}) != cache_key(q4, {1, 2}));
}

TEST_CASE("cache_key is pure over 10k random inputs") {
  SplitMix rng(7);
  for (int i = 0; i < 10000; ++i) {
    auto meta = ModelMeta::make("m", {{"seed", std::to_string(rng.bounded(1000))}}, 32000);
    auto p = random_tokens(rng, 1 + rng.bounded(32));
    CHECK(cache_key(meta, p) == cache_key(meta, p));
  }
}

// ---------------------------------------------------------------------------
// derive_ranges
// ---------------------------------------------------------------------------

TEST_CASE("derive_ranges produces the four boundaries of a five-example layout") {
  // 405-token layout with boundaries 10 / 57 / 340 / 405.
  PromptLayout l;
  SplitMix rng(3);
  l.instruction = random_tokens(rng, 10);
  l.examples.push_back(random_tokens(rng, 47));
  l.examples.push_back(random_tokens(rng, 70));
  l.examples.push_back(random_tokens(rng, 71));
  l.examples.push_back(random_tokens(rng, 71));
  l.examples.push_back(random_tokens(rng, 71));
  l.question = random_tokens(rng, 65);
  REQUIRE(l.total_tokens() == 405);

  auto r = derive_ranges(l);
  REQUIRE(r.size() == 4);
  CHECK(r[0] == PrefixRange{10, RangeLabel::InstructionOnly});
  CHECK(r[1] == PrefixRange{57, RangeLabel::InstructionPlusFirstExample});
  CHECK(r[2] == PrefixRange{340, RangeLabel::InstructionPlusAllExamples});
  CHECK(r[3] == PrefixRange{405, RangeLabel::FullPrompt});
}

TEST_CASE("derive_ranges degenerate collapse: no examples, empty question") {
  PromptLayout l;
  l.instruction = {1, 2, 3, 4, 5, 6, 7};
  auto r = derive_ranges(l);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == PrefixRange{7, RangeLabel::FullPrompt});
}

TEST_CASE("derive_ranges N=1 merges the two example ranges") {
  PromptLayout l;
  l.instruction = {1, 2, 3, 4};
  l.examples = {{5, 6, 7}};
  l.question = {8, 9};
  auto r = derive_ranges(l);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == PrefixRange{4, RangeLabel::InstructionOnly});
  CHECK(r[1] == PrefixRange{7, RangeLabel::InstructionPlusAllExamples});
  CHECK(r[2] == PrefixRange{9, RangeLabel::FullPrompt});
}

TEST_CASE("derive_ranges rejects an empty instruction") {
  PromptLayout l;
  l.question = {1};
  CHECK_THROWS_AS(derive_ranges(l), InvalidInput);
}

TEST_CASE("derive_ranges: strictly increasing, ends on segment boundaries, covers full prompt") {
  SplitMix rng(99);
  for (int iter = 0; iter < 1000; ++iter) {
    auto l = random_layout(rng);
    std::set<size_t> boundaries;
    size_t acc = l.instruction.size();
    boundaries.insert(acc);
    for (const auto& e : l.examples) boundaries.insert(acc += e.size());
    boundaries.insert(acc += l.question.size());

    auto r = derive_ranges(l);
    REQUIRE(!r.empty());
    CHECK(r.back().end_index == l.total_tokens());
    for (size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i].end_index > 0);
      if (i > 0) CHECK(r[i].end_index > r[i - 1].end_index);
      CHECK(boundaries.count(r[i].end_index) == 1);
    }
  }
}

TEST_CASE("prefix_of returns the first n tokens") {
  TokenSequence t = {1, 2, 3, 4};
  CHECK(prefix_of(t, 0).empty());
  CHECK(prefix_of(t, 2) == TokenSequence{1, 2});
  CHECK(prefix_of(t, 4) == t);
}
