#pragma once

/**
 * Client inference pipeline:
 *
 *   1. charge tokenize cost (layouts arrive pre-tokenized),
 *   2. probe the local catalog for each derived range, longest first,
 *   3. download + validate the longest positive range's blob, restore it
 *      and prefill only the remaining suffix; on a false positive fall
 *      through to the next shorter positive range (or full decode), then
 *      upload states for every newly computed range,
 *   4. generate the answer greedily.
 *
 * Cache state and outages change latency only, never the answer tokens:
 * a blob is used solely when its embedded prefix matches the prompt, and
 * restore-then-suffix-prefill reproduces the full-decode engine state
 * exactly. Retrieval failures of any kind degrade to local decode.
 *
 * One run_query at a time per client. The background sync task is the only
 * concurrent writer, and it touches nothing but the local catalog, which
 * has an atomic merge contract.
 */

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <thread>
#include <vector>

#include "dpc/catalog.hpp"
#include "dpc/core.hpp"
#include "dpc/engine.hpp"
#include "dpc/simclock.hpp"
#include "dpc/store.hpp"

namespace dpc {

/// Virtual-millisecond components of one query. TTFT spans everything up
/// to the first response token; TTLT adds response decode and sampling.
struct LatencyBreakdown {
  double token_ms = 0.0;
  double bloom_ms = 0.0;
  double p_decode_ms = 0.0;
  double store_ms = 0.0;
  double r_decode_ms = 0.0;
  double sample_ms = 0.0;

  double ttft_ms() const { return token_ms + bloom_ms + p_decode_ms + store_ms; }
  double ttlt_ms() const { return ttft_ms() + r_decode_ms + sample_ms; }
};

enum class CaseLabel : uint8_t {
  Case1_Miss = 1,
  Case2_Instruction = 2,
  Case3_InstrFirstExample = 3,
  Case4_InstrAllExamples = 4,
  Case5_Full = 5,
};

inline CaseLabel case_from_range(RangeLabel label) {
  switch (label) {
    case RangeLabel::InstructionOnly: return CaseLabel::Case2_Instruction;
    case RangeLabel::InstructionPlusFirstExample: return CaseLabel::Case3_InstrFirstExample;
    case RangeLabel::InstructionPlusAllExamples: return CaseLabel::Case4_InstrAllExamples;
    case RangeLabel::FullPrompt: return CaseLabel::Case5_Full;
  }
  return CaseLabel::Case1_Miss;
}

inline const char* case_name(CaseLabel c) {
  switch (c) {
    case CaseLabel::Case1_Miss: return "Case1";
    case CaseLabel::Case2_Instruction: return "Case2";
    case CaseLabel::Case3_InstrFirstExample: return "Case3";
    case CaseLabel::Case4_InstrAllExamples: return "Case4";
    case CaseLabel::Case5_Full: return "Case5";
  }
  return "?";
}

struct QueryResult {
  TokenSequence answer_tokens;
  CaseLabel label = CaseLabel::Case1_Miss;
  LatencyBreakdown breakdown;
  uint64_t matched_tokens = 0;
  uint32_t uploads_performed = 0;
  uint32_t probes_executed = 0;
  double upload_ms = 0.0;  // charged into store_ms only when upload_in_ttft
  uint64_t prompt_tokens = 0;
  bool store_degraded = false;
};

/// Test/analysis hook: flips the longest range's probe positive for a
/// seeded fraction of queries — at most one injected false positive per
/// query, mirroring how a real false positive costs one store round trip.
struct FpInjection {
  double rate = 0.0;
  uint64_t seed = 0;
};

struct ClientConfig {
  uint64_t min_match_tokens = 1;
  bool fallback_shorter_ranges = true;  // try shorter positive ranges after an FP
  bool upload_in_ttft = false;          // attribute upload time into TTFT store_ms
  bool uploads_enabled = true;
  size_t max_answer_tokens = 1;
  FpInjection fp_inject;
  uint64_t catalog_capacity = kDefaultCatalogCapacity;
  double catalog_fpr = kDefaultCatalogFpr;
};

/// Catalog-positive ranges with end_index >= min_match_tokens, in
/// decreasing end_index order (the retrieval preference order).
inline std::vector<PrefixRange> probe_ranges(const std::vector<PrefixRange>& ranges,
                                             const ModelMeta& meta, const TokenSequence& full,
                                             const SharedCatalog& catalog,
                                             uint64_t min_match_tokens = 1) {
  std::vector<PrefixRange> out;
  for (auto it = ranges.rbegin(); it != ranges.rend(); ++it) {
    if (it->end_index < min_match_tokens) continue;
    if (catalog.contains(cache_key(meta, prefix_of(full, it->end_index)))) out.push_back(*it);
  }
  return out;
}

/// Background catalog sync: pull the master snapshot every interval and
/// merge it in. Never touches the query path; outages retry next tick.
inline void sync_loop(SharedCatalog& catalog, StoreConnector& conn,
                      std::chrono::milliseconds interval, std::stop_token stop) {
  std::mutex mu;
  std::condition_variable_any cv;
  while (!stop.stop_requested()) {
    {
      std::unique_lock lock(mu);
      if (cv.wait_for(lock, stop, interval, [] { return false; })) break;
    }
    auto reply = conn.pull_catalog(catalog.version());
    if (reply.status == PullStatus::Ok) {
      try {
        catalog.sync_apply(Catalog::deserialize(reply.catalog_bytes));
      } catch (const DecodeError&) {
        // corrupt snapshot; keep the current catalog and retry next tick
      }
    }
    // NotModified: nothing new. Unavailable: retry next interval.
  }
}

class Client {
 public:
  /// store may be null (no cache box configured). sync_store, when given,
  /// is a second independent connection owned by the background sync task.
  Client(Engine& engine, StoreConnector* store, DeviceProfile profile, ModelMeta meta,
         ClientConfig config = {}, StoreConnector* sync_store = nullptr)
      : engine_(engine),
        store_(store),
        sync_store_(sync_store ? sync_store : store),
        profile_(std::move(profile)),
        meta_(std::move(meta)),
        config_(config),
        catalog_(config.catalog_capacity, config.catalog_fpr),
        fp_rng_(config.fp_inject.seed) {}

  ~Client() { stop_sync(); }

  QueryResult run_query(const PromptLayout& layout) {
    QueryResult res;
    LatencyBreakdown& b = res.breakdown;
    const TokenSequence full = layout.full();
    res.prompt_tokens = full.size();

    // Step 1: tokenization cost (layout tokens are the tokenizer output).
    b.token_ms = engine_.cost().tokenize_ms;

    const auto ranges = derive_ranges(layout);
    const bool inject_fp =
        config_.fp_inject.rate > 0.0 && fp_rng_.unit() < config_.fp_inject.rate;

    // Steps 2+3a: probe longest-first, retrieving the first positive range
    // that survives validation. Shorter positives serve as fallbacks after
    // a false positive unless paper-faithful fallback is requested.
    EngineState state;
    uint64_t matched = 0;
    bool have_match = false;
    RangeLabel matched_label = RangeLabel::FullPrompt;

    for (size_t i = ranges.size(); i-- > 0;) {
      const PrefixRange& range = ranges[i];
      if (range.end_index < config_.min_match_tokens) break;  // descending: rest are shorter
      const CacheKey key = cache_key(meta_, prefix_of(full, range.end_index));
      ++res.probes_executed;
      bool positive = catalog_.contains(key);
      if (i + 1 == ranges.size() && inject_fp) positive = true;
      if (!positive) continue;

      if (store_ == nullptr) break;  // nothing to retrieve from
      auto reply = store_->get(key);
      if (reply.status == GetStatus::Unavailable) {
        res.store_degraded = true;  // fall back to pure-local decode
        break;
      }
      // A round trip happened: charge the modeled blob transfer. NOT_FOUND
      // is the catalog false-positive case; the model prices it as the
      // download (and rejection) of an unintended cache of this size.
      b.store_ms += store_transfer_ms(range.end_index);
      if (reply.status == GetStatus::Ok && validate_blob(reply.blob, key, full, range.end_index)) {
        try {
          state = engine_.restore_state(reply.blob.payload);
          matched = range.end_index;
          matched_label = range.label;
          have_match = true;
          break;
        } catch (const DecodeError&) {
          // corrupt payload: treat as a miss
        }
      }
      if (!config_.fallback_shorter_ranges) break;
    }
    b.bloom_ms = profile_.bloom_ms_per_probe * res.probes_executed;

    // Step 3b: prefill the remaining suffix, snapshotting states at range
    // boundaries that are not yet registered so they can be uploaded.
    std::vector<std::pair<CacheKey, StateBlob>> pending;
    uint64_t pos = matched;
    for (const PrefixRange& range : ranges) {
      if (range.end_index <= pos) continue;
      b.p_decode_ms += engine_.prefill(
          state, std::span<const TokenId>(full).subspan(pos, range.end_index - pos));
      pos = range.end_index;
      if (store_ != nullptr && !res.store_degraded && config_.uploads_enabled) {
        CacheKey key = cache_key(meta_, prefix_of(full, pos));
        if (!catalog_.contains(key)) {
          pending.emplace_back(key,
                               StateBlob{key.digest, prefix_of(full, pos), engine_.save_state(state)});
        }
      }
    }

    // Step 3c: register the newly computed ranges. Upload time stays out
    // of TTFT by default (the device backgrounds it after state
    // extraction); the alternative attribution adds it to store_ms.
    for (auto& [key, blob] : pending) {
      if (res.store_degraded) break;
      switch (store_->put(key, blob)) {
        case PutStatus::Ok: {
          catalog_.insert(key);
          ++res.uploads_performed;
          double ms = store_transfer_ms(blob.prefix.size());
          res.upload_ms += ms;
          if (config_.upload_in_ttft) b.store_ms += ms;
          break;
        }
        case PutStatus::Unavailable:
          res.store_degraded = true;
          break;
        default:
          break;  // rejected upload affects the store, not this query
      }
    }

    // Step 4: greedy response generation.
    auto gen = engine_.generate(state, config_.max_answer_tokens);
    res.answer_tokens = std::move(gen.tokens);
    b.r_decode_ms = engine_.cost().response_ms_per_token * res.answer_tokens.size();
    b.sample_ms = engine_.cost().sample_ms_per_token * res.answer_tokens.size();

    res.matched_tokens = have_match ? matched : 0;
    res.label = have_match ? case_from_range(matched_label) : CaseLabel::Case1_Miss;
    clock_.advance(b.ttlt_ms());
    return res;
  }

  /// One synchronous catalog pull+merge. Returns false on transport failure.
  bool sync_once() {
    if (sync_store_ == nullptr) return false;
    auto reply = sync_store_->pull_catalog(catalog_.version());
    if (reply.status == PullStatus::NotModified) return true;
    if (reply.status != PullStatus::Ok) return false;
    try {
      catalog_.sync_apply(Catalog::deserialize(reply.catalog_bytes));
    } catch (const DecodeError&) {
      return false;
    }
    return true;
  }

  void start_sync(std::chrono::milliseconds interval) {
    if (sync_store_ == nullptr || sync_thread_.joinable()) return;
    sync_thread_ = std::jthread(
        [this, interval](std::stop_token stop) { sync_loop(catalog_, *sync_store_, interval, stop); });
  }

  void stop_sync() {
    if (sync_thread_.joinable()) {
      sync_thread_.request_stop();
      sync_thread_.join();
    }
  }

  SharedCatalog& local_catalog() { return catalog_; }
  const DeviceProfile& profile() const { return profile_; }
  const ModelMeta& meta() const { return meta_; }
  const VirtualClock& clock() const { return clock_; }
  double store_transfer_ms(uint64_t tokens) const {
    return profile_.transfer.transfer_ms(profile_.state_bytes_per_token *
                                         static_cast<double>(tokens));
  }

 private:
  static bool validate_blob(const StateBlob& blob, CacheKey key, const TokenSequence& full,
                            uint64_t end_index) {
    if (blob.meta_digest != key.digest) return false;
    if (blob.prefix.size() != end_index) return false;
    return std::equal(blob.prefix.begin(), blob.prefix.end(), full.begin());
  }

  Engine& engine_;
  StoreConnector* store_;
  StoreConnector* sync_store_;
  DeviceProfile profile_;
  ModelMeta meta_;
  ClientConfig config_;
  SharedCatalog catalog_;
  SplitMix fp_rng_;
  VirtualClock clock_;
  std::jthread sync_thread_;
};

}  // namespace dpc
