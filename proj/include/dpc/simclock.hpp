#pragma once

/**
 * Virtual-clock latency model. Costs are charged to per-client virtual
 * clocks instead of being slept, so experiments that model multi-second
 * device latencies run in milliseconds and remain exactly reproducible.
 *
 * The built-in profiles model a low-end and a high-end edge device. Their
 * engine costs, state sizes, and the shared Wi-Fi transfer model are
 * calibrated so that full-hit versus miss latency ratios and the partial
 * matching decode-time table come out at the measured reference values.
 */

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dpc/engine.hpp"
#include "dpc/errors.hpp"

namespace dpc {

/// Per-client virtual timeline, in milliseconds.
class VirtualClock {
 public:
  void advance(double ms) { now_ms_ += ms; }
  double now_ms() const { return now_ms_; }

 private:
  double now_ms_ = 0.0;
};

/// Fixed round-trip overhead plus bandwidth-proportional payload time;
/// strictly increasing in size.
struct TransferModel {
  double fixed_rtt_ms = 0.0;
  double bytes_per_ms = 1.0;

  double transfer_ms(double size_bytes) const {
    return fixed_rtt_ms + size_bytes / bytes_per_ms;
  }
};

struct DeviceProfile {
  std::string name;
  EngineCost engine_cost;
  TransferModel transfer;
  double state_bytes_per_token = 1.0;
  double bloom_ms_per_probe = 0.0;
  // Token count of the reference prompt the profile was calibrated on;
  // also fixes the reference state-blob size used in overhead analysis.
  uint64_t reference_prompt_tokens = 0;
  // Remaining-prefill milliseconds by matched-token count on the 405-token
  // reference prompt; feeds the partial-matching decode-time analysis.
  std::vector<std::pair<uint64_t, double>> partial_decode_anchors;

  double reference_state_bytes() const {
    return state_bytes_per_token * static_cast<double>(reference_prompt_tokens);
  }

  /// Cumulative prefill-cost curve implied by the partial decode anchors.
  PrefillCurve partial_curve() const {
    if (partial_decode_anchors.empty()) return PrefillCurve{};
    double total = partial_decode_anchors.front().second;
    std::vector<std::pair<uint64_t, double>> cumulative;
    cumulative.reserve(partial_decode_anchors.size());
    for (const auto& [pos, remaining] : partial_decode_anchors)
      cumulative.emplace_back(pos, total - remaining);
    return PrefillCurve{std::move(cumulative)};
  }

  static DeviceProfile low_end();
  static DeviceProfile high_end();
  static DeviceProfile by_name(const std::string& name);
  static DeviceProfile load(const std::string& path);
};

namespace profiles {

// Shared Wi-Fi transfer model, solved from the two measured points
// (2.25 MB -> 861.92 ms, 9.94 MB -> 2887.04 ms).
inline TransferModel shared_wifi() {
  TransferModel t;
  t.bytes_per_ms = (9.94e6 - 2.25e6) / (2887.04 - 861.92);
  t.fixed_rtt_ms = 861.92 - 2.25e6 / t.bytes_per_ms;
  return t;
}

}  // namespace profiles

inline DeviceProfile DeviceProfile::low_end() {
  DeviceProfile p;
  p.name = "low-end";
  p.engine_cost.tokenize_ms = 3.46;
  p.engine_cost.prefill_ms_per_token = 12580.85 / 404.0;
  p.engine_cost.response_ms_per_token = 10904.67;
  p.engine_cost.sample_ms_per_token = 84.82;
  p.transfer = profiles::shared_wifi();
  p.reference_prompt_tokens = 405;
  p.state_bytes_per_token = 2.25e6 / 405.0;
  p.bloom_ms_per_probe = 0.075;
  p.partial_decode_anchors = {
      {0, 15983.01}, {10, 15067.28}, {57, 13369.14}, {340, 2124.01}, {405, 0.0}};
  return p;
}

inline DeviceProfile DeviceProfile::high_end() {
  DeviceProfile p;
  p.name = "high-end";
  p.engine_cost.tokenize_ms = 1.61;
  p.engine_cost.prefill_ms_per_token = 2688.17 / 334.11;
  p.engine_cost.response_ms_per_token = 78.12;
  p.engine_cost.sample_ms_per_token = 1.67;
  p.transfer = profiles::shared_wifi();
  p.reference_prompt_tokens = 334;
  p.state_bytes_per_token = 9.94e6 / 334.11;
  p.bloom_ms_per_probe = 0.0;
  p.partial_decode_anchors = {
      {0, 3298.98}, {10, 3217.48}, {57, 2855.18}, {340, 580.45}, {405, 0.0}};
  return p;
}

inline DeviceProfile DeviceProfile::by_name(const std::string& name) {
  if (name == "low-end") return low_end();
  if (name == "high-end") return high_end();
  throw InvalidInput("unknown profile '" + name + "' (expected low-end or high-end)");
}

/**
 * Profile file: `key = value` lines, `#` comments. partial_anchor lines
 * repeat, one `matched:remaining_ms` pair each.
 */
inline DeviceProfile DeviceProfile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw InvalidInput("cannot open profile file: " + path);
  DeviceProfile p;
  p.transfer = TransferModel{};
  std::string line;
  size_t lineno = 0;
  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("profile " + path + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "name") p.name = value;
      else if (key == "tokenize_ms") p.engine_cost.tokenize_ms = std::stod(value);
      else if (key == "prefill_ms_per_token") p.engine_cost.prefill_ms_per_token = std::stod(value);
      else if (key == "response_ms_per_token") p.engine_cost.response_ms_per_token = std::stod(value);
      else if (key == "sample_ms_per_token") p.engine_cost.sample_ms_per_token = std::stod(value);
      else if (key == "fixed_rtt_ms") p.transfer.fixed_rtt_ms = std::stod(value);
      else if (key == "bytes_per_ms") p.transfer.bytes_per_ms = std::stod(value);
      else if (key == "state_bytes_per_token") p.state_bytes_per_token = std::stod(value);
      else if (key == "bloom_ms_per_probe") p.bloom_ms_per_probe = std::stod(value);
      else if (key == "reference_prompt_tokens") p.reference_prompt_tokens = std::stoull(value);
      else if (key == "partial_anchor") {
        auto colon = value.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("expected matched:remaining");
        p.partial_decode_anchors.emplace_back(std::stoull(value.substr(0, colon)),
                                              std::stod(value.substr(colon + 1)));
      } else {
        throw InvalidInput("profile " + path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw InvalidInput("profile " + path + ":" + std::to_string(lineno) + ": bad value for '" + key + "'");
    }
  }
  if (p.name.empty()) p.name = path;
  return p;
}

}  // namespace dpc
