#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <dpc/harness.hpp>

#include <filesystem>
#include <set>

using namespace dpc;

// ---------------------------------------------------------------------------
// Workload generation
// ---------------------------------------------------------------------------

TEST_CASE("workload generation is deterministic under the seed") {
  WorkloadSpec spec;
  spec.domains = 8;
  spec.seed = 99;
  auto meta = default_meta();
  auto a = generate_workload(spec, meta);
  auto b = generate_workload(spec, meta);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].layout == b[i].layout);

  spec.seed = 100;
  auto c = generate_workload(spec, meta);
  CHECK(a.front().layout != c.front().layout);
}

TEST_CASE("57 domains x 2 questions yields 114 prompts sharing per-domain prefixes") {
  WorkloadSpec spec;  // defaults: 57 domains, N=5, Q=2
  auto items = generate_workload(spec, default_meta());
  REQUIRE(items.size() == 114);
  for (size_t i = 0; i < items.size(); i += 2) {
    CHECK(items[i].domain == items[i + 1].domain);
    CHECK(items[i].layout.instruction == items[i + 1].layout.instruction);
    CHECK(items[i].layout.examples == items[i + 1].layout.examples);
    CHECK(items[i].layout.question != items[i + 1].layout.question);
    CHECK(items[i].layout.examples.size() == 5);
  }
  // different domains do not share instructions
  CHECK(items[0].layout.instruction != items[2].layout.instruction);
}

TEST_CASE("question word cap is honored") {
  WorkloadSpec spec;
  spec.domains = 30;
  spec.questions_per_domain = 4;
  spec.max_question_words = 256;
  auto items = generate_workload(spec, default_meta());
  for (const auto& item : items) {
    CHECK(item.layout.question.size() <= 256);  // toy tokenizer: one token per word
    CHECK(item.layout.question.size() >= 3);
  }
}

TEST_CASE("toy tokenizer splits on whitespace and stays within vocab") {
  auto t = toy_tokenize("alpha beta  gamma\n delta", 32000);
  REQUIRE(t.size() == 4);
  for (auto id : t) CHECK(id < 32000);
  CHECK(toy_tokenize("alpha", 32000)[0] == t[0]);
  CHECK(toy_tokenize("", 32000).empty());
}

TEST_CASE("reference layout hits the scaled boundary structure") {
  auto meta = default_meta();
  auto l405 = make_reference_layout(0, 405, 7, meta.vocab_size);
  CHECK(l405.total_tokens() == 405);
  auto r = derive_ranges(l405);
  REQUIRE(r.size() == 4);
  CHECK(r[0].end_index == 10);
  CHECK(r[1].end_index == 57);
  CHECK(r[2].end_index == 340);
  CHECK(r[3].end_index == 405);

  auto l334 = make_reference_layout(1, 334, 7, meta.vocab_size);
  CHECK(l334.total_tokens() == 334);
  auto r2 = derive_ranges(l334);
  CHECK(r2.back().end_index == 334);
  CHECK(r2.front().end_index == 8);

  // distinct domains get distinct content
  auto other = make_reference_layout(1, 405, 7, meta.vocab_size);
  CHECK(other.full() != l405.full());
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

TEST_CASE("cold start: first prompt per domain misses, later ones hit the shared prefix") {
  WorkloadSpec spec;
  spec.domains = 5;
  spec.examples_per_domain = 2;
  spec.questions_per_domain = 3;
  spec.max_question_words = 32;
  spec.seed = 11;
  auto items = generate_workload(spec, default_meta());

  auto report = run_experiment(DeviceProfile::low_end(), items);
  REQUIRE(report.rows.size() == items.size());
  for (const auto& row : report.rows) {
    bool first_of_domain = row.index % spec.questions_per_domain == 0;
    if (first_of_domain) {
      CHECK(row.result.label == CaseLabel::Case1_Miss);
    } else {
      CHECK(row.result.label >= CaseLabel::Case4_InstrAllExamples);
    }
  }
}

TEST_CASE("two serial clients share the cache through catalog sync") {
  WorkloadSpec spec;
  spec.domains = 4;
  spec.examples_per_domain = 2;
  spec.questions_per_domain = 2;
  spec.max_question_words = 24;
  spec.seed = 5;
  auto items = generate_workload(spec, default_meta());

  ExperimentOptions opts;
  opts.clients = 2;
  auto report = run_experiment(DeviceProfile::low_end(), items, opts);
  // q0 of each domain goes to client 0 (miss), q1 to client 1, which has
  // synced the master catalog and reuses client 0's upload
  for (const auto& row : report.rows) {
    if (row.index % 2 == 0) {
      CHECK(row.result.label == CaseLabel::Case1_Miss);
      CHECK(row.client == 0);
    } else {
      CHECK(row.result.label == CaseLabel::Case4_InstrAllExamples);
      CHECK(row.client == 1);
    }
  }
}

TEST_CASE("store-disabled and fp-injected runs produce identical answer streams") {
  WorkloadSpec spec;
  spec.domains = 6;
  spec.examples_per_domain = 2;
  spec.questions_per_domain = 2;
  spec.max_question_words = 20;
  spec.seed = 31;
  auto items = generate_workload(spec, default_meta());
  auto profile = DeviceProfile::low_end();

  ExperimentOptions with_cache;
  with_cache.clients = 2;
  auto a = run_experiment(profile, items, with_cache);

  ExperimentOptions no_store = with_cache;
  no_store.store_enabled = false;
  auto b = run_experiment(profile, items, no_store);

  ExperimentOptions fp = with_cache;
  fp.client_config.fp_inject = {0.25, 909};
  auto c = run_experiment(profile, items, fp);

  CHECK(a.answer_stream() == b.answer_stream());
  CHECK(a.answer_stream() == c.answer_stream());
  for (const auto& row : b.rows) CHECK(row.result.label == CaseLabel::Case1_Miss);
}

TEST_CASE("breakdown additivity holds for every row") {
  WorkloadSpec spec;
  spec.domains = 3;
  spec.questions_per_domain = 2;
  spec.max_question_words = 16;
  auto report = run_experiment(DeviceProfile::high_end(), generate_workload(spec, default_meta()));
  for (const auto& row : report.rows) {
    const auto& b = row.result.breakdown;
    CHECK(b.ttft_ms() == doctest::Approx(b.token_ms + b.bloom_ms + b.p_decode_ms + b.store_ms)
                             .epsilon(1e-12));
    CHECK(b.ttlt_ms() ==
          doctest::Approx(b.ttft_ms() + b.r_decode_ms + b.sample_ms).epsilon(1e-12));
  }
}

TEST_CASE("CSV output is deterministic with the exact header") {
  WorkloadSpec spec;
  spec.domains = 3;
  spec.examples_per_domain = 2;
  spec.questions_per_domain = 2;
  spec.max_question_words = 12;
  spec.seed = 7;
  auto items = generate_workload(spec, default_meta());

  auto csv1 = run_experiment(DeviceProfile::low_end(), items).to_csv();
  auto csv2 = run_experiment(DeviceProfile::low_end(), items).to_csv();
  CHECK(csv1 == csv2);
  CHECK(csv1.substr(0, csv1.find('\n')) ==
        "case,client,domain,matched_tokens,token_ms,bloom_ms,p_decode_ms,store_ms,"
        "r_decode_ms,sample_ms,ttft_ms,ttlt_ms,state_bytes");
  CHECK(csv1.find("Case1") != std::string::npos);
}

TEST_CASE("threaded dispatch preserves row order and answer stream") {
  WorkloadSpec spec;
  spec.domains = 6;
  spec.examples_per_domain = 2;
  spec.questions_per_domain = 2;
  spec.max_question_words = 16;
  spec.seed = 3;
  auto items = generate_workload(spec, default_meta());

  ExperimentOptions serial;
  serial.clients = 3;
  auto a = run_experiment(DeviceProfile::low_end(), items, serial);

  ExperimentOptions threaded = serial;
  threaded.serial = false;
  auto b = run_experiment(DeviceProfile::low_end(), items, threaded);

  CHECK(a.answer_stream() == b.answer_stream());
  for (size_t i = 0; i < b.rows.size(); ++i) CHECK(b.rows[i].index == i);
}

// ---------------------------------------------------------------------------
// Calibrated profiles
// ---------------------------------------------------------------------------

TEST_CASE("built-in profiles reproduce their calibration inputs") {
  auto low = DeviceProfile::low_end();
  CHECK(low.transfer.transfer_ms(2.25e6) == doctest::Approx(861.92).epsilon(1e-9));
  CHECK(low.transfer.transfer_ms(9.94e6) == doctest::Approx(2887.04).epsilon(1e-9));
  CHECK(low.reference_state_bytes() == doctest::Approx(2.25e6));
  CHECK(low.engine_cost.prefill_ms_per_token * 404 == doctest::Approx(12580.85));

  auto high = DeviceProfile::high_end();
  CHECK(high.engine_cost.prefill_ms_per_token * 334.11 == doctest::Approx(2688.17));
  CHECK(high.reference_state_bytes() ==
        doctest::Approx(9.94e6 / 334.11 * 334).epsilon(1e-9));
  CHECK(DeviceProfile::by_name("low-end").name == "low-end");
  CHECK_THROWS_AS(DeviceProfile::by_name("mid-range"), InvalidInput);
}

TEST_CASE("transfer model is strictly increasing in size") {
  auto t = profiles::shared_wifi();
  double prev = -1;
  for (double bytes : {0.0, 1.0, 1e3, 1e6, 5e6, 2e7}) {
    double ms = t.transfer_ms(bytes);
    CHECK(ms > prev);
    prev = ms;
  }
}

TEST_CASE("profile files round-trip through the key=value format") {
  auto path = std::filesystem::temp_directory_path() / "dpc_profile_test.conf";
  {
    std::ofstream out(path);
    out << "# test profile\n"
        << "name = custom\n"
        << "tokenize_ms = 2.5\n"
        << "prefill_ms_per_token = 10\n"
        << "response_ms_per_token = 20\n"
        << "sample_ms_per_token = 1\n"
        << "fixed_rtt_ms = 100\n"
        << "bytes_per_ms = 2000\n"
        << "state_bytes_per_token = 5000\n"
        << "bloom_ms_per_probe = 0.05\n"
        << "reference_prompt_tokens = 200\n"
        << "partial_anchor = 0:1000\n"
        << "partial_anchor = 200:0\n";
  }
  auto p = DeviceProfile::load(path.string());
  CHECK(p.name == "custom");
  CHECK(p.engine_cost.tokenize_ms == 2.5);
  CHECK(p.transfer.transfer_ms(2000) == doctest::Approx(101.0));
  CHECK(p.reference_prompt_tokens == 200);
  REQUIRE(p.partial_decode_anchors.size() == 2);
  CHECK(p.partial_curve().cost_ms(0, 200) == doctest::Approx(1000.0));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(DeviceProfile::load("/nonexistent/profile.conf"), InvalidInput);
}

// ---------------------------------------------------------------------------
// Break-even
// ---------------------------------------------------------------------------

TEST_CASE("break-even on the low-end profile: between Case 2 and Case 4") {
  auto be = break_even(DeviceProfile::low_end(), 405);
  REQUIRE(be.threshold_tokens.has_value());
  CHECK(*be.threshold_tokens > 10);
  CHECK(*be.threshold_tokens <= 340);
  CHECK(be.transfer_ms == doctest::Approx(861.92).epsilon(1e-9));

  REQUIRE(be.cases.size() == 4);
  CHECK(be.cases[0].matched == 10);
  CHECK(be.cases[0].net_ms < 0);   // Case 2: not worth the round trip
  CHECK(be.cases[2].net_ms > 0);   // Case 4
  CHECK(be.cases[3].net_ms > 0);   // Case 5
}

TEST_CASE("break-even edge cases: free transfer and free prefill") {
  auto p = DeviceProfile::low_end();
  p.transfer = {0.0, 1e18};
  p.bloom_ms_per_probe = 0.0;
  auto be = break_even(p, 405);
  REQUIRE(be.threshold_tokens.has_value());
  CHECK(*be.threshold_tokens == 1);

  auto q = DeviceProfile::low_end();
  q.engine_cost.prefill_ms_per_token = 0.0;
  CHECK(!break_even(q, 405).threshold_tokens.has_value());
}

// ---------------------------------------------------------------------------
// FP overhead
// ---------------------------------------------------------------------------

TEST_CASE("analytic FP overhead") {
  CHECK(fp_overhead_expectation(DeviceProfile::low_end(), 0.01) ==
        doctest::Approx(8.6192).epsilon(1e-9));
  CHECK(fp_overhead_expectation(DeviceProfile::low_end(), 0.0) == 0.0);
  CHECK_THROWS_AS(fp_overhead_expectation(DeviceProfile::low_end(), 1.5), InvalidInput);
}

TEST_CASE("Monte-Carlo FP overhead converges toward the analytic value (10k smoke)") {
  auto profile = DeviceProfile::low_end();
  double analytic = fp_overhead_expectation(profile, 0.01);
  double mc = fp_overhead_monte_carlo(profile, 0.01, 10'000, 1337);
  CHECK(mc > analytic * 0.7);
  CHECK(mc < analytic * 1.3);
  CHECK(fp_overhead_monte_carlo(profile, 0.0, 100) == 0.0);
}

// ---------------------------------------------------------------------------
// Partial matching table
// ---------------------------------------------------------------------------

TEST_CASE("partial matching table matches each case at its exact prefix") {
  auto rows = partial_matching_report(DeviceProfile::low_end());
  REQUIRE(rows.size() == 5);
  const uint64_t want_matched[5] = {0, 10, 57, 340, 405};
  const CaseLabel want_label[5] = {CaseLabel::Case1_Miss, CaseLabel::Case2_Instruction,
                                   CaseLabel::Case3_InstrFirstExample,
                                   CaseLabel::Case4_InstrAllExamples, CaseLabel::Case5_Full};
  for (int i = 0; i < 5; ++i) {
    CHECK(rows[i].matched == want_matched[i]);
    CHECK(rows[i].label == want_label[i]);
    if (i > 0) CHECK(rows[i].t_decode_ms < rows[i - 1].t_decode_ms);
  }
  CHECK(rows[0].savings_ms == 0.0);
}

// ---------------------------------------------------------------------------
// SVG emitter
// ---------------------------------------------------------------------------

TEST_CASE("bar chart SVG is produced and well-formed-ish") {
  auto path = std::filesystem::temp_directory_path() / "dpc_chart_test.svg";
  write_bar_chart_svg(path.string(), "test chart", {"Case1", "Case5"},
                      {{"TTFT", {100.0, 10.0}}, {"TTLT", {200.0, 110.0}}});
  std::ifstream in(path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(content.find("<svg") == 0);
  CHECK(content.find("</svg>") != std::string::npos);
  CHECK(content.find("Case5") != std::string::npos);
  std::filesystem::remove(path);
}
