#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "mif/generator.hpp"
#include "mif/harness.hpp"

using namespace mif;

namespace {

const Scenario& example() {
  static const Scenario s = load_scenario(MIF_SOURCE_DIR "/scenarios/example.json");
  return s;
}

// Wilson score interval written out from its definition.
std::pair<double, double> wilson_oracle(double k, double n, double z) {
  const double p = k / n;
  const double a = p + z * z / (2 * n);
  const double b = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n));
  const double d = 1 + z * z / n;
  return {(a - b) / d, (a + b) / d};
}

bool same_node(const GraphNode& a, const GraphNode& b) {
  return a.caption == b.caption && a.room == b.room && a.centroid == b.centroid && a.feature == b.feature &&
         a.reliability == b.reliability;
}

}  // namespace

TEST_CASE("memory modes") {
  for (auto m : {MemoryMode::kStatic, MemoryMode::kInitial, MemoryMode::kFull})
    CHECK(memory_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(memory_mode_from_string("partial"), ParseError);
}

TEST_CASE("trigger persistence") {
  const std::vector<std::pair<int, double>> up{{1, 0.1}, {2, 0.5}, {3, 0.6}, {4, 0.7}, {5, 0.2}};
  CHECK(triggers(up, 0.45, 3));
  CHECK(!triggers(up, 0.45, 4));
  CHECK(triggers(up, 0.65, 1));
  CHECK(!triggers(up, 0.7, 1));  // strict inequality
  const std::vector<std::pair<int, double>> dip{{1, 0.5}, {2, 0.5}, {3, 0.1}, {4, 0.5}, {5, 0.5}};
  CHECK(!triggers(dip, 0.45, 3));
  CHECK(triggers(dip, 0.45, 2));
  CHECK(!triggers({}, 0.0, 1));
}

TEST_CASE("wilson interval") {
  for (auto [k, n] : {std::pair{0, 100}, {30, 100}, {97, 100}, {100, 100}, {1, 3}}) {
    const auto [lo, hi] = wilson_interval(k, n);
    const auto [olo, ohi] = wilson_oracle(k, n, 1.959963984540054);
    CHECK(std::abs(lo - std::max(0.0, olo)) < 1e-12);
    CHECK(std::abs(hi - std::min(1.0, ohi)) < 1e-12);
    CHECK(lo <= double(k) / n);
    CHECK(hi >= double(k) / n);
  }
  CHECK(wilson_interval(0, 100).first == 0.0);
  CHECK(wilson_interval(100, 100).second == 1.0);
}

TEST_CASE("example scenario by mode") {
  const auto st = run_task(example(), MemoryMode::kStatic);
  CHECK(!st.success);
  CHECK(st.updates_triggered == 0);

  RunTrace trace;
  const auto full = run_task(example(), MemoryMode::kFull, &trace);
  CHECK_MESSAGE(full.success, full.reason);
  CHECK(full.updates_triggered >= 1);
  REQUIRE(!full.update_discrepancy.empty());
  for (auto [before, after] : full.update_discrepancy) CHECK(after < before);
  REQUIRE(full.ground_truth_clearance);
  CHECK(*full.ground_truth_clearance >= 0.0);
  REQUIRE(full.ips_diag);
  CHECK(full.ips_diag->safe());

  // Memory outside the affected regions is untouched.
  for (const auto& [id, n] : trace.initial_memory.nodes()) {
    if (trace.touched.count(id)) continue;
    REQUIRE(trace.final_memory.has_node(id));
    CHECK(same_node(trace.final_memory.node(id), n));
  }
  for (const auto& [id, n] : trace.final_memory.nodes())
    if (!trace.initial_memory.has_node(id)) CHECK(trace.touched.count(id));

  // Same scenario and seed, same report.
  const auto again = run_task(example(), MemoryMode::kFull);
  CHECK(report_to_json(again) == report_to_json(full));
}

TEST_CASE("report serialisation") {
  const auto r = run_task(example(), MemoryMode::kFull);
  const std::string text = report_to_json(r);
  const TaskReport back = report_from_json(text);
  CHECK(report_to_json(back) == text);
  TaskReport c = r;
  canonicalize(c);
  CHECK(back == c);
  CHECK_THROWS_AS(report_from_json("{}"), ParseError);
}

TEST_CASE("seed override") {
  Scenario s = example();
  ::setenv("MIF_SEED", "4242", 1);
  apply_seed_override(s);
  CHECK(s.seed == 4242);
  ::setenv("MIF_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(apply_seed_override(s), ParseError);
  ::unsetenv("MIF_SEED");
  Scenario t = example();
  apply_seed_override(t);
  CHECK(t.seed == example().seed);
}

TEST_CASE("suite round trip") {
  const auto suite = generate_sweep_suite(3, 3, 5);
  const auto dir = std::filesystem::temp_directory_path() / "mif_suite_roundtrip";
  std::filesystem::remove_all(dir);
  write_suite(dir.string(), suite);
  const auto back = load_suite(dir.string());
  REQUIRE(back.size() == suite.size());
  for (std::size_t i = 0; i < suite.size(); ++i) {
    CHECK(back[i].change == suite[i].change);
    CHECK(scenario_to_json(back[i].scenario) == scenario_to_json(suite[i].scenario));
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_suite(dir.string()), Error);
}

TEST_CASE("threshold sweep is monotone") {
  const auto suite = generate_sweep_suite(8, 8, 77);
  const std::vector<double> taus{0.0, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8, 1.0, 2.0};
  const auto rows = sweep_tau(suite, taus);
  REQUIRE(rows.size() == taus.size());
  CHECK(rows.front().tpr == 1.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].tpr <= rows[i - 1].tpr);
    CHECK(rows[i].fpr <= rows[i - 1].fpr);
  }
  for (const auto& r : rows) {
    CHECK(r.tp + r.fn == 8);
    CHECK(r.fp + r.tn == 8);
    const double f1 = r.tp ? 2.0 * r.tp / (2.0 * r.tp + r.fp + r.fn) : 0.0;
    CHECK(std::abs(r.f1 - f1) < 1e-12);
  }
  CHECK_THROWS_AS(sweep_tau({}, taus), EmptySuite);
}

TEST_CASE("adaptation ordering on a small suite") {
  const auto suite = generate_adaptation_suite(4, 31);
  const auto res = eval_adaptation(suite, {MemoryMode::kStatic, MemoryMode::kInitial, MemoryMode::kFull});
  CHECK(res.reports.size() == suite.size() * 3);
  CHECK(res.table.size() == 9);
  std::map<std::string, std::map<MemoryMode, int>> wins;
  for (const auto& c : res.table) wins[c.change][c.mode] = c.successes;
  for (const auto& [change, m] : wins) {
    CHECK(m.at(MemoryMode::kFull) >= m.at(MemoryMode::kInitial));
    CHECK(m.at(MemoryMode::kInitial) >= m.at(MemoryMode::kStatic));
  }
  CHECK_THROWS_AS(eval_adaptation({}, {MemoryMode::kFull}), EmptySuite);
}
