#pragma once

// Task execution loop (grounding, monitored navigation with discrepancy-
// triggered memory evolution, interaction stance selection), experiment
// suites, and metrics emission.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mif/ips.hpp"
#include "mif/navigation.hpp"
#include "mif/simworld.hpp"
#include "mif/spatial.hpp"

namespace mif {

enum class MemoryMode { kStatic, kInitial, kFull };
std::string to_string(MemoryMode mode);
MemoryMode memory_mode_from_string(const std::string& s);  // ParseError

struct TaskReport {
  std::string scenario;
  MemoryMode mode = MemoryMode::kFull;
  std::string outcome;  // "success" | "failure" | "removed-report"
  bool success = false;
  std::string reason;
  int ticks = 0;
  std::vector<std::pair<int, double>> d_trace;
  int updates_triggered = 0;
  std::optional<Pose2> final_stance;
  std::optional<IpsDiagnostics> ips_diag;
  double path_length = 0.0;
  /// Discrepancy of the scan evidence against memory before and after each patch.
  std::vector<std::pair<double, double>> update_discrepancy;
  /// Clearance of the accepted stance against the densified ground-truth scene.
  std::optional<double> ground_truth_clearance;

  bool operator==(const TaskReport& other) const;
};

/// Rounds every floating-point field to 9 significant digits so that the
/// emitted text parses back to an equal report.
void canonicalize(TaskReport& report);

/// Memory snapshots for inspection and the locality checks.
struct RunTrace {
  SceneGraph initial_memory;  // after the mapping pass
  SceneGraph final_memory;
  std::set<NodeId> touched;   // memory ids inside an affected region or inserted by a patch
};

/// Algorithm-level execution of one task. NoPath / NoFeasibleStance end the
/// run as failures rather than propagating.
TaskReport run_task(const Scenario& scenario, MemoryMode mode, RunTrace* trace = nullptr);

/// True when D exceeds tau on `persistence` consecutive entries.
bool triggers(const std::vector<std::pair<int, double>>& trace, double tau, int persistence);

struct SuiteEntry {
  Scenario scenario;
  std::string change;  // "relocation" | "removal" | "addition" | "none"
};

std::vector<SuiteEntry> load_suite(const std::string& dir);  // EmptySuite, IoError, ParseError
void write_suite(const std::string& dir, const std::vector<SuiteEntry>& suite);

struct SweepRow {
  double tau = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  int tn = 0;
  double tpr = 0.0;
  double fpr = 0.0;
  double f1 = 0.0;
};

/// One monitoring run per scenario (initial mode, memory never patched)
/// records a D trace; each tau then classifies the fixed traces.
std::vector<SweepRow> sweep_tau(const std::vector<SuiteEntry>& suite, const std::vector<double>& taus,
                                std::vector<TaskReport>* monitoring_runs = nullptr);

struct AdaptationCell {
  std::string change;
  MemoryMode mode = MemoryMode::kFull;
  int n = 0;
  int successes = 0;
  double rate = 0.0;
  double ci_low = 0.0;  // Wilson score 95% interval
  double ci_high = 0.0;
};

struct AdaptationResult {
  std::vector<TaskReport> reports;  // suite order, then mode order
  std::vector<std::string> changes;  // aligned with reports
  std::vector<AdaptationCell> table;
};

AdaptationResult eval_adaptation(const std::vector<SuiteEntry>& suite, const std::vector<MemoryMode>& modes);

std::pair<double, double> wilson_interval(int successes, int n, double z = 1.959963984540054);

std::string report_to_json(const TaskReport& report);
TaskReport report_from_json(const std::string& text);

/// One JSON document per line.
void write_reports_jsonl(const std::string& path, const std::vector<TaskReport>& reports);
/// One row per run.
void write_reports_csv(const std::string& path, const std::vector<TaskReport>& reports,
                       const std::vector<std::string>* changes = nullptr);
std::string adaptation_summary_json(const AdaptationResult& result);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Applies the MIF_SEED override when the variable is set.
void apply_seed_override(Scenario& scenario);

}  // namespace mif
