// mif: command-line front end for scenario runs, experiment suites and graph files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mif/generator.hpp"
#include "mif/harness.hpp"

namespace {

using namespace mif;

constexpr int kExitOk = 0;
constexpr int kExitTaskFailure = 1;
constexpr int kExitInput = 2;

std::vector<double> parse_taus(const std::string& text) {
  std::vector<double> taus;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    try {
      std::size_t used = 0;
      taus.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParseError("bad tau value '" + item + "'");
    }
  }
  if (taus.empty()) throw ParseError("--taus needs at least one value");
  return taus;
}

std::vector<MemoryMode> parse_modes(const std::string& text) {
  std::vector<MemoryMode> modes;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) modes.push_back(memory_mode_from_string(item));
  if (modes.empty()) throw ParseError("--modes needs at least one mode");
  return modes;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

void print_summary(const AdaptationResult& r) {
  std::cout << "change       mode      n   success  rate    95% CI\n";
  for (const auto& c : r.table) {
    std::cout << std::left << std::setw(13) << c.change << std::setw(8) << to_string(c.mode) << std::right
              << std::setw(5) << c.n << std::setw(9) << c.successes << "  " << std::fixed << std::setprecision(3)
              << c.rate << "  [" << c.ci_low << ", " << c.ci_high << "]\n";
    std::cout.unsetf(std::ios::fixed);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mif: spatial memory with discrepancy-triggered updates and interaction pose safety"};
  app.require_subcommand(1);

  std::string scenario_path, out_path, mode_name = "full";
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run one task and print its report");
  run->add_option("scenario", scenario_path, "Scenario document")->required();
  run->add_option("--mode", mode_name, "static | initial | full");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--out", out_path, "Write the report here instead of stdout");

  std::string suite_dir, taus_text = "0,0.1,0.2,0.3,0.4,0.45,0.5,0.6,0.8,1,1.5";
  std::string runs_path;
  auto* sweep = app.add_subcommand("sweep-tau", "Trigger rates of a labeled suite across thresholds");
  sweep->add_option("suite", suite_dir, "Suite directory")->required();
  sweep->add_option("--taus", taus_text, "Comma-separated thresholds");
  sweep->add_option("--out", out_path, "CSV output (stdout when omitted)");
  sweep->add_option("--runs", runs_path, "Also write the monitoring runs (JSON lines)");

  std::string modes_text = "static,initial,full", out_dir = "results";
  auto* adapt = app.add_subcommand("eval-adaptation", "Success rates per change type and memory mode");
  adapt->add_option("suite", suite_dir, "Suite directory")->required();
  adapt->add_option("--modes", modes_text, "Comma-separated modes");
  adapt->add_option("--out-dir", out_dir, "Writes runs.jsonl, runs.csv and summary.json");

  auto* eval_ips = app.add_subcommand("eval-ips", "Full-mode run with stance diagnostics against ground truth");
  eval_ips->add_option("scenario", scenario_path, "Scenario document")->required();
  eval_ips->add_option("--seed", seed, "Override the scenario seed");

  auto* graph = app.add_subcommand("graph", "Scene-graph files");
  graph->require_subcommand(1);
  std::vector<std::string> graph_files;
  auto* dump = graph->add_subcommand("dump", "Print a graph file in canonical form, or the mapped memory of a scenario");
  dump->add_option("file", graph_files, "Graph file")->required()->expected(1);
  dump->add_flag("--from-scenario", "Treat the file as a scenario and dump the mapped memory");
  auto* diff = graph->add_subcommand("diff", "Discrepancy D of graph a (observation) against graph b (memory)");
  diff->add_option("files", graph_files, "Two graph files")->required()->expected(2);

  auto* validate = app.add_subcommand("validate", "Parse a scenario and replay its events");
  validate->add_option("scenario", scenario_path, "Scenario document")->required();

  std::string kind = "adaptation";
  int count = 100;
  std::uint64_t base_seed = 1;
  auto* gen = app.add_subcommand("generate-suite", "Write a procedurally generated suite");
  gen->add_option("dir", out_dir, "Output directory")->required();
  gen->add_option("--kind", kind, "adaptation (count per change type) | sweep (count total, half changed)");
  gen->add_option("--count", count, "Scenario count");
  gen->add_option("--seed", base_seed, "Base seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    auto load = [&](const std::string& path) {
      Scenario s = load_scenario(path);
      apply_seed_override(s);
      if (seed) s.seed = *seed;
      return s;
    };

    if (*run) {
      const Scenario s = load(scenario_path);
      const TaskReport r = run_task(s, memory_mode_from_string(mode_name));
      const std::string text = report_to_json(r) + "\n";
      if (out_path.empty()) {
        std::cout << text;
      } else {
        write_file(out_path, text);
        std::cout << r.outcome << ": " << r.reason << "\n";
      }
      return r.success ? kExitOk : kExitTaskFailure;
    }

    if (*sweep) {
      const auto suite = load_suite(suite_dir);
      std::vector<TaskReport> runs;
      const auto rows = sweep_tau(suite, parse_taus(taus_text), &runs);
      if (out_path.empty()) {
        std::cout << sweep_csv(rows);
      } else {
        write_file(out_path, sweep_csv(rows));
      }
      if (!runs_path.empty()) write_reports_jsonl(runs_path, runs);
      return kExitOk;
    }

    if (*adapt) {
      const auto suite = load_suite(suite_dir);
      const auto result = eval_adaptation(suite, parse_modes(modes_text));
      std::filesystem::create_directories(out_dir);
      write_reports_jsonl(out_dir + "/runs.jsonl", result.reports);
      write_reports_csv(out_dir + "/runs.csv", result.reports, &result.changes);
      write_file(out_dir + "/summary.json", adaptation_summary_json(result));
      print_summary(result);
      return kExitOk;
    }

    if (*eval_ips) {
      const Scenario s = load(scenario_path);
      const TaskReport r = run_task(s, MemoryMode::kFull);
      nlohmann::ordered_json j;
      j["scenario"] = r.scenario;
      j["outcome"] = r.outcome;
      j["success"] = r.success;
      if (r.ips_diag) {
        j["i_col"] = r.ips_diag->i_col;
        j["i_ik"] = r.ips_diag->i_ik;
        j["i_stab"] = r.ips_diag->i_stab;
        j["clearance_m"] = r.ips_diag->clearance_m;
        j["reach_m"] = r.ips_diag->reach_m;
        j["stability_margin_m"] = r.ips_diag->stability_margin_m;
      }
      if (r.ground_truth_clearance) {
        j["ground_truth_clearance_m"] = *r.ground_truth_clearance;
        j["penetration"] = *r.ground_truth_clearance < 0.0;
      }
      std::cout << j.dump(2) << "\n";
      return r.success ? kExitOk : kExitTaskFailure;
    }

    if (*dump) {
      if (dump->count("--from-scenario") > 0) {
        const Scenario s = load(graph_files.at(0));
        RunTrace trace;
        run_task(s, MemoryMode::kStatic, &trace);
        std::cout << graph_to_json(trace.initial_memory);
      } else {
        std::cout << graph_to_json(load_graph(graph_files.at(0)));
      }
      return kExitOk;
    }

    if (*diff) {
      const SceneGraph a = load_graph(graph_files.at(0));
      const SceneGraph b = load_graph(graph_files.at(1));
      const DiscrepancyParams params;
      const Matching m = match_nodes(a, b, params);
      const auto d = discrepancy_breakdown(a, b, m, params);
      std::cout << "D = " << format_sig9(d.total) << " (node " << format_sig9(d.node_term) << ", relational "
                << format_sig9(d.relational_term) << ")\n";
      std::cout << "matched " << m.pairs.size() << ", only in a " << m.unmatched_local.size() << ", only in b "
                << m.unmatched_global.size() << "\n";
      for (NodeId id : m.unmatched_local) std::cout << "  - a:" << id << " " << a.node(id).caption << "\n";
      for (NodeId id : m.unmatched_global) std::cout << "  - b:" << id << " " << b.node(id).caption << "\n";
      return kExitOk;
    }

    if (*validate) {
      const Scenario s = load_scenario(scenario_path);
      World world(s);
      for (const auto& e : s.events) world.apply_event(e);
      if (!ground_truth_target(World(s), s.query) &&
          std::none_of(s.events.begin(), s.events.end(), [](const SceneEvent& e) { return e.kind == EventKind::kAdd; })) {
        throw ParseError("query.object matches no object in the query region");
      }
      std::cout << "ok: " << (s.name.empty() ? scenario_path : s.name) << " (" << s.objects.size() << " objects, "
                << s.events.size() << " events)\n";
      return kExitOk;
    }

    if (*gen) {
      std::vector<SuiteEntry> suite;
      if (kind == "adaptation") {
        suite = generate_adaptation_suite(count, base_seed);
      } else if (kind == "sweep") {
        suite = generate_sweep_suite(count - count / 2, count / 2, base_seed);
      } else {
        throw ParseError("--kind must be adaptation or sweep");
      }
      write_suite(out_dir, suite);
      std::cout << "wrote " << suite.size() << " scenarios to " << out_dir << "\n";
      return kExitOk;
    }
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const AssetNotFound& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const EventError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const EmptySuite& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTaskFailure;
  }
  return kExitOk;
}
