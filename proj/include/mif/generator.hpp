#pragma once

// Procedural desk-scale scenarios: one or two rooms, furniture with small
// items on top, and a single tick-0 change to the queried item.

#include <cstdint>
#include <string>
#include <vector>

#include "mif/harness.hpp"

namespace mif {

enum class ChangeType { kNone, kRelocation, kRemoval, kAddition };
std::string to_string(ChangeType change);
ChangeType change_from_string(const std::string& s);  // ParseError

struct GeneratorOptions {
  bool allow_second_room = true;
  /// Harsher sensing for no-change scenarios used as negatives in the sweep.
  bool elevated_jitter = false;
};

Scenario generate_scenario(std::uint64_t seed, ChangeType change, const GeneratorOptions& options = {});

/// `per_type` scenarios for each of relocation, removal, addition.
std::vector<SuiteEntry> generate_adaptation_suite(int per_type, std::uint64_t base_seed);

/// Changed scenarios (cycling relocation / removal / addition) followed by
/// unchanged ones, half of them with elevated jitter.
std::vector<SuiteEntry> generate_sweep_suite(int changed, int unchanged, std::uint64_t base_seed);

}  // namespace mif
