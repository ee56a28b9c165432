#pragma once

#include <vector>

#include "mif/common.hpp"

namespace mif {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method,
/// O(n^3)). Returns row -> column.
std::vector<int> solve_assignment(const MatX& cost);

}  // namespace mif
