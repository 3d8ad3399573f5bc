#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "travag/eventlog.hpp"

namespace travag {

/// Minimum insert/delete/substitute operations between two activity
/// sequences (unit costs). Empty sequences are allowed.
int levenshtein(const TraceVariant& a, const TraceVariant& b);

/// levenshtein(a, b) / max(len(a), len(b)); defined as 0 when both are empty.
double normalized_levenshtein(const TraceVariant& a, const TraceVariant& b);

/// Row-major cost matrix of a transportation instance.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// An optimal transportation plan: flow amounts per (supply, demand) edge
/// and the total cost.
struct TransportPlan {
  struct Flow {
    std::size_t supply = 0;
    std::size_t demand = 0;
    std::int64_t amount = 0;
  };
  std::vector<Flow> flows;
  double total_cost = 0.0;
};

/// Exact minimum-cost transportation via successive shortest augmenting
/// paths with potentials. Supplies/demands must balance; costs must be
/// non-negative. Flow amounts stay integral throughout. Optimality is
/// certified before returning: no residual edge may have negative reduced
/// cost.
TransportPlan solve_transportation(std::span<const std::int64_t> supplies,
                                   std::span<const std::int64_t> demands,
                                   const CostMatrix& costs);

/// 1 - EMD between the two variant distributions under the normalized
/// Levenshtein ground distance. 1 means identical distributions, 0 maximal
/// disparity. Throws EmptyLogError on an empty input.
double relative_log_similarity(const SimpleEventLog& original, const SimpleEventLog& other);

/// Minimum total count of Levenshtein operations transforming one log's
/// variant multiset into the other's, as a min-cost flow over absolute
/// frequencies. Unequal log sizes are balanced by a virtual empty variant
/// whose edge cost is the variant length (whole-trace insertion/deletion).
double absolute_log_difference(const SimpleEventLog& original, const SimpleEventLog& other);

}  // namespace travag
