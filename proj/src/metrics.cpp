#include "travag/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "travag/errors.hpp"
#include "travag/kernels.hpp"

namespace travag {

int levenshtein(const TraceVariant& a, const TraceVariant& b) {
  const auto& s = a.activities();
  const auto& t = b.activities();
  if (s.empty()) return static_cast<int>(t.size());
  if (t.empty()) return static_cast<int>(s.size());

  // Two-row rolling DP.
  std::vector<int> prev(t.size() + 1);
  std::vector<int> curr(t.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= s.size(); ++i) {
    curr[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= t.size(); ++j) {
      const int substitute = prev[j - 1] + (s[i - 1] == t[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, substitute});
    }
    std::swap(prev, curr);
  }
  return prev[t.size()];
}

double normalized_levenshtein(const TraceVariant& a, const TraceVariant& b) {
  const std::size_t longest = std::max(a.length(), b.length());
  if (longest == 0) return 0.0;
  return static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

namespace {

// Successive shortest augmenting paths with node potentials on the bipartite
// transportation graph. All arc costs are non-negative, so zero initial
// potentials are valid and Dijkstra applies throughout.
class TransportationSolver {
 public:
  TransportationSolver(std::span<const std::int64_t> supplies,
                       std::span<const std::int64_t> demands, const CostMatrix& costs)
      : supplies_(supplies.begin(), supplies.end()),
        demands_(demands.begin(), demands.end()),
        costs_(costs),
        flow_(supplies.size() * demands.size(), 0),
        potential_supply_(supplies.size(), 0.0),
        potential_demand_(demands.size(), 0.0) {
    if (costs.rows != supplies.size() || costs.cols != demands.size()) {
      throw std::invalid_argument("cost matrix shape does not match supplies/demands");
    }
    std::int64_t total_supply = 0, total_demand = 0;
    for (const std::int64_t s : supplies) {
      if (s < 0) throw std::invalid_argument("negative supply");
      total_supply += s;
    }
    for (const std::int64_t d : demands) {
      if (d < 0) throw std::invalid_argument("negative demand");
      total_demand += d;
    }
    if (total_supply != total_demand) {
      throw std::invalid_argument("unbalanced transportation instance: supply " +
                                  std::to_string(total_supply) + " vs demand " +
                                  std::to_string(total_demand));
    }
    for (const double c : costs.values) {
      if (!(c >= 0.0) || !std::isfinite(c)) {
        throw std::invalid_argument("transportation costs must be non-negative and finite");
      }
    }
    remaining_ = total_supply;
  }

  TransportPlan solve() {
    while (remaining_ > 0) {
      augment();
    }
    certify_optimality();

    TransportPlan plan;
    plan.total_cost = 0.0;
    for (std::size_t i = 0; i < supplies_.size(); ++i) {
      for (std::size_t j = 0; j < demands_.size(); ++j) {
        const std::int64_t f = flow_[i * demands_.size() + j];
        if (f > 0) {
          plan.flows.push_back({i, j, f});
          plan.total_cost += static_cast<double>(f) * costs_.at(i, j);
        }
      }
    }
    return plan;
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  // Tolerance for the reduced-cost certificate; exact-integer instances pass
  // with zero slack, fractional ground distances accumulate harmless ulps.
  static constexpr double kReducedCostSlack = 1e-9;

  // One Dijkstra pass over reduced costs from every supply node with
  // remaining capacity, then augment along the cheapest path to a demand
  // node with remaining need.
  void augment() {
    const std::size_t ns = supplies_.size();
    const std::size_t nd = demands_.size();
    std::vector<double> dist_supply(ns, kInf), dist_demand(nd, kInf);
    std::vector<std::int32_t> from_supply(nd, -1);  // supply that settled the demand
    std::vector<std::int32_t> from_demand(ns, -1);  // demand whose residual reached the supply

    using Item = std::pair<double, std::int64_t>;  // (distance, node); node >= ns encodes demand
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (std::size_t i = 0; i < ns; ++i) {
      if (supplies_[i] > 0) {
        dist_supply[i] = 0.0;
        queue.push({0.0, static_cast<std::int64_t>(i)});
      }
    }

    std::vector<char> settled_supply(ns, 0), settled_demand(nd, 0);
    while (!queue.empty()) {
      const auto [d, node] = queue.top();
      queue.pop();
      if (node < static_cast<std::int64_t>(ns)) {
        const std::size_t i = static_cast<std::size_t>(node);
        if (settled_supply[i] || d > dist_supply[i]) continue;
        settled_supply[i] = 1;
        for (std::size_t j = 0; j < nd; ++j) {
          const double reduced = costs_.at(i, j) + potential_supply_[i] - potential_demand_[j];
          if (!settled_demand[j] && dist_supply[i] + reduced < dist_demand[j]) {
            dist_demand[j] = dist_supply[i] + reduced;
            from_supply[j] = static_cast<std::int32_t>(i);
            queue.push({dist_demand[j], static_cast<std::int64_t>(ns + j)});
          }
        }
      } else {
        const std::size_t j = static_cast<std::size_t>(node) - ns;
        if (settled_demand[j] || d > dist_demand[j]) continue;
        settled_demand[j] = 1;
        // Residual arcs j -> i exist where flow is positive.
        for (std::size_t i = 0; i < ns; ++i) {
          if (flow_[i * nd + j] > 0) {
            const double reduced =
                -(costs_.at(i, j) + potential_supply_[i] - potential_demand_[j]);
            if (!settled_supply[i] && dist_demand[j] + reduced < dist_supply[i]) {
              dist_supply[i] = dist_demand[j] + reduced;
              from_demand[i] = static_cast<std::int32_t>(j);
              queue.push({dist_supply[i], static_cast<std::int64_t>(i)});
            }
          }
        }
      }
    }

    // Cheapest reachable demand node that still needs flow.
    std::size_t target = nd;
    for (std::size_t j = 0; j < nd; ++j) {
      if (demands_[j] > 0 && dist_demand[j] < kInf &&
          (target == nd || dist_demand[j] < dist_demand[target])) {
        target = j;
      }
    }
    if (target == nd) {
      throw std::invalid_argument("transportation instance is infeasible");
    }

    // Walk the path back to a source supply, finding the bottleneck.
    std::int64_t bottleneck = std::numeric_limits<std::int64_t>::max();
    {
      std::size_t j = target;
      while (true) {
        const std::size_t i = static_cast<std::size_t>(from_supply[j]);
        if (from_demand[i] < 0) {
          bottleneck = std::min(bottleneck, supplies_[i]);
          break;
        }
        const std::size_t j_prev = static_cast<std::size_t>(from_demand[i]);
        bottleneck = std::min(bottleneck, flow_[i * nd + j_prev]);
        j = j_prev;
      }
      bottleneck = std::min(bottleneck, demands_[target]);
    }

    // Apply the augmentation.
    {
      std::size_t j = target;
      while (true) {
        const std::size_t i = static_cast<std::size_t>(from_supply[j]);
        flow_[i * nd + j] += bottleneck;
        if (from_demand[i] < 0) {
          supplies_[i] -= bottleneck;
          break;
        }
        const std::size_t j_prev = static_cast<std::size_t>(from_demand[i]);
        flow_[i * nd + j_prev] -= bottleneck;
        j = j_prev;
      }
      demands_[target] -= bottleneck;
      remaining_ -= bottleneck;
    }

    // Johnson-style potential update, capped at the target's distance so
    // reduced costs stay non-negative even around unreachable nodes.
    const double cap = dist_demand[target];
    for (std::size_t i = 0; i < supplies_.size(); ++i) {
      potential_supply_[i] += std::min(dist_supply[i], cap);
    }
    for (std::size_t j = 0; j < demands_.size(); ++j) {
      potential_demand_[j] += std::min(dist_demand[j], cap);
    }
  }

  // The optimality certificate: every residual arc has non-negative reduced
  // cost. Forward arcs are always residual (uncapacitated); backward arcs
  // exist where flow is positive.
  void certify_optimality() const {
    for (std::size_t i = 0; i < supplies_.size(); ++i) {
      for (std::size_t j = 0; j < demands_.size(); ++j) {
        const double reduced = costs_.at(i, j) + potential_supply_[i] - potential_demand_[j];
        if (reduced < -kReducedCostSlack) {
          throw NumericError("transportation solver lost optimality certificate");
        }
        if (flow_[i * demands_.size() + j] > 0 && reduced > kReducedCostSlack) {
          throw NumericError("transportation solver: positive flow on non-tight arc");
        }
      }
    }
  }

  std::vector<std::int64_t> supplies_;
  std::vector<std::int64_t> demands_;
  CostMatrix costs_;
  std::vector<std::int64_t> flow_;  // row-major supplies x demands
  std::vector<double> potential_supply_;
  std::vector<double> potential_demand_;
  std::int64_t remaining_ = 0;
};

struct FlowInstance {
  std::vector<TraceVariant> supply_variants;
  std::vector<TraceVariant> demand_variants;
  std::vector<std::int64_t> supplies;
  std::vector<std::int64_t> demands;
};

FlowInstance build_instance(const SimpleEventLog& a, const SimpleEventLog& b,
                            std::int64_t supply_scale, std::int64_t demand_scale) {
  FlowInstance inst;
  for (const auto& [variant, freq] : a.variants()) {
    inst.supply_variants.push_back(variant);
    inst.supplies.push_back(static_cast<std::int64_t>(freq) * supply_scale);
  }
  for (const auto& [variant, freq] : b.variants()) {
    inst.demand_variants.push_back(variant);
    inst.demands.push_back(static_cast<std::int64_t>(freq) * demand_scale);
  }
  return inst;
}

}  // namespace

TransportPlan solve_transportation(std::span<const std::int64_t> supplies,
                                   std::span<const std::int64_t> demands,
                                   const CostMatrix& costs) {
  return TransportationSolver(supplies, demands, costs).solve();
}

double relative_log_similarity(const SimpleEventLog& original, const SimpleEventLog& other) {
  if (original.empty() || other.empty()) {
    throw EmptyLogError("relative_log_similarity needs two non-empty logs");
  }
  // Rational-exact distributions: scale each side by the other's case count
  // so every mass is an integer over the common denominator m1*m2.
  const std::int64_t m1 = static_cast<std::int64_t>(original.case_count());
  const std::int64_t m2 = static_cast<std::int64_t>(other.case_count());
  FlowInstance inst = build_instance(original, other, m2, m1);

  const std::vector<int> lev =
      kernels::pairwise_levenshtein(inst.supply_variants, inst.demand_variants);
  CostMatrix costs{inst.supply_variants.size(), inst.demand_variants.size(), {}};
  costs.values.resize(lev.size());
  for (std::size_t i = 0; i < inst.supply_variants.size(); ++i) {
    for (std::size_t j = 0; j < inst.demand_variants.size(); ++j) {
      const std::size_t longest =
          std::max(inst.supply_variants[i].length(), inst.demand_variants[j].length());
      costs.values[i * costs.cols + j] =
          static_cast<double>(lev[i * costs.cols + j]) / static_cast<double>(longest);
    }
  }

  const TransportPlan plan = solve_transportation(inst.supplies, inst.demands, costs);
  const double emd = plan.total_cost / (static_cast<double>(m1) * static_cast<double>(m2));
  return std::clamp(1.0 - emd, 0.0, 1.0);
}

double absolute_log_difference(const SimpleEventLog& original, const SimpleEventLog& other) {
  if (original.empty() || other.empty()) {
    throw EmptyLogError("absolute_log_difference needs two non-empty logs");
  }
  FlowInstance inst = build_instance(original, other, 1, 1);

  // Balance unequal sizes with a virtual empty variant; moving a case to or
  // from it costs the full variant length (whole-trace insertion/deletion).
  const std::int64_t total_supply = std::accumulate(inst.supplies.begin(), inst.supplies.end(),
                                                    std::int64_t{0});
  const std::int64_t total_demand = std::accumulate(inst.demands.begin(), inst.demands.end(),
                                                    std::int64_t{0});
  if (total_supply < total_demand) {
    inst.supply_variants.push_back(TraceVariant{});
    inst.supplies.push_back(total_demand - total_supply);
  } else if (total_demand < total_supply) {
    inst.demand_variants.push_back(TraceVariant{});
    inst.demands.push_back(total_supply - total_demand);
  }

  const std::vector<int> lev =
      kernels::pairwise_levenshtein(inst.supply_variants, inst.demand_variants);
  CostMatrix costs{inst.supply_variants.size(), inst.demand_variants.size(), {}};
  costs.values.assign(lev.begin(), lev.end());

  return solve_transportation(inst.supplies, inst.demands, costs).total_cost;
}

}  // namespace travag
