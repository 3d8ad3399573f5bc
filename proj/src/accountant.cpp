#include "travag/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "travag/errors.hpp"

namespace travag {
namespace {

// lgamma(n+1) for n in [0, kAlphaGridMax], so ln C(a,k) is a table lookup.
const std::vector<double>& log_factorial_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kAlphaGridMax + 1);
    t[0] = 0.0;
    for (int n = 1; n <= kAlphaGridMax; ++n) {
      t[n] = t[n - 1] + std::log(static_cast<double>(n));
    }
    return t;
  }();
  return table;
}

double log_binomial(int n, int k) {
  const auto& lf = log_factorial_table();
  return lf[n] - lf[k] - lf[n - k];
}

}  // namespace

double RdpCurve::at(int alpha) const {
  const auto it = std::lower_bound(points.begin(), points.end(), alpha,
                                   [](const auto& p, int a) { return p.first < a; });
  if (it == points.end() || it->first != alpha) {
    throw std::invalid_argument("alpha " + std::to_string(alpha) + " not on the curve grid");
  }
  return it->second;
}

double gaussian_rdp(double alpha, double phi) {
  if (!(alpha > 1.0)) {
    throw std::invalid_argument("gaussian_rdp: alpha must exceed 1");
  }
  if (!(phi > 0.0)) {
    throw std::invalid_argument("gaussian_rdp: phi must be positive");
  }
  return alpha / (2.0 * phi * phi);
}

double subsampled_gaussian_rdp(int alpha, double q, double phi) {
  if (alpha < 2) {
    throw std::invalid_argument("subsampled_gaussian_rdp: integer alpha >= 2 required");
  }
  if (alpha > kAlphaGridMax) {
    throw std::invalid_argument("subsampled_gaussian_rdp: alpha beyond grid maximum");
  }
  if (!(q > 0.0 && q <= 1.0)) {
    throw std::invalid_argument("subsampled_gaussian_rdp: q must lie in (0, 1]");
  }
  if (!(phi > 0.0)) {
    throw std::invalid_argument("subsampled_gaussian_rdp: phi must be positive");
  }
  if (q == 1.0) {
    // All mass sits at k = alpha; the closed form avoids needless roundoff.
    return gaussian_rdp(static_cast<double>(alpha), phi);
  }

  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double gauss = 1.0 / (2.0 * phi * phi);

  // log-sum-exp over k: the exp((k^2-k)/(2 Phi^2)) factor overflows long
  // before the sum does, so everything stays in logs.
  std::vector<double> terms(static_cast<std::size_t>(alpha) + 1);
  double max_term = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= alpha; ++k) {
    const double t = log_binomial(alpha, k) + static_cast<double>(alpha - k) * log_1mq +
                     static_cast<double>(k) * log_q +
                     static_cast<double>(k) * static_cast<double>(k - 1) * gauss;
    terms[k] = t;
    max_term = std::max(max_term, t);
  }
  double sum = 0.0;
  for (const double t : terms) sum += std::exp(t - max_term);
  const double log_total = max_term + std::log(sum);
  // The bound is nonnegative; tiny negative drift only appears as roundoff.
  return std::max(0.0, log_total / static_cast<double>(alpha - 1));
}

RdpCurve subsampled_gaussian_curve(double q, double phi) {
  RdpCurve curve;
  curve.points.resize(kAlphaGridMax - kAlphaGridMin + 1);
#pragma omp parallel for schedule(dynamic, 16)
  for (int alpha = kAlphaGridMin; alpha <= kAlphaGridMax; ++alpha) {
    curve.points[alpha - kAlphaGridMin] = {alpha, subsampled_gaussian_rdp(alpha, q, phi)};
  }
  return curve;
}

RdpCurve compose(const RdpCurve& step, std::uint64_t iterations) {
  if (iterations == 0) {
    throw std::invalid_argument("compose: iterations must be >= 1");
  }
  RdpCurve out = step;
  for (auto& [alpha, eps] : out.points) {
    eps *= static_cast<double>(iterations);
  }
  return out;
}

DpGuarantee rdp_to_dp(const RdpCurve& curve, double delta) {
  if (curve.empty()) {
    throw std::invalid_argument("rdp_to_dp: empty curve");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("rdp_to_dp: delta must lie in (0, 1)");
  }
  const double log_inv_delta = std::log(1.0 / delta);
  double best = std::numeric_limits<double>::infinity();
  int best_alpha = 0;
  for (const auto& [alpha, eps_rdp] : curve.points) {
    const double eps_dp = eps_rdp + log_inv_delta / (static_cast<double>(alpha) - 1.0);
    if (eps_dp < best) {
      best = eps_dp;
      best_alpha = alpha;
    }
  }
  return DpGuarantee{best, delta, best_alpha};
}

DpGuarantee account_dpsgd(const MechanismSpend& spend, double delta) {
  if (spend.iterations == 0) {
    throw std::invalid_argument("account_dpsgd: iterations must be >= 1");
  }
  const RdpCurve step = subsampled_gaussian_curve(spend.sampling_rate, spend.noise_multiplier);
  return rdp_to_dp(compose(step, spend.iterations), delta);
}

DpGuarantee combine_mechanisms(const DpGuarantee& g1, const DpGuarantee& g2) {
  for (const DpGuarantee* g : {&g1, &g2}) {
    if (!(g->epsilon > 0.0) || !(g->delta > 0.0 && g->delta < 1.0)) {
      throw std::invalid_argument("combine_mechanisms: invalid guarantee");
    }
  }
  const double delta = g1.delta + g2.delta;
  if (delta >= 1.0) {
    throw NumericError("combined delta " + std::to_string(delta) +
                       " reaches 1; the guarantee is vacuous");
  }
  return DpGuarantee{g1.epsilon + g2.epsilon, delta, 0};
}

double calibrate_phi(double target_epsilon, double delta, double q, std::uint64_t iterations) {
  if (!(target_epsilon > 0.0)) {
    throw std::invalid_argument("calibrate_phi: target epsilon must be positive");
  }
  const auto accounted = [&](double phi) {
    return account_dpsgd(MechanismSpend{q, phi, iterations}, delta).epsilon;
  };

  double lo = kPhiBracketLow;
  double hi = kPhiBracketHigh;
  const double eps_lo = accounted(lo);
  if (eps_lo <= target_epsilon) {
    return lo;
  }
  const double eps_hi = accounted(hi);
  if (eps_hi > target_epsilon) {
    throw CalibrationError(
        "target epsilon " + std::to_string(target_epsilon) + " unreachable for q=" +
        std::to_string(q) + ", T=" + std::to_string(iterations) + ": epsilon(" +
        std::to_string(kPhiBracketLow) + ")=" + std::to_string(eps_lo) + ", epsilon(" +
        std::to_string(kPhiBracketHigh) + ")=" + std::to_string(eps_hi));
  }
  // Invariant: accounted(lo) > target >= accounted(hi).
  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (accounted(mid) <= target_epsilon) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

}  // namespace travag
