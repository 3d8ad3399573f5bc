#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace travag {

/// Integer Renyi-order grid. Orders above 128 matter once ln(1/delta)/(alpha-1)
/// has to shrink below ~0.05 (tight epsilon targets at moderate delta).
inline constexpr int kAlphaGridMin = 2;
inline constexpr int kAlphaGridMax = 2048;

/// Per-order RDP curve: sorted (alpha, epsilon_RDP) points.
struct RdpCurve {
  std::vector<std::pair<int, double>> points;

  bool empty() const { return points.empty(); }
  /// Epsilon at an exact grid order; throws std::invalid_argument if absent.
  double at(int alpha) const;
};

/// (epsilon, delta)-DP guarantee; alpha_star records the Renyi order that
/// realized the conversion minimum (0 when not applicable, e.g. after
/// cross-mechanism composition).
struct DpGuarantee {
  double epsilon = 0.0;
  double delta = 0.0;
  int alpha_star = 0;
};

/// The inputs of one DP-SGD mechanism's accounting.
struct MechanismSpend {
  double sampling_rate = 1.0;    // q
  double noise_multiplier = 0.0; // Phi
  std::uint64_t iterations = 1;  // T
};

/// RDP of the plain Gaussian mechanism: alpha / (2 Phi^2).
double gaussian_rdp(double alpha, double phi);

/// RDP upper bound of the Poisson-subsampled Gaussian mechanism at integer
/// order alpha >= 2:
///   (1/(alpha-1)) * ln( sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k
///                       exp((k^2-k)/(2 Phi^2)) )
/// evaluated in log-sum-exp form. Reduces exactly to gaussian_rdp at q = 1.
double subsampled_gaussian_rdp(int alpha, double q, double phi);

/// One-step curve over the full integer grid.
RdpCurve subsampled_gaussian_curve(double q, double phi);

/// T-fold self-composition: epsilon multiplied by T pointwise.
RdpCurve compose(const RdpCurve& step, std::uint64_t iterations);

/// Conversion to (epsilon, delta)-DP: minimizes
///   epsilon_RDP(alpha) + ln(1/delta)/(alpha - 1)
/// over the curve's orders and reports the argmin order.
DpGuarantee rdp_to_dp(const RdpCurve& curve, double delta);

/// The three accounting steps for one DP-SGD mechanism: subsampled RDP,
/// composition over iterations, conversion to (epsilon, delta)-DP.
DpGuarantee account_dpsgd(const MechanismSpend& spend, double delta);

/// Basic sequential composition: (eps1 + eps2, delta1 + delta2). Throws
/// NumericError when the summed delta reaches 1 (vacuous guarantee).
DpGuarantee combine_mechanisms(const DpGuarantee& g1, const DpGuarantee& g2);

/// Smallest noise multiplier in [0.3, 100] (bisected to 1e-3) whose
/// accounted epsilon stays within target_epsilon. Throws CalibrationError,
/// reporting the bracket's epsilon values, when even Phi = 100 overshoots.
double calibrate_phi(double target_epsilon, double delta, double q, std::uint64_t iterations);

inline constexpr double kPhiBracketLow = 0.3;
inline constexpr double kPhiBracketHigh = 100.0;

}  // namespace travag
