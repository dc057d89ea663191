#pragma once

#include <string>
#include <vector>

namespace trnav {

/// Iteratively-reweighted M-estimator applied to per-feature residual norms.
struct MEstimator {
  enum class Kind { None, Huber, Tukey };

  Kind kind = Kind::Huber;
  /// Huber k or Tukey c, in units of the robust scale.
  double tuning = 1.345;

  static MEstimator none() { return {Kind::None, 0.0}; }
  static MEstimator huber(double k = 1.345) { return {Kind::Huber, k}; }
  static MEstimator tukey(double c = 4.685) { return {Kind::Tukey, c}; }
};

MEstimator::Kind mestimator_kind_from_string(const std::string& name);
std::string to_string(MEstimator::Kind kind);

/// 1.4826 * median of the norms: consistent sigma for Gaussian residuals.
double mad_scale(std::vector<double> norms);

/// Weight per residual norm, with s = max(mad_scale(norms), scale_floor):
///   huber: min(1, k*s/r);  tukey: (1 - (r/(c*s))^2)^2 for r < c*s, else 0.
/// Entries flagged in `excluded` get weight 0 and do not enter the scale.
/// Throws Error{RobustCollapse} if every weight ends up zero.
std::vector<double> mestimator_weights(const std::vector<double>& norms, const MEstimator& kernel,
                                       const std::vector<bool>& excluded = {},
                                       double scale_floor = 1e-9);

/// max(mad_scale of the non-excluded norms, scale_floor).
double robust_scale(const std::vector<double>& norms, const std::vector<bool>& excluded = {},
                    double scale_floor = 1e-9);

/// Robust loss sum_i rho(r_i) at a fixed scale s, the function whose
/// iteratively reweighted minimization uses mestimator_weights:
///   none: r^2/2;  huber: r^2/2 for r <= k*s, else k*s*r - (k*s)^2/2;
///   tukey: (c*s)^2/6 * (1 - (1 - (r/(c*s))^2)^3) for r < c*s, else (c*s)^2/6.
/// Excluded entries contribute nothing.
double mestimator_loss(const std::vector<double>& norms, const MEstimator& kernel, double scale,
                       const std::vector<bool>& excluded = {});

}  // namespace trnav
