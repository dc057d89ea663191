#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trnav/flow.hpp"
#include "trnav/geometry.hpp"
#include "trnav/robust.hpp"
#include "trnav/terrain.hpp"

namespace trnav {

/// The 12 unknowns: p1 (m), t1 attitude (roll, pitch, yaw; rad), p12 (m),
/// relative attitude (rad).
using ParameterVector = Eigen::Matrix<double, 12, 1>;
using JacobianMatrix = Eigen::Matrix<double, Eigen::Dynamic, 12>;

namespace theta_index {
inline constexpr int kPosition = 0;
inline constexpr int kAttitude = 3;
inline constexpr int kTranslation = 6;
inline constexpr int kRotation = 9;
}  // namespace theta_index

ParameterVector pack_theta(const Pose& pose1, const RelativeMotion& motion);
Pose pose_of(const ParameterVector& theta);
RelativeMotion motion_of(const ParameterVector& theta);
/// Absolute camera pose at t2 implied by theta.
Pose second_pose_of(const ParameterVector& theta);
/// Finite, and both pitches inside (-89.9, 89.9) deg.
bool theta_valid(const ParameterVector& theta);

struct EstimationProblem {
  std::shared_ptr<const Dtm> dtm;
  CameraIntrinsics intrinsics;
  std::vector<FlowFeature> features;  // tracked features only are used
  ParameterVector initial_guess = ParameterVector::Zero();
};

enum class SolveMethod { GaussNewton, LevenbergMarquardt };
std::string to_string(SolveMethod m);

struct SolverConfig {
  int max_gn_iters = 50;
  int gn_switch_iters = 5;
  int max_lm_iters = 100;
  double lm_lambda0 = 1e-3;
  double lm_lambda_factor = 10.0;
  double step_tol = 1e-4;       // scaled step norm (meters / milli-radians)
  double residual_tol = 1e-24;  // weighted objective
  MEstimator mestimator = MEstimator::huber(1.345);
  int reanchor_every = 3;

  void validate() const;
};

/// Per-feature ground anchors aligned with the problem's features;
/// empty entries are features that were dropped (lost, out of frame, or
/// whose ray missed the DTM).
struct AnchorSet {
  std::vector<std::optional<GroundAnchor>> anchors;
  std::vector<int> dropped;  // feature ids
  std::size_t valid_count() const;
};

/// Casts each tracked feature's t1 ray from the pose in theta onto the DTM.
/// Throws Error{InsufficientConstraints} if fewer than six anchors survive.
AnchorSet anchor_features(const EstimationProblem& problem, const ParameterVector& theta);

/// Constraint for one feature:
///   Lambda = q1 N^T / (N^T R1 q1),  v = p12 + R12 Lambda (Q_E - p1),
///   f = (I - q2 q2^T / q2^T q2) v / |v|.
/// Throws Error{DegenerateFeature} for grazing rays and
/// Error{DegenerateGeometry} when |v| vanishes.
Vec3 residual_single(const ParameterVector& theta, const GroundAnchor& anchor, const ImageRay& q1,
                     const ImageRay& q2);

struct StackedResidual {
  Eigen::VectorXd values;          // 3n, zeros for unusable features
  std::vector<bool> unusable;      // dropped or degenerate, per feature
  std::vector<double> norms() const;
};

/// F = [f_1; ...; f_n] over all problem features (OpenMP over features).
StackedResidual residual_stack(const EstimationProblem& problem, const ParameterVector& theta,
                               const AnchorSet& anchors);

/// Forward differences of residual_stack with steps 1e-3 m / 1e-6 rad and
/// fixed anchors. Unusable features give zero rows. Throws
/// Error{JacobianEvaluation} when a probe produces a non-finite residual.
JacobianMatrix jacobian(const EstimationProblem& problem, const ParameterVector& theta,
                        const AnchorSet& anchors);

/// Central-difference counterpart (same steps); the accuracy oracle for
/// jacobian().
JacobianMatrix jacobian_central(const EstimationProblem& problem, const ParameterVector& theta,
                                const AnchorSet& anchors);

struct AcceptedStep {
  double objective_before;  // same anchors and weights on both sides
  double objective_after;
  SolveMethod method;
};

struct EstimateResult {
  ParameterVector theta = ParameterVector::Zero();
  double objective = 0.0;                  // sum w_i |f_i|^2
  std::vector<Vec3> per_feature_residuals; // aligned with problem.features
  std::vector<double> per_feature_weights;
  std::vector<int> feature_ids;
  int iterations = 0;
  bool converged = false;
  SolveMethod method_used = SolveMethod::GaussNewton;
  std::vector<AcceptedStep> steps;
  std::string message;
};

/// Robust Gauss-Newton with a permanent switch to Levenberg-Marquardt after
/// gn_switch_iters steps without sufficient decrease. Non-convergence is a
/// result (converged = false), not an exception.
EstimateResult solve(const EstimationProblem& problem, const SolverConfig& config);

namespace reference {

/// Serial versions kept as test and benchmark baselines.
StackedResidual residual_stack(const EstimationProblem& problem, const ParameterVector& theta,
                               const AnchorSet& anchors);
JacobianMatrix jacobian(const EstimationProblem& problem, const ParameterVector& theta,
                        const AnchorSet& anchors);

}  // namespace reference

}  // namespace trnav
