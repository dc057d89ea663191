#include "trnav/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "trnav/error.hpp"

namespace trnav {

namespace {

constexpr double kPositionStep = 1e-3;  // m
constexpr double kAngleStep = 1e-6;     // rad
// Angle columns are divided by this before solving: the scaled unknowns are
// meters and milliradians, which balances the normal equations.
constexpr double kAngleColumnScale = 1000.0;
constexpr double kSufficientDecrease = 1e-4;
constexpr double kMaxLambda = 1e8;
constexpr std::size_t kMinFeatures = 6;

enum class ResidualStatus { Ok, Grazing, Degenerate };

// Rotations and translations of one theta, shared by every feature.
struct ThetaFrame {
  Mat3 r1;
  Mat3 r12;
  Vec3 p1;
  Vec3 p12;

  explicit ThetaFrame(const ParameterVector& t)
      : r1(rotation_from_euler(EulerAngles::from_vector(t.segment<3>(theta_index::kAttitude)))),
        r12(rotation_from_euler(EulerAngles::from_vector(t.segment<3>(theta_index::kRotation)))),
        p1(t.segment<3>(theta_index::kPosition)),
        p12(t.segment<3>(theta_index::kTranslation)) {}
};

ResidualStatus residual_core(const ThetaFrame& fr, const GroundAnchor& a, const Vec3& q1,
                             const Vec3& q2, Vec3& out) {
  const Vec3 world_ray = fr.r1 * q1;
  const double denom = a.normal.dot(world_ray);
  if (!(std::abs(denom) >= 1e-9 * world_ray.norm())) return ResidualStatus::Grazing;
  // Lambda (Q_E - p1) = q1 * (N^T (Q_E - p1)) / (N^T R1 q1)
  const Vec3 in_c1 = q1 * (a.normal.dot(a.point - fr.p1) / denom);
  const Vec3 v = fr.p12 + fr.r12 * in_c1;
  const double vn = v.norm();
  if (!(vn >= 1e-9)) return ResidualStatus::Degenerate;
  const Vec3 dir = v / vn;
  out = dir - q2 * (q2.dot(dir) / q2.squaredNorm());
  return ResidualStatus::Ok;
}

struct FeatureRays {
  std::vector<Vec3> q1;
  std::vector<Vec3> q2;
  std::vector<bool> usable;
};

FeatureRays feature_rays(const EstimationProblem& problem, const AnchorSet& anchors) {
  const std::size_t n = problem.features.size();
  if (anchors.anchors.size() != n) {
    throw Error(ErrorKind::Domain, "anchor set is not aligned with the problem features");
  }
  FeatureRays rays;
  rays.q1.assign(n, Vec3::UnitZ());
  rays.q2.assign(n, Vec3::UnitZ());
  rays.usable.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const FlowFeature& f = problem.features[i];
    if (!f.tracked() || !anchors.anchors[i]) continue;
    if (!problem.intrinsics.in_bounds(f.u1) || !problem.intrinsics.in_bounds(f.u2)) continue;
    rays.q1[i] = pixel_to_ray(problem.intrinsics, f.u1).q;
    rays.q2[i] = pixel_to_ray(problem.intrinsics, f.u2).q;
    rays.usable[i] = true;
  }
  return rays;
}

StackedResidual stack_impl(const EstimationProblem& problem, const ParameterVector& theta,
                           const AnchorSet& anchors, bool parallel) {
  const FeatureRays rays = feature_rays(problem, anchors);
  const ThetaFrame fr(theta);
  const int n = static_cast<int>(problem.features.size());
  StackedResidual out;
  out.values = Eigen::VectorXd::Zero(3 * n);
  out.unusable.assign(static_cast<std::size_t>(n), true);
  std::vector<char> bad(static_cast<std::size_t>(n), 1);
#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    if (!rays.usable[k]) continue;
    Vec3 f;
    if (residual_core(fr, *anchors.anchors[k], rays.q1[k], rays.q2[k], f) == ResidualStatus::Ok) {
      out.values.segment<3>(3 * i) = f;
      bad[k] = 0;
    }
  }
  for (std::size_t k = 0; k < bad.size(); ++k) out.unusable[k] = bad[k] != 0;
  return out;
}

ParameterVector probe_steps() {
  ParameterVector h;
  h << kPositionStep, kPositionStep, kPositionStep, kAngleStep, kAngleStep, kAngleStep,
      kPositionStep, kPositionStep, kPositionStep, kAngleStep, kAngleStep, kAngleStep;
  return h;
}

JacobianMatrix jacobian_impl(const EstimationProblem& problem, const ParameterVector& theta,
                             const AnchorSet& anchors, bool central, bool parallel) {
  const FeatureRays rays = feature_rays(problem, anchors);
  const ParameterVector h = probe_steps();
  const ThetaFrame base(theta);
  std::vector<ThetaFrame> plus;
  std::vector<ThetaFrame> minus;
  for (int j = 0; j < 12; ++j) {
    ParameterVector tp = theta;
    tp[j] += h[j];
    plus.emplace_back(tp);
    ParameterVector tm = theta;
    tm[j] -= h[j];
    minus.emplace_back(tm);
  }
  const int n = static_cast<int>(problem.features.size());
  JacobianMatrix jac = JacobianMatrix::Zero(3 * n, 12);
  int failures = 0;
#pragma omp parallel for schedule(static) reduction(+ : failures) if (parallel)
  for (int i = 0; i < n; ++i) {
    const std::size_t k = static_cast<std::size_t>(i);
    if (!rays.usable[k]) continue;
    const GroundAnchor& a = *anchors.anchors[k];
    Vec3 f0;
    if (residual_core(base, a, rays.q1[k], rays.q2[k], f0) != ResidualStatus::Ok) continue;
    for (int j = 0; j < 12; ++j) {
      Vec3 fp;
      if (residual_core(plus[static_cast<std::size_t>(j)], a, rays.q1[k], rays.q2[k], fp) !=
              ResidualStatus::Ok ||
          !fp.allFinite()) {
        ++failures;
        continue;
      }
      if (central) {
        Vec3 fm;
        if (residual_core(minus[static_cast<std::size_t>(j)], a, rays.q1[k], rays.q2[k], fm) !=
                ResidualStatus::Ok ||
            !fm.allFinite()) {
          ++failures;
          continue;
        }
        jac.block<3, 1>(3 * i, j) = (fp - fm) / (2.0 * h[j]);
      } else {
        jac.block<3, 1>(3 * i, j) = (fp - f0) / h[j];
      }
    }
  }
  if (failures > 0) {
    throw Error(ErrorKind::JacobianEvaluation,
                std::to_string(failures) + " probe evaluations gave no finite residual");
  }
  return jac;
}

double weighted_objective(const StackedResidual& r, const std::vector<double>& w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (r.unusable[i]) continue;
    sum += w[i] * r.values.segment<3>(3 * static_cast<Eigen::Index>(i)).squaredNorm();
  }
  return sum;
}

ParameterVector column_scale() {
  ParameterVector s = ParameterVector::Ones();
  s.segment<3>(theta_index::kAttitude).setConstant(kAngleColumnScale);
  s.segment<3>(theta_index::kRotation).setConstant(kAngleColumnScale);
  return s;
}

}  // namespace

ParameterVector pack_theta(const Pose& pose1, const RelativeMotion& motion) {
  ParameterVector t;
  t.segment<3>(theta_index::kPosition) = pose1.position;
  t.segment<3>(theta_index::kAttitude) = pose1.attitude.as_vector();
  t.segment<3>(theta_index::kTranslation) = motion.translation;
  t.segment<3>(theta_index::kRotation) = motion.attitude_delta.as_vector();
  return t;
}

Pose pose_of(const ParameterVector& theta) {
  return {theta.segment<3>(theta_index::kPosition),
          EulerAngles::from_vector(theta.segment<3>(theta_index::kAttitude))};
}

RelativeMotion motion_of(const ParameterVector& theta) {
  return {theta.segment<3>(theta_index::kTranslation),
          EulerAngles::from_vector(theta.segment<3>(theta_index::kRotation))};
}

Pose second_pose_of(const ParameterVector& theta) { return compose(pose_of(theta), motion_of(theta)); }

bool theta_valid(const ParameterVector& theta) {
  const double limit = deg2rad(89.9);
  return theta.allFinite() && std::abs(theta[theta_index::kAttitude + 1]) < limit &&
         std::abs(theta[theta_index::kRotation + 1]) < limit;
}

std::string to_string(SolveMethod m) {
  return m == SolveMethod::GaussNewton ? "gauss-newton" : "levenberg-marquardt";
}

void SolverConfig::validate() const {
  if (max_gn_iters < 1 || gn_switch_iters < 1 || max_lm_iters < 1 || reanchor_every < 1) {
    throw Error(ErrorKind::Config, "solver iteration counts must be >= 1");
  }
  if (!(step_tol > 0.0) || !(residual_tol > 0.0)) {
    throw Error(ErrorKind::Config, "solver tolerances must be > 0");
  }
  if (!(lm_lambda0 > 0.0) || !(lm_lambda_factor > 1.0)) {
    throw Error(ErrorKind::Config, "LM lambda0 must be > 0 and lambda factor > 1");
  }
  if (mestimator.kind != MEstimator::Kind::None && !(mestimator.tuning > 0.0)) {
    throw Error(ErrorKind::Config, "M-estimator tuning constant must be > 0");
  }
}

std::size_t AnchorSet::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(anchors.begin(), anchors.end(), [](const auto& a) { return a.has_value(); }));
}

std::vector<double> StackedResidual::norms() const {
  std::vector<double> out(unusable.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = values.segment<3>(3 * static_cast<Eigen::Index>(i)).norm();
  return out;
}

AnchorSet anchor_features(const EstimationProblem& problem, const ParameterVector& theta) {
  if (!problem.dtm) throw Error(ErrorKind::Config, "estimation problem has no DTM");
  const Pose pose = pose_of(theta);
  const int n = static_cast<int>(problem.features.size());
  AnchorSet set;
  set.anchors.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < n; ++i) {
    const FlowFeature& f = problem.features[static_cast<std::size_t>(i)];
    if (!f.tracked() || !problem.intrinsics.in_bounds(f.u1)) continue;
    try {
      const Vec3 dir = camera_ray_to_world(pose, pixel_to_ray(problem.intrinsics, f.u1));
      set.anchors[static_cast<std::size_t>(i)] = ray_intersect(*problem.dtm, pose.position, dir);
    } catch (const Error&) {
      // recorded below as dropped
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!set.anchors[static_cast<std::size_t>(i)]) {
      set.dropped.push_back(problem.features[static_cast<std::size_t>(i)].id);
    }
  }
  if (set.valid_count() < kMinFeatures) {
    throw Error(ErrorKind::InsufficientConstraints,
                "only " + std::to_string(set.valid_count()) +
                    " features could be anchored on the DTM (need 6)");
  }
  return set;
}

Vec3 residual_single(const ParameterVector& theta, const GroundAnchor& anchor, const ImageRay& q1,
                     const ImageRay& q2) {
  Vec3 out;
  switch (residual_core(ThetaFrame(theta), anchor, q1.q, q2.q, out)) {
    case ResidualStatus::Ok:
      return out;
    case ResidualStatus::Grazing:
      throw Error(ErrorKind::DegenerateFeature, "ray grazes the tangent plane");
    case ResidualStatus::Degenerate:
      break;
  }
  throw Error(ErrorKind::DegenerateGeometry, "predicted direction has zero length");
}

StackedResidual residual_stack(const EstimationProblem& problem, const ParameterVector& theta,
                               const AnchorSet& anchors) {
  return stack_impl(problem, theta, anchors, true);
}

JacobianMatrix jacobian(const EstimationProblem& problem, const ParameterVector& theta,
                        const AnchorSet& anchors) {
  return jacobian_impl(problem, theta, anchors, false, true);
}

JacobianMatrix jacobian_central(const EstimationProblem& problem, const ParameterVector& theta,
                                const AnchorSet& anchors) {
  return jacobian_impl(problem, theta, anchors, true, true);
}

namespace reference {

StackedResidual residual_stack(const EstimationProblem& problem, const ParameterVector& theta,
                               const AnchorSet& anchors) {
  return stack_impl(problem, theta, anchors, false);
}

JacobianMatrix jacobian(const EstimationProblem& problem, const ParameterVector& theta,
                        const AnchorSet& anchors) {
  return jacobian_impl(problem, theta, anchors, false, false);
}

}  // namespace reference

EstimateResult solve(const EstimationProblem& problem, const SolverConfig& config) {
  config.validate();
  const std::size_t tracked = static_cast<std::size_t>(std::count_if(
      problem.features.begin(), problem.features.end(), [](const FlowFeature& f) { return f.tracked(); }));
  if (tracked < kMinFeatures) {
    throw Error(ErrorKind::InsufficientConstraints,
                std::to_string(tracked) + " tracked features (need 6)");
  }
  if (!theta_valid(problem.initial_guess)) {
    throw Error(ErrorKind::Domain, "initial guess is not finite or lies in the gimbal-lock band");
  }

  const ParameterVector scale = column_scale();
  ParameterVector theta = problem.initial_guess;
  AnchorSet anchors = anchor_features(problem, theta);
  bool fresh = true;  // anchors were cast from the current theta
  int accepted_since_anchor = 0;

  // Best state seen right after re-anchoring. Steps taken on fixed anchors
  // are only provisional: a cycle whose re-anchored objective does not
  // improve on this is rolled back and retried with more damping.
  ParameterVector best_theta = theta;
  AnchorSet best_anchors = anchors;
  double best_fresh_objective = std::numeric_limits<double>::infinity();
  std::vector<double> best_weights;
  double best_scale = 1.0;
  double best_weighted_objective = std::numeric_limits<double>::infinity();

  SolveMethod method = SolveMethod::GaussNewton;
  int gn_iters = 0;
  int lm_iters = 0;
  int gn_failures = 0;
  double lambda = config.lm_lambda0;
  double cycle_lambda = lambda;

  EstimateResult result;
  bool converged = false;
  std::string message;

  auto evaluate = [&](const ParameterVector& t, const std::vector<bool>& usable_mask,
                      const std::vector<double>& w) {
    if (!theta_valid(t)) return std::numeric_limits<double>::infinity();
    const StackedResidual r = residual_stack(problem, t, anchors);
    for (std::size_t i = 0; i < usable_mask.size(); ++i) {
      // A feature that turns degenerate at the trial point must not lower
      // the objective by vanishing.
      if (usable_mask[i] && w[i] > 0.0 && r.unusable[i]) return std::numeric_limits<double>::infinity();
    }
    return weighted_objective(r, w);
  };

  for (;;) {
    if (method == SolveMethod::GaussNewton && gn_iters >= config.max_gn_iters) {
      method = SolveMethod::LevenbergMarquardt;
    }
    if (method == SolveMethod::LevenbergMarquardt && lm_iters >= config.max_lm_iters) {
      message = "iteration limit reached";
      break;
    }
    if (accepted_since_anchor >= config.reanchor_every && !fresh) {
      anchors = anchor_features(problem, theta);
      fresh = true;
      accepted_since_anchor = 0;
    }

    const bool anchors_fresh_here = fresh;
    StackedResidual r = residual_stack(problem, theta, anchors);
    std::vector<double> w = mestimator_weights(r.norms(), config.mestimator, r.unusable);
    double objective = weighted_objective(r, w);
    if (!std::isfinite(objective)) throw Error(ErrorKind::NumericalFailure, "objective is not finite");

    if (fresh) {
      // Re-anchored states are compared through the robust loss at the best
      // state's scale: a proper function of theta, so the outer loop cannot
      // cycle through reweighting alone.
      const std::vector<double> norms = r.norms();
      double compared = std::numeric_limits<double>::infinity();
      if (best_weights.empty()) {
        compared = -std::numeric_limits<double>::infinity();
      } else {
        compared = mestimator_loss(norms, config.mestimator, best_scale, r.unusable);
        for (std::size_t i = 0; i < best_weights.size(); ++i) {
          if (best_weights[i] > 0.0 && r.unusable[i]) compared = std::numeric_limits<double>::infinity();
        }
      }
      auto keep_as_best = [&] {
        best_scale = robust_scale(norms, r.unusable);
        best_fresh_objective = mestimator_loss(norms, config.mestimator, best_scale, r.unusable);
        best_weights = w;
        best_theta = theta;
        best_anchors = anchors;
        best_weighted_objective = objective;
      };
      if (compared < (1.0 - kSufficientDecrease) * best_fresh_objective) {
        keep_as_best();
      } else if (method == SolveMethod::GaussNewton) {
        // Gauss-Newton may climb out of a shallow dip; it is only charged
        // with a failed step.
        keep_as_best();
        if (++gn_failures >= config.gn_switch_iters) method = SolveMethod::LevenbergMarquardt;
      } else if (theta != best_theta) {
        // The last cycle did not lower the re-anchored objective: roll back.
        theta = best_theta;
        anchors = best_anchors;
        lambda = std::max(lambda, cycle_lambda) * config.lm_lambda_factor;
        if (lambda > kMaxLambda) {
          message = "no decrease of the re-anchored objective at any damping up to 1e8";
          break;
        }
        r = residual_stack(problem, theta, anchors);
        w = best_weights;
        objective = best_weighted_objective;
      }
      cycle_lambda = lambda;
    }

    std::vector<bool> usable(r.unusable.size());
    for (std::size_t i = 0; i < usable.size(); ++i) usable[i] = !r.unusable[i];
    if (objective <= config.residual_tol) {
      if (fresh) {
        converged = true;
        message = "residual tolerance reached";
        break;
      }
      accepted_since_anchor = config.reanchor_every;
      continue;
    }

    // Weighted, column-scaled linear system A * delta_s = b.
    JacobianMatrix jac = jacobian(problem, theta, anchors);
    Eigen::VectorXd sqrt_w(jac.rows());
    for (std::size_t i = 0; i < w.size(); ++i)
      sqrt_w.segment<3>(3 * static_cast<Eigen::Index>(i)).setConstant(std::sqrt(w[i]));
    const Eigen::MatrixXd a = sqrt_w.asDiagonal() * jac * scale.cwiseInverse().asDiagonal();
    const Eigen::VectorXd b = -(sqrt_w.cwiseProduct(r.values));

    if (method == SolveMethod::GaussNewton) {
      ++gn_iters;
      const Eigen::VectorXd delta_s = a.completeOrthogonalDecomposition().solve(b);
      const ParameterVector trial = theta + delta_s.cwiseQuotient(scale);
      const double trial_objective = evaluate(trial, usable, w);
      const bool small_step = delta_s.norm() <= config.step_tol;
      if (trial_objective <= objective) {
        result.steps.push_back({objective, trial_objective, method});
        theta = trial;
        fresh = false;
        ++accepted_since_anchor;
      }
      if (small_step) {
        if (anchors_fresh_here) {
          converged = true;
          message = "step tolerance reached";
          break;
        }
        accepted_since_anchor = config.reanchor_every;
        continue;
      }
      if (objective - trial_objective < kSufficientDecrease * objective) {
        if (++gn_failures >= config.gn_switch_iters) method = SolveMethod::LevenbergMarquardt;
      }
      continue;
    }

    // Levenberg-Marquardt: damp until the weighted objective decreases.
    ++lm_iters;
    const Eigen::Matrix<double, 12, 12> normal = a.transpose() * a;
    const Eigen::Matrix<double, 12, 1> grad = a.transpose() * b;
    bool accepted = false;
    bool small_step = false;
    while (lambda <= kMaxLambda) {
      Eigen::Matrix<double, 12, 12> damped = normal;
      for (int j = 0; j < 12; ++j) damped(j, j) += lambda * std::max(normal(j, j), 1e-12);
      const Eigen::LDLT<Eigen::Matrix<double, 12, 12>> ldlt(damped);
      Eigen::Matrix<double, 12, 1> delta_s = Eigen::Matrix<double, 12, 1>::Zero();
      bool ok = ldlt.info() == Eigen::Success;
      if (ok) {
        delta_s = ldlt.solve(grad);
        ok = delta_s.allFinite();
      }
      if (ok) {
        if (delta_s.norm() <= config.step_tol) {
          small_step = true;
          break;
        }
        const ParameterVector trial = theta + delta_s.cwiseQuotient(scale);
        const double trial_objective = evaluate(trial, usable, w);
        if (trial_objective <= objective) {
          result.steps.push_back({objective, trial_objective, method});
          theta = trial;
          accepted = true;
          lambda = std::max(lambda / config.lm_lambda_factor, 1e-12);
          break;
        }
      }
      lambda *= config.lm_lambda_factor;
    }
    if (small_step) {
      if (anchors_fresh_here) {
        converged = true;
        message = "step tolerance reached";
        break;
      }
      accepted_since_anchor = config.reanchor_every;
      continue;
    }
    if (!accepted) {
      message = "no decrease at any damping up to 1e8";
      break;
    }
    fresh = false;
    ++accepted_since_anchor;
  }

  // Final report on anchors cast from the final estimate.
  try {
    anchors = anchor_features(problem, theta);
  } catch (const Error&) {
    converged = false;
    message = "final re-anchoring failed";
  }
  StackedResidual r = residual_stack(problem, theta, anchors);
  std::vector<double> w = mestimator_weights(r.norms(), config.mestimator, r.unusable);
  if (!converged && weighted_objective(r, w) > best_weighted_objective) {
    // Unfinished cycle ended worse than the best re-anchored state.
    theta = best_theta;
    anchors = best_anchors;
    r = residual_stack(problem, theta, anchors);
    w = mestimator_weights(r.norms(), config.mestimator, r.unusable);
  }
  result.theta = theta;
  result.objective = weighted_objective(r, w);
  if (!std::isfinite(result.objective)) {
    throw Error(ErrorKind::NumericalFailure, "objective is not finite");
  }
  result.per_feature_weights = w;
  result.per_feature_residuals.resize(problem.features.size());
  result.feature_ids.resize(problem.features.size());
  for (std::size_t i = 0; i < problem.features.size(); ++i) {
    result.per_feature_residuals[i] = r.values.segment<3>(3 * static_cast<Eigen::Index>(i));
    result.feature_ids[i] = problem.features[i].id;
  }
  result.iterations = gn_iters + lm_iters;
  result.converged = converged;
  result.method_used = method;
  result.message = message;
  return result;
}

}  // namespace trnav
