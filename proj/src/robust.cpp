#include "trnav/robust.hpp"

#include <algorithm>
#include <cmath>

#include "trnav/error.hpp"

namespace trnav {

MEstimator::Kind mestimator_kind_from_string(const std::string& name) {
  if (name == "none") return MEstimator::Kind::None;
  if (name == "huber") return MEstimator::Kind::Huber;
  if (name == "tukey") return MEstimator::Kind::Tukey;
  throw Error(ErrorKind::Config, "unknown M-estimator '" + name + "'");
}

std::string to_string(MEstimator::Kind kind) {
  switch (kind) {
    case MEstimator::Kind::None: return "none";
    case MEstimator::Kind::Huber: return "huber";
    case MEstimator::Kind::Tukey: return "tukey";
  }
  return "none";
}

double mad_scale(std::vector<double> norms) {
  if (norms.empty()) return 0.0;
  const std::size_t mid = norms.size() / 2;
  std::nth_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(mid), norms.end());
  double median = norms[mid];
  if (norms.size() % 2 == 0) {
    const double lower = *std::max_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return 1.4826 * median;
}

std::vector<double> mestimator_weights(const std::vector<double>& norms, const MEstimator& kernel,
                                       const std::vector<bool>& excluded, double scale_floor) {
  if (norms.empty()) throw Error(ErrorKind::Domain, "M-estimator needs at least one residual");
  if (!excluded.empty() && excluded.size() != norms.size()) {
    throw Error(ErrorKind::Domain, "exclusion mask does not match residual count");
  }
  auto is_excluded = [&](std::size_t i) { return !excluded.empty() && excluded[i]; };

  std::vector<double> active;
  active.reserve(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i)
    if (!is_excluded(i)) active.push_back(norms[i]);

  std::vector<double> w(norms.size(), 0.0);
  const double s = std::max(mad_scale(std::move(active)), scale_floor);
  bool any = false;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (is_excluded(i)) continue;
    const double r = std::abs(norms[i]);
    double wi = 1.0;
    switch (kernel.kind) {
      case MEstimator::Kind::None:
        break;
      case MEstimator::Kind::Huber:
        wi = r > 0.0 ? std::min(1.0, kernel.tuning * s / r) : 1.0;
        break;
      case MEstimator::Kind::Tukey: {
        const double u = r / (kernel.tuning * s);
        wi = u < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
        break;
      }
    }
    w[i] = wi;
    any = any || wi > 0.0;
  }
  if (!any) throw Error(ErrorKind::RobustCollapse, "all M-estimator weights are zero");
  return w;
}

double robust_scale(const std::vector<double>& norms, const std::vector<bool>& excluded,
                    double scale_floor) {
  if (!excluded.empty() && excluded.size() != norms.size()) {
    throw Error(ErrorKind::Domain, "exclusion mask does not match residual count");
  }
  std::vector<double> active;
  active.reserve(norms.size());
  for (std::size_t i = 0; i < norms.size(); ++i)
    if (excluded.empty() || !excluded[i]) active.push_back(norms[i]);
  return std::max(mad_scale(std::move(active)), scale_floor);
}

double mestimator_loss(const std::vector<double>& norms, const MEstimator& kernel, double scale,
                       const std::vector<bool>& excluded) {
  if (!excluded.empty() && excluded.size() != norms.size()) {
    throw Error(ErrorKind::Domain, "exclusion mask does not match residual count");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < norms.size(); ++i) {
    if (!excluded.empty() && excluded[i]) continue;
    const double r = std::abs(norms[i]);
    switch (kernel.kind) {
      case MEstimator::Kind::None:
        total += 0.5 * r * r;
        break;
      case MEstimator::Kind::Huber: {
        const double ks = kernel.tuning * scale;
        total += r <= ks ? 0.5 * r * r : ks * r - 0.5 * ks * ks;
        break;
      }
      case MEstimator::Kind::Tukey: {
        const double cs = kernel.tuning * scale;
        const double cap = cs * cs / 6.0;
        if (r < cs) {
          const double u = 1.0 - (r / cs) * (r / cs);
          total += cap * (1.0 - u * u * u);
        } else {
          total += cap;
        }
        break;
      }
    }
  }
  return total;
}

}  // namespace trnav
