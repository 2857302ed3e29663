#pragma once

// Diagonal-covariance Gaussian mixture, EM training and posteriors.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "morphofv/error.hpp"
#include "morphofv/rng.hpp"

namespace morphofv {

struct GmmModel {
  Eigen::VectorXd weights;    // K, on the simplex
  Eigen::MatrixXd means;      // K x d
  Eigen::MatrixXd variances;  // K x d, diagonal of each covariance

  Eigen::Index components() const { return weights.size(); }
  Eigen::Index dim() const { return means.cols(); }

  void validate() const {
    const Eigen::Index k = weights.size();
    if (k < 1 || means.rows() != k || variances.rows() != k || variances.cols() != means.cols() ||
        means.cols() < 1)
      throw DimensionError("GmmModel: inconsistent shapes");
    if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
      throw FormatError("GmmModel: weights are not a probability vector");
    if (!(variances.array() > 0.0).all()) throw FormatError("GmmModel: non-positive variance");
  }
};

struct EmConfig {
  std::uint64_t seed = 0;
  int max_iters = 200;
  double tol = 1e-6;
  double variance_floor = 1e-6;

  void validate() const {
    if (!(tol > 0.0)) throw PreconditionError("EmConfig: tol must be positive");
    if (!(variance_floor > 0.0)) throw PreconditionError("EmConfig: variance_floor must be positive");
    if (max_iters < 1) throw PreconditionError("EmConfig: max_iters must be >= 1");
  }
};

struct GmmFit {
  GmmModel model;
  // Total log-likelihood of the data under the parameters before each
  // M-step, plus one final entry for the returned parameters.
  std::vector<double> log_likelihoods;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline double log_sum_exp(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  const double peak = v.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((v.array() - peak).exp().sum());
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// M x K matrix of log(w_k) + log N(x_i | mu_k, diag(var_k)).
inline Eigen::MatrixXd weighted_log_scores(const GmmModel& model, const Eigen::MatrixXd& points) {
  const Eigen::Index k_count = model.components();
  const Eigen::Index d = model.dim();
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  const RowMajorMatrix x = points;
  const RowMajorMatrix mu = model.means;
  const RowMajorMatrix inv_var = model.variances.array().inverse().matrix();
  Eigen::VectorXd base(k_count);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double log_w = model.weights[k] > 0.0 ? std::log(model.weights[k])
                                                : -std::numeric_limits<double>::infinity();
    base[k] = log_w - 0.5 * (static_cast<double>(d) * log_two_pi + model.variances.row(k).array().log().sum());
  }
  Eigen::MatrixXd scores(points.rows(), k_count);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const double* mk = mu.row(k).data();
      const double* ik = inv_var.row(k).data();
      double acc = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = xi[j] - mk[j];
        acc += diff * diff * ik[j];
      }
      scores(i, k) = base[k] - 0.5 * acc;
    }
  }
  return scores;
}

inline void check_point_dim(const GmmModel& model, Eigen::Index n, const char* op) {
  if (n != model.dim())
    throw DimensionError(std::string(op) + ": expected dimension " + std::to_string(model.dim()) +
                         ", got " + std::to_string(n));
}

}  // namespace detail

inline double log_density(const GmmModel& model, const Eigen::VectorXd& x) {
  detail::check_point_dim(model, x.size(), "log_density");
  const Eigen::MatrixXd scores = detail::weighted_log_scores(model, x.transpose());
  return detail::log_sum_exp(scores.row(0));
}

// q_k proportional to w_k u_k(x), normalized in log space.
inline Eigen::VectorXd posteriors(const GmmModel& model, const Eigen::VectorXd& x) {
  detail::check_point_dim(model, x.size(), "posteriors");
  const Eigen::MatrixXd scores = detail::weighted_log_scores(model, x.transpose());
  const double norm = detail::log_sum_exp(scores.row(0));
  return (scores.row(0).array() - norm).exp().transpose();
}

// Row-wise posteriors for a batch of points (N x K).
inline Eigen::MatrixXd posteriors_rows(const GmmModel& model, const Eigen::MatrixXd& points) {
  detail::check_point_dim(model, points.cols(), "posteriors");
  Eigen::MatrixXd scores = detail::weighted_log_scores(model, points);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double norm = detail::log_sum_exp(scores.row(i));
    scores.row(i) = (scores.row(i).array() - norm).exp();
  }
  return scores;
}

namespace detail {

// k-means++ seeding. Returns K row indices into `data`.
inline std::vector<Eigen::Index> kmeanspp_seeds(const Eigen::MatrixXd& data, Eigen::Index k_count,
                                                Rng& rng) {
  const Eigen::Index m = data.rows();
  std::vector<Eigen::Index> seeds;
  std::vector<bool> taken(static_cast<std::size_t>(m), false);
  seeds.push_back(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(m))));
  taken[static_cast<std::size_t>(seeds[0])] = true;
  Eigen::VectorXd nearest = (data.rowwise() - data.row(seeds[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(seeds.size()) < k_count) {
    const double total = nearest.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += nearest[i];
        if (nearest[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // rounding at the tail
        for (Eigen::Index i = m - 1; i >= 0; --i)
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      for (Eigen::Index i = 0; i < m; ++i)
        if (!taken[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }
    seeds.push_back(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    nearest = nearest.cwiseMin((data.rowwise() - data.row(pick)).rowwise().squaredNorm());
  }
  return seeds;
}

// Components whose responsibility mass fell below `min_mass` restart at the
// worst-explained point (lowest log-density, lowest index on ties) with the
// global variance. Returns one message per reseeded component.
inline std::vector<std::string> reseed_collapsed(GmmModel& model, const Eigen::VectorXd& mass,
                                                 const Eigen::MatrixXd& data, Eigen::VectorXd point_ll,
                                                 const Eigen::RowVectorXd& global_var, double min_mass) {
  std::vector<std::string> messages;
  for (Eigen::Index k = 0; k < model.components(); ++k) {
    if (mass[k] >= min_mass) continue;
    Eigen::Index worst = 0;
    point_ll.minCoeff(&worst);
    model.means.row(k) = data.row(worst);
    model.variances.row(k) = global_var;
    model.weights[k] = 1.0 / static_cast<double>(data.rows());
    point_ll[worst] = std::numeric_limits<double>::infinity();
    messages.push_back("component " + std::to_string(k) + " collapsed; reinitialized at point " +
                       std::to_string(worst));
  }
  return messages;
}

}  // namespace detail

// EM for a K-component diagonal GMM: k-means++ seeding, one hard-assignment
// M-step, then soft EM until the relative log-likelihood gain drops below
// tol or max_iters M-steps have run. Sequential and seed-deterministic.
inline GmmFit fit_gmm(const Eigen::MatrixXd& data, Eigen::Index k_count, const EmConfig& config = {}) {
  config.validate();
  const Eigen::Index m = data.rows();
  const Eigen::Index d = data.cols();
  if (d < 1) throw PreconditionError("fit_gmm: data has no columns");
  if (k_count < 1) throw PreconditionError("fit_gmm: K must be >= 1");
  if (m < k_count)
    throw PreconditionError("fit_gmm: need at least K=" + std::to_string(k_count) +
                            " points, got " + std::to_string(m));
  if (!data.allFinite()) throw PreconditionError("fit_gmm: non-finite data");

  const double floor = config.variance_floor;
  const Eigen::RowVectorXd global_mean = data.colwise().mean();
  const Eigen::RowVectorXd global_var =
      ((data.rowwise() - global_mean).array().square().colwise().sum() / static_cast<double>(m))
          .max(floor)
          .matrix();

  GmmFit fit;
  GmmModel& model = fit.model;
  Rng rng(config.seed);
  const detail::RowMajorMatrix x = data;

  // Hard-assignment initialization.
  {
    const auto seeds = detail::kmeanspp_seeds(data, k_count, rng);
    Eigen::MatrixXd centers(k_count, d);
    for (Eigen::Index k = 0; k < k_count; ++k) centers.row(k) = data.row(seeds[static_cast<std::size_t>(k)]);
    std::vector<Eigen::Index> assign(static_cast<std::size_t>(m));
    const detail::RowMajorMatrix c = centers;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double* xi = x.row(i).data();
      Eigen::Index best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < k_count; ++k) {
        const double* ck = c.row(k).data();
        double dist = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) dist += (xi[j] - ck[j]) * (xi[j] - ck[j]);
        if (dist < best_dist) {
          best_dist = dist;
          best = k;
        }
      }
      assign[static_cast<std::size_t>(i)] = best;
    }
    model.weights = Eigen::VectorXd::Zero(k_count);
    model.means = Eigen::MatrixXd::Zero(k_count, d);
    model.variances = Eigen::MatrixXd::Zero(k_count, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = assign[static_cast<std::size_t>(i)];
      model.weights[k] += 1.0;
      model.means.row(k) += data.row(i);
    }
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (model.weights[k] > 0.0)
        model.means.row(k) /= model.weights[k];
      else
        model.means.row(k) = centers.row(k);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto k = assign[static_cast<std::size_t>(i)];
      model.variances.row(k) += (data.row(i) - model.means.row(k)).array().square().matrix();
    }
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (model.weights[k] > 0.0)
        model.variances.row(k) = (model.variances.row(k) / model.weights[k]).array().max(floor).matrix();
      else
        model.variances.row(k) = global_var;
    }
    // Empty clusters (duplicate seeds) get a small share so every component
    // stays reachable by the first E-step.
    for (Eigen::Index k = 0; k < k_count; ++k)
      if (model.weights[k] == 0.0) model.weights[k] = 1.0;
    model.weights /= model.weights.sum();
  }

  Eigen::MatrixXd resp(m, k_count);
  Eigen::VectorXd point_ll(m);
  auto e_step = [&]() {
    resp = detail::weighted_log_scores(model, data);
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double norm = detail::log_sum_exp(resp.row(i));
      point_ll[i] = norm;
      total += norm;
      resp.row(i) = (resp.row(i).array() - norm).exp();
    }
    return total;
  };

  constexpr double kCollapsedMass = 1e-10;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    const double ll = e_step();
    if (!std::isfinite(ll)) throw Error("fit_gmm: log-likelihood became non-finite");
    if (!fit.log_likelihoods.empty()) {
      const double prev = fit.log_likelihoods.back();
      fit.log_likelihoods.push_back(ll);
      if (ll - prev < config.tol * std::abs(prev)) {
        fit.converged = true;
        return fit;
      }
    } else {
      fit.log_likelihoods.push_back(ll);
    }

    // M-step.
    const Eigen::VectorXd mass = resp.colwise().sum().transpose();
    Eigen::VectorXd acc(d);
    for (Eigen::Index k = 0; k < k_count; ++k) {
      if (mass[k] < kCollapsedMass) continue;
      model.means.row(k) = (resp.col(k).transpose() * data) / mass[k];
      const Eigen::RowVectorXd mu = model.means.row(k);
      acc.setZero();
      for (Eigen::Index i = 0; i < m; ++i) {
        const double r = resp(i, k);
        if (r == 0.0) continue;
        const double* xi = x.row(i).data();
        for (Eigen::Index j = 0; j < d; ++j) {
          const double diff = xi[j] - mu[j];
          acc[j] += r * diff * diff;
        }
      }
      model.variances.row(k) = (acc / mass[k]).array().max(floor).matrix().transpose();
    }
    model.weights = mass / static_cast<double>(m);
    for (auto& w : detail::reseed_collapsed(model, mass, data, point_ll, global_var, kCollapsedMass))
      fit.warnings.push_back("iteration " + std::to_string(iter) + ": " + w);
    model.weights /= model.weights.sum();
    ++fit.iterations;
  }
  fit.log_likelihoods.push_back(e_step());
  return fit;
}

}  // namespace morphofv
