#pragma once

// Independent reference implementations used only by tests. They follow the
// textbook formulas directly and share no code paths with the library
// routines they check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "morphofv/fusion.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/rng.hpp"

namespace oracle {

inline morphofv::GmmModel random_gmm(Eigen::Index k, Eigen::Index d, morphofv::Rng& rng) {
  morphofv::GmmModel m;
  m.weights.resize(k);
  m.means.resize(k, d);
  m.variances.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    m.weights[i] = rng.uniform(0.1, 1.0);
    for (Eigen::Index j = 0; j < d; ++j) {
      m.means(i, j) = rng.normal(0.0, 1.5);
      m.variances(i, j) = rng.uniform(0.4, 2.5);
    }
  }
  m.weights /= m.weights.sum();
  return m;
}

inline Eigen::MatrixXd random_points(Eigen::Index n, Eigen::Index d, morphofv::Rng& rng, double scale = 1.5) {
  Eigen::MatrixXd p(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) p(i, j) = rng.normal(0.0, scale);
  return p;
}

// Triple loop over points, components and dimensions: posteriors as the
// direct ratio of weighted Gaussian densities, then the mean and variance
// deviation sums. Layout: all u_k blocks, then all v_k blocks.
inline Eigen::VectorXd naive_fisher(const morphofv::GmmModel& m, const Eigen::MatrixXd& o) {
  const Eigen::Index k_count = m.weights.size();
  const Eigen::Index d = m.means.cols();
  const Eigen::Index n = o.rows();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * d * k_count);
  if (n == 0) return out;
  std::vector<std::vector<double>> q(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(k_count)));
  for (Eigen::Index i = 0; i < n; ++i) {
    double denom = 0.0;
    for (Eigen::Index k = 0; k < k_count; ++k) {
      double dens = m.weights[k];
      for (Eigen::Index j = 0; j < d; ++j) {
        const double var = m.variances(k, j);
        const double diff = o(i, j) - m.means(k, j);
        dens *= std::exp(-0.5 * diff * diff / var) / std::sqrt(2.0 * std::numbers::pi * var);
      }
      q[i][k] = dens;
      denom += dens;
    }
    for (Eigen::Index k = 0; k < k_count; ++k) q[i][k] /= denom;
  }
  for (Eigen::Index k = 0; k < k_count; ++k)
    for (Eigen::Index j = 0; j < d; ++j) {
      double u = 0.0, v = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = (o(i, j) - m.means(k, j)) / std::sqrt(m.variances(k, j));
        u += q[i][k] * z;
        v += q[i][k] * (z * z - 1.0);
      }
      out[k * d + j] = u / (static_cast<double>(n) * std::sqrt(m.weights[k]));
      out[(k_count + k) * d + j] = v / (static_cast<double>(n) * std::sqrt(2.0 * m.weights[k]));
    }
  return out;
}

// AP of one ranking from first principles.
inline double brute_ap(const std::vector<int>& relevance_in_rank_order) {
  const int total = std::accumulate(relevance_in_rank_order.begin(), relevance_in_rank_order.end(), 0);
  double sum = 0.0;
  for (std::size_t k = 0; k < relevance_in_rank_order.size(); ++k) {
    if (!relevance_in_rank_order[k]) continue;
    int hits = 0;
    for (std::size_t i = 0; i <= k; ++i) hits += relevance_in_rank_order[i];
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / total;
}

// Scalar loss of a batch as a function of all parameters, for finite
// differences.
inline double batch_loss(const std::vector<morphofv::Sample>& batch, const morphofv::FusionParams& p) {
  double total = 0.0;
  for (const auto& s : batch) total += morphofv::cross_entropy(morphofv::forward(s, p), s.label);
  return total / static_cast<double>(batch.size());
}

struct GradCheck {
  double worst_rel = 0.0;
  double worst_abs = 0.0;
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::string first_failure;
};

// Central differences with step h against the analytic gradient; an entry
// passes when rel < rel_tol or abs < abs_tol. Up to `per_tensor` entries
// of each weight matrix plus every bias are checked.
inline GradCheck check_gradients(const std::vector<morphofv::Sample>& batch, morphofv::FusionParams params,
                                 const morphofv::FusionParams& analytic, double h, double rel_tol, double abs_tol,
                                 std::size_t per_tensor, morphofv::Rng& rng) {
  GradCheck out;
  auto layers = params.layers();
  const auto grads = analytic.layers();
  auto probe = [&](double& slot, double g, const std::string& name) {
    const double keep = slot;
    slot = keep + h;
    const double plus = batch_loss(batch, params);
    slot = keep - h;
    const double minus = batch_loss(batch, params);
    slot = keep;
    const double fd = (plus - minus) / (2.0 * h);
    const double abs_err = std::abs(fd - g);
    const double rel_err = abs_err / std::max(std::abs(fd), std::abs(g));
    ++out.checked;
    if (abs_err > 0.0) {
      out.worst_abs = std::max(out.worst_abs, abs_err);
      if (std::isfinite(rel_err)) out.worst_rel = std::max(out.worst_rel, abs_err > abs_tol ? rel_err : 0.0);
    }
    if (!(abs_err < abs_tol || rel_err < rel_tol)) {
      if (out.failures++ == 0)
        out.first_failure = name + ": analytic " + std::to_string(g) + " vs fd " + std::to_string(fd);
    }
  };
  for (std::size_t l = 0; l < morphofv::FusionParams::kLayerCount; ++l) {
    const std::string name = morphofv::FusionParams::kLayerNames[l];
    Eigen::MatrixXd& w = layers[l]->weight;
    const std::size_t total = static_cast<std::size_t>(w.size());
    std::vector<std::size_t> idx(total);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (total > per_tensor) {
      rng.shuffle(std::span<std::size_t>(idx));
      idx.resize(per_tensor);
    }
    for (std::size_t i : idx) probe(w.data()[i], grads[l]->weight.data()[i], name + ".weight[" + std::to_string(i) + "]");
    for (Eigen::Index i = 0; i < layers[l]->bias.size(); ++i)
      probe(layers[l]->bias[i], grads[l]->bias[i], name + ".bias[" + std::to_string(i) + "]");
  }
  return out;
}

}  // namespace oracle
