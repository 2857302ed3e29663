#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "morphofv/error.hpp"

namespace morphofv {

// Centered (not whitened) principal subspace.
struct PcaModel {
  Eigen::VectorXd mean;                // input_dim
  Eigen::MatrixXd components;          // dim x input_dim, orthonormal rows
  Eigen::VectorXd explained_variance;  // dim, nonincreasing

  Eigen::Index dim() const { return components.rows(); }
  Eigen::Index input_dim() const { return components.cols(); }

  void validate() const {
    if (mean.size() != components.cols() || explained_variance.size() != components.rows() ||
        components.rows() < 1 || components.rows() > components.cols())
      throw DimensionError("PcaModel: inconsistent shapes");
    for (Eigen::Index i = 0; i < explained_variance.size(); ++i) {
      if (!(explained_variance[i] >= 0.0)) throw FormatError("PcaModel: negative explained variance");
      if (i > 0 && explained_variance[i] > explained_variance[i - 1])
        throw FormatError("PcaModel: explained variance not sorted");
    }
  }
};

// Rows of `data` are samples. Components are the top-`d` eigenvectors of the
// sample covariance (divisor M-1), each flipped so its largest-magnitude
// coordinate is positive.
inline PcaModel fit_pca(const Eigen::MatrixXd& data, Eigen::Index d) {
  const Eigen::Index m = data.rows();
  const Eigen::Index dims = data.cols();
  if (d < 1) throw PreconditionError("fit_pca: d must be >= 1");
  if (m < d) throw PreconditionError("fit_pca: need at least d=" + std::to_string(d) +
                                     " samples, got " + std::to_string(m));
  if (d > dims) throw PreconditionError("fit_pca: d exceeds input dimension");

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dims, dims);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose());
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(m > 1 ? m - 1 : 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("fit_pca: eigendecomposition failed");

  model.components.resize(d, dims);
  model.explained_variance.resize(d);
  // Eigenvalues come back ascending.
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::Index src = dims - 1 - i;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    const double peak = v.cwiseAbs().maxCoeff(&arg);
    if (peak == 0.0) throw Error("fit_pca: all-zero component");
    if (v[arg] < 0.0) v = -v;
    model.components.row(i) = v.transpose();
    model.explained_variance[i] = std::max(0.0, solver.eigenvalues()[src]);
  }
  return model;
}

inline Eigen::VectorXd project(const PcaModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.input_dim())
    throw DimensionError("project: expected length " + std::to_string(model.input_dim()) +
                         ", got " + std::to_string(x.size()));
  return model.components * (x - model.mean);
}

// Projects every row of `rows`.
inline Eigen::MatrixXd project_rows(const PcaModel& model, const Eigen::MatrixXd& rows) {
  if (rows.cols() != model.input_dim()) throw DimensionError("project_rows: column mismatch");
  return (rows.rowwise() - model.mean.transpose()) * model.components.transpose();
}

}  // namespace morphofv
