#pragma once

// Fisher Vector encoding of a bag of PCA-reduced PHOCs.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "morphofv/error.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/pca.hpp"
#include "morphofv/phoc.hpp"

namespace morphofv {

struct WordProposal {
  std::string text;
  // Set when the detector already produced a PHOC; `text` is then only used
  // for tie-breaking.
  std::optional<PhocVector> phoc;
  double confidence = 0.0;
};

struct ProposalSelector {
  std::size_t max_proposals = 15;
  std::optional<double> min_confidence;

  void validate() const {
    if (max_proposals < 1) throw PreconditionError("ProposalSelector: max_proposals must be >= 1");
  }
};

struct FisherVector {
  Eigen::VectorXd values;
  bool normalized = false;

  Eigen::Index size() const { return values.size(); }
};

constexpr Eigen::Index fisher_dim(Eigen::Index d, Eigen::Index k) { return 2 * d * k; }

// Highest confidence first, ties by text. Text proposals that normalize to
// nothing are dropped before ranking.
inline std::vector<WordProposal> select_top_m(std::vector<WordProposal> proposals,
                                              const ProposalSelector& selector = {}) {
  selector.validate();
  std::erase_if(proposals, [&](const WordProposal& p) {
    if (!p.phoc && normalize_word(p.text).empty()) return true;
    return selector.min_confidence && p.confidence < *selector.min_confidence;
  });
  std::stable_sort(proposals.begin(), proposals.end(), [](const auto& a, const auto& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.text < b.text;
  });
  if (proposals.size() > selector.max_proposals) proposals.resize(selector.max_proposals);
  return proposals;
}

// Raw FV: all K mean-deviation blocks (d values each), then all K
// variance-deviation blocks. Points are accumulated in lexicographic row
// order so the result does not depend on the order of the bag.
inline FisherVector encode_fv(const GmmModel& model, const Eigen::MatrixXd& points) {
  const Eigen::Index k_count = model.components();
  const Eigen::Index d = model.dim();
  FisherVector fv;
  fv.values = Eigen::VectorXd::Zero(fisher_dim(d, k_count));
  const Eigen::Index n = points.rows();
  if (n == 0) return fv;
  if (points.cols() != d)
    throw DimensionError("encode_fv: points have dimension " + std::to_string(points.cols()) +
                         ", model expects " + std::to_string(d));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < d; ++j)
      if (points(a, j) != points(b, j)) return points(a, j) < points(b, j);
    return false;
  });

  const Eigen::MatrixXd q = posteriors_rows(model, points);
  const Eigen::MatrixXd sigma = model.variances.cwiseSqrt();
  Eigen::MatrixXd first = Eigen::MatrixXd::Zero(k_count, d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(k_count, d);
  for (Eigen::Index i : order) {
    for (Eigen::Index k = 0; k < k_count; ++k) {
      const double qik = q(i, k);
      const Eigen::ArrayXd z = ((points.row(i) - model.means.row(k)).array() / sigma.row(k).array()).transpose();
      first.row(k) += (qik * z).matrix().transpose();
      second.row(k) += (qik * (z.square() - 1.0)).matrix().transpose();
    }
  }
  const double nd = static_cast<double>(n);
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const double wk = model.weights[k];
    fv.values.segment(k * d, d) = first.row(k).transpose() / (nd * std::sqrt(wk));
    fv.values.segment((k_count + k) * d, d) = second.row(k).transpose() / (nd * std::sqrt(2.0 * wk));
  }
  return fv;
}

// Signed power then L2. The zero vector stays zero.
inline FisherVector normalize_fv(const FisherVector& fv, double alpha = 0.5) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw PreconditionError("normalize_fv: alpha must lie in (0, 1]");
  FisherVector out;
  out.values = fv.values.unaryExpr([alpha](double x) {
    return x == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(x), alpha), x);
  });
  const double norm = out.values.norm();
  if (norm > 0.0) out.values /= norm;
  out.normalized = true;
  return out;
}

struct TextualEncoder {
  const Alphabet& alphabet;
  const PcaModel& pca;
  const GmmModel& gmm;
  ProposalSelector selector{};
  OccupancyRule rule{};
  bool normalize = false;
  double alpha = 0.5;
};

// select_top_m -> build_phoc -> project -> encode_fv -> optional normalize_fv.
inline FisherVector image_textual_feature(const std::vector<WordProposal>& proposals,
                                          const TextualEncoder& enc) {
  if (enc.pca.dim() != enc.gmm.dim())
    throw DimensionError("image_textual_feature: PCA dim " + std::to_string(enc.pca.dim()) +
                         " != GMM dim " + std::to_string(enc.gmm.dim()));
  if (enc.pca.input_dim() != static_cast<Eigen::Index>(kPhocDim))
    throw DimensionError("image_textual_feature: PCA input is not PHOC-sized");
  const auto kept = select_top_m(proposals, enc.selector);
  Eigen::MatrixXd phocs(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(kPhocDim));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const PhocVector p = kept[i].phoc ? *kept[i].phoc
                                      : build_phoc(normalize_word(kept[i].text), enc.alphabet, enc.rule);
    for (std::size_t j = 0; j < kPhocDim; ++j)
      phocs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p[j];
  }
  const Eigen::MatrixXd reduced =
      kept.empty() ? Eigen::MatrixXd(0, enc.pca.dim()) : project_rows(enc.pca, phocs);
  FisherVector fv = encode_fv(enc.gmm, reduced);
  return enc.normalize ? normalize_fv(fv, enc.alpha) : fv;
}

}  // namespace morphofv
