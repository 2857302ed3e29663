#pragma once

// Glue between manifests, the textual models and the fusion head.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphofv/fisher.hpp"
#include "morphofv/fusion.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/manifest.hpp"
#include "morphofv/model_io.hpp"
#include "morphofv/pca.hpp"
#include "morphofv/phoc.hpp"

namespace morphofv {

// Normalized, non-empty dictionary words, evenly subsampled down to
// `max_words` when that is non-zero.
inline std::vector<std::string> prepare_dictionary(const std::vector<std::string>& raw, std::size_t max_words) {
  std::vector<std::string> words;
  for (const auto& w : raw) {
    std::string n = normalize_word(w);
    if (!n.empty()) words.push_back(std::move(n));
  }
  if (max_words == 0 || words.size() <= max_words) return words;
  std::vector<std::string> picked;
  picked.reserve(max_words);
  for (std::size_t i = 0; i < max_words; ++i) picked.push_back(words[i * words.size() / max_words]);
  return picked;
}

inline Eigen::MatrixXd phoc_matrix(const std::vector<std::string>& words, const Alphabet& alphabet,
                                   const OccupancyRule& rule = {}) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(words.size()), static_cast<Eigen::Index>(kPhocDim));
  for (std::size_t i = 0; i < words.size(); ++i) {
    const PhocVector p = build_phoc(words[i], alphabet, rule);
    for (std::size_t j = 0; j < kPhocDim; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p[j];
  }
  return m;
}

struct FeatureSettings {
  ProposalSelector selector{};
  bool normalize = false;
  double alpha = 0.5;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"max_proposals", selector.max_proposals}, {"fv_normalize", normalize}, {"alpha", alpha}};
    j["min_confidence"] = selector.min_confidence ? nlohmann::json(*selector.min_confidence) : nlohmann::json();
    return j;
  }

  static FeatureSettings from_json(const nlohmann::json& j) {
    FeatureSettings s;
    s.selector.max_proposals = j.value("max_proposals", std::size_t{15});
    if (j.contains("min_confidence") && !j["min_confidence"].is_null())
      s.selector.min_confidence = j["min_confidence"].get<double>();
    s.normalize = j.value("fv_normalize", false);
    s.alpha = j.value("alpha", 0.5);
    return s;
  }
};

inline FisherVector encode_sample(const SampleRecord& s, const ModelBundle& bundle, const Alphabet& alphabet,
                                  const FeatureSettings& settings, FeatureStore& store) {
  if (!bundle.pca || !bundle.gmm) throw PreconditionError("model file lacks PCA/GMM members");
  const TextualEncoder enc{alphabet, *bundle.pca, *bundle.gmm, settings.selector, OccupancyRule{},
                           settings.normalize, settings.alpha};
  return image_textual_feature(load_proposals(s, store), enc);
}

// Fisher vectors for every sample, in manifest order.
inline std::vector<FisherVector> encode_manifest(const DatasetManifest& m, const ModelBundle& bundle,
                                                 const FeatureSettings& settings) {
  const Alphabet alphabet = bundle.alphabet();
  FeatureStore store;
  std::vector<FisherVector> out;
  out.reserve(m.samples.size());
  for (const auto& s : m.samples) out.push_back(encode_sample(s, bundle, alphabet, settings, store));
  return out;
}

// Samples of one split (or all when `split` is empty) with their FVs.
inline LabeledDataset build_dataset(const DatasetManifest& m, const ModelBundle& bundle,
                                    const FeatureSettings& settings, std::optional<Split> split) {
  const Alphabet alphabet = bundle.alphabet();
  FeatureStore store;
  LabeledDataset ds;
  ds.classes = m.classes;
  for (const auto& s : m.samples) {
    if (split && s.split != *split) continue;
    Sample sample;
    sample.id = s.id;
    sample.visual = load_visual(m, s, store);
    sample.text = encode_sample(s, bundle, alphabet, settings, store).values;
    sample.label = s.label_index;
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace morphofv
