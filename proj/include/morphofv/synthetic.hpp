#pragma once

// Synthetic four-class dataset in the shape of a fine-grained storefront
// problem: visual features only tell the two superclasses apart
// ({bakery, pizzeria} vs {cola, lager}); the words seen in each image tell
// the classes inside a superclass apart.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "morphofv/fvc.hpp"
#include "morphofv/manifest.hpp"
#include "morphofv/rng.hpp"

namespace morphofv {

struct SyntheticConfig {
  std::uint64_t seed = 1;
  int train_per_class = 60;
  int test_per_class = 30;
  VisualLayout visual{false, 8, 1, 1};
  double visual_separation = 2.0;
  double visual_noise = 1.0;
  // Every n-th image (n > 0) carries no text at all.
  int zero_text_every = 0;
  double distractor_rate = 0.5;
  int pseudo_words = 300;
};

struct SyntheticImage {
  std::string id;
  Split split = Split::Train;
  int label = 0;
  std::vector<double> visual;
  std::vector<ProposalRecord> proposals;
};

struct SyntheticDataset {
  std::vector<std::string> classes;
  std::vector<std::string> dictionary;
  VisualLayout visual;
  std::vector<SyntheticImage> images;
};

inline const std::vector<std::vector<std::string>>& synthetic_vocabulary() {
  static const std::vector<std::vector<std::string>> vocab = {
      {"bakery", "bread", "pastry", "croissant", "bagels", "cakes"},
      {"pizza", "pizzeria", "pasta", "calzone", "napoli", "slice"},
      {"cola", "soda", "pepsi", "fizz", "sprite", "coke"},
      {"lager", "beer", "ale", "brewery", "pilsner", "stout"},
  };
  return vocab;
}

inline const std::vector<std::string>& synthetic_distractors() {
  static const std::vector<std::string> words = {"open", "sale", "street", "welcome", "free", "shop"};
  return words;
}

inline SyntheticDataset make_synthetic(const SyntheticConfig& cfg) {
  SyntheticDataset ds;
  ds.classes = {"bakery", "pizzeria", "cola", "lager"};
  ds.visual = cfg.visual;
  Rng rng(cfg.seed);

  std::set<std::string> dict;
  for (const auto& words : synthetic_vocabulary()) dict.insert(words.begin(), words.end());
  dict.insert(synthetic_distractors().begin(), synthetic_distractors().end());
  static constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";
  while (static_cast<int>(dict.size()) <
         cfg.pseudo_words + static_cast<int>(4 * 6 + synthetic_distractors().size())) {
    const auto len = 3 + static_cast<std::size_t>(rng.below(7));
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(kLetters[rng.below(kLetters.size())]);
    dict.insert(w);
  }
  ds.dictionary.assign(dict.begin(), dict.end());

  const Eigen::Index channels = cfg.visual.channels;
  const Eigen::Index pixels = cfg.visual.height * cfg.visual.width;
  // Superclass direction: alternating signs over channels, unit norm.
  std::vector<double> direction(static_cast<std::size_t>(channels));
  for (Eigen::Index c = 0; c < channels; ++c)
    direction[static_cast<std::size_t>(c)] = (c % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(channels));

  int counter = 0;
  auto make = [&](int label, Split split) {
    SyntheticImage img;
    img.label = label;
    img.split = split;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "img-%05d", counter);
    img.id = buf;
    const double sign = label < 2 ? 1.0 : -1.0;
    img.visual.resize(static_cast<std::size_t>(channels * pixels));
    for (Eigen::Index c = 0; c < channels; ++c)
      for (Eigen::Index p = 0; p < pixels; ++p)
        img.visual[static_cast<std::size_t>(c * pixels + p)] =
            sign * cfg.visual_separation * direction[static_cast<std::size_t>(c)] + rng.normal(0.0, cfg.visual_noise);
    const bool no_text = cfg.zero_text_every > 0 && counter % cfg.zero_text_every == 0;
    ++counter;
    if (!no_text) {
      const auto& vocab = synthetic_vocabulary()[static_cast<std::size_t>(label)];
      const int words = 1 + static_cast<int>(rng.below(3));
      for (int i = 0; i < words; ++i)
        img.proposals.push_back({vocab[rng.below(vocab.size())], std::nullopt, rng.uniform(0.6, 1.0)});
      if (rng.uniform() < cfg.distractor_rate) {
        const auto& d = synthetic_distractors();
        img.proposals.push_back({d[rng.below(d.size())], std::nullopt, rng.uniform(0.3, 0.9)});
      }
    }
    ds.images.push_back(std::move(img));
  };
  for (int label = 0; label < 4; ++label)
    for (int i = 0; i < cfg.train_per_class; ++i) make(label, Split::Train);
  for (int label = 0; label < 4; ++label)
    for (int i = 0; i < cfg.test_per_class; ++i) make(label, Split::Test);
  return ds;
}

// Writes dictionary.txt, visual.fvc and manifest.json into `dir`.
inline void write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "dictionary.txt", std::ios::binary | std::ios::trunc);
    for (const auto& w : ds.dictionary) out << w << '\n';
    if (!out) throw FormatError("cannot write " + (dir / "dictionary.txt").string());
  }
  VectorTable visual;
  DatasetManifest m;
  m.classes = ds.classes;
  m.visual = ds.visual;
  const std::string visual_path = (dir / "visual.fvc").lexically_normal().string();
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto& img = ds.images[i];
    visual.append(img.visual);
    SampleRecord s;
    s.id = img.id;
    s.split = img.split;
    s.label = ds.classes[static_cast<std::size_t>(img.label)];
    s.label_index = img.label;
    s.visual = {visual_path, static_cast<std::uint32_t>(i)};
    s.proposals = img.proposals;
    m.samples.push_back(std::move(s));
  }
  write_fvc(visual_path, visual);
  write_file_bytes((dir / "manifest.json").string(), manifest_to_json(m, dir.lexically_normal()).dump(1) + "\n");
}

}  // namespace morphofv
