#pragma once

// Pyramidal histogram of characters (PHOC) descriptors.
//
// Layout of the 604-dim vector, all blocks region-major then alphabet order:
//   level 2 unigrams   offset   0   2 x 36
//   level 3 unigrams   offset  72   3 x 36
//   level 4 unigrams   offset 180   4 x 36
//   level 5 unigrams   offset 324   5 x 36
//   level 2 bigrams    offset 504   2 x 50

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "morphofv/error.hpp"

namespace morphofv {

inline constexpr std::string_view kUnigrams = "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr std::size_t kUnigramCount = 36;
inline constexpr std::size_t kBigramCount = 50;
inline constexpr std::array<int, 4> kUnigramLevels = {2, 3, 4, 5};
inline constexpr int kBigramLevel = 2;
inline constexpr std::size_t kPhocDim = (2 + 3 + 4 + 5) * kUnigramCount + kBigramLevel * kBigramCount;
static_assert(kPhocDim == 604);

// Top-50 adjacent pairs of data/dictionary.txt; must match data/bigrams.txt.
inline const std::vector<std::string>& default_bigrams() {
  static const std::vector<std::string> list = {
      "er", "in", "ti", "on", "te", "an", "al", "at", "ic", "en",
      "is", "re", "ra", "le", "ri", "ro", "st", "ne", "ar", "li",
      "es", "nt", "or", "un", "it", "la", "co", "io", "to", "ia",
      "ni", "ca", "ed", "us", "ss", "ta", "tr", "ly", "de", "ma",
      "ch", "ph", "ng", "ou", "lo", "el", "na", "ac", "ol", "om",
  };
  return list;
}

class Alphabet {
 public:
  explicit Alphabet(std::vector<std::string> bigrams) : bigrams_(std::move(bigrams)) {
    if (bigrams_.size() != kBigramCount)
      throw PreconditionError("bigram list must hold exactly 50 entries, got " +
                              std::to_string(bigrams_.size()));
    std::unordered_set<std::string> seen;
    for (const auto& b : bigrams_) {
      if (b.size() != 2 || kUnigrams.find(b[0]) == std::string_view::npos ||
          kUnigrams.find(b[1]) == std::string_view::npos)
        throw PreconditionError("bigram '" + b + "' is not a pair of alphabet symbols");
      if (!seen.insert(b).second) throw PreconditionError("duplicate bigram '" + b + "'");
    }
  }

  static const Alphabet& standard() {
    static const Alphabet alphabet(default_bigrams());
    return alphabet;
  }

  static Alphabet from_stream(std::istream& in) {
    std::vector<std::string> list;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) list.push_back(line);
    }
    return Alphabet(std::move(list));
  }

  static Alphabet from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open bigram file " + path);
    return from_stream(in);
  }

  // Index of a unigram symbol, or -1.
  static int unigram_index(char c) {
    const auto pos = kUnigrams.find(c);
    return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
  }

  int bigram_index(char a, char b) const {
    for (std::size_t i = 0; i < bigrams_.size(); ++i)
      if (bigrams_[i][0] == a && bigrams_[i][1] == b) return static_cast<int>(i);
    return -1;
  }

  const std::vector<std::string>& bigrams() const { return bigrams_; }

  // FNV-1a over the bigram list; identifies the asset a model was built with.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
      h ^= c;
      h *= 1099511628211ULL;
    };
    for (char c : kUnigrams) mix(static_cast<unsigned char>(c));
    for (const auto& b : bigrams_) {
      for (char c : b) mix(static_cast<unsigned char>(c));
      mix('\n');
    }
    return h;
  }

 private:
  std::vector<std::string> bigrams_;
};

struct OccupancyRule {
  double threshold = 0.5;

  void validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0))
      throw PreconditionError("occupancy threshold must lie in (0, 1]");
  }
};

struct PhocVector {
  std::array<std::uint8_t, kPhocDim> bits{};

  static constexpr std::size_t size() { return kPhocDim; }
  std::uint8_t operator[](std::size_t i) const { return bits[i]; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  friend bool operator==(const PhocVector&, const PhocVector&) = default;
};

// Offset of the unigram block for pyramid level `level` (2..5).
constexpr std::size_t unigram_block_offset(int level) {
  std::size_t offset = 0;
  for (int l : kUnigramLevels) {
    if (l == level) return offset;
    offset += static_cast<std::size_t>(l) * kUnigramCount;
  }
  return kPhocDim;
}

inline constexpr std::size_t kBigramBlockOffset = kPhocDim - kBigramLevel * kBigramCount;
static_assert(kBigramBlockOffset == 504);

// Lowercases ASCII and drops every byte outside [a-z0-9]. Multi-byte UTF-8
// sequences vanish entirely.
inline std::string normalize_word(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) out.push_back(c);
  }
  return out;
}

// Regions at `level` occupied by the span [char_index, char_index+span_len) of
// a word of length word_len. Evaluated on the integer grid scaled by
// word_len*level so exact-half overlaps are decided without rounding.
inline std::vector<int> region_occupancy(int char_index, int span_len, int word_len, int level,
                                         const OccupancyRule& rule = {}) {
  rule.validate();
  if (char_index < 0 || span_len < 1 || word_len < 1 || level < 1 ||
      char_index + span_len > word_len)
    throw PreconditionError("region_occupancy: invalid span " + std::to_string(char_index) + "+" +
                            std::to_string(span_len) + " of word length " +
                            std::to_string(word_len) + " at level " + std::to_string(level));
  const long long lo = static_cast<long long>(char_index) * level;
  const long long hi = static_cast<long long>(char_index + span_len) * level;
  const double span = static_cast<double>(hi - lo);
  std::vector<int> regions;
  std::vector<long long> overlaps(static_cast<std::size_t>(level));
  for (int r = 0; r < level; ++r) {
    const long long rlo = static_cast<long long>(r) * word_len;
    const long long rhi = static_cast<long long>(r + 1) * word_len;
    const long long overlap = std::max(0LL, std::min(hi, rhi) - std::max(lo, rlo));
    overlaps[static_cast<std::size_t>(r)] = overlap;
    if (overlap > 0 && static_cast<double>(overlap) >= rule.threshold * span) regions.push_back(r);
  }
  // A span wider than two regions can miss the threshold everywhere; it then
  // takes the region(s) it overlaps most.
  if (regions.empty()) {
    const long long best = *std::max_element(overlaps.begin(), overlaps.end());
    for (int r = 0; r < level; ++r)
      if (overlaps[static_cast<std::size_t>(r)] == best) regions.push_back(r);
  }
  return regions;
}

// `word` must already be normalized.
inline PhocVector build_phoc(std::string_view word, const Alphabet& alphabet = Alphabet::standard(),
                             const OccupancyRule& rule = {}) {
  if (word.empty()) throw PreconditionError("build_phoc: empty word");
  const int n = static_cast<int>(word.size());
  PhocVector phoc;
  for (int i = 0; i < n; ++i) {
    const int s = Alphabet::unigram_index(word[i]);
    if (s < 0) throw PreconditionError("build_phoc: word is not normalized: '" + std::string(word) + "'");
    for (int level : kUnigramLevels) {
      const std::size_t offset = unigram_block_offset(level);
      for (int r : region_occupancy(i, 1, n, level, rule))
        phoc.bits[offset + static_cast<std::size_t>(r) * kUnigramCount + s] = 1;
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    const int b = alphabet.bigram_index(word[i], word[i + 1]);
    if (b < 0) continue;
    for (int r : region_occupancy(i, 2, n, kBigramLevel, rule))
      phoc.bits[kBigramBlockOffset + static_cast<std::size_t>(r) * kBigramCount + b] = 1;
  }
  return phoc;
}

// The `count` most frequent adjacent pairs over the normalized dictionary,
// ties broken lexicographically.
inline std::vector<std::string> derive_bigrams(const std::vector<std::string>& dictionary,
                                               std::size_t count = kBigramCount) {
  if (dictionary.empty()) throw PreconditionError("derive_bigrams: empty dictionary");
  std::map<std::string, std::size_t> freq;
  for (const auto& raw : dictionary) {
    const std::string w = normalize_word(raw);
    for (std::size_t i = 0; i + 1 < w.size(); ++i) ++freq[w.substr(i, 2)];
  }
  if (freq.size() < count)
    throw PreconditionError("derive_bigrams: only " + std::to_string(freq.size()) +
                            " distinct bigrams, need " + std::to_string(count));
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(ranked[i].first);
  return out;
}

inline std::vector<std::string> read_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open word list " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace morphofv
