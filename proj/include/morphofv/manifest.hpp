#pragma once

// Dataset manifests.
//
// {
//   "schema_version": 1,
//   "classes": ["bakery", ...],
//   "visual": {"layout": "pooled", "dim": 2048}
//          | {"layout": "map", "channels": C, "height": H, "width": W},
//   "samples": [
//     {"id": "img-0001", "split": "train", "label": "bakery",
//      "visual_feature": {"file": "visual.fvc", "row": 0},
//      "proposals": [{"text": "bakery", "confidence": 0.93},
//                    {"phoc": {"file": "phocs.fvc", "row": 7}, "confidence": 0.41}]}
//   ]
// }
//
// Relative file paths resolve against the manifest's directory.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphofv/error.hpp"
#include "morphofv/fisher.hpp"
#include "morphofv/fusion.hpp"
#include "morphofv/fvc.hpp"
#include "morphofv/phoc.hpp"

namespace morphofv {

inline constexpr int kManifestSchemaVersion = 1;

struct RowRef {
  std::string file;  // resolved path
  std::uint32_t row = 0;
};

struct ProposalRecord {
  std::string text;
  std::optional<RowRef> phoc;
  double confidence = 0.0;
};

enum class Split { Train, Test };

struct SampleRecord {
  std::string id;
  Split split = Split::Train;
  std::string label;
  int label_index = 0;
  RowRef visual;
  std::vector<ProposalRecord> proposals;
};

struct VisualLayout {
  bool spatial = false;
  Eigen::Index channels = 0;  // pooled: the vector length
  Eigen::Index height = 1;
  Eigen::Index width = 1;

  Eigen::Index row_dim() const { return channels * height * width; }
};

struct DatasetManifest {
  int version = kManifestSchemaVersion;
  std::vector<std::string> classes;
  VisualLayout visual;
  std::vector<SampleRecord> samples;
};

namespace detail {

inline RowRef parse_row_ref(const nlohmann::json& j, const std::filesystem::path& base) {
  std::filesystem::path file = j.at("file").get<std::string>();
  if (file.is_relative()) file = base / file;
  const auto row = j.at("row").get<long long>();
  if (row < 0 || row > UINT32_MAX) throw ManifestError("row index out of range in reference to " + file.string());
  return {file.lexically_normal().string(), static_cast<std::uint32_t>(row)};
}

}  // namespace detail

// Parses and validates a manifest. Every invariant is checked here so no
// later stage sees an invalid dataset.
inline DatasetManifest parse_manifest(const nlohmann::json& doc, const std::filesystem::path& base,
                                      bool check_files = true) {
  DatasetManifest m;
  try {
    if (!doc.is_object()) throw ManifestError("schema: manifest must be a JSON object");
    if (!doc.contains("schema_version")) throw ManifestError("schema: missing schema_version");
    m.version = doc.at("schema_version").get<int>();
    if (m.version != kManifestSchemaVersion)
      throw ManifestError("schema: unsupported schema_version " + std::to_string(m.version));

    m.classes = doc.at("classes").get<std::vector<std::string>>();
    if (m.classes.empty()) throw ManifestError("schema: class list is empty");
    std::map<std::string, int> class_index;
    for (std::size_t i = 0; i < m.classes.size(); ++i)
      if (!class_index.emplace(m.classes[i], static_cast<int>(i)).second)
        throw ManifestError("duplicate class '" + m.classes[i] + "'");

    const auto& vis = doc.at("visual");
    const auto layout = vis.at("layout").get<std::string>();
    if (layout == "pooled") {
      m.visual.channels = vis.at("dim").get<Eigen::Index>();
    } else if (layout == "map") {
      m.visual.spatial = true;
      m.visual.channels = vis.at("channels").get<Eigen::Index>();
      m.visual.height = vis.at("height").get<Eigen::Index>();
      m.visual.width = vis.at("width").get<Eigen::Index>();
    } else {
      throw ManifestError("schema: visual.layout must be 'pooled' or 'map', got '" + layout + "'");
    }
    if (m.visual.channels < 1 || m.visual.height < 1 || m.visual.width < 1)
      throw ManifestError("schema: visual dimensions must be positive");

    std::set<std::string> ids;
    for (const auto& sj : doc.at("samples")) {
      SampleRecord s;
      s.id = sj.at("id").get<std::string>();
      if (!ids.insert(s.id).second) throw ManifestError("duplicate sample id '" + s.id + "'");
      const auto split = sj.at("split").get<std::string>();
      if (split == "train")
        s.split = Split::Train;
      else if (split == "test")
        s.split = Split::Test;
      else
        throw ManifestError("sample '" + s.id + "': split must be train or test, got '" + split + "'");
      s.label = sj.at("label").get<std::string>();
      const auto it = class_index.find(s.label);
      if (it == class_index.end())
        throw ManifestError("sample '" + s.id + "': unknown label '" + s.label + "'");
      s.label_index = it->second;
      s.visual = detail::parse_row_ref(sj.at("visual_feature"), base);
      if (sj.contains("proposals")) {
        for (const auto& pj : sj.at("proposals")) {
          ProposalRecord p;
          p.text = pj.value("text", std::string{});
          p.confidence = pj.at("confidence").get<double>();
          if (!(p.confidence >= 0.0 && p.confidence <= 1.0))
            throw ManifestError("sample '" + s.id + "': proposal confidence outside [0, 1]");
          if (pj.contains("phoc")) p.phoc = detail::parse_row_ref(pj.at("phoc"), base);
          else if (!pj.contains("text"))
            throw ManifestError("sample '" + s.id + "': proposal needs text or phoc");
          s.proposals.push_back(std::move(p));
        }
      }
      m.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(std::string("schema: ") + e.what());
  }

  if (check_files) {
    std::map<std::string, FvcHeader> headers;
    auto header = [&](const std::string& file) -> const FvcHeader& {
      auto it = headers.find(file);
      if (it != headers.end()) return it->second;
      if (!std::filesystem::exists(file)) throw ManifestError("missing referenced file " + file);
      try {
        return headers.emplace(file, read_fvc_header(file)).first->second;
      } catch (const FormatError& e) {
        throw ManifestError(std::string("unreadable referenced file: ") + e.what());
      }
    };
    for (const auto& s : m.samples) {
      const FvcHeader& h = header(s.visual.file);
      if (s.visual.row >= h.rows)
        throw ManifestError("sample '" + s.id + "': visual row " + std::to_string(s.visual.row) + " beyond " +
                            std::to_string(h.rows) + " rows of " + s.visual.file);
      if (static_cast<Eigen::Index>(h.dim) != m.visual.row_dim())
        throw ManifestError("sample '" + s.id + "': " + s.visual.file + " has dimension " +
                            std::to_string(h.dim) + ", visual layout expects " +
                            std::to_string(m.visual.row_dim()));
      for (const auto& p : s.proposals) {
        if (!p.phoc) continue;
        const FvcHeader& ph = header(p.phoc->file);
        if (p.phoc->row >= ph.rows || ph.dim != kPhocDim)
          throw ManifestError("sample '" + s.id + "': bad PHOC reference into " + p.phoc->file);
      }
    }
  }
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const FormatError& e) {
    throw ManifestError(e.what());
  }
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError(std::string("schema: not valid JSON: ") + e.what());
  }
  return parse_manifest(doc, std::filesystem::path(path).parent_path());
}

// Lazily loaded FVC tables keyed by path.
class FeatureStore {
 public:
  const VectorTable& table(const std::string& path) {
    auto it = tables_.find(path);
    if (it == tables_.end()) it = tables_.emplace(path, read_fvc(path)).first;
    return it->second;
  }

  std::vector<double> row(const RowRef& ref) {
    const auto r = table(ref.file).row(ref.row);
    return std::vector<double>(r.begin(), r.end());
  }

 private:
  std::map<std::string, VectorTable> tables_;
};

inline VisualInput load_visual(const DatasetManifest& m, const SampleRecord& s, FeatureStore& store) {
  const std::vector<double> values = store.row(s.visual);
  if (m.visual.spatial) return VisualInput::spatial(m.visual.channels, m.visual.height, m.visual.width, values);
  return VisualInput::pooled(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
}

inline std::vector<WordProposal> load_proposals(const SampleRecord& s, FeatureStore& store) {
  std::vector<WordProposal> out;
  for (const auto& p : s.proposals) {
    WordProposal w;
    w.text = p.text;
    w.confidence = p.confidence;
    if (p.phoc) {
      const auto values = store.row(*p.phoc);
      PhocVector phoc;
      for (std::size_t i = 0; i < kPhocDim; ++i) phoc.bits[i] = values[i] >= 0.5f ? 1 : 0;
      w.phoc = phoc;
    }
    out.push_back(std::move(w));
  }
  return out;
}

inline std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline nlohmann::json manifest_to_json(const DatasetManifest& m, const std::filesystem::path& base) {
  auto rel = [&](const std::string& file) {
    return std::filesystem::path(file).lexically_relative(base).generic_string();
  };
  nlohmann::json doc;
  doc["schema_version"] = m.version;
  doc["classes"] = m.classes;
  if (m.visual.spatial)
    doc["visual"] = {{"layout", "map"}, {"channels", m.visual.channels}, {"height", m.visual.height},
                     {"width", m.visual.width}};
  else
    doc["visual"] = {{"layout", "pooled"}, {"dim", m.visual.channels}};
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json props = nlohmann::json::array();
    for (const auto& p : s.proposals) {
      nlohmann::json pj = {{"confidence", p.confidence}};
      if (!p.text.empty() || !p.phoc) pj["text"] = p.text;
      if (p.phoc) pj["phoc"] = {{"file", rel(p.phoc->file)}, {"row", p.phoc->row}};
      props.push_back(std::move(pj));
    }
    samples.push_back({{"id", s.id},
                       {"split", to_string(s.split)},
                       {"label", s.label},
                       {"visual_feature", {{"file", rel(s.visual.file)}, {"row", s.visual.row}}},
                       {"proposals", std::move(props)}});
  }
  doc["samples"] = std::move(samples);
  return doc;
}

}  // namespace morphofv
