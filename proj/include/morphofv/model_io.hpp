#pragma once

// Versioned JSON model files.
//
// {
//   "format": "morphofv-model",
//   "version": 1,
//   "content_hash": "<FNV-1a 64 of payload.dump(), hex>",
//   "payload": { "bigrams", "alphabet_hash", "config", "pca"?, "gmm"?, "fusion"? }
// }
//
// Matrices are stored as {"rows", "cols", "data"} with row-major data.
// Doubles are printed in shortest round-trip form, so load(save(b)) is
// bit-exact.

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphofv/error.hpp"
#include "morphofv/fisher.hpp"
#include "morphofv/fusion.hpp"
#include "morphofv/fvc.hpp"
#include "morphofv/gmm.hpp"
#include "morphofv/pca.hpp"
#include "morphofv/phoc.hpp"

namespace morphofv {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "morphofv-model";

struct ModelBundle {
  std::vector<std::string> bigrams = default_bigrams();
  std::optional<PcaModel> pca;
  std::optional<GmmModel> gmm;
  std::optional<FusionParams> fusion;
  nlohmann::json config = nlohmann::json::object();  // echo of the settings that produced the bundle

  Alphabet alphabet() const { return Alphabet(bigrams); }

  void validate() const {
    Alphabet check(bigrams);
    if (pca) {
      pca->validate();
      if (pca->input_dim() != static_cast<Eigen::Index>(kPhocDim))
        throw DimensionError("bundle: PCA input dimension must be " + std::to_string(kPhocDim));
    }
    if (gmm) gmm->validate();
    if (pca && gmm && pca->dim() != gmm->dim())
      throw DimensionError("bundle: PCA dim " + std::to_string(pca->dim()) + " != GMM dim " +
                           std::to_string(gmm->dim()));
    if (fusion) {
      fusion->validate();
      if (gmm && fusion->config.text_dim != fisher_dim(gmm->dim(), gmm->components()))
        throw DimensionError("bundle: fusion text input " + std::to_string(fusion->config.text_dim) +
                             " != 2*d*K = " + std::to_string(fisher_dim(gmm->dim(), gmm->components())));
    }
  }
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw FormatError("matrix entry count does not match its shape");
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline nlohmann::json fusion_config_to_json(const FusionConfig& c) {
  return {{"visual_dim", c.visual_dim},   {"visual_hidden", c.visual_hidden}, {"text_dim", c.text_dim},
          {"text_hidden", c.text_hidden}, {"num_classes", c.num_classes}};
}

inline FusionConfig fusion_config_from_json(const nlohmann::json& j) {
  FusionConfig c;
  c.visual_dim = j.at("visual_dim").get<Eigen::Index>();
  c.visual_hidden = j.at("visual_hidden").get<Eigen::Index>();
  c.text_dim = j.at("text_dim").get<Eigen::Index>();
  c.text_hidden = j.at("text_hidden").get<Eigen::Index>();
  c.num_classes = j.at("num_classes").get<Eigen::Index>();
  return c;
}

}  // namespace detail

inline nlohmann::json bundle_payload(const ModelBundle& b) {
  nlohmann::json p;
  p["bigrams"] = b.bigrams;
  p["alphabet_hash"] = detail::hex64(Alphabet(b.bigrams).hash());
  p["config"] = b.config;
  if (b.pca) {
    p["pca"] = {{"mean", detail::vector_to_json(b.pca->mean)},
                {"components", detail::matrix_to_json(b.pca->components)},
                {"explained_variance", detail::vector_to_json(b.pca->explained_variance)}};
  }
  if (b.gmm) {
    p["gmm"] = {{"weights", detail::vector_to_json(b.gmm->weights)},
                {"means", detail::matrix_to_json(b.gmm->means)},
                {"variances", detail::matrix_to_json(b.gmm->variances)}};
  }
  if (b.fusion) {
    nlohmann::json layers;
    const auto ls = b.fusion->layers();
    for (std::size_t i = 0; i < FusionParams::kLayerCount; ++i)
      layers[FusionParams::kLayerNames[i]] = {{"weight", detail::matrix_to_json(ls[i]->weight)},
                                              {"bias", detail::vector_to_json(ls[i]->bias)}};
    p["fusion"] = {{"config", detail::fusion_config_to_json(b.fusion->config)}, {"layers", std::move(layers)}};
  }
  return p;
}

inline std::string serialize_bundle(const ModelBundle& b) {
  b.validate();
  const nlohmann::json payload = bundle_payload(b);
  const std::string body = payload.dump();
  nlohmann::json doc;
  doc["format"] = kModelFormatName;
  doc["version"] = kModelFormatVersion;
  doc["content_hash"] = detail::hex64(detail::fnv1a(body));
  doc["payload"] = payload;
  return doc.dump(1) + "\n";
}

inline ModelBundle deserialize_bundle(std::string_view text, const std::string& where = "model") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ChecksumError(where + ": truncated or corrupt model file (" + e.what() + ")");
  }
  try {
    if (!doc.is_object() || doc.value("format", "") != kModelFormatName)
      throw FormatError(where + ": not a " + std::string(kModelFormatName) + " file");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw FormatError(where + ": unsupported model version " + std::to_string(version) + " (expected " +
                        std::to_string(kModelFormatVersion) + ")");
    const nlohmann::json& p = doc.at("payload");
    if (detail::hex64(detail::fnv1a(p.dump())) != doc.at("content_hash").get<std::string>())
      throw ChecksumError(where + ": content hash mismatch");

    ModelBundle b;
    b.bigrams = p.at("bigrams").get<std::vector<std::string>>();
    if (p.at("alphabet_hash").get<std::string>() != detail::hex64(Alphabet(b.bigrams).hash()))
      throw ChecksumError(where + ": alphabet hash mismatch");
    b.config = p.at("config");
    if (p.contains("pca")) {
      const auto& j = p["pca"];
      b.pca = PcaModel{detail::vector_from_json(j.at("mean")), detail::matrix_from_json(j.at("components")),
                       detail::vector_from_json(j.at("explained_variance"))};
    }
    if (p.contains("gmm")) {
      const auto& j = p["gmm"];
      b.gmm = GmmModel{detail::vector_from_json(j.at("weights")), detail::matrix_from_json(j.at("means")),
                       detail::matrix_from_json(j.at("variances"))};
    }
    if (p.contains("fusion")) {
      const auto& j = p["fusion"];
      FusionParams f;
      f.config = detail::fusion_config_from_json(j.at("config"));
      auto ls = f.layers();
      for (std::size_t i = 0; i < FusionParams::kLayerCount; ++i) {
        const auto& lj = j.at("layers").at(FusionParams::kLayerNames[i]);
        ls[i]->weight = detail::matrix_from_json(lj.at("weight"));
        ls[i]->bias = detail::vector_from_json(lj.at("bias"));
      }
      b.fusion = std::move(f);
    }
    b.validate();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": malformed model file (" + e.what() + ")");
  }
}

inline void save_model(const ModelBundle& b, const std::string& path) {
  write_file_bytes(path, serialize_bundle(b));
}

inline ModelBundle load_model(const std::string& path) { return deserialize_bundle(read_file_bytes(path), path); }

}  // namespace morphofv
