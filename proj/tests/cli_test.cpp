#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "morphofv/cli.hpp"

using namespace morphofv;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(testing::TempDir()) / ("morphofv_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string s(const fs::path& p) { return p.string(); }

// Synthetic dataset plus fitted text models, shared by several tests.
fs::path prepared(const std::string& name, const std::vector<std::string>& extra = {}) {
  const fs::path dir = scratch(name);
  std::vector<std::string> synth{"make-synthetic", "--out", s(dir / "data"), "--seed", "3",
                                 "--train-per-class", "10", "--test-per-class", "5"};
  synth.insert(synth.end(), extra.begin(), extra.end());
  EXPECT_EQ(run(synth).code, 0);
  const CliRun fit = run({"fit", "--dictionary", s(dir / "data" / "dictionary.txt"), "--pca-dim", "6", "--k", "3",
                          "--seed", "1", "--out", s(dir / "text.json")});
  EXPECT_EQ(fit.code, 0) << fit.err;
  return dir;
}

}  // namespace

TEST(Cli, EndToEndTrainAndEval) {
  const fs::path dir = prepared("e2e");
  const CliRun tr = run({"train", "--manifest", s(dir / "data" / "manifest.json"), "--model", s(dir / "text.json"),
                         "--out", s(dir / "model.json"), "--metrics", s(dir / "metrics.csv"), "--epochs", "3",
                         "--lr", "0.01", "--batch-size", "8", "--visual-hidden", "8", "--text-hidden", "6",
                         "--seed", "2"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  const std::string csv = read_file_bytes(s(dir / "metrics.csv"));
  EXPECT_EQ(csv.rfind("epoch,loss,accuracy\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  const CliRun ev = run({"eval", "--manifest", s(dir / "data" / "manifest.json"), "--model", s(dir / "model.json"),
                         "--ranked-csv", s(dir / "ranked.csv")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::json::parse(ev.out);
  EXPECT_EQ(report["samples"], 20);
  EXPECT_TRUE(report["classification"]["mAP"].is_number());
  EXPECT_TRUE(report["retrieval"]["mAP"].is_number());
  EXPECT_EQ(report["classification"]["per_class_ap"].size(), 4u);
  EXPECT_EQ(report["retrieval"]["per_query_ap"].size(), 20u);
  const std::string ranked = read_file_bytes(s(dir / "ranked.csv"));
  EXPECT_EQ(std::count(ranked.begin(), ranked.end(), '\n'), 1 + 20 * 19);

  const CliRun cls = run({"eval", "--manifest", s(dir / "data" / "manifest.json"), "--model",
                          s(dir / "model.json"), "--classification", "--out", s(dir / "cls.json")});
  ASSERT_EQ(cls.code, 0) << cls.err;
  const auto only = nlohmann::json::parse(read_file_bytes(s(dir / "cls.json")));
  EXPECT_TRUE(only.contains("classification"));
  EXPECT_FALSE(only.contains("retrieval"));
}

TEST(Cli, SpatialLayoutTrains) {
  const fs::path dir = prepared("map", {"--layout", "map"});
  const CliRun tr = run({"train", "--manifest", s(dir / "data" / "manifest.json"), "--model", s(dir / "text.json"),
                         "--out", s(dir / "model.json"), "--epochs", "2", "--visual-hidden", "4", "--text-hidden",
                         "4"});
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_EQ(load_model(s(dir / "model.json")).fusion->config.visual_dim, 8);
}

TEST(Cli, EncodeFvWritesZeroRowsForImagesWithoutText) {
  const fs::path dir = prepared("encode", {"--zero-text-every", "4"});
  const CliRun ef = run({"encode-fv", "--manifest", s(dir / "data" / "manifest.json"), "--model",
                         s(dir / "text.json"), "--out", s(dir / "fv.fvc")});
  ASSERT_EQ(ef.code, 0) << ef.err;
  const VectorTable t = read_fvc(s(dir / "fv.fvc"));
  EXPECT_EQ(t.rows, 60u);
  EXPECT_EQ(t.dim, 2u * 6u * 3u);
  for (std::uint32_t r = 0; r < t.rows; ++r) {
    const auto row = t.row(r);
    const bool zero = std::all_of(row.begin(), row.end(), [](float x) { return x == 0.0f; });
    EXPECT_EQ(zero, r % 4 == 0) << "row " << r;
  }
}

TEST(Cli, EvalOnSuppliedFeatures) {
  const fs::path dir = prepared("features");
  const DatasetManifest m = load_manifest(s(dir / "data" / "manifest.json"));
  VectorTable onehot;
  for (const auto& smp : m.samples) {
    std::vector<double> row(4, 0.0);
    row[static_cast<std::size_t>(smp.label_index)] = 1.0;
    onehot.append(row);
  }
  write_fvc(s(dir / "onehot.fvc"), onehot);
  const CliRun ev = run({"eval", "--manifest", s(dir / "data" / "manifest.json"), "--retrieval", "--features",
                         s(dir / "onehot.fvc"), "--split", "all"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto report = nlohmann::json::parse(ev.out);
  EXPECT_DOUBLE_EQ(report["retrieval"]["mAP"].get<double>(), 1.0);
  EXPECT_EQ(report["retrieval"]["feature"], "file");
}

TEST(Cli, ValidateManifest) {
  const fs::path dir = prepared("validate");
  const CliRun ok = run({"validate-manifest", "--manifest", s(dir / "data" / "manifest.json")});
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("60 samples (40 train, 20 test), 4 classes"), std::string::npos);

  auto doc = nlohmann::json::parse(read_file_bytes(s(dir / "data" / "manifest.json")));
  doc["samples"][3]["label"] = "brewery";
  write_file_bytes(s(dir / "data" / "bad.json"), doc.dump());
  const CliRun bad = run({"validate-manifest", "--manifest", s(dir / "data" / "bad.json")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("unknown label 'brewery'"), std::string::npos);
}

TEST(Cli, DeriveBigramsAndPhocEncode) {
  const fs::path dir = scratch("phoc");
  write_file_bytes(s(dir / "words.txt"), "ab\nab\ncd\n");
  const CliRun db = run({"derive-bigrams", "--dictionary", s(dir / "words.txt"), "--count", "2"});
  ASSERT_EQ(db.code, 0) << db.err;
  EXPECT_EQ(db.out, "ab\ncd\n");

  const CliRun pe = run({"phoc-encode", "--word", "Bakery"});
  ASSERT_EQ(pe.code, 0) << pe.err;
  ASSERT_EQ(pe.out.size(), kPhocDim + 1);
  const PhocVector ref = build_phoc("bakery");
  for (std::size_t i = 0; i < kPhocDim; ++i) EXPECT_EQ(pe.out[i] == '1', ref[i] == 1) << i;

  const CliRun many = run({"phoc-encode", "--words", s(dir / "words.txt"), "--out", s(dir / "p.fvc")});
  ASSERT_EQ(many.code, 0) << many.err;
  EXPECT_EQ(read_fvc(s(dir / "p.fvc")).rows, 3u);
}

TEST(Cli, ErrorsExitNonZero) {
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"no-such-command"}).code, 0);
  EXPECT_EQ(run({"phoc-encode", "--word", "!!"}).code, 1);
  const fs::path dir = scratch("errors");
  write_file_bytes(s(dir / "m.json"), "{\"format\": \"morphofv-model\"");
  const CliRun r = run({"gmm-fit", "--model", s(dir / "m.json"), "--dictionary", s(dir / "m.json"), "--out",
                        s(dir / "o.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("truncated or corrupt"), std::string::npos);
}

TEST(Cli, SeedFromEnvironment) {
  const fs::path dir = scratch("seed");
  setenv("MORPHOFV_SEED", "5", 1);
  ASSERT_EQ(run({"make-synthetic", "--out", s(dir / "a"), "--train-per-class", "2", "--test-per-class", "1"}).code, 0);
  unsetenv("MORPHOFV_SEED");
  ASSERT_EQ(run({"make-synthetic", "--out", s(dir / "b"), "--seed", "5", "--train-per-class", "2",
                 "--test-per-class", "1"}).code, 0);
  EXPECT_EQ(read_file_bytes(s(dir / "a" / "visual.fvc")), read_file_bytes(s(dir / "b" / "visual.fvc")));
}
