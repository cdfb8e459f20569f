#include <gtest/gtest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "rotenc/checkpoint.hpp"
#include "rotenc/cli.hpp"
#include "support.hpp"

using namespace rotenc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "rotenc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_tsv(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("rotenc_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run({"synth", "--count", "60", "--seed", "3", "--out", (root_ / "data").string()}).code, 0);
    std::ofstream(root_ / "config.json") << R"({"epochs": 3, "batch_size": 16,
      "split": {"mode": "holdout", "train_fraction": 0.8},
      "model": {"head_hidden": 16, "encoder": {"widths": [16, 16], "embed_dim": 4, "k": 4},
                "gnn": {"hidden": 8, "message_width": 8, "output_width": 8}}})";
    const CliRun r = run({"train", "--config", (root_ / "config.json").string(), "--data", data().string(), "--out",
                       (root_ / "train").string(), "--quiet"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static fs::path data() { return root_ / "data" / "records.jsonl"; }
  static fs::path checkpoint() { return root_ / "train" / "checkpoint.bin"; }
  static inline fs::path root_;
};

}  // namespace

TEST_F(CliTest, TrainWritesArtifacts) {
  for (const char* f : {"checkpoint.bin", "metrics.tsv", "manifest.json"}) EXPECT_TRUE(fs::exists(root_ / "train" / f)) << f;
  EXPECT_EQ(read_tsv(root_ / "train" / "metrics.tsv").size(), 4u);
  std::ifstream in(root_ / "train" / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_TRUE(manifest.contains("config"));
  EXPECT_TRUE(manifest.contains("seeds"));
}

TEST_F(CliTest, ManifestReproducesRun) {
  std::ifstream in(root_ / "train" / "manifest.json");
  const auto manifest = nlohmann::json::parse(in);
  std::ofstream(root_ / "replay.json") << manifest["config"].dump();
  ASSERT_EQ(run({"train", "--config", (root_ / "replay.json").string(), "--data", data().string(), "--out",
                 (root_ / "replay").string(), "--quiet"})
                .code,
            0);
  std::ifstream a(root_ / "train" / "checkpoint.bin", std::ios::binary), b(root_ / "replay" / "checkpoint.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST_F(CliTest, MissingDatasetIsInputError) {
  const CliRun r = run({"train", "--data", (root_ / "nope.jsonl").string(), "--out", (root_ / "x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.jsonl"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, AblateNo3dDropsFingerprint) {
  ASSERT_EQ(run({"train", "--config", (root_ / "config.json").string(), "--data", data().string(), "--out",
                 (root_ / "no3d").string(), "--ablate", "no-3d", "--quiet"})
                .code,
            0);
  const Checkpoint ck = load_checkpoint(root_ / "no3d" / "checkpoint.bin");
  EXPECT_FALSE(ck.model.config().use_3d);
  EXPECT_EQ(ck.model.config().fused_width(), ck.model.config().gnn.output_width);
  EXPECT_EQ(ck.model.state().param("head.w1").rows(), 8);

  const CliRun r = run({"importance", "--checkpoint", (root_ / "no3d" / "checkpoint.bin").string(), "--data",
                     data().string(), "--id", "syn01", "--out", (root_ / "imp_no3d").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_tsv(root_ / "imp_no3d" / "importance.tsv");
  const auto& header = rows[0];
  const auto col = std::find(header.begin(), header.end(), "coordinate_gradient") - header.begin();
  ASSERT_LT(static_cast<std::size_t>(col), header.size());
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(std::stod(rows[i][static_cast<std::size_t>(col)]), 0.0);
}

TEST_F(CliTest, InvarianceModes) {
  EXPECT_EQ(run({"invariance", "--checkpoint", checkpoint().string(), "--data", data().string(), "--rotations", "1",
                 "--out", (root_ / "inv1").string()})
                .code,
            2);
  const CliRun r = run({"invariance", "--checkpoint", checkpoint().string(), "--data", data().string(), "--rotations", "8",
                     "--molecules", "10", "--align-modes", "none,post", "--out", (root_ / "inv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_tsv(root_ / "inv" / "invariance.tsv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "none");
  EXPECT_EQ(rows[2][0], "post");
  EXPECT_LE(std::stod(rows[2][1]), 1e-9);
  EXPECT_LE(std::stod(rows[2][2]), 1e-9);
  EXPECT_GT(std::stod(rows[1][1]), std::stod(rows[2][1]));
  EXPECT_NE(r.out.find("post: mean 0.0000 max 0.0000"), std::string::npos) << r.out;
}

TEST_F(CliTest, SweepKDeduplicates) {
  const CliRun r = run({"sweep-k", "--checkpoint", checkpoint().string(), "--data", data().string(), "--k", "16,2,2",
                     "--rotations", "4", "--molecules", "10", "--out", (root_ / "sweep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("duplicate"), std::string::npos);
  const auto rows = read_tsv(root_ / "sweep" / "sweep_k.tsv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "2");
  EXPECT_EQ(rows[2][0], "16");
  EXPECT_EQ(std::stod(rows[1][1]), 1.0);
  const double t2 = std::stod(rows[1].back());
  const double t16 = std::stod(rows[2].back());
  EXPECT_LT(t16, 8.0 * t2 + 0.05);
  const std::size_t inv = rows[0].size() - 2;
  EXPECT_LE(std::stod(rows[2][inv]), 1.5 * std::stod(rows[1][inv]));
}

TEST_F(CliTest, AlignIsIdempotentAndRotationInvariant) {
  const auto records = load_dataset(data());
  auto subset = std::vector<MoleculeRecord>(records.begin(), records.begin() + 10);
  write_dataset(root_ / "subset.jsonl", subset);
  const auto rs = sample_rotations({subset.size(), 5, SamplingMode::haar_random});
  auto rotated = subset;
  for (std::size_t i = 0; i < rotated.size(); ++i) rotated[i].coords = rotate(rotated[i].coords, rs[i]);
  // A perfect octahedron has no unique frame.
  MoleculeRecord sphere;
  sphere.id = "zz_sphere";
  sphere.atomic_numbers = {6, 6, 6, 6, 6, 6};
  sphere.coords = Coords<double>(6, 3);
  sphere.coords << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  sphere.targets["rg"] = 1.0;
  rotated.push_back(sphere);
  write_dataset(root_ / "rotated.jsonl", rotated);

  ASSERT_EQ(run({"align", "--data", (root_ / "subset.jsonl").string(), "--out", (root_ / "al1").string()}).code, 0);
  ASSERT_EQ(run({"align", "--data", (root_ / "al1" / "aligned.jsonl").string(), "--out", (root_ / "al2").string()}).code, 0);
  ASSERT_EQ(run({"align", "--data", (root_ / "rotated.jsonl").string(), "--out", (root_ / "al3").string()}).code, 0);

  const auto once = load_dataset(root_ / "al1" / "aligned.jsonl");
  const auto twice = load_dataset(root_ / "al2" / "aligned.jsonl");
  const auto from_rotated = load_dataset(root_ / "al3" / "aligned.jsonl");
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_LE((once[i].coords - twice[i].coords).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE((once[i].coords - from_rotated[i].coords).cwiseAbs().maxCoeff(), 1e-6);
  }
  const auto degenerate = read_tsv(root_ / "al3" / "degenerate.tsv");
  bool listed = false;
  for (const auto& row : degenerate) listed = listed || row[0] == "zz_sphere";
  EXPECT_TRUE(listed);
}

TEST_F(CliTest, ImportanceScores) {
  const auto out1 = root_ / "imp1";
  const CliRun r = run({"importance", "--checkpoint", checkpoint().string(), "--data", data().string(), "--id", "syn02",
                     "--task", "rg", "--out", out1.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = read_tsv(out1 / "importance.tsv");
  const auto col = std::find(rows[0].begin(), rows[0].end(), "score") - rows[0].begin();
  double top = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double s = std::stod(rows[i][static_cast<std::size_t>(col)]);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
    top = std::max(top, s);
  }
  EXPECT_EQ(top, 1.0);
  ASSERT_EQ(run({"importance", "--checkpoint", checkpoint().string(), "--data", data().string(), "--id", "syn02",
                 "--out", (root_ / "imp2").string()})
                .code,
            0);
  EXPECT_EQ(read_tsv(root_ / "imp2" / "importance.tsv"), rows);
  EXPECT_EQ(run({"importance", "--checkpoint", checkpoint().string(), "--data", data().string(), "--id", "nobody",
                 "--out", (root_ / "imp3").string()})
                .code,
            2);
}

TEST_F(CliTest, EvalAndConvert) {
  ASSERT_EQ(run({"eval", "--checkpoint", checkpoint().string(), "--data", data().string(), "--out",
                 (root_ / "eval").string(), "--threads", "2"})
                .code,
            0);
  EXPECT_TRUE(fs::exists(root_ / "eval" / "eval.tsv"));
  EXPECT_EQ(read_tsv(root_ / "eval" / "predictions.tsv").size(), 61u);

  const fs::path data_dir = ROTENC_TEST_DATA;
  ASSERT_EQ(run({"convert", "--xyz", (data_dir / "small.xyz").string(), "--targets",
                 (data_dir / "small_targets.tsv").string(), "--out", (root_ / "conv").string()})
                .code,
            0);
  EXPECT_EQ(load_dataset(root_ / "conv" / "records.jsonl").size(), 2u);
}
