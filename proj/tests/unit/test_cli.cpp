#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <sstream>

#include "commands.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "xood/data.hpp"
#include "xood/detector.hpp"
#include "xood/io.hpp"
#include "xood/metrics.hpp"

using namespace xood;
namespace fs = std::filesystem;

namespace {

int xood_cli(std::vector<std::string> args) {
  args.insert(args.begin(), {"xood", "--log-level", "off"});
  return cli::run(std::move(args));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = gen::scratch_dir("cli");
    ASSERT_EQ(xood_cli({"gen", "--kind", "blobs", "--count", "600", "--seed", "1", "--out", s("train.xten"),
                        "--labels-out", s("train.txt")}),
              0);
    ASSERT_EQ(xood_cli({"gen", "--kind", "blobs", "--count", "120", "--seed", "2", "--out", s("test.xten")}), 0);
    ASSERT_EQ(xood_cli({"gen", "--kind", "uniform", "--side", "12", "--count", "120", "--seed", "3", "--out",
                        s("uni.xten")}),
              0);
    ASSERT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--epochs", "4", "--seed",
                        "5", "--out", s("model.xnet")}),
              0);
    ASSERT_EQ(xood_cli({"fit-m", "--model", s("model.xnet"), "--images", s("train.xten"), "--labels",
                        s("train.txt"), "--out", s("m.xdet")}),
              0);
    ASSERT_EQ(xood_cli({"fit-l", "--model", s("model.xnet"), "--images", s("train.xten"), "--labels",
                        s("train.txt"), "--lambda-grid", "0.01,1,100", "--out", s("l.xdet")}),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::string s(const std::string& name) { return (dir_ / name).string(); }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, TrainIsSeedDeterministic) {
  ASSERT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--epochs", "4", "--seed",
                      "5", "--out", s("model2.xnet")}),
            0);
  EXPECT_EQ(slurp(s("model.xnet")), slurp(s("model2.xnet")));
}

TEST_F(Cli, RefusesToOverwriteWithoutForce) {
  const auto before = slurp(s("model.xnet"));
  EXPECT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--epochs", "1", "--seed",
                      "9", "--out", s("model.xnet")}),
            cli::kConfigError);
  EXPECT_EQ(slurp(s("model.xnet")), before);
  ASSERT_EQ(xood_cli({"gen", "--kind", "blobs", "--count", "5", "--out", s("tmp.xten")}), 0);
  EXPECT_EQ(xood_cli({"gen", "--kind", "blobs", "--count", "5", "--out", s("tmp.xten"), "--force"}), 0);
}

TEST_F(Cli, AccuracyFloorFailsAsNumericalError) {
  EXPECT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--epochs", "1",
                      "--learning-rate", "1e-7", "--min-accuracy", "0.99", "--out", s("weak.xnet")}),
            cli::kNumericalError);
  EXPECT_FALSE(fs::exists(s("weak.xnet")));
}

TEST_F(Cli, TrainedModelMeetsFloorOnFixture) {
  EXPECT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--epochs", "4",
                      "--min-accuracy", "0.95", "--seed", "5", "--out", s("floor.xnet")}),
            0);
  EXPECT_GE(load_network(s("floor.xnet")).metadata().get_double("train.accuracy"), 0.95);
}

TEST_F(Cli, ExtractRowsWidthAndSpotCheck) {
  ASSERT_EQ(xood_cli({"extract", "--model", s("model.xnet"), "--images", s("test.xten"), "--out", s("f.csv")}), 0);
  const auto table = read_feature_csv(s("f.csv"));
  const auto net = load_network(s("model.xnet"));
  EXPECT_EQ(table.values.rows(), 120u);
  EXPECT_EQ(table.values.cols(), 2 * net.activation_count());
  const auto images = load_images(s("test.xten"));
  const auto trace = forward_with_taps(net, images.slice(7, 8)).trace;
  const auto manual = oracle::tap_minmax(trace.taps)[0];
  for (std::size_t j = 0; j < manual.size(); ++j) EXPECT_EQ(table.values(7, j), manual[j]);
}

TEST_F(Cli, ExtractSupportsEveryKindInBothFormats) {
  const auto net = load_network(s("model.xnet"));
  for (const auto& k : all_feature_kinds()) {
    const auto csv = s("k_" + k.name() + ".csv");
    ASSERT_EQ(xood_cli({"extract", "--model", s("model.xnet"), "--images", s("test.xten"), "--kind", k.name(),
                        "--out", csv}),
              0)
        << k.name();
    EXPECT_EQ(read_feature_csv(csv).values.cols(), k.width(net.activation_count()));
  }
  ASSERT_EQ(xood_cli({"extract", "--model", s("model.xnet"), "--images", s("test.xten"), "--out", s("f.xten")}), 0);
  EXPECT_EQ(read_xten(s("f.xten")).shape(), (Shape{120, static_cast<std::uint32_t>(2 * net.activation_count())}));
}

TEST_F(Cli, FitMIsDeterministicAndWarnsAboutLFlags) {
  ASSERT_EQ(xood_cli({"fit-m", "--model", s("model.xnet"), "--images", s("train.xten"), "--labels", s("train.txt"),
                      "--distortions", "blur", "--lambda-grid", "1", "--out", s("m2.xdet")}),
            0);
  EXPECT_EQ(slurp(s("m.xdet")), slurp(s("m2.xdet")));
}

TEST_F(Cli, FitMMeanMatchesOfflineCorrectSubset) {
  const auto net = load_network(s("model.xnet"));
  auto ds = load_dataset(s("train.xten"), fs::path(s("train.txt")), "train");
  const auto [train_part, cal] = split(ds, net.metadata().get_double("split.train_fraction"),
                                       net.metadata().get_uint("split.seed"));
  const auto pass = compute_features(net, train_part.images, FeatureKind::min_max());
  const auto keep = correct_indices(pass.predictions, *train_part.labels);
  const auto raw = select_rows(pass.features, keep);
  const auto pt = fit_power_transform(raw);
  const auto mu = column_means(pt.apply(raw));
  const auto det = load_detector(s("m.xdet"));
  ASSERT_EQ(det.m->mean.size(), mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) EXPECT_NEAR(det.m->mean[j], mu[j], 1e-6);
  EXPECT_EQ(det.m->regularization, 10.0);
}

TEST_F(Cli, ScoreLengthRangeAndRerun) {
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("l.xdet"), "--images", s("test.xten"),
                      "--out", s("sl.csv")}),
            0);
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("l.xdet"), "--images", s("test.xten"),
                      "--out", s("sl2.csv")}),
            0);
  const auto rows = cli::read_scores(s("sl.csv"));
  ASSERT_EQ(rows.size(), 120u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].image_id, static_cast<long long>(i));
    EXPECT_GE(rows[i].score, 0.0);
    EXPECT_LE(rows[i].score, 1.0);
    EXPECT_TRUE(rows[i].decision == "in" || rows[i].decision == "out");
  }
  EXPECT_EQ(slurp(s("sl.csv")), slurp(s("sl2.csv")));
}

TEST_F(Cli, FileRoundTripEqualsInProcessScores) {
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("m.xdet"), "--images", s("test.xten"),
                      "--out", s("sm_file.csv")}),
            0);
  const auto file_scores = cli::read_score_values(s("sm_file.csv"));
  const auto det = load_detector(s("m.xdet"));
  const auto direct = det.confidence(load_network(s("model.xnet")), load_images(s("test.xten")));
  ASSERT_EQ(file_scores.size(), direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_EQ(file_scores[i], direct[i]);
}

TEST_F(Cli, EvalPerfectAndSwapped) {
  const auto write = [&](const std::string& name, std::vector<double> v) {
    std::ofstream out(s(name));
    out << "image_id,score,decision\n";
    for (std::size_t i = 0; i < v.size(); ++i) out << i << ',' << v[i] << ",none\n";
  };
  std::vector<double> hi(30), lo(30);
  for (std::size_t i = 0; i < 30; ++i) {
    hi[i] = 10.0 + 0.37 * static_cast<double>(i);
    lo[i] = 0.29 * static_cast<double>(i);
  }
  write("hi.csv", hi);
  write("lo.csv", lo);
  ASSERT_EQ(xood_cli({"eval", "--id", s("hi.csv"), "--ood", s("lo.csv"), "--method", "t", "--out", s("e1.csv")}), 0);
  const auto a = read_metrics_csv(s("e1.csv"));
  EXPECT_EQ(a[0].auroc, 1.0);
  EXPECT_EQ(a[0].tnr95, 1.0);
  EXPECT_EQ(a.back().out_dist, "average");
  ASSERT_EQ(xood_cli({"eval", "--id", s("lo.csv"), "--ood", s("hi.csv"), "--method", "t", "--out", s("e2.csv")}), 0);
  EXPECT_NEAR(read_metrics_csv(s("e2.csv"))[0].auroc, 1.0 - a[0].auroc, 1e-12);
  // metrics agree with the library on the same score files
  const auto id = cli::read_score_values(s("hi.csv")), ood = cli::read_score_values(s("lo.csv"));
  EXPECT_EQ(a[0].det_acc, detection_accuracy(ScoredSet::from(id, ood)));
}

TEST_F(Cli, EvalAppendKeepsOneAverageRowPerMethod) {
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("m.xdet"), "--images", s("test.xten"),
                      "--out", s("id_m.csv")}),
            0);
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("m.xdet"), "--images", s("uni.xten"),
                      "--out", s("uni_m.csv")}),
            0);
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--method", "msp", "--images", s("test.xten"), "--out",
                      s("id_msp.csv")}),
            0);
  ASSERT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--method", "msp", "--images", s("uni.xten"), "--out",
                      s("uni_msp.csv")}),
            0);
  ASSERT_EQ(xood_cli({"eval", "--id", s("id_m.csv"), "--ood", s("uni_m.csv"), "--ood-name", "uniform", "--in-name",
                      "blobs", "--method", "xood-m", "--out", s("table.csv")}),
            0);
  ASSERT_EQ(xood_cli({"eval", "--id", s("id_msp.csv"), "--ood", s("uni_msp.csv"), "--ood-name", "uniform",
                      "--in-name", "blobs", "--method", "msp", "--out", s("table.csv"), "--append"}),
            0);
  const auto rows = read_metrics_csv(s("table.csv"));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.out_dist == "average"; }), 2);
}

TEST_F(Cli, BenchBaselineOverheadIsZero) {
  ASSERT_EQ(xood_cli({"bench", "--model", s("model.xnet"), "--detector-m", s("m.xdet"), "--images", s("test.xten"),
                      "--repetitions", "2", "--scaling-rows", "200", "--out", s("bench.csv")}),
            0);
  std::ifstream in(s("bench.csv"));
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "name,width,mean_seconds,ci99_seconds,overhead");
  EXPECT_EQ(first.substr(0, 9), "baseline,");
  EXPECT_EQ(first.substr(first.rfind(',') + 1), "0");
  EXPECT_EQ(count_lines(s("bench.csv")), 1u + 2u + 8u);
}

TEST_F(Cli, HistOneFilePerLayerAndCountsSumToN) {
  ASSERT_EQ(xood_cli({"hist", "--model", s("model.xnet"), "--id-images", s("test.xten"), "--ood-images",
                      s("uni.xten"), "--bins", "10", "--out-dir", s("hist")}),
            0);
  const auto net = load_network(s("model.xnet"));
  for (std::size_t j = 1; j <= net.activation_count(); ++j) {
    std::ifstream in(dir_ / "hist" / ("layer" + std::to_string(j) + ".csv"));
    ASSERT_TRUE(in) << j;
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "series,bin_left,bin_right,count");
    std::map<std::string, std::size_t> totals;
    while (std::getline(in, line)) {
      const auto series = line.substr(0, line.find(','));
      totals[series] += std::stoul(line.substr(line.rfind(',') + 1));
    }
    EXPECT_EQ(totals.size(), 4u);
    for (const auto& [series, n] : totals) EXPECT_EQ(n, 120u) << series;
  }
  EXPECT_FALSE(fs::exists(dir_ / "hist" / ("layer" + std::to_string(net.activation_count() + 1) + ".csv")));
  EXPECT_EQ(count_lines(dir_ / "hist" / "summary.csv"), 1u + 2 * net.activation_count());
}

TEST_F(Cli, DistortWritesImagesAndLabels) {
  ASSERT_EQ(xood_cli({"distort", "--images", s("train.xten"), "--labels", s("train.txt"), "--kind", "mixup", "--seed",
                      "4", "--out", s("mix.xten"), "--labels-out", s("mix.txt")}),
            0);
  const auto ds = load_dataset(s("mix.xten"), fs::path(s("mix.txt")), "mix");
  EXPECT_EQ(ds.size(), 600u);
  EXPECT_NO_THROW(validate(ds, 2));
  EXPECT_EQ(xood_cli({"distort", "--images", s("train.xten"), "--kind", "sepia", "--out", s("bad.xten")}),
            cli::kConfigError);
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  {
    std::ofstream cfg(s("gen.ini"));
    cfg << "kind=blobs\ncount=7\nseed=3\n";
  }
  ASSERT_EQ(xood_cli({"gen", "--config", s("gen.ini"), "--count", "9", "--out", s("cfg.xten")}), 0);
  EXPECT_EQ(load_images(s("cfg.xten")).dim(0), 9u);
  EXPECT_EQ(load_images(s("cfg.xten")), gen_blobs(9, 3).images);
}

TEST_F(Cli, RunManifestEchoesResolvedConfig) {
  ASSERT_EQ(xood_cli({"gen", "--kind", "blobs", "--count", "4", "--seed", "8", "--out", s("man.xten")}), 0);
  const auto text = slurp(cli::run_manifest_path(s("man.xten")));
  EXPECT_NE(text.find("command=gen"), std::string::npos);
  EXPECT_NE(text.find("seed=8"), std::string::npos);
  EXPECT_NE(text.find("count=4"), std::string::npos);
  // replaying the manifest as a config reproduces the output
  ASSERT_EQ(xood_cli({"gen", "--config", cli::run_manifest_path(s("man.xten")).string(), "--out", s("man2.xten")}),
            0);
  EXPECT_EQ(slurp(s("man.xten")), slurp(s("man2.xten")));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(xood_cli({"train", "--images", s("train.xten"), "--labels", s("train.txt"), "--calibration-fraction",
                      "1", "--out", s("cf.xnet")}),
            cli::kConfigError);
  EXPECT_EQ(xood_cli({"score", "--model", s("model.xnet")}), cli::kConfigError);
  EXPECT_EQ(xood_cli({"frobnicate"}), cli::kConfigError);
  {
    std::ofstream bad(s("corrupt.xnet"), std::ios::binary);
    bad << "XNET\x01garbage";
  }
  EXPECT_EQ(xood_cli({"score", "--model", s("corrupt.xnet"), "--detector", s("m.xdet"), "--images", s("test.xten"),
                      "--out", s("never.csv")}),
            cli::kDataError);
  EXPECT_EQ(xood_cli({"score", "--model", s("model.xnet"), "--detector", s("l.xdet"), "--method", "m", "--images",
                      s("test.xten"), "--out", s("never2.csv")}),
            cli::kConfigError);
}
