#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "xood/data.hpp"
#include "xood/detector.hpp"
#include "xood/distortions.hpp"
#include "xood/error.hpp"
#include "xood/features.hpp"
#include "xood/io.hpp"
#include "xood/metrics.hpp"
#include "xood/model.hpp"
#include "xood/rng.hpp"

namespace xood::cli {

namespace fs = std::filesystem;

std::filesystem::path run_manifest_path(const fs::path& out) {
  return fs::path(out.string() + ".run.ini");
}

namespace {

// ---------------------------------------------------------------- helpers

void prepare_output(const fs::path& out, bool force) {
  if (out.empty()) throw ConfigError("no output path given");
  if (fs::exists(out) && !force) {
    throw ConfigError("refusing to overwrite " + out.string() + " (pass --force)");
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
}

void write_manifest(const fs::path& path, const CLI::App& cmd) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write run manifest " + path.string());
  out << "command=" << cmd.get_name() << '\n';
  std::istringstream body(cmd.config_to_str(true, false));
  for (std::string line; std::getline(body, line);) {
    if (line.rfind("force=", 0) != 0) out << line << '\n';
  }
}

bool has_suffix(const fs::path& p, std::string_view suffix) {
  const auto s = p.string();
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_idx_path(const fs::path& p) {
  return has_suffix(p, ".idx") || has_suffix(p, "-ubyte") || has_suffix(p, ".idx3") ||
         has_suffix(p, ".idx1");
}

void write_images(const fs::path& path, const Tensor& images) {
  if (is_idx_path(path)) {
    write_file_bytes(path, encode_idx_images(images));
  } else {
    write_xten(path, images);
  }
}

void write_labels(const fs::path& path, std::span<const std::uint32_t> labels) {
  if (is_idx_path(path)) {
    write_file_bytes(path, encode_idx_labels(labels));
  } else {
    write_labels_text(path, labels);
  }
}

Dataset load(const fs::path& images, const std::string& labels, std::string name) {
  std::optional<fs::path> lp;
  if (!labels.empty()) lp = labels;
  auto ds = load_dataset(images, lp, std::move(name));
  validate(ds);
  return ds;
}

std::vector<double> parse_double_list(const std::string& text, const char* what) {
  std::vector<double> out;
  for (auto f : split(text, ',')) {
    const auto v = parse_double(trim(f));
    if (!v) throw ConfigError(std::string("bad value '") + std::string(f) + "' in " + what);
    out.push_back(*v);
  }
  if (out.empty()) throw ConfigError(std::string(what) + " is empty");
  return out;
}

std::vector<DistortionKind> parse_distortions(const std::string& text) {
  std::vector<DistortionKind> out;
  for (auto f : split(text, ',')) {
    const auto k = parse_distortion_kind(trim(f));
    if (std::find(out.begin(), out.end(), k) != out.end()) {
      throw ConfigError("distortion '" + std::string(f) + "' listed twice");
    }
    out.push_back(k);
  }
  return out;
}

std::string dataset_name(const fs::path& p) { return p.stem().string(); }

// ---------------------------------------------------------------- gen

struct GenOptions {
  std::string kind = "shapes";
  std::size_t count = 1000;
  std::uint32_t side = 0;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path labels_out;
  bool force = false;
};

void cmd_gen(const GenOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  if (!o.labels_out.empty()) prepare_output(o.labels_out, o.force);
  Dataset ds;
  const std::uint32_t side = o.side ? o.side : (o.kind == "blobs" ? 12u : 28u);
  if (o.kind == "shapes") {
    ds = gen_shapes(o.count, o.seed, side);
  } else if (o.kind == "silhouettes") {
    ds = gen_silhouettes(o.count, o.seed, side);
  } else if (o.kind == "blobs") {
    if (side != 12) throw ConfigError("blobs are always 12x12");
    ds = gen_blobs(o.count, o.seed);
  } else {
    ds = gen_noise(parse_noise_kind(o.kind), o.count, {1, side, side}, o.seed);
  }
  write_images(o.out, ds.images);
  if (!o.labels_out.empty()) {
    if (!ds.has_labels()) throw ConfigError("'" + o.kind + "' images have no labels");
    write_labels(o.labels_out, *ds.labels);
  }
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("wrote {} {} images of shape {} to {}", ds.size(), o.kind,
               shape_to_string(ds.images.shape()), o.out.string());
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  fs::path images;
  std::string labels;
  fs::path out;
  int epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  double calibration_fraction = 0.2;
  double min_accuracy = 0.0;
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

void cmd_train(const TrainOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  if (o.labels.empty()) throw ConfigError("train needs --labels");
  auto ds = load(o.images, o.labels, dataset_name(o.images));
  std::size_t k = o.classes;
  if (k == 0) k = *std::max_element(ds.labels->begin(), ds.labels->end()) + 1;
  validate(ds, k);
  if (!(o.calibration_fraction > 0.0 && o.calibration_fraction < 1.0)) {
    throw ConfigError("--calibration-fraction must lie in (0, 1)");
  }
  const double train_fraction = 1.0 - o.calibration_fraction;
  auto [train_part, calibration] = split(ds, train_fraction, o.seed);
  spdlog::info("training on {} images ({} held out for calibration), {} classes", train_part.size(),
               calibration.size(), k);

  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.learning_rate;
  cfg.batch_size = o.batch_size;
  cfg.seed = o.seed;
  auto result = train_reference_cnn(train_part.images, *train_part.labels, k, cfg);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    spdlog::info("epoch {} mean loss {:.5f}", e + 1, result.epoch_loss[e]);
  }
  spdlog::info("training accuracy {:.4f}", result.train_accuracy);
  if (result.train_accuracy < o.min_accuracy) {
    throw NumericalError("training accuracy " + format_double(result.train_accuracy) +
                         " is below the floor " + format_double(o.min_accuracy));
  }
  auto& meta = result.network.metadata();
  meta.set("split.seed", o.seed);
  meta.set("split.train_fraction", train_fraction);
  meta.set("train.accuracy", result.train_accuracy);
  meta.set("train.images", static_cast<std::uint64_t>(train_part.size()));
  save_network(result.network, o.out);
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("wrote model {}", o.out.string());
}

// ---------------------------------------------------------------- extract

struct ExtractOptions {
  fs::path model;
  fs::path images;
  std::string kind = "minmax";
  fs::path out;
  std::size_t batch_size = 256;
  bool force = false;
};

void cmd_extract(const ExtractOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  const auto net = load_network(o.model);
  const auto kind = FeatureKind::parse(o.kind);
  auto ds = load(o.images, "", dataset_name(o.images));
  const auto pass = compute_features(net, ds.images, kind, o.batch_size);
  if (has_suffix(o.out, ".xten")) {
    write_xten(o.out, pass.features.to_tensor());
  } else {
    const auto cols = kind.column_names(net.activation_count());
    write_feature_csv(o.out, pass.features, cols);
  }
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("extracted {} x {} {} features to {}", pass.features.rows(), pass.features.cols(),
               kind.name(), o.out.string());
}

// ---------------------------------------------------------------- fit

struct FitCliOptions {
  fs::path model;
  fs::path images;
  std::string labels;
  std::string calibration_images;
  std::string calibration_labels;
  std::string kind = "minmax";
  double c = kDefaultRegularization;
  std::string lambda_grid = "0.001,0.01,0.1,1,10,100,1000";
  std::string distortions = "geometric,mixup,noise,blur";
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
};

void cmd_fit(Method method, const FitCliOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  if (method == Method::XoodM) {
    for (const char* flag : {"--lambda-grid", "--distortions"}) {
      if (cmd.count(flag) > 0) spdlog::warn("{} only applies to fit-l; ignored", flag);
    }
  } else if (cmd.count("--C") > 0) {
    spdlog::warn("--C only applies to fit-m; ignored");
  }
  if (o.labels.empty()) throw ConfigError("fitting needs --labels (the correctness filter uses them)");
  const auto net = load_network(o.model);
  auto ds = load(o.images, o.labels, dataset_name(o.images));
  validate(ds, net.num_classes());

  Dataset train_part, calibration;
  if (!o.calibration_images.empty()) {
    if (o.calibration_labels.empty()) throw ConfigError("--calibration-images needs --calibration-labels");
    train_part = std::move(ds);
    calibration = load(o.calibration_images, o.calibration_labels, "calibration");
    validate(calibration, net.num_classes());
  } else {
    const auto& meta = net.metadata();
    if (!meta.contains("split.seed") || !meta.contains("split.train_fraction")) {
      throw ConfigError("model has no recorded train/calibration split; pass --calibration-images");
    }
    auto parts = split(ds, meta.get_double("split.train_fraction"), meta.get_uint("split.seed"));
    train_part = std::move(parts.first);
    calibration = std::move(parts.second);
  }

  FitOptions fo;
  fo.kind = FeatureKind::parse(o.kind);
  fo.regularization = o.c;
  fo.batch_size = o.batch_size;
  fo.seed = o.seed;
  if (method == Method::XoodL) {
    fo.lambda_grid = parse_double_list(o.lambda_grid, "--lambda-grid");
    for (double l : fo.lambda_grid) {
      if (!(l > 0.0)) throw ConfigError("--lambda-grid values must be positive");
    }
    fo.distortions = parse_distortions(o.distortions);
  }
  FitReport report;
  const auto det = fit_detector(method, net, train_part, calibration, fo, &report);
  spdlog::info("{} fitted on {} of {} training images classified correctly; {} calibration images",
               to_string(method), report.correct_images, report.train_images, report.calibration_images);
  if (report.cv) {
    for (std::size_t g = 0; g < report.cv->grid.size(); ++g) {
      spdlog::info("lambda {} mean held-out log loss {:.6f}", report.cv->grid[g], report.cv->mean_loss[g]);
    }
    spdlog::info("selected lambda {}", report.cv->best_lambda);
  }
  spdlog::info("threshold {}", *det.threshold());
  save_detector(det, o.out);
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("wrote detector {}", o.out.string());
}

// ---------------------------------------------------------------- score

struct ScoreOptions {
  fs::path model;
  std::string detector;
  std::string method;
  fs::path images;
  fs::path out;
  std::size_t batch_size = 256;
  bool force = false;
};

void write_scores(const fs::path& path, std::span<const double> scores,
                  const std::function<std::string(double)>& decide) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
  out << "image_id,score,decision\n";
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out << i << ',' << format_double(scores[i]) << ',' << decide(scores[i]) << '\n';
  }
}

void cmd_score(const ScoreOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  const auto net = load_network(o.model);
  auto ds = load(o.images, "", dataset_name(o.images));
  if (o.method == "msp") {
    if (!o.detector.empty()) throw ConfigError("--method msp does not take a --detector");
    std::vector<Tensor> probs;
    for (std::size_t b = 0; b < ds.size(); b += o.batch_size) {
      probs.push_back(forward(net, ds.images.slice(b, std::min(ds.size(), b + o.batch_size))).trace.probabilities);
    }
    const auto scores = msp_baseline(concat(probs));
    write_scores(o.out, scores, [](double) { return std::string("none"); });
  } else {
    if (o.detector.empty()) throw ConfigError("score needs --detector (or --method msp)");
    const auto det = load_detector(o.detector);
    if (!o.method.empty() && parse_method(o.method) != det.method) {
      throw ConfigError("--method " + o.method + " does not match the detector (" + to_string(det.method) + ")");
    }
    const auto scores = det.confidence(net, ds.images, o.batch_size);
    write_scores(o.out, scores, [&](double s) {
      return det.decide(s) == Decision::InDistribution ? std::string("in") : std::string("out");
    });
  }
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("scored {} images into {}", ds.size(), o.out.string());
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  fs::path id;
  std::vector<std::string> ood;
  std::vector<std::string> ood_names;
  std::string method = "xood";
  std::string in_name;
  fs::path out;
  bool append = false;
  bool force = false;
};

void cmd_eval(const EvalOptions& o, const CLI::App& cmd) {
  if (o.ood.empty()) throw ConfigError("eval needs at least one --ood score file");
  if (!o.ood_names.empty() && o.ood_names.size() != o.ood.size()) {
    throw ConfigError("--ood-name must be given once per --ood file");
  }
  std::vector<MetricsRow> rows;
  if (o.append && fs::exists(o.out)) {
    for (auto& r : read_metrics_csv(o.out)) {
      if (r.out_dist != "average") rows.push_back(std::move(r));
    }
  } else {
    prepare_output(o.out, o.force);
  }
  const std::string in_name = o.in_name.empty() ? dataset_name(o.id) : o.in_name;
  const auto id_scores = read_score_values(o.id);
  for (std::size_t i = 0; i < o.ood.size(); ++i) {
    const auto ood_scores = read_score_values(o.ood[i]);
    const std::string name = o.ood_names.empty() ? dataset_name(o.ood[i]) : o.ood_names[i];
    const auto row = evaluate(ScoredSet::from(id_scores, ood_scores), in_name, name, o.method);
    spdlog::info("{} vs {} [{}]: AUROC {:.4f} TNR@95TPR {:.4f} detection accuracy {:.4f}", in_name, name,
                 o.method, row.auroc, row.tnr95, row.det_acc);
    rows.push_back(row);
  }
  const auto averages = average_rows(rows);
  rows.insert(rows.end(), averages.begin(), averages.end());
  write_metrics_csv(o.out, rows);
  write_manifest(run_manifest_path(o.out), cmd);
}

// ---------------------------------------------------------------- bench

struct BenchOptions {
  fs::path model;
  std::string detector_m;
  std::string detector_l;
  fs::path images;
  std::size_t repetitions = 10;
  std::size_t warmup = 1;
  std::size_t batch_size = 256;
  std::string widths = "8,16,32,64";
  std::size_t scaling_rows = 20000;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
};

struct BenchRow {
  std::string name;
  std::size_t width = 0;
  Timing timing;
  std::optional<double> overhead;
};

// Synthetic XOOD-L over `width` features with random parameters.
LDetector synthetic_l(std::size_t width, Rng& rng) {
  LDetector l;
  l.scaler.center.resize(width);
  for (auto& v : l.scaler.center) v = rng.normal();
  l.scaler.scale_mean.assign(2 * width, 0.5);
  l.scaler.scale_std.assign(2 * width, 1.0);
  l.scaler.flagged.assign(2 * width, false);
  l.weights.resize(2 * width + 1);
  for (auto& v : l.weights) v = rng.normal(0.0, 0.1);
  l.lambda = 1.0;
  return l;
}

MDetector synthetic_m(std::size_t width, Rng& rng) {
  Matrix x(4 * width, width);
  for (auto& v : x.storage()) v = rng.normal();
  return fit_m(x, kDefaultRegularization);
}

void cmd_bench(const BenchOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  const auto net = load_network(o.model);
  auto ds = load(o.images, "", dataset_name(o.images));
  const auto& images = ds.images;
  const std::size_t n = ds.size();
  auto batched = [&](const std::function<void(const Tensor&)>& fn) {
    for (std::size_t b = 0; b < n; b += o.batch_size) fn(images.slice(b, std::min(n, b + o.batch_size)));
  };
  std::vector<BenchRow> rows;
  volatile double sink = 0.0;

  std::vector<std::function<void()>> runs{
      [&] { batched([&](const Tensor& t) { sink = forward(net, t).predictions.size(); }); }};
  std::vector<std::pair<std::string, std::size_t>> labels{{"baseline", 0}};
  std::vector<Detector> detectors;
  for (const auto& [path, label] : {std::pair{o.detector_m, "forward+xood-m"}, std::pair{o.detector_l, "forward+xood-l"}}) {
    if (path.empty()) continue;
    detectors.push_back(load_detector(path));
    labels.emplace_back(label, detectors.back().transform.dims());
  }
  for (const auto& det : detectors) {
    runs.push_back([&] {
      batched([&](const Tensor& batch) {
        const auto r = forward_with_taps(net, batch);
        const auto scores = det.confidence(extract(r.trace, det.kind));
        sink = scores.empty() ? 0.0 : scores.front();
      });
    });
  }
  const auto timings = time_interleaved(runs, o.repetitions, o.warmup);
  for (std::size_t k = 0; k < timings.size(); ++k) {
    rows.push_back({labels[k].first, labels[k].second, timings[k], overhead(timings[k].mean, timings[0].mean)});
  }

  Rng rng(derive_seed(o.seed, "bench"));
  for (double wv : parse_double_list(o.widths, "--widths")) {
    const auto w = static_cast<std::size_t>(wv);
    if (w == 0 || static_cast<double>(w) != wv) throw ConfigError("--widths must be positive integers");
    // a cache-sized block, cycled until scaling_rows rows have been scored
    Matrix x(std::min<std::size_t>(o.scaling_rows, 2048), w);
    for (auto& v : x.storage()) v = rng.normal();
    const auto l = synthetic_l(w, rng);
    const auto m = synthetic_m(w, rng);
    rows.push_back({"score-xood-l", w,
                    time_repeated(
                        [&] {
                          double s = 0.0;
                          for (std::size_t i = 0; i < o.scaling_rows; ++i) s += l.score(x.row(i % x.rows()));
                          sink = s;
                        },
                        o.repetitions, o.warmup),
                    std::nullopt});
    rows.push_back({"score-xood-m", w,
                    time_repeated(
                        [&] {
                          double s = 0.0;
                          for (std::size_t i = 0; i < o.scaling_rows; ++i) s += m.distance(x.row(i % x.rows()));
                          sink = s;
                        },
                        o.repetitions, o.warmup),
                    std::nullopt});
  }
  (void)sink;

  std::ofstream out(o.out, std::ios::trunc);
  if (!out) throw ConfigError("cannot open " + o.out.string() + " for writing");
  out << "name,width,mean_seconds,ci99_seconds,overhead\n";
  for (const auto& r : rows) {
    out << r.name << ',' << r.width << ',' << format_double(r.timing.mean) << ','
        << format_double(r.timing.ci99) << ',' << (r.overhead ? format_double(*r.overhead) : "") << '\n';
    if (r.overhead) {
      spdlog::info("{}: {:.4f} s ± {:.4f} (overhead {:.1f}%)", r.name, r.timing.mean, r.timing.ci99,
                   100.0 * *r.overhead);
    } else {
      spdlog::info("{} width {}: {:.6f} s ± {:.6f}", r.name, r.width, r.timing.mean, r.timing.ci99);
    }
  }
  out.close();
  write_manifest(run_manifest_path(o.out), cmd);
}

// ---------------------------------------------------------------- distort

struct DistortOptions {
  fs::path images;
  std::string labels;
  std::string kind;
  std::uint64_t seed = 0;
  fs::path out;
  fs::path labels_out;
  bool force = false;
};

void cmd_distort(const DistortOptions& o, const CLI::App& cmd) {
  prepare_output(o.out, o.force);
  if (!o.labels_out.empty()) prepare_output(o.labels_out, o.force);
  const auto kind = parse_distortion_kind(o.kind);
  auto ds = load(o.images, o.labels, dataset_name(o.images));
  const auto out = distort(ds, kind, derive_seed(o.seed, "distort." + to_string(kind)));
  write_images(o.out, out.images);
  if (!o.labels_out.empty()) {
    if (!out.has_labels()) throw ConfigError("--labels-out needs --labels");
    write_labels(o.labels_out, *out.labels);
  }
  write_manifest(run_manifest_path(o.out), cmd);
  spdlog::info("wrote {} {}-distorted images to {}", out.size(), o.kind, o.out.string());
}

// ---------------------------------------------------------------- hist

struct HistOptions {
  fs::path model;
  fs::path id_images;
  fs::path ood_images;
  std::size_t bins = 30;
  std::size_t batch_size = 256;
  fs::path out_dir;
  bool force = false;
};

void cmd_hist(const HistOptions& o, const CLI::App& cmd) {
  if (o.out_dir.empty()) throw ConfigError("hist needs --out-dir");
  if (fs::exists(o.out_dir / "summary.csv") && !o.force) {
    throw ConfigError("refusing to overwrite histograms in " + o.out_dir.string() + " (pass --force)");
  }
  fs::create_directories(o.out_dir);
  const auto net = load_network(o.model);
  auto id = load(o.id_images, "", "id");
  auto ood = load(o.ood_images, "", "ood");
  const auto kind = FeatureKind::min_max();
  const auto fid = compute_features(net, id.images, kind, o.batch_size).features;
  const auto food = compute_features(net, ood.images, kind, o.batch_size).features;

  std::ofstream summary(o.out_dir / "summary.csv", std::ios::trunc);
  summary << "layer,stat,id_p01,id_p99,ood_outside_band\n";
  for (std::size_t j = 0; j < net.activation_count(); ++j) {
    std::ofstream out(o.out_dir / ("layer" + std::to_string(j + 1) + ".csv"), std::ios::trunc);
    if (!out) throw ConfigError("cannot write histograms into " + o.out_dir.string());
    out << "series,bin_left,bin_right,count\n";
    for (std::size_t s = 0; s < 2; ++s) {
      const char* stat = s == 0 ? "min" : "max";
      const auto a = fid.column(2 * j + s), b = food.column(2 * j + s);
      const auto [alo, ahi] = std::minmax_element(a.begin(), a.end());
      const auto [blo, bhi] = std::minmax_element(b.begin(), b.end());
      const double lo = std::min(*alo, *blo), hi = std::max(*ahi, *bhi);
      for (const auto& [series, values] : {std::pair{"id", &a}, std::pair{"ood", &b}}) {
        const auto h = histogram(*values, o.bins, lo, hi);
        for (std::size_t k = 0; k < h.counts.size(); ++k) {
          out << series << '_' << stat << ',' << format_double(h.edges[k]) << ','
              << format_double(h.edges[k + 1]) << ',' << h.counts[k] << '\n';
        }
      }
      const double p01 = lower_quantile(a, 0.01), p99 = lower_quantile(a, 0.99);
      const auto outside = std::count_if(b.begin(), b.end(), [&](double v) { return v < p01 || v > p99; });
      const double frac = static_cast<double>(outside) / static_cast<double>(b.size());
      summary << j + 1 << ',' << stat << ',' << format_double(p01) << ',' << format_double(p99) << ','
              << format_double(frac) << '\n';
      spdlog::info("layer {} {}: {:.1f}% of OOD outside the ID [1st, 99th] percentile band", j + 1, stat,
                   100.0 * frac);
    }
  }
  write_manifest(o.out_dir / "run.ini", cmd);
}

// ---------------------------------------------------------------- driver

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help) {
  auto* sub = app.add_subcommand(name, help);
  sub->set_config("--config", "", "key=value config file; flags override it");
  return sub;
}

void add_force(CLI::App* sub, bool& force) {
  sub->add_flag("--force", force, "Overwrite existing outputs");
}

bool given_on_command_line(const std::vector<std::string>& args, std::size_t from, const std::string& flag) {
  for (std::size_t i = from; i < args.size(); ++i) {
    if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) return true;
  }
  return false;
}

// CLI11 only reads the top-level config file, so a subcommand's --config is
// expanded into flags here. Flags already on the command line win.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args) {
  std::size_t sub_at = 1;
  while (sub_at < args.size() && app.get_subcommand_no_throw(args[sub_at]) == nullptr) ++sub_at;
  if (sub_at >= args.size()) return args;
  const CLI::App* sub = app.get_subcommand_no_throw(args[sub_at]);
  std::string path;
  for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  if (!fs::is_regular_file(path)) throw CLI::FileError::Missing(path);

  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_file(path)) {
    if (!(item.parents.empty() || (item.parents.size() == 1 && item.parents[0] == sub->get_name()))) continue;
    if (item.name == "config") continue;
    const std::string flag = "--" + item.name;
    const CLI::Option* op = sub->get_option_no_throw(flag);
    if (op == nullptr || given_on_command_line(args, sub_at + 1, flag)) continue;
    if (op->get_expected_max() == 0) {
      if (item.inputs.size() == 1 && CLI::detail::to_flag_value(item.inputs[0]) > 0) extra.push_back(flag);
    } else if (op->get_expected_max() == 1) {
      std::string joined;
      for (const auto& v : item.inputs) joined += (joined.empty() ? "" : ",") + v;
      extra.insert(extra.end(), {flag, joined});
    } else {
      for (const auto& v : item.inputs) extra.insert(extra.end(), {flag, v});
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, extra.begin(), extra.end());
  return args;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kConfigError;
  if (dynamic_cast<const NumericalError*>(&e)) return kNumericalError;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
      dynamic_cast<const ContractError*>(&e)) {
    return kDataError;
  }
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kDataError;
  return 1;
}

}  // namespace

std::vector<ScoreRow> read_scores(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open score file " + path.string(), 0);
  std::string line;
  std::uint64_t offset = 0;
  if (!std::getline(in, line) || trim(line) != "image_id,score,decision") {
    throw FormatError("score file " + path.string() + " must start with image_id,score,decision", 0);
  }
  offset += line.size() + 1;
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (!t.empty()) {
      const auto c = split(t, ',');
      const auto id = c.size() == 3 ? parse_int(c[0]) : std::nullopt;
      const auto s = c.size() == 3 ? parse_double(c[1]) : std::nullopt;
      if (!id || !s) throw FormatError("malformed score row in " + path.string(), offset);
      rows.push_back({*id, *s, std::string(c[2])});
    }
    offset += line.size() + 1;
  }
  return rows;
}

std::vector<double> read_score_values(const fs::path& path) {
  std::vector<double> out;
  for (const auto& r : read_scores(path)) out.push_back(r.score);
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"xood: extreme-value out-of-distribution detection"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  GenOptions gen;
  auto* c_gen = add_command(app, "gen", "Generate a fixture dataset (shapes, blobs, silhouettes, noise)");
  c_gen->add_option("--kind", gen.kind, "shapes|blobs|silhouettes|uniform|gaussian")->capture_default_str();
  c_gen->add_option("--count", gen.count, "Number of images")->capture_default_str();
  c_gen->add_option("--side", gen.side, "Image side (default 28, blobs 12)")->capture_default_str();
  c_gen->add_option("--seed", gen.seed)->capture_default_str();
  c_gen->add_option("--out", gen.out, "Images (.xten, or .idx for IDX)")->required();
  c_gen->add_option("--labels-out", gen.labels_out, "Labels (text, or .idx for IDX)");
  add_force(c_gen, gen.force);

  TrainOptions train;
  auto* c_train = add_command(app, "train", "Train the reference CNN");
  c_train->add_option("--images", train.images)->required();
  c_train->add_option("--labels", train.labels)->required();
  c_train->add_option("--out", train.out, "Model file")->required();
  c_train->add_option("--epochs", train.epochs)->capture_default_str();
  c_train->add_option("--learning-rate", train.learning_rate)->capture_default_str();
  c_train->add_option("--batch-size", train.batch_size)->capture_default_str();
  c_train->add_option("--calibration-fraction", train.calibration_fraction,
                      "Share of the data held out for detector calibration")
      ->capture_default_str();
  c_train->add_option("--min-accuracy", train.min_accuracy, "Fail when training accuracy is lower")
      ->capture_default_str();
  c_train->add_option("--classes", train.classes, "Class count (default: max label + 1)")->capture_default_str();
  c_train->add_option("--seed", train.seed)->capture_default_str();
  add_force(c_train, train.force);

  ExtractOptions ext;
  auto* c_ext = add_command(app, "extract", "Extract per-layer activation statistics");
  c_ext->add_option("--model", ext.model)->required();
  c_ext->add_option("--images", ext.images)->required();
  c_ext->add_option("--kind", ext.kind, "minmax|min|max|positivity|sum|l1..l3|split-l1..split-l3")
      ->capture_default_str();
  c_ext->add_option("--out", ext.out, "Feature table (.csv or .xten)")->required();
  c_ext->add_option("--batch-size", ext.batch_size)->capture_default_str();
  add_force(c_ext, ext.force);

  FitCliOptions fit_m_opts, fit_l_opts;
  auto add_fit = [&](const std::string& name, const std::string& help, FitCliOptions& f) {
    auto* c = add_command(app, name, help);
    c->add_option("--model", f.model)->required();
    c->add_option("--images", f.images, "Training images (split per the model's recorded seed)")->required();
    c->add_option("--labels", f.labels)->required();
    c->add_option("--calibration-images", f.calibration_images, "Explicit calibration set");
    c->add_option("--calibration-labels", f.calibration_labels);
    c->add_option("--kind", f.kind)->capture_default_str();
    c->add_option("--C", f.c, "XOOD-M covariance regularisation")->capture_default_str();
    c->add_option("--lambda-grid", f.lambda_grid, "XOOD-L L2 strengths")->capture_default_str();
    c->add_option("--distortions", f.distortions, "XOOD-L distortion folds")->capture_default_str();
    c->add_option("--batch-size", f.batch_size)->capture_default_str();
    c->add_option("--seed", f.seed)->capture_default_str();
    c->add_option("--out", f.out, "Detector file")->required();
    add_force(c, f.force);
    return c;
  };
  auto* c_fit_m = add_fit("fit-m", "Fit the XOOD-M detector", fit_m_opts);
  auto* c_fit_l = add_fit("fit-l", "Fit the XOOD-L detector", fit_l_opts);

  ScoreOptions score;
  auto* c_score = add_command(app, "score", "Score a dataset with a detector or the softmax baseline");
  c_score->add_option("--model", score.model)->required();
  c_score->add_option("--detector", score.detector);
  c_score->add_option("--method", score.method, "msp, or m|l to check the detector type");
  c_score->add_option("--images", score.images)->required();
  c_score->add_option("--out", score.out, "Score CSV")->required();
  c_score->add_option("--batch-size", score.batch_size)->capture_default_str();
  add_force(c_score, score.force);

  EvalOptions ev;
  auto* c_eval = add_command(app, "eval", "Compute AUROC, TNR@95TPR and detection accuracy");
  c_eval->add_option("--id", ev.id, "In-distribution score CSV")->required();
  c_eval->add_option("--ood", ev.ood, "OOD score CSV (repeatable)")->required();
  c_eval->add_option("--ood-name", ev.ood_names, "Name per --ood file (default: file stem)");
  c_eval->add_option("--method", ev.method)->capture_default_str();
  c_eval->add_option("--in-name", ev.in_name, "In-distribution name (default: file stem)");
  c_eval->add_option("--out", ev.out, "Metrics CSV")->required();
  c_eval->add_flag("--append", ev.append, "Add rows to an existing metrics CSV");
  add_force(c_eval, ev.force);

  BenchOptions bench;
  auto* c_bench = add_command(app, "bench", "Time the baseline forward pass against XOOD scoring");
  c_bench->add_option("--model", bench.model)->required();
  c_bench->add_option("--detector-m", bench.detector_m);
  c_bench->add_option("--detector-l", bench.detector_l);
  c_bench->add_option("--images", bench.images)->required();
  c_bench->add_option("--repetitions", bench.repetitions)->capture_default_str();
  c_bench->add_option("--warmup", bench.warmup)->capture_default_str();
  c_bench->add_option("--batch-size", bench.batch_size)->capture_default_str();
  c_bench->add_option("--widths", bench.widths, "Synthetic feature widths for the scaling rows")
      ->capture_default_str();
  c_bench->add_option("--scaling-rows", bench.scaling_rows)->capture_default_str();
  c_bench->add_option("--seed", bench.seed)->capture_default_str();
  c_bench->add_option("--out", bench.out, "Timing CSV")->required();
  add_force(c_bench, bench.force);

  DistortOptions dis;
  auto* c_dis = add_command(app, "distort", "Apply one distortion family to a dataset");
  c_dis->add_option("--images", dis.images)->required();
  c_dis->add_option("--labels", dis.labels);
  c_dis->add_option("--kind", dis.kind, "geometric|mixup|noise|blur")->required();
  c_dis->add_option("--seed", dis.seed)->capture_default_str();
  c_dis->add_option("--out", dis.out)->required();
  c_dis->add_option("--labels-out", dis.labels_out);
  add_force(c_dis, dis.force);

  HistOptions hist;
  auto* c_hist = add_command(app, "hist", "Export ID vs OOD extreme-value histograms per layer");
  c_hist->add_option("--model", hist.model)->required();
  c_hist->add_option("--id-images", hist.id_images)->required();
  c_hist->add_option("--ood-images", hist.ood_images)->required();
  c_hist->add_option("--bins", hist.bins)->capture_default_str();
  c_hist->add_option("--batch-size", hist.batch_size)->capture_default_str();
  c_hist->add_option("--out-dir", hist.out_dir)->required();
  add_force(c_hist, hist.force);

  std::vector<std::string> args(argv, argv + argc);
  try {
    args = expand_config(app, std::move(args));
    std::vector<char*> expanded;
    for (auto& a : args) expanded.push_back(a.data());
    app.parse(static_cast<int>(expanded.size()), expanded.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*c_gen) cmd_gen(gen, *c_gen);
    else if (*c_train) cmd_train(train, *c_train);
    else if (*c_ext) cmd_extract(ext, *c_ext);
    else if (*c_fit_m) cmd_fit(Method::XoodM, fit_m_opts, *c_fit_m);
    else if (*c_fit_l) cmd_fit(Method::XoodL, fit_l_opts, *c_fit_l);
    else if (*c_score) cmd_score(score, *c_score);
    else if (*c_eval) cmd_eval(ev, *c_eval);
    else if (*c_bench) cmd_bench(bench, *c_bench);
    else if (*c_dis) cmd_distort(dis, *c_dis);
    else if (*c_hist) cmd_hist(hist, *c_hist);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code_for(e);
  }
  return kOk;
}

int run(std::vector<std::string> args) {
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return run(static_cast<int>(args.size()), argv.data());
}

}  // namespace xood::cli
