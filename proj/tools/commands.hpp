#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace xood::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericalError = 4;

/// Runs the driver with argv-style arguments (args[0] is the program name).
int run(int argc, char** argv);
int run(std::vector<std::string> args);

/// Score file rows in file order.
struct ScoreRow {
  long long image_id = 0;
  double score = 0.0;
  std::string decision;
};

std::vector<ScoreRow> read_scores(const std::filesystem::path& path);
std::vector<double> read_score_values(const std::filesystem::path& path);

/// Path of the manifest echoed next to an output file: "<out>.run.ini".
std::filesystem::path run_manifest_path(const std::filesystem::path& out);

}  // namespace xood::cli
