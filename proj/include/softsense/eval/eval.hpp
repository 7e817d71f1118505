#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "softsense/common/table.hpp"
#include "softsense/datagen/dataset.hpp"
#include "softsense/regress/model.hpp"

namespace softsense::eval {

using Eigen::VectorXd;

/// sqrt(mean((p - t)^2)). Throws std::invalid_argument on a length mismatch
/// or empty input.
double rmse(const VectorXd& predictions, const VectorXd& truth);

/// Labels in the dataset's normalized units -> y scaled by the trajectory's
/// full y range, the common scale every reported RMSE uses.
VectorXd to_reference_scale(const datagen::SensorDataset& d, const VectorXd& y_normalized);

/// Test RMSE on the reference scale.
double test_rmse(const regress::RegressorModel& model, const datagen::SensorDataset& d);

/// Model prediction at every grid point from the first row the structure
/// allows (row kLags-1 for X5, row 0 otherwise), in physical y units.
struct TrajectoryPrediction {
  std::vector<std::size_t> rows;
  VectorXd t, truth, mean, std;

  /// Columns t, y, y_hat, y_std on the trajectory grid (starting at the first row).
  Table to_table(double dt) const;
};

/// Features are built and normalized like `d`, then predicted in chunks of
/// `chunk` rows. Throws std::invalid_argument when the model's input width
/// does not match the dataset structure.
TrajectoryPrediction predict_trajectory(const regress::RegressorModel& model, const datagen::FeatureSeries& series,
                                        const datagen::SensorDataset& d, std::size_t chunk = 4096);

struct SegmentErrors {
  std::optional<double> steady_mae;
  std::optional<double> transient_mae;
  /// transient / steady; absent when either class is absent or steady MAE is 0.
  std::optional<double> ratio;
  /// Set when the steady MAE is 0 and the transient MAE is not.
  bool ratio_infinite = false;
  std::size_t steady_count = 0;
  std::size_t transient_count = 0;
};

/// Mean absolute error split by the steady mask. Throws std::invalid_argument
/// when the lengths differ.
SegmentErrors segment_error_decomposition(const VectorXd& predicted, const VectorXd& truth,
                                          const std::vector<bool>& steady);

/// "<set>-<Y|N>-<X|X5|XS>-<S|D|G>[-<alpha>]", alpha only for SSDKL.
struct ScenarioCode {
  datagen::DatasetCode data{};
  regress::ModelKind kind = regress::ModelKind::SSDKL;
  double alpha = 0.0;

  std::string str() const;
  static ScenarioCode parse(std::string_view code);
  bool operator==(const ScenarioCode&) const = default;
};

/// Shortest decimal form of alpha used in codes ("0.1", "1", "10").
std::string format_alpha(double alpha);

struct ScenarioResult {
  std::string trajectory;
  ScenarioCode code{};
  std::uint64_t seed = 0;
  std::vector<double> validation_rmses;  // per restart, NaN for failed restarts
  std::size_t selected_restart = 0;
  double test_rmse = 0.0;
  std::optional<double> relative_to_dkl;  // percent
  std::size_t labels = 0;
  std::size_t unlabeled = 0;
  double wall_seconds = 0.0;
  std::string prediction_path;
  std::string status = "ok";  // "ok" or "failed"
  std::string error;
};

/// Fills relative_to_dkl = 100 (rmse - rmse_DKL) / rmse_DKL wherever a
/// successful DKL result shares (trajectory, dataset code, seed).
void assign_relative_to_dkl(std::vector<ScenarioResult>& results);

/// One row per result, full precision. Round-trips through read_results_csv.
void write_results_csv(const std::filesystem::path& path, const std::vector<ScenarioResult>& results);
std::vector<ScenarioResult> read_results_csv(const std::filesystem::path& path);

/// Comparison table: rows SSDKL (ascending
/// alpha), DKL, GP; columns X, X5, XS (those present).
struct ComparisonTable {
  std::string trajectory;
  int set = 1;
  datagen::Noise noise = datagen::Noise::Y;
  std::uint64_t seed = 0;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  /// cells[r][c]: test RMSE and percent relative to DKL, when present.
  struct Cell {
    std::optional<double> rmse;
    std::optional<double> relative;
    bool is_min = false;
  };
  std::vector<std::vector<Cell>> cells;
};

/// Throws std::invalid_argument when a column has entries but no DKL
/// baseline, or when nothing matches. Per-column minimum ties go to the
/// earliest row, i.e. smaller alpha, then DKL, then GP.
ComparisonTable build_comparison_table(const std::vector<ScenarioResult>& results, const std::string& trajectory,
                                       int set, datagen::Noise noise, std::uint64_t seed);

/// Markdown: "rmse (+x.x %)" with 5 decimals, minimum in bold.
std::string render_markdown(const ComparisonTable& t);
/// row,column,rmse,relative_percent,is_min with full precision.
std::string render_csv(const ComparisonTable& t);

/// Cells of a Markdown table (header first, separator dropped, bold removed).
std::vector<std::vector<std::string>> parse_markdown_table(const std::string& text);

/// 100 x test RMSE of SSDKL by label set (rows) and alpha (columns).
struct FrequencyAlphaMatrix {
  std::string trajectory;
  datagen::Noise noise = datagen::Noise::Y;
  datagen::Structure structure = datagen::Structure::X;
  std::uint64_t seed = 0;
  std::vector<int> sets;
  std::vector<double> alphas;
  std::vector<std::vector<std::optional<double>>> values;
};

FrequencyAlphaMatrix build_frequency_alpha_matrix(const std::vector<ScenarioResult>& results,
                                                  const std::string& trajectory, datagen::Noise noise,
                                                  datagen::Structure structure, std::uint64_t seed);
std::string render_markdown(const FrequencyAlphaMatrix& m);
std::string render_csv(const FrequencyAlphaMatrix& m);

}  // namespace softsense::eval
