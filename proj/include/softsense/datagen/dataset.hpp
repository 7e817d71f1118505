#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "softsense/common/table.hpp"

namespace softsense::datagen {

/// Measured process variables, in feature-column order.
inline constexpr std::array<std::string_view, 8> kFeatureNames{"F1", "F2", "L",  "T4",
                                                               "FG", "FD", "FP", "Q"};
inline constexpr std::string_view kQualityName = "y";
inline constexpr std::size_t kLags = 5;

/// Features and quality on the simulation grid.
struct FeatureSeries {
  Eigen::VectorXd t;
  Eigen::MatrixXd X;  // rows = grid points, cols = kFeatureNames
  Eigen::VectorXd y;
  double dt = 0.0;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
  double horizon_hours() const;
};

/// Throws std::out_of_range naming the first missing column.
FeatureSeries select_features(const Table& trajectory);

enum class Structure { X, X5, XS };
enum class Noise { Y, N };

std::string_view to_string(Structure s);
std::string_view to_string(Noise n);
Structure structure_from_string(std::string_view s);
Noise noise_from_string(std::string_view s);

/// "<set>-<Y|N>-<X|X5|XS>"
struct DatasetCode {
  int set = 1;
  Noise noise = Noise::Y;
  Structure structure = Structure::X;

  std::string str() const;
  static DatasetCode parse(std::string_view code);
  bool operator==(const DatasetCode&) const = default;
};

/// Quality-label sampling frequency. Counts scale with the horizon; the
/// desk-scale `label_scale` multiplies every set alike and `min_count`
/// keeps the sparsest set trainable.
struct LabelSetSpec {
  int set = 1;
  double per_1000h = 10.0;
  double label_scale = 1.0;
  std::size_t min_count = 1;

  static double rate_for_set(int set);
  static LabelSetSpec for_set(int set, double label_scale = 1.0, std::size_t min_count = 1);
  std::size_t count(double horizon_hours) const;
};

/// Distinct indices drawn uniformly from `eligible`, sorted. Throws
/// std::invalid_argument when `count` exceeds the candidates.
std::vector<std::size_t> place_labels(const std::vector<std::size_t>& eligible, std::size_t count,
                                      std::uint64_t seed);

/// Held-out contiguous windows, as fractions of the horizon.
struct TestSplit {
  std::vector<std::pair<double, double>> windows{{0.35, 0.45}, {0.80, 0.90}};
  std::vector<bool> mask(std::size_t rows) const;
};

/// Per-column thresholds: `fraction` of each column's global range.
Eigen::VectorXd default_thresholds(const Eigen::MatrixXd& X, double fraction = 0.005);

/// Row k is steady when, over rows k-window+1..k, every column's peak-to-peak
/// range is below its threshold. The first window-1 rows are never steady.
std::vector<bool> detect_steady_state(const Eigen::MatrixXd& X, std::size_t window_rows,
                                      const Eigen::VectorXd& thresholds);

/// Trailing moving average over `rows` rows (shorter at the start).
Eigen::MatrixXd trailing_mean(const Eigen::MatrixXd& X, std::size_t rows);

/// Steady-state detection on the feature series: optional trailing mean
/// (so a small fast overlay does not hide the operating point), then the
/// peak-to-peak test with thresholds at `threshold_fraction` of each raw
/// column's global range.
struct SteadyDetector {
  double window = 30.0;      // s
  double smoothing = 1200.0;  // s, 0 disables
  double threshold_fraction = 0.005;

  std::vector<bool> detect(const FeatureSeries& series) const;
};

/// Row k of the result is [x_k, x_{k-1}, ..., x_{k-lags+1}] for k >= lags-1.
/// `rows` are indices into X.
Eigen::MatrixXd lagged_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows,
                            std::size_t lags = kLags);

struct MinMax {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  bool constant(Eigen::Index j) const { return !(hi[j] > lo[j]); }
  /// Constant columns map to 0.5.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& A) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& A) const;
  double apply(double v, Eigen::Index j = 0) const;
  double invert(double v, Eigen::Index j = 0) const;
  static MinMax fit(const Eigen::MatrixXd& A);
};

void to_json(nlohmann::json& j, const MinMax& m);
void from_json(const nlohmann::json& j, MinMax& m);

struct DatasetSpec {
  DatasetCode code{};
  double label_scale = 1.0;
  std::size_t min_labels = 1;
  std::uint64_t seed = 0;  // label placement
  TestSplit test{};
  SteadyDetector steady{};
};

struct Normalization {
  MinMax x;
  MinMax y;
  std::vector<std::string> constant_columns;
  std::size_t test_values_out_of_range = 0;
};

/// Labeled, unlabeled and test pools for one scenario. Feature matrices are
/// normalized with `norm`; labels too. Row vectors hold trajectory indices.
struct SensorDataset {
  DatasetCode code{};
  std::vector<std::string> feature_names;
  Eigen::MatrixXd X_L, X_U, X_test;
  Eigen::VectorXd y_L, y_test;
  std::vector<std::size_t> label_rows, unlabeled_rows, test_rows;
  Normalization norm;
  /// Trajectory-wide quality range, used only to report RMSE on a common scale.
  double y_ref_min = 0.0;
  double y_ref_max = 1.0;
  double steady_fraction = 1.0;  // over non-test rows, for reporting
  std::uint64_t seed = 0;
  double dt = 0.0;

  std::size_t m() const { return static_cast<std::size_t>(X_L.rows()); }
  std::size_t n() const { return static_cast<std::size_t>(X_U.rows()); }
};

/// Builds the labeled/unlabeled/test pools for a scenario from one
/// trajectory. Label timestamps depend only on (set, seed, test split), so
/// the X, X5 and XS variants of a scenario share them; XS then drops every
/// non-steady row from both training pools. Throws std::runtime_error when
/// XS leaves no labeled row.
SensorDataset build_dataset(const FeatureSeries& series, const DatasetSpec& spec);

/// Keeps at most `max_count` unlabeled rows, drawn uniformly; labeled and test
/// rows are untouched. Row order is preserved.
SensorDataset subsample_unlabeled(const SensorDataset& d, std::size_t max_count, std::uint64_t seed);

/// Feature rows for arbitrary trajectory indices, structured like `d` and
/// normalized with its metadata (for full-trajectory prediction).
Eigen::MatrixXd structured_features(const FeatureSeries& series, const SensorDataset& d,
                                    const std::vector<std::size_t>& rows);

/// dataset/X.bin (columnar: trajectory row, t, pool, features), labels.csv
/// (t, y for the labeled pool, physical units) and meta.json.
void save_dataset(const std::filesystem::path& dir, const SensorDataset& d, const FeatureSeries& series);
SensorDataset load_dataset(const std::filesystem::path& dir);

}  // namespace softsense::datagen
