#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softsense/common/table.hpp"
#include "softsense/datagen/dataset.hpp"
#include "softsense/eval/eval.hpp"
#include "softsense/excitation/excitation.hpp"
#include "softsense/regress/train.hpp"
#include "softsense/wo/params.hpp"
#include "softsense/wo/simulator.hpp"

namespace softsense::cli {

/// Thrown for anything wrong with a config file or its references (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One experiment: the plant, one or more operation trajectories and the
/// scenario grid over label sets, noise tags, structures, models and alphas.
/// Paths in the file are relative to the file's directory.
struct ExperimentConfig {
  std::filesystem::path plant;  // empty: built-in plant constants
  std::vector<std::filesystem::path> trajectories;
  double horizon_h = 50.0;
  double output_dt = 10.0;  // s
  std::vector<int> sets{1, 2, 3, 4};
  std::vector<datagen::Noise> noise{datagen::Noise::Y, datagen::Noise::N};
  std::vector<datagen::Structure> structures{datagen::Structure::X, datagen::Structure::X5, datagen::Structure::XS};
  std::vector<regress::ModelKind> models{regress::ModelKind::SSDKL, regress::ModelKind::DKL, regress::ModelKind::GP};
  std::vector<double> alphas{0.1, 1.0, 10.0};
  std::vector<std::uint64_t> seeds{1};
  double label_scale = 1.0;
  std::size_t min_labels = 1;
  std::size_t unlabeled_cap = 0;  // 0 keeps every unlabeled row
  bool tune_aprbs = true;
  excitation::TuneOptions tune{};
  datagen::SteadyDetector steady{};
  regress::TrainOptions train{};
  std::filesystem::path output_dir;  // empty: $SOFTSENSE_OUT, then ./softsense-out
  std::size_t workers = 0;           // 0: hardware concurrency
  std::size_t prediction_csv_rows = 2000;

  /// Throws ConfigError.
  void validate() const;
  wo::PlantConfig plant_config() const;
  std::filesystem::path resolved_output_dir() const;
};

/// Reads and validates a config; every referenced file must exist.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const ExperimentConfig& c);

/// One grid cell: trajectory, scenario code and master seed.
struct Scenario {
  std::string trajectory;        // trajectory config name, e.g. "WO-1"
  std::size_t trajectory_index = 0;
  eval::ScenarioCode code{};
  std::uint64_t seed = 0;

  /// <trajectory>/seed-<seed>/<code>
  std::filesystem::path relative_dir() const;
};

/// Full product of the configured options. SSDKL contributes one entry per
/// alpha; DKL and GP one each. Order: trajectory, seed, set, noise,
/// structure, then SSDKL by ascending alpha, DKL, GP.
std::vector<Scenario> expand_scenarios(const ExperimentConfig& c, const std::vector<std::string>& trajectory_names);

/// Simulated operation for one noise tag. Y overlays the (tuned) APRBS on
/// the setpoint schedule; N runs the schedule alone.
struct TrajectoryRun {
  std::string name;
  datagen::Noise noise = datagen::Noise::Y;
  wo::SimulationResult sim;
  datagen::FeatureSeries series;
  std::vector<bool> steady;
  std::optional<excitation::TuneResult> tuning;
  std::size_t clamp_events = 0;
  std::uint64_t fingerprint = 0;  // over the feature series
};

TrajectoryRun run_trajectory(const ExperimentConfig& c, std::size_t trajectory_index, datagen::Noise noise);

/// Seeds, all derived from the master seed. Label placement depends on the
/// set only, so every structure, noise tag and model sees the same label
/// timestamps; training depends on the dataset code, so SSDKL, DKL and GP
/// of one dataset start from the same initializations.
std::uint64_t label_seed(std::uint64_t master, int set);
std::uint64_t training_seed(std::uint64_t master, const datagen::DatasetCode& code);
std::uint64_t subsample_seed(std::uint64_t master, const datagen::DatasetCode& code);

datagen::SensorDataset build_scenario_dataset(const ExperimentConfig& c, const TrajectoryRun& run,
                                              const datagen::DatasetCode& code, std::uint64_t master_seed);

/// Hash of everything that determines a scenario's outcome.
std::uint64_t scenario_fingerprint(const ExperimentConfig& c, const Scenario& s, const TrajectoryRun& run);

/// Trains, tests and exports one scenario into `dir` (model.bin,
/// training.json, prediction.bin, prediction.csv, then result.json last).
/// Training failures become a "failed" result instead of an exception.
eval::ScenarioResult run_scenario(const ExperimentConfig& c, const Scenario& s, const TrajectoryRun& run,
                                  const std::filesystem::path& dir);

nlohmann::json result_to_json(const eval::ScenarioResult& r);
eval::ScenarioResult result_from_json(const nlohmann::json& j);

struct GridOptions {
  std::size_t workers = 1;
  /// Stop scheduling after this many newly computed scenarios (interrupt drill).
  std::optional<std::size_t> stop_after;
  /// Polled between scenarios; set by a signal handler.
  const std::atomic<bool>* cancel = nullptr;
  std::function<void(const std::string&)> log;
};

struct GridSummary {
  std::size_t scenarios = 0;
  std::size_t computed = 0;
  std::size_t resumed = 0;
  std::size_t failed = 0;
  bool interrupted = false;
  std::vector<eval::ScenarioResult> results;  // in expansion order, completed only
};

/// Runs every scenario of the config under `out`. Completed scenarios whose
/// result.json carries the current fingerprint are reused, so an interrupted
/// run resumed later ends with the same results. Workers only touch their own
/// scenario directory; the calling thread alone writes manifest.json and
/// results.csv.
GridSummary run_grid(const ExperimentConfig& c, const std::filesystem::path& out, const GridOptions& opt);

/// Comparison tables and frequency x alpha matrices for every group in
/// results.csv, written under `out` as Markdown and CSV; also returns the
/// combined Markdown. Throws std::runtime_error on an empty result set.
std::string write_report(const std::filesystem::path& results_dir, const std::filesystem::path& out);

/// File contents hash (FNV-1a), for the manifest.
std::uint64_t file_fingerprint(const std::filesystem::path& path);
std::string hex(std::uint64_t v);

}  // namespace softsense::cli
