// softsense: simulate, tune, build datasets, train and run scenario grids.

#include <atomic>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "softsense/cli/experiment.hpp"
#include "softsense/common/json_util.hpp"

namespace fs = std::filesystem;
using namespace softsense;
using nlohmann::json;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_signal(int) { g_cancel = true; }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> horizon_h;
  std::string out;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* app, Common& c, bool need_config = true) {
  auto* opt = app->add_option("-c,--config", c.config, "Experiment config (JSON)");
  if (need_config) opt->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Override the master seed(s) with this one");
  app->add_option("--horizon", c.horizon_h, "Override the horizon in hours");
  app->add_option("-o,--out", c.out, "Output directory (default: config, then $SOFTSENSE_OUT)");
  app->add_option("-j,--workers", c.workers, "Concurrent scenarios (default: available cores)");
}

cli::ExperimentConfig load(const Common& c) {
  cli::ExperimentConfig cfg = cli::load_experiment_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (c.horizon_h) cfg.horizon_h = *c.horizon_h;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.workers) cfg.workers = *c.workers;
  cfg.validate();
  return cfg;
}

std::size_t worker_count(const cli::ExperimentConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::size_t trajectory_index(const cli::ExperimentConfig& cfg, std::size_t i) {
  if (i >= cfg.trajectories.size())
    throw cli::ConfigError("trajectory index " + std::to_string(i) + " out of range (config lists " +
                           std::to_string(cfg.trajectories.size()) + ")");
  return i;
}

int cmd_simulate(const Common& c, const std::string& noise_tag, std::size_t traj) {
  const auto cfg = load(c);
  const auto noise = datagen::noise_from_string(noise_tag);
  const auto run = cli::run_trajectory(cfg, trajectory_index(cfg, traj), noise);
  const fs::path dir = cfg.resolved_output_dir() / run.name / ("simulate-" + noise_tag);
  fs::create_directories(dir);
  write_columnar(dir / "trajectory.bin", run.sim.trajectory);
  write_csv(dir / "trajectory.csv", run.sim.trajectory,
            std::max<std::size_t>(1, run.series.rows() / cfg.prediction_csv_rows));
  json events = json::array();
  for (const auto& e : run.sim.events)
    events.push_back({{"start", e.start}, {"end", e.end}, {"peak_temperature", e.peak_temperature}});
  std::size_t episodes = 0;
  for (std::size_t k = 0; k < run.steady.size(); ++k)
    if (run.steady[k] && (k == 0 || !run.steady[k - 1])) ++episodes;
  const double y_lo = run.series.y.minCoeff(), y_hi = run.series.y.maxCoeff();
  json summary = {{"trajectory", run.name},
                  {"noise", noise_tag},
                  {"horizon_h", cfg.horizon_h},
                  {"rows", run.series.rows()},
                  {"constraint_events", events},
                  {"clamp_events", run.clamp_events},
                  {"steady_episodes", episodes},
                  {"y_min", y_lo},
                  {"y_max", y_hi},
                  {"accepted_steps", run.sim.stats.accepted},
                  {"rejected_steps", run.sim.stats.rejected}};
  if (run.tuning) summary["aprbs_scale"] = run.tuning->scale;
  write_json_file(dir / "summary.json", summary);
  std::cout << run.name << " (" << noise_tag << "): " << cfg.horizon_h << " h, " << run.series.rows() << " rows, "
            << run.sim.events.size() << " constraint events, " << episodes << " settling episodes, y in [" << y_lo
            << ", " << y_hi << "]\n"
            << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_tune(const Common& c) {
  const auto cfg = load(c);
  const auto plant = cfg.plant_config();
  json all = json::array();
  for (const auto& path : cfg.trajectories) {
    const auto tc = excitation::load_trajectory_config(path, plant, cfg.horizon_h * 3600.0);
    if (!(tc.target_fluctuation > 0.0)) throw cli::ConfigError(path.string() + ": no target_fluctuation");
    const auto r = excitation::tune_amplitude(tc.aprbs, tc.target_fluctuation, plant, cfg.tune);
    json amps = json::object();
    for (const auto& s : r.specs) amps[std::string(wo::kInputNames[static_cast<std::size_t>(s.variable)])] = s.amplitude;
    all.push_back({{"trajectory", tc.name},
                   {"target", r.target},
                   {"fluctuation", r.fluctuation},
                   {"scale", r.scale},
                   {"probes", r.probes.size()},
                   {"amplitudes", amps}});
    std::cout << tc.name << ": scale " << r.scale << ", fluctuation " << 100.0 * r.fluctuation << " % (target "
              << 100.0 * r.target << " %) after " << r.probes.size() << " probes\n";
  }
  write_json_file(cfg.resolved_output_dir() / "aprbs_tuning.json", all);
  return 0;
}

int cmd_dataset(const Common& c, const std::string& code_str, std::size_t traj) {
  const auto cfg = load(c);
  const auto code = datagen::DatasetCode::parse(code_str);
  const auto run = cli::run_trajectory(cfg, trajectory_index(cfg, traj), code.noise);
  for (std::uint64_t seed : cfg.seeds) {
    const auto d = cli::build_scenario_dataset(cfg, run, code, seed);
    const fs::path dir =
        cfg.resolved_output_dir() / run.name / ("seed-" + std::to_string(seed)) / "datasets" / code.str();
    datagen::save_dataset(dir, d, run.series);
    std::cout << run.name << " " << code.str() << " seed " << seed << ": " << d.m() << " labeled, " << d.n()
              << " unlabeled, " << d.X_test.rows() << " test rows -> " << dir.string() << "\n";
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& code_str, std::size_t traj) {
  const auto cfg = load(c);
  const auto code = eval::ScenarioCode::parse(code_str);
  const auto run = cli::run_trajectory(cfg, trajectory_index(cfg, traj), code.data.noise);
  int status = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const cli::Scenario s{run.name, traj, code, seed};
    const fs::path dir = cfg.resolved_output_dir() / s.relative_dir();
    const auto r = cli::run_scenario(cfg, s, run, dir);
    if (r.status == "ok") {
      std::cout << s.relative_dir().generic_string() << ": test RMSE " << r.test_rmse << " (" << r.labels
                << " labels, restart " << r.selected_restart << " selected, " << r.wall_seconds << " s)\n";
    } else {
      std::cerr << s.relative_dir().generic_string() << " failed: " << r.error << "\n";
      status = 1;
    }
  }
  return status;
}

int cmd_grid(const Common& c, std::optional<std::size_t> stop_after) {
  const auto cfg = load(c);
  const fs::path out = cfg.resolved_output_dir();
  cli::GridOptions opt;
  opt.workers = worker_count(cfg);
  opt.stop_after = stop_after;
  opt.cancel = &g_cancel;
  opt.log = [](const std::string& m) { std::cerr << m << "\n"; };
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  write_json_file(out / "config.json", cli::to_json(cfg));
  const auto s = cli::run_grid(cfg, out, opt);
  std::cout << s.scenarios << " scenarios: " << s.computed << " computed, " << s.resumed << " reused, " << s.failed
            << " failed" << (s.interrupted ? ", interrupted (rerun to resume)" : "") << "\n";
  if (!s.results.empty()) {
    std::size_t ok = 0;
    for (const auto& r : s.results) ok += r.status == "ok";
    if (ok > 0) cli::write_report(out, out / "report");
  }
  return s.failed > 0 || s.interrupted ? 1 : 0;
}

int cmd_report(const std::string& results, const std::string& out) {
  const fs::path dest = out.empty() ? fs::path(results) / "report" : fs::path(out);
  std::cout << cli::write_report(results, dest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-sensor experiments on a simulated Williams-Otto plant"};
  app.require_subcommand(1);
  Common common;
  std::string noise = "Y", code, results, report_out;
  std::size_t traj = 0;
  std::optional<std::size_t> stop_after;

  auto* sim = app.add_subcommand("simulate", "Simulate one trajectory and write it with an event summary");
  add_common(sim, common);
  sim->add_option("--noise", noise, "Y (schedule + APRBS) or N (schedule only)")->check(CLI::IsMember({"Y", "N"}));
  sim->add_option("--trajectory", traj, "Index into the config's trajectory list");

  auto* tune = app.add_subcommand("tune-aprbs", "Tune the APRBS amplitude to each trajectory's target");
  add_common(tune, common);

  auto* ds = app.add_subcommand("dataset", "Build and save one dataset, e.g. 1-Y-XS");
  add_common(ds, common);
  ds->add_option("code", code, "Dataset code <set>-<Y|N>-<X|X5|XS>")->required();
  ds->add_option("--trajectory", traj, "Index into the config's trajectory list");

  auto* tr = app.add_subcommand("train", "Train and evaluate one scenario, e.g. 1-Y-XS-S-10");
  add_common(tr, common);
  tr->add_option("code", code, "Scenario code <set>-<Y|N>-<X|X5|XS>-<S|D|G>[-alpha]")->required();
  tr->add_option("--trajectory", traj, "Index into the config's trajectory list");

  auto* grid = app.add_subcommand("grid", "Run (or resume) the full scenario grid and write the report");
  add_common(grid, common);
  grid->add_option("--stop-after", stop_after, "Stop after computing this many scenarios (resume drill)");

  auto* rep = app.add_subcommand("report", "Render comparison tables from a results directory");
  rep->add_option("results", results, "Directory holding results.csv")->required()->check(CLI::ExistingDirectory);
  rep->add_option("-o,--out", report_out, "Report directory (default: <results>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) return cmd_simulate(common, noise, traj);
    if (*tune) return cmd_tune(common);
    if (*ds) return cmd_dataset(common, code, traj);
    if (*tr) return cmd_train(common, code, traj);
    if (*grid) return cmd_grid(common, stop_after);
    if (*rep) return cmd_report(results, report_out);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
