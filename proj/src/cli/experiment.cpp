#include "softsense/cli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "softsense/common/json_util.hpp"
#include "softsense/common/rng.hpp"
#include "softsense/regress/model_io.hpp"

namespace softsense::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using datagen::Noise;
using datagen::Structure;
using regress::ModelKind;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return fnv1a(s.str());
}

namespace {

// Writes next to the target and renames, so readers never see half a file.
void write_atomically(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

template <class T, class Parse>
std::vector<T> parse_list(const json& j, const char* key, Parse parse) {
  std::vector<T> out;
  for (const auto& v : j.at(key)) out.push_back(parse(v));
  return out;
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("experiment config: " + m); };
  if (trajectories.empty()) fail("at least one trajectory is required");
  for (const auto& t : trajectories)
    if (!fs::exists(t)) fail("trajectory config not found: " + t.string());
  if (!plant.empty() && !fs::exists(plant)) fail("plant config not found: " + plant.string());
  if (!(horizon_h > 0.0) || !std::isfinite(horizon_h)) fail("horizon_h must be > 0");
  if (!(output_dt > 0.0) || output_dt > horizon_h * 3600.0) fail("output_dt must lie in (0, horizon]");
  if (sets.empty() || noise.empty() || structures.empty() || models.empty() || seeds.empty())
    fail("sets, noise, structures, models and seeds must be nonempty");
  for (int s : sets)
    if (s < 1 || s > 4) fail("label sets are 1..4, got " + std::to_string(s));
  auto unique = [](auto v) {
    std::sort(v.begin(), v.end());
    return std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!unique(sets) || !unique(noise) || !unique(structures) || !unique(models) || !unique(seeds) || !unique(alphas))
    fail("list entries must be unique");
  const bool ssdkl = std::find(models.begin(), models.end(), ModelKind::SSDKL) != models.end();
  if (ssdkl && alphas.empty()) fail("alphas must be nonempty when SSDKL is selected");
  for (double a : alphas)
    if (!(a >= 0.0) || !std::isfinite(a)) fail("alphas must be finite and >= 0");
  if (!(label_scale > 0.0)) fail("label_scale must be > 0");
  if (prediction_csv_rows < 1) fail("prediction_csv_rows must be >= 1");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

wo::PlantConfig ExperimentConfig::plant_config() const {
  if (plant.empty()) return wo::PlantConfig{};
  try {
    return wo::load_plant_config(plant);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

fs::path ExperimentConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  if (const char* env = std::getenv("SOFTSENSE_OUT"); env && *env) return env;
  return "softsense-out";
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base) {
  ExperimentConfig c;
  try {
    reject_unknown(j, "experiment config",
                   {"plant", "trajectories", "horizon_h", "output_dt", "sets", "noise", "structures", "models",
                    "alphas", "seeds", "seed", "label_scale", "min_labels", "unlabeled_cap", "tune_aprbs", "tune",
                    "steady", "train", "output_dir", "workers", "prediction_csv_rows"});
    if (j.contains("plant")) c.plant = resolve(base, j.at("plant").get<std::string>());
    if (!j.contains("trajectories")) throw ConfigError("experiment config: 'trajectories' is required");
    const json& tr = j.at("trajectories");
    if (tr.is_string())
      c.trajectories.push_back(resolve(base, tr.get<std::string>()));
    else
      for (const auto& t : tr) c.trajectories.push_back(resolve(base, t.get<std::string>()));
    read_optional(j, "horizon_h", c.horizon_h);
    read_optional(j, "output_dt", c.output_dt);
    read_optional(j, "sets", c.sets);
    if (j.contains("noise"))
      c.noise = parse_list<Noise>(j, "noise", [](const json& v) { return datagen::noise_from_string(v.get<std::string>()); });
    if (j.contains("structures"))
      c.structures = parse_list<Structure>(
          j, "structures", [](const json& v) { return datagen::structure_from_string(v.get<std::string>()); });
    if (j.contains("models"))
      c.models = parse_list<ModelKind>(
          j, "models", [](const json& v) { return regress::model_kind_from_string(v.get<std::string>()); });
    read_optional(j, "alphas", c.alphas);
    if (j.contains("seed") && j.contains("seeds")) throw ConfigError("experiment config: give 'seed' or 'seeds', not both");
    if (j.contains("seed")) c.seeds = {j.at("seed").get<std::uint64_t>()};
    read_optional(j, "seeds", c.seeds);
    read_optional(j, "label_scale", c.label_scale);
    read_optional(j, "min_labels", c.min_labels);
    read_optional(j, "unlabeled_cap", c.unlabeled_cap);
    read_optional(j, "tune_aprbs", c.tune_aprbs);
    if (j.contains("tune")) {
      const json& t = j.at("tune");
      reject_unknown(t, "tune", {"probe_horizon_h", "output_dt", "rel_tol", "max_iterations"});
      if (t.contains("probe_horizon_h")) c.tune.probe_horizon = 3600.0 * t.at("probe_horizon_h").get<double>();
      read_optional(t, "output_dt", c.tune.output_dt);
      read_optional(t, "rel_tol", c.tune.rel_tol);
      read_optional(t, "max_iterations", c.tune.max_iterations);
    }
    if (j.contains("steady")) {
      const json& s = j.at("steady");
      reject_unknown(s, "steady", {"window", "smoothing", "threshold_fraction"});
      read_optional(s, "window", c.steady.window);
      read_optional(s, "smoothing", c.steady.smoothing);
      read_optional(s, "threshold_fraction", c.steady.threshold_fraction);
    }
    if (j.contains("train")) c.train = j.at("train").get<regress::TrainOptions>();
    if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
    read_optional(j, "workers", c.workers);
    read_optional(j, "prediction_csv_rows", c.prediction_csv_rows);
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (!c.plant.empty()) j["plant"] = c.plant.string();
  j["trajectories"] = json::array();
  for (const auto& t : c.trajectories) j["trajectories"].push_back(t.string());
  j["horizon_h"] = c.horizon_h;
  j["output_dt"] = c.output_dt;
  j["sets"] = c.sets;
  for (auto n : c.noise) j["noise"].push_back(std::string(datagen::to_string(n)));
  for (auto s : c.structures) j["structures"].push_back(std::string(datagen::to_string(s)));
  for (auto m : c.models) j["models"].push_back(std::string(regress::to_string(m)));
  j["alphas"] = c.alphas;
  j["seeds"] = c.seeds;
  j["label_scale"] = c.label_scale;
  j["min_labels"] = c.min_labels;
  j["unlabeled_cap"] = c.unlabeled_cap;
  j["tune_aprbs"] = c.tune_aprbs;
  j["tune"] = {{"probe_horizon_h", c.tune.probe_horizon / 3600.0},
               {"output_dt", c.tune.output_dt},
               {"rel_tol", c.tune.rel_tol},
               {"max_iterations", c.tune.max_iterations}};
  j["steady"] = {{"window", c.steady.window},
                 {"smoothing", c.steady.smoothing},
                 {"threshold_fraction", c.steady.threshold_fraction}};
  j["train"] = c.train;
  j["output_dir"] = c.resolved_output_dir().string();
  j["workers"] = c.workers;
  j["prediction_csv_rows"] = c.prediction_csv_rows;
  return j;
}

fs::path Scenario::relative_dir() const {
  return fs::path(trajectory) / ("seed-" + std::to_string(seed)) / code.str();
}

std::vector<Scenario> expand_scenarios(const ExperimentConfig& c, const std::vector<std::string>& names) {
  if (names.size() != c.trajectories.size())
    throw std::invalid_argument("expand_scenarios: one name per trajectory expected");
  std::vector<double> alphas = c.alphas;
  std::sort(alphas.begin(), alphas.end());
  std::vector<int> sets = c.sets;
  std::sort(sets.begin(), sets.end());
  std::vector<std::pair<ModelKind, double>> models;
  for (ModelKind k : {ModelKind::SSDKL, ModelKind::DKL, ModelKind::GP}) {
    if (std::find(c.models.begin(), c.models.end(), k) == c.models.end()) continue;
    if (k == ModelKind::SSDKL)
      for (double a : alphas) models.emplace_back(k, a);
    else
      models.emplace_back(k, 0.0);
  }
  std::vector<Scenario> out;
  for (std::size_t t = 0; t < names.size(); ++t)
    for (std::uint64_t seed : c.seeds)
      for (int set : sets)
        for (Noise n : {Noise::Y, Noise::N}) {
          if (std::find(c.noise.begin(), c.noise.end(), n) == c.noise.end()) continue;
          for (Structure st : {Structure::X, Structure::X5, Structure::XS}) {
            if (std::find(c.structures.begin(), c.structures.end(), st) == c.structures.end()) continue;
            for (const auto& [kind, alpha] : models)
              out.push_back({names[t], t, eval::ScenarioCode{{set, n, st}, kind, alpha}, seed});
          }
        }
  return out;
}

TrajectoryRun run_trajectory(const ExperimentConfig& c, std::size_t index, Noise noise) {
  const wo::PlantConfig plant = c.plant_config();
  const double horizon = c.horizon_h * 3600.0;
  excitation::TrajectoryConfig cfg;
  try {
    cfg = excitation::load_trajectory_config(c.trajectories.at(index), plant, horizon);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  TrajectoryRun run;
  run.name = cfg.name;
  run.noise = noise;
  std::vector<excitation::AprbsSignal> signals;
  if (noise == Noise::Y) {
    std::vector<excitation::AprbsSpec> specs = cfg.aprbs;
    if (c.tune_aprbs && cfg.target_fluctuation > 0.0 && !specs.empty()) {
      run.tuning = excitation::tune_amplitude(specs, cfg.target_fluctuation, plant, c.tune);
      specs = run.tuning->specs;
    }
    for (const auto& s : specs) signals.push_back({s.variable, excitation::gen_aprbs(s, horizon), horizon});
  }
  const auto traj = excitation::compose_trajectory(cfg.schedule, signals);
  run.clamp_events = traj.clamps.size();
  wo::InputVector u0;
  std::copy(plant.nominal_inputs.begin(), plant.nominal_inputs.end(), u0.begin());
  run.sim = wo::simulate(wo::find_steady_state(u0, plant), traj.inputs, horizon, c.output_dt, plant);
  run.series = datagen::select_features(run.sim.trajectory);
  run.steady = c.steady.detect(run.series);
  std::string bytes(reinterpret_cast<const char*>(run.series.X.data()),
                    static_cast<std::size_t>(run.series.X.size()) * sizeof(double));
  bytes.append(reinterpret_cast<const char*>(run.series.y.data()),
               static_cast<std::size_t>(run.series.y.size()) * sizeof(double));
  run.fingerprint = fnv1a(bytes);
  return run;
}

std::uint64_t label_seed(std::uint64_t master, int set) {
  return derive_seed(master, "labels", static_cast<std::uint64_t>(set));
}

std::uint64_t training_seed(std::uint64_t master, const datagen::DatasetCode& code) {
  return derive_seed(master, "train", fnv1a(code.str()));
}

std::uint64_t subsample_seed(std::uint64_t master, const datagen::DatasetCode& code) {
  return derive_seed(master, "unlabeled", fnv1a(code.str()));
}

datagen::SensorDataset build_scenario_dataset(const ExperimentConfig& c, const TrajectoryRun& run,
                                              const datagen::DatasetCode& code, std::uint64_t master) {
  datagen::DatasetSpec spec;
  spec.code = code;
  spec.label_scale = c.label_scale;
  spec.min_labels = c.min_labels;
  spec.seed = label_seed(master, code.set);
  spec.steady = c.steady;
  datagen::SensorDataset d = datagen::build_dataset(run.series, spec);
  if (c.unlabeled_cap > 0 && d.n() > c.unlabeled_cap)
    d = datagen::subsample_unlabeled(d, c.unlabeled_cap, subsample_seed(master, code));
  return d;
}

std::uint64_t scenario_fingerprint(const ExperimentConfig& c, const Scenario& s, const TrajectoryRun& run) {
  regress::TrainOptions t = c.train;
  t.threads = 1;  // results do not depend on it
  const json j = {{"format", 1},
                  {"code", s.code.str()},
                  {"seed", s.seed},
                  {"trajectory", hex(run.fingerprint)},
                  {"label_scale", c.label_scale},
                  {"min_labels", c.min_labels},
                  {"unlabeled_cap", c.unlabeled_cap},
                  {"steady", {c.steady.window, c.steady.smoothing, c.steady.threshold_fraction}},
                  {"train", t}};
  return fnv1a(j.dump());
}

json result_to_json(const eval::ScenarioResult& r) {
  json vals = json::array();
  for (double v : r.validation_rmses) vals.push_back(std::isnan(v) ? json(nullptr) : json(v));
  json j = {{"trajectory", r.trajectory},
            {"code", r.code.str()},
            {"seed", r.seed},
            {"status", r.status},
            {"test_rmse", r.test_rmse},
            {"validation_rmses", vals},
            {"selected_restart", r.selected_restart},
            {"labels", r.labels},
            {"unlabeled", r.unlabeled},
            {"wall_seconds", r.wall_seconds},
            {"prediction_path", r.prediction_path},
            {"error", r.error}};
  if (r.relative_to_dkl) j["relative_to_dkl"] = *r.relative_to_dkl;
  return j;
}

eval::ScenarioResult result_from_json(const json& j) {
  eval::ScenarioResult r;
  r.trajectory = j.at("trajectory").get<std::string>();
  r.code = eval::ScenarioCode::parse(j.at("code").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.status = j.at("status").get<std::string>();
  r.test_rmse = j.at("test_rmse").get<double>();
  for (const auto& v : j.at("validation_rmses"))
    r.validation_rmses.push_back(v.is_null() ? std::nan("") : v.get<double>());
  r.selected_restart = j.at("selected_restart").get<std::size_t>();
  r.labels = j.at("labels").get<std::size_t>();
  r.unlabeled = j.at("unlabeled").get<std::size_t>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.prediction_path = j.at("prediction_path").get<std::string>();
  r.error = j.at("error").get<std::string>();
  if (j.contains("relative_to_dkl")) r.relative_to_dkl = j.at("relative_to_dkl").get<double>();
  return r;
}

eval::ScenarioResult run_scenario(const ExperimentConfig& c, const Scenario& s, const TrajectoryRun& run,
                                  const fs::path& dir) {
  const auto start = std::chrono::steady_clock::now();
  eval::ScenarioResult r;
  r.trajectory = s.trajectory;
  r.code = s.code;
  r.seed = s.seed;
  json segments;
  fs::create_directories(dir);
  fs::remove(dir / "result.json");
  try {
    const datagen::SensorDataset d = build_scenario_dataset(c, run, s.code.data, s.seed);
    r.labels = d.m();
    r.unlabeled = d.n();
    const double alpha = s.code.kind == ModelKind::SSDKL ? s.code.alpha : 0.0;
    const regress::TrainResult tr =
        regress::train(s.code.kind, d, alpha, c.train, training_seed(s.seed, s.code.data));
    for (const auto& rd : tr.restarts) r.validation_rmses.push_back(rd.ok ? rd.validation_rmse : std::nan(""));
    r.selected_restart = tr.selected;
    r.test_rmse = eval::test_rmse(tr.model, d);
    regress::save_model(dir / "model.bin", tr.model);
    write_json_file(dir / "training.json", regress::training_summary(tr, c.train));

    const auto pred = eval::predict_trajectory(tr.model, run.series, d);
    const Table table = pred.to_table(run.series.dt);
    write_columnar(dir / "prediction.bin", table);
    const std::size_t stride = std::max<std::size_t>(1, (pred.rows.size() + c.prediction_csv_rows - 1) /
                                                            c.prediction_csv_rows);
    write_csv(dir / "prediction.csv", table, stride);
    r.prediction_path = (s.relative_dir() / "prediction.bin").generic_string();

    std::vector<bool> steady;
    for (std::size_t k : pred.rows) steady.push_back(run.steady[k]);
    const auto e = eval::segment_error_decomposition(pred.mean, pred.truth, steady);
    segments = {{"steady_mae", e.steady_mae ? json(*e.steady_mae) : json(nullptr)},
                {"transient_mae", e.transient_mae ? json(*e.transient_mae) : json(nullptr)},
                {"steady_count", e.steady_count},
                {"transient_count", e.transient_count}};
  } catch (const std::exception& e) {
    r.status = "failed";
    r.error = e.what();
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json doc = {{"fingerprint", hex(scenario_fingerprint(c, s, run))}, {"result", result_to_json(r)}};
  if (!segments.is_null()) doc["segments"] = segments;
  write_atomically(dir / "result.json", doc.dump(2) + "\n");
  return r;
}

GridSummary run_grid(const ExperimentConfig& c, const fs::path& out, const GridOptions& opt) {
  const auto log = [&](const std::string& m) {
    if (opt.log) opt.log(m);
  };
  std::vector<std::string> names;
  const wo::PlantConfig plant = c.plant_config();
  for (const auto& p : c.trajectories) names.push_back(excitation::load_trajectory_config(p, plant, c.horizon_h * 3600.0).name);
  const std::vector<Scenario> scenarios = expand_scenarios(c, names);

  // Trajectories are simulated once per (trajectory, noise tag) and shared read-only.
  std::map<std::pair<std::size_t, Noise>, TrajectoryRun> runs;
  for (const auto& s : scenarios) {
    const auto key = std::make_pair(s.trajectory_index, s.code.data.noise);
    if (runs.count(key)) continue;
    log("simulating " + s.trajectory + " noise " + std::string(datagen::to_string(key.second)));
    TrajectoryRun run = run_trajectory(c, key.first, key.second);
    fs::create_directories(out / s.trajectory);
    write_columnar(out / s.trajectory / ("trajectory-" + std::string(datagen::to_string(key.second)) + ".bin"),
                   run.sim.trajectory);
    runs.emplace(key, std::move(run));
  }
  auto run_of = [&](const Scenario& s) -> const TrajectoryRun& {
    return runs.at({s.trajectory_index, s.code.data.noise});
  };

  GridSummary summary;
  summary.scenarios = scenarios.size();
  std::vector<std::optional<eval::ScenarioResult>> done(scenarios.size());
  std::vector<std::string> fingerprints(scenarios.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    fingerprints[i] = hex(scenario_fingerprint(c, scenarios[i], run_of(scenarios[i])));
    const fs::path rj = out / scenarios[i].relative_dir() / "result.json";
    if (fs::exists(rj)) {
      try {
        const json doc = read_json_file(rj);
        if (doc.at("fingerprint").get<std::string>() == fingerprints[i]) {
          eval::ScenarioResult r = result_from_json(doc.at("result"));
          if (r.status == "ok") {
            done[i] = std::move(r);
            ++summary.resumed;
            continue;
          }
        }
      } catch (const std::exception&) {
        // unreadable leftovers are recomputed
      }
    }
    pending.push_back(i);
  }
  log(std::to_string(scenarios.size()) + " scenarios, " + std::to_string(summary.resumed) + " reused, " +
      std::to_string(pending.size()) + " to run");

  json manifest = {{"format", 1}, {"scenarios", json::object()}};
  if (fs::exists(out / "manifest.json")) {
    try {
      manifest = read_json_file(out / "manifest.json");
    } catch (const std::exception&) {
    }
  }
  auto record = [&](std::size_t i) {
    const fs::path rel = scenarios[i].relative_dir();
    manifest["scenarios"][rel.generic_string()] = {
        {"fingerprint", fingerprints[i]},
        {"status", done[i]->status},
        {"result", hex(file_fingerprint(out / rel / "result.json"))}};
  };
  for (std::size_t i = 0; i < scenarios.size(); ++i)
    if (done[i]) record(i);
  write_atomically(out / "manifest.json", manifest.dump(2) + "\n");

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::pair<std::size_t, eval::ScenarioResult>> queue;
  std::atomic<std::size_t> next{0};
  std::size_t active = std::min(std::max<std::size_t>(1, opt.workers), std::max<std::size_t>(1, pending.size()));
  const std::size_t limit = opt.stop_after ? std::min(*opt.stop_after, pending.size()) : pending.size();

  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < active; ++w)
    pool.emplace_back([&] {
      for (;;) {
        if (opt.cancel && opt.cancel->load()) break;
        const std::size_t k = next++;
        if (k >= limit) break;
        const std::size_t i = pending[k];
        eval::ScenarioResult r;
        try {
          r = run_scenario(c, scenarios[i], run_of(scenarios[i]), out / scenarios[i].relative_dir());
        } catch (const std::exception& e) {
          r.trajectory = scenarios[i].trajectory;
          r.code = scenarios[i].code;
          r.seed = scenarios[i].seed;
          r.status = "failed";
          r.error = e.what();
        }
        std::lock_guard lock(mu);
        queue.emplace_back(i, std::move(r));
        cv.notify_one();
      }
      std::lock_guard lock(mu);
      --active;
      cv.notify_one();
    });

  // Single writer: only this thread touches the manifest.
  for (;;) {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return !queue.empty() || active == 0; });
    if (queue.empty() && active == 0) break;
    auto [i, r] = std::move(queue.front());
    queue.pop_front();
    lock.unlock();
    log((r.status == "ok" ? "done " : "FAILED ") + scenarios[i].relative_dir().generic_string() +
        (r.status == "ok" ? "" : ": " + r.error));
    ++summary.computed;
    if (r.status != "ok") ++summary.failed;
    done[i] = std::move(r);
    if (fs::exists(out / scenarios[i].relative_dir() / "result.json")) record(i);
    write_atomically(out / "manifest.json", manifest.dump(2) + "\n");
  }
  for (auto& t : pool) t.join();

  for (auto& r : done)
    if (r) summary.results.push_back(*r);
  summary.interrupted = summary.results.size() < scenarios.size();
  eval::assign_relative_to_dkl(summary.results);
  eval::write_results_csv(out / "results.csv", summary.results);
  return summary;
}

std::string write_report(const fs::path& results_dir, const fs::path& out) {
  const fs::path csv = results_dir / "results.csv";
  if (!fs::exists(csv)) throw std::runtime_error("no results.csv in " + results_dir.string());
  std::vector<eval::ScenarioResult> results = eval::read_results_csv(csv);
  std::erase_if(results, [](const auto& r) { return r.status != "ok"; });
  if (results.empty()) throw std::runtime_error("no successful results in " + csv.string());

  std::ostringstream md;
  fs::create_directories(out / "tables");
  fs::create_directories(out / "matrices");
  std::set<std::tuple<std::string, std::uint64_t, int, Noise>> tables;
  std::set<std::tuple<std::string, std::uint64_t, Noise, Structure>> matrices;
  for (const auto& r : results) {
    tables.insert({r.trajectory, r.seed, r.code.data.set, r.code.data.noise});
    if (r.code.kind == ModelKind::SSDKL)
      matrices.insert({r.trajectory, r.seed, r.code.data.noise, r.code.data.structure});
  }
  for (const auto& [traj, seed, set, noise] : tables) {
    const std::string stem = traj + "_seed-" + std::to_string(seed) + "_" + std::to_string(set) + "-" +
                             std::string(datagen::to_string(noise));
    try {
      const auto t = eval::build_comparison_table(results, traj, set, noise, seed);
      const std::string text = eval::render_markdown(t);
      write_atomically(out / "tables" / (stem + ".md"), text);
      write_atomically(out / "tables" / (stem + ".csv"), eval::render_csv(t));
      md << "### " << traj << " seed " << seed << ", set " << set << "-" << datagen::to_string(noise) << "\n\n"
         << text << '\n';
    } catch (const std::invalid_argument& e) {
      md << "### " << stem << "\n\nskipped: " << e.what() << "\n\n";
    }
  }
  for (const auto& [traj, seed, noise, st] : matrices) {
    const std::string stem = traj + "_seed-" + std::to_string(seed) + "_" + std::string(datagen::to_string(noise)) +
                             "-" + std::string(datagen::to_string(st));
    const auto m = eval::build_frequency_alpha_matrix(results, traj, noise, st, seed);
    const std::string text = eval::render_markdown(m);
    write_atomically(out / "matrices" / (stem + ".md"), text);
    write_atomically(out / "matrices" / (stem + ".csv"), eval::render_csv(m));
    md << "### Label frequency x alpha, " << traj << " seed " << seed << ", " << datagen::to_string(noise) << "-"
       << datagen::to_string(st) << "\n\n"
       << text << '\n';
  }
  md << "### Prediction exports\n\n";
  for (const auto& r : results)
    if (!r.prediction_path.empty()) {
      const fs::path p = fs::path(r.prediction_path);
      md << "- " << r.trajectory << " seed " << r.seed << " " << r.code.str() << ": " << p.generic_string() << ", "
         << p.parent_path().generic_string() << "/prediction.csv\n";
    }
  const std::string text = md.str();
  write_atomically(out / "report.md", text);
  return text;
}

}  // namespace softsense::cli
