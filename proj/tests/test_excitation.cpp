#include <gtest/gtest.h>

#include <cmath>

#include "softsense/excitation/excitation.hpp"
#include "softsense/wo/simulator.hpp"

using namespace softsense;
using namespace softsense::excitation;

namespace {

AprbsSpec spec(double amplitude, std::uint64_t seed) {
  AprbsSpec s;
  s.variable = Input::F1;
  s.amplitude = amplitude;
  s.nominal = 2.0;
  s.min_hold = 60.0;
  s.max_hold = 600.0;
  s.seed = seed;
  return s;
}

SetpointSchedule flat(double horizon) {
  SetpointSchedule s;
  s.steps = InputTrajectory::constant({1.8, 4.2, 363.0, 0.5, 0.3}, horizon);
  return s;
}

}  // namespace

TEST(Aprbs, ZeroAmplitudeIsZero) {
  const auto sig = gen_aprbs(spec(0.0, 4), 36000.0);
  for (double v : sig.values) EXPECT_EQ(v, 0.0);
}

TEST(Aprbs, LevelsAndHoldsWithinBounds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AprbsSpec s = spec(0.07, seed);
    const double horizon = 50.0 * 3600.0;
    const auto sig = gen_aprbs(s, horizon);
    ASSERT_NO_THROW(sig.validate());
    const double bound = s.amplitude * s.nominal;
    for (double v : sig.values) {
      EXPECT_GE(v, -bound);
      EXPECT_LE(v, bound);
    }
    // Every hold except the last (cut by the horizon) is a full draw.
    for (std::size_t i = 1; i < sig.times.size(); ++i) {
      const double hold = sig.times[i] - sig.times[i - 1];
      EXPECT_GE(hold, s.min_hold);
      EXPECT_LE(hold, s.max_hold);
    }
    EXPECT_LT(sig.times.back(), horizon);
    EXPECT_GE(sig.times.back() + s.max_hold, horizon);
  }
}

TEST(Aprbs, DeterministicAndAmplitudeOnlyRescales) {
  const auto a = gen_aprbs(spec(0.05, 9), 20000.0);
  const auto b = gen_aprbs(spec(0.05, 9), 20000.0);
  EXPECT_EQ(a.times, b.times);
  EXPECT_EQ(a.values, b.values);
  const auto c = gen_aprbs(spec(0.10, 9), 20000.0);
  ASSERT_EQ(a.times, c.times);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(c.values[i], 2.0 * a.values[i], 1e-15);
  const auto d = gen_aprbs(spec(0.05, 10), 20000.0);
  EXPECT_NE(a.values, d.values);
}

TEST(Aprbs, RejectsBadSpec) {
  AprbsSpec s = spec(-0.1, 1);
  EXPECT_THROW(gen_aprbs(s, 100.0), std::invalid_argument);
  s = spec(0.1, 1);
  s.min_hold = 700.0;
  EXPECT_THROW(gen_aprbs(s, 100.0), std::invalid_argument);
}

TEST(Compose, ZeroOverlayReproducesSchedule) {
  const double horizon = 10000.0;
  SetpointSchedule sched = flat(horizon);
  sched.steps.channel(Input::F1) = PiecewiseConstant{{0.0, 3000.0}, {1.8, 2.1}};
  const auto zero = gen_aprbs(spec(0.0, 1), horizon);
  const auto out = compose_trajectory(sched, {{Input::F1, zero, horizon}});
  for (double t = 0.0; t < horizon; t += 17.0)
    for (std::size_t i = 0; i < wo::kNumInputs; ++i)
      EXPECT_EQ(out.inputs.channels[i].at(t), sched.steps.channels[i].at(t));
  EXPECT_TRUE(out.clamps.empty());
}

TEST(Compose, OverlayIsAdditive) {
  const double horizon = 10000.0;
  const SetpointSchedule sched = flat(horizon);
  const auto sig = gen_aprbs(spec(0.05, 3), horizon);
  const auto out = compose_trajectory(sched, {{Input::F1, sig, horizon}});
  for (double t = 0.0; t < horizon; t += 7.0)
    EXPECT_NEAR(out.inputs.channel(Input::F1).at(t) - 1.8, sig.at(t), 1e-15);
}

TEST(Compose, ClampsAtBoundsAndLogs) {
  const double horizon = 1000.0;
  SetpointSchedule sched = flat(horizon);
  sched.bounds[0] = {0.0, 1.85};
  const PiecewiseConstant bump{{0.0, 400.0}, {0.01, 0.2}};
  const auto out = compose_trajectory(sched, {{Input::F1, bump, horizon}});
  EXPECT_DOUBLE_EQ(out.inputs.channel(Input::F1).at(100.0), 1.81);
  EXPECT_EQ(out.inputs.channel(Input::F1).at(500.0), 1.85);
  ASSERT_EQ(out.clamps.size(), 1u);
  EXPECT_EQ(out.clamps[0].time, 400.0);
  EXPECT_DOUBLE_EQ(out.clamps[0].requested, 2.0);
  EXPECT_EQ(out.clamps[0].applied, 1.85);
}

TEST(Compose, HorizonMismatchThrows) {
  const SetpointSchedule sched = flat(1000.0);
  EXPECT_THROW(compose_trajectory(sched, {{Input::F1, gen_aprbs(spec(0.1, 1), 900.0), 900.0}}),
               std::invalid_argument);
}

TEST(Tune, HitsTargetsAndStaysMonotone) {
  const wo::PlantConfig plant;
  std::vector<AprbsSpec> specs;
  specs.push_back({Input::F1, 0.05, plant.nominal_inputs[0], 60.0, 600.0, 11});
  specs.push_back({Input::F2, 0.05, plant.nominal_inputs[1], 60.0, 600.0, 12});
  TuneOptions opt;
  opt.probe_horizon = 5.0 * 3600.0;
  for (double target : {0.033, 0.05}) {
    const TuneResult r = tune_amplitude(specs, target, plant, opt);
    EXPECT_NEAR(r.fluctuation, target, 0.1 * target);
    EXPECT_TRUE(r.monotonicity_violations.empty());
    EXPECT_EQ(r.probes.front().scale, 0.0);
    EXPECT_LT(r.probes.front().fluctuation, 1e-12);
    // The tuned specs reproduce the reported fluctuation.
    EXPECT_NEAR(probe_fluctuation(r.specs, 1.0, plant, opt), r.fluctuation, 1e-12);
  }
}

TEST(Tune, RejectsBadTarget) {
  const wo::PlantConfig plant;
  const std::vector<AprbsSpec> specs{spec(0.05, 1)};
  EXPECT_THROW(tune_amplitude(specs, 0.0, plant), std::invalid_argument);
  EXPECT_THROW(tune_amplitude(specs, 0.3, plant), std::invalid_argument);
}

TEST(TrajectoryConfig, ParsesFractionsAndNominals) {
  const wo::PlantConfig plant;
  const nlohmann::json j = nlohmann::json::parse(R"({
    "name": "demo",
    "target_fluctuation": 0.04,
    "bounds": {"F1_sp": [1.0, 3.0]},
    "schedule": {"F1_sp": [[0.25, 2.0], [0.5, 1.5]]},
    "aprbs": [{"variable": "F2_sp", "amplitude": 0.05, "seed": 5}]
  })");
  const TrajectoryConfig c = trajectory_config_from_json(j, plant, 4000.0);
  EXPECT_EQ(c.name, "demo");
  const auto& f1 = c.schedule.steps.channel(Input::F1);
  EXPECT_EQ(f1.times, (std::vector<double>{0.0, 1000.0, 2000.0}));
  EXPECT_EQ(f1.values[0], plant.nominal_inputs[0]);
  ASSERT_EQ(c.aprbs.size(), 1u);
  EXPECT_EQ(c.aprbs[0].nominal, plant.nominal_inputs[1]);

  nlohmann::json bad = j;
  bad["schedule"]["F1_sp"] = {{0.1, 9.0}};
  EXPECT_THROW(trajectory_config_from_json(bad, plant, 4000.0), std::invalid_argument);
  bad = j;
  bad["aprbs"][0]["amp"] = 1.0;
  EXPECT_THROW(trajectory_config_from_json(bad, plant, 4000.0), std::invalid_argument);
}

TEST(TrajectoryConfig, ShippedSchedulesSimulate) {
  const wo::PlantConfig plant;
  const double horizon = 50.0 * 3600.0;
  for (const char* file : {"wo1.json", "wo2.json"}) {
    const auto cfg = load_trajectory_config(std::string(SOFTSENSE_CONFIG_DIR) + "/" + file, plant, horizon);
    std::vector<AprbsSignal> signals;
    for (const auto& s : cfg.aprbs) signals.push_back({s.variable, gen_aprbs(s, horizon), horizon});
    const auto traj = compose_trajectory(cfg.schedule, signals);
    wo::InputVector op;
    std::copy(plant.nominal_inputs.begin(), plant.nominal_inputs.end(), op.begin());
    const auto steady = wo::find_steady_state(op, plant);
    const auto r = wo::simulate(steady, traj.inputs, horizon, 10.0, plant);
    EXPECT_EQ(r.trajectory.rows(), 18001u) << file;
  }
}
