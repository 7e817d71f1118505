#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "softsense/datagen/dataset.hpp"
#include "softsense/regress/model.hpp"
#include "softsense/regress/objective.hpp"

namespace softsense::regress {

struct TrainOptions {
  std::size_t restarts = 10;
  std::size_t max_iterations = 2000;
  double learning_rate = 1e-2;
  double rel_tol = 1e-7;            // stop when the loss moved less than this ...
  std::size_t stall_window = 20;    // ... over this many accepted steps
  std::size_t max_halvings = 10;    // step-halving attempts before giving up
  std::size_t unlabeled_batch = 1024;
  double validation_fraction = 0.2;
  std::vector<Eigen::Index> hidden{64, 16};
  Eigen::Index latent = 8;
  Activation activation = Activation::Tanh;
  double noise_floor = 1e-6;
  /// Restarts run on up to this many threads; results do not depend on it.
  std::size_t threads = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);

struct RestartDiagnostics {
  std::size_t restart = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_curve;  // accepted losses, starting with the initial one
  std::size_t iterations = 0;
  std::size_t halvings = 0;
  std::size_t moment_resets = 0;
  std::string stop_reason;  // "converged", "max_iterations", "no_descent", or "failed: ..."
  SemisupLossParts final_parts{};
  double validation_rmse = 0.0;  // NaN when failed
  bool ok = false;
};

void to_json(nlohmann::json& j, const RestartDiagnostics& d);

struct TrainResult {
  RegressorModel model;
  std::vector<RestartDiagnostics> restarts;
  std::size_t selected = 0;
  std::vector<std::size_t> train_index;       // positions into the labeled set
  std::vector<std::size_t> validation_index;  // held out for selection only
};

/// Result of optimizing one parameter set.
struct OptimizeResult {
  Params params;
  RestartDiagnostics diagnostics;
};

/// Adam on the full batch. A proposed step is accepted only if the loss does
/// not increase; otherwise the step is halved. When every halving fails the
/// moments are reset; a fresh direction that also fails ends the run. Throws
/// if the initial point cannot be evaluated.
OptimizeResult optimize(Params init, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U, double alpha,
                        const TrainOptions& opt);

/// Multi-restart training. GP ignores alpha and uses no net; DKL is SSDKL at
/// alpha = 0. Labels are standardized with their training mean and std. When at least 3
/// labels exist, a validation share is held out and the restart with the
/// lowest validation RMSE wins; otherwise the lowest final loss wins. Throws
/// std::runtime_error listing every cause if all restarts fail.
TrainResult train(ModelKind kind, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U, double alpha,
                  const TrainOptions& opt, std::uint64_t seed);

TrainResult train(ModelKind kind, const datagen::SensorDataset& d, double alpha, const TrainOptions& opt,
                  std::uint64_t seed);

/// Plain GP: multi-start likelihood fit on all given points, best final
/// likelihood wins.
RegressorModel gp_fit(const MatrixXd& X_L, const VectorXd& y_L, const TrainOptions& opt, std::uint64_t seed);

}  // namespace softsense::regress
