#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "softsense/common/rng.hpp"

namespace softsense::regress {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class ModelKind { GP, DKL, SSDKL };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

/// Isotropic squared-exponential kernel with learned noise. All three
/// parameters are log-transformed; `noise_floor` is a fixed additive term
/// that keeps K + noise well conditioned.
struct KernelSpec {
  double log_signal_var = 0.0;
  double log_lengthscale = 0.0;
  double log_noise = 0.0;
  double noise_floor = 1e-6;

  double signal_var() const;
  double lengthscale() const;
  /// exp(log_noise) + noise_floor
  double noise_var() const;
  /// Throws std::invalid_argument on non-finite parameters or a negative floor.
  void validate() const;
};

/// K[i,j] = signal_var exp(-0.5 |a_i - b_j|^2 / l^2). Throws
/// std::invalid_argument when the column counts differ.
MatrixXd kernel_matrix(const MatrixXd& A, const MatrixXd& B, const KernelSpec& spec);

enum class Activation { Tanh, Relu, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Dense feed-forward map: hidden layers with `activation`, linear output.
struct FeatureNet {
  std::vector<MatrixXd> weights;  // layer l: in_l x out_l
  std::vector<Eigen::RowVectorXd> biases;
  Activation activation = Activation::Tanh;

  Eigen::Index in_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  Eigen::Index out_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
  std::size_t parameter_count() const;
  /// Throws std::invalid_argument on broken layer chaining or non-finite values.
  void validate() const;

  /// Widths {in, h1, ..., out}; weights N(0, 1/fan_in), biases 0.
  static FeatureNet init(const std::vector<Eigen::Index>& widths, Rng& rng, Activation act = Activation::Tanh);
};

/// Latent features, one row per input row. Throws std::invalid_argument on a
/// width mismatch.
MatrixXd feature_forward(const FeatureNet& net, const MatrixXd& X);

struct Prediction {
  VectorXd mean;
  VectorXd variance;  // predictive, includes noise, >= 0
};

/// Exact GP conditioned on training data, optionally through a feature net.
/// Immutable once built; prediction is reentrant.
struct RegressorModel {
  ModelKind kind = ModelKind::GP;
  KernelSpec kernel{};
  std::optional<FeatureNet> net;
  double alpha = 0.0;

  MatrixXd X_train;  // model inputs (normalized features)
  VectorXd y_train;  // normalized labels
  // The GP works on (y - y_offset) / y_scale; predictions are mapped back.
  double y_offset = 0.0;
  double y_scale = 1.0;

  // Cached conditioning on K(Z, Z) + noise_var I (+ jitter).
  MatrixXd Z_train;  // latent training features (= X_train for GP)
  MatrixXd chol;     // lower Cholesky factor
  VectorXd weights;  // (K + s I)^-1 (y - offset) / scale
  double jitter = 0.0;

  nlohmann::json metadata = nlohmann::json::object();

  Eigen::Index input_dim() const { return X_train.cols(); }
};

/// Builds the conditioning caches from hyperparameters and data. Throws
/// std::runtime_error if the Cholesky factorization fails at every jitter.
RegressorModel condition(ModelKind kind, const KernelSpec& kernel, std::optional<FeatureNet> net,
                         const MatrixXd& X, const VectorXd& y, double y_offset, double y_scale = 1.0,
                         double alpha = 0.0);

/// Posterior mean and variance in label units (variance scales with
/// y_scale^2). Throws std::invalid_argument on a width mismatch.
Prediction gp_predict(const RegressorModel& model, const MatrixXd& Xq);

/// Recomputes the factorization and returns the max abs difference to the cache.
double factorization_drift(const RegressorModel& model);

/// FNV-1a over the training inputs and labels.
std::uint64_t training_fingerprint(const RegressorModel& model);

}  // namespace softsense::regress
