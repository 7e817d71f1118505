#pragma once

#include <optional>
#include <string>
#include <vector>

#include "softsense/regress/model.hpp"

namespace softsense::regress {

/// Trainable parameters: optional net plus kernel log-parameters.
struct Params {
  std::optional<FeatureNet> net;
  KernelSpec kernel{};

  /// Flat layout: per layer W (column-major) then b, then log lengthscale,
  /// log signal variance, log noise.
  VectorXd pack() const;
  /// Same shapes as *this, values from `theta`.
  Params unpack(const VectorXd& theta) const;
  std::size_t size() const;
  /// Name of the block that owns flat coordinate `i`, e.g. "layer1.W" or "kernel.log_noise".
  std::string block_of(std::size_t i) const;
};

struct SemisupLossParts {
  double likelihood = 0.0;  // negative log marginal likelihood of the labels
  double variance = 0.0;    // summed latent posterior variance over the batch
  double alpha = 0.0;
  std::size_t m = 0;  // labeled
  std::size_t n = 0;  // unlabeled batch
  double total = 0.0;  // likelihood / m + alpha * variance / n
};

/// Loss value and reverse-mode gradient with respect to Params::pack().
struct LossGradient {
  SemisupLossParts parts;
  VectorXd gradient;
};

/// Evaluates the loss. With alpha = 0 the variance term is still reported
/// (computed off the tape) unless `report_variance` is false.
SemisupLossParts semisup_loss(const Params& p, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U,
                              double alpha, bool report_variance = true);

/// Loss and gradient. With alpha = 0 the unlabeled batch never enters the
/// computation, so the result is the labeled-likelihood objective bit for bit.
/// Throws std::runtime_error naming the parameter block on a non-finite gradient.
LossGradient loss_gradient(const Params& p, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U,
                           double alpha);

}  // namespace softsense::regress
