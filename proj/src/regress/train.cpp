#include "softsense/regress/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "softsense/common/json_util.hpp"
#include "softsense/common/rng.hpp"

namespace softsense::regress {

using Eigen::Index;

void TrainOptions::validate() const {
  if (restarts < 1) throw std::invalid_argument("TrainOptions: restarts must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainOptions: learning_rate must be > 0");
  if (!(rel_tol >= 0.0)) throw std::invalid_argument("TrainOptions: rel_tol must be >= 0");
  if (stall_window < 1) throw std::invalid_argument("TrainOptions: stall_window must be >= 1");
  if (unlabeled_batch < 1) throw std::invalid_argument("TrainOptions: unlabeled_batch must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("TrainOptions: validation_fraction must lie in [0, 1)");
  if (latent < 1) throw std::invalid_argument("TrainOptions: latent must be >= 1");
  for (Index h : hidden)
    if (h < 1) throw std::invalid_argument("TrainOptions: hidden widths must be >= 1");
  if (!(noise_floor >= 0.0)) throw std::invalid_argument("TrainOptions: noise_floor must be >= 0");
  if (threads < 1) throw std::invalid_argument("TrainOptions: threads must be >= 1");
}

void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = {{"restarts", o.restarts},
       {"max_iterations", o.max_iterations},
       {"learning_rate", o.learning_rate},
       {"rel_tol", o.rel_tol},
       {"stall_window", o.stall_window},
       {"max_halvings", o.max_halvings},
       {"unlabeled_batch", o.unlabeled_batch},
       {"validation_fraction", o.validation_fraction},
       {"hidden", o.hidden},
       {"latent", o.latent},
       {"activation", std::string(to_string(o.activation))},
       {"noise_floor", o.noise_floor},
       {"threads", o.threads}};
}

void from_json(const nlohmann::json& j, TrainOptions& o) {
  reject_unknown(j, "train options",
                 {"restarts", "max_iterations", "learning_rate", "rel_tol", "stall_window", "max_halvings",
                  "unlabeled_batch", "validation_fraction", "hidden", "latent", "activation", "noise_floor",
                  "threads"});
  read_optional(j, "restarts", o.restarts);
  read_optional(j, "max_iterations", o.max_iterations);
  read_optional(j, "learning_rate", o.learning_rate);
  read_optional(j, "rel_tol", o.rel_tol);
  read_optional(j, "stall_window", o.stall_window);
  read_optional(j, "max_halvings", o.max_halvings);
  read_optional(j, "unlabeled_batch", o.unlabeled_batch);
  read_optional(j, "validation_fraction", o.validation_fraction);
  read_optional(j, "hidden", o.hidden);
  read_optional(j, "latent", o.latent);
  if (j.contains("activation")) o.activation = activation_from_string(j.at("activation").get<std::string>());
  read_optional(j, "noise_floor", o.noise_floor);
  read_optional(j, "threads", o.threads);
  o.validate();
}

void to_json(nlohmann::json& j, const RestartDiagnostics& d) {
  j = {{"restart", d.restart},
       {"seed", d.seed},
       {"iterations", d.iterations},
       {"halvings", d.halvings},
       {"moment_resets", d.moment_resets},
       {"stop_reason", d.stop_reason},
       {"ok", d.ok},
       {"likelihood", d.final_parts.likelihood},
       {"variance", d.final_parts.variance},
       {"alpha", d.final_parts.alpha},
       {"m", d.final_parts.m},
       {"n", d.final_parts.n},
       {"loss", d.final_parts.total},
       {"validation_rmse", std::isfinite(d.validation_rmse) ? nlohmann::json(d.validation_rmse) : nlohmann::json()},
       {"loss_curve", d.loss_curve}};
}

OptimizeResult optimize(Params init, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U, double alpha,
                        const TrainOptions& opt) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  OptimizeResult r{std::move(init), {}};
  RestartDiagnostics& d = r.diagnostics;
  VectorXd theta = r.params.pack();
  LossGradient cur = loss_gradient(r.params, X_L, y_L, X_U, alpha);
  d.loss_curve.push_back(cur.parts.total);
  VectorXd m1 = VectorXd::Zero(theta.size()), m2 = VectorXd::Zero(theta.size());
  std::size_t t = 0;  // Adam step count since the last moment reset
  d.stop_reason = "max_iterations";
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    ++t;
    m1 = beta1 * m1 + (1.0 - beta1) * cur.gradient;
    m2 = beta2 * m2 + (1.0 - beta2) * cur.gradient.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const VectorXd dir = (m1 / c1).array() / ((m2 / c2).array().sqrt() + eps);
    double step = opt.learning_rate;
    bool accepted = false;
    for (std::size_t h = 0; h <= opt.max_halvings; ++h) {
      const VectorXd cand = theta - step * dir;
      try {
        Params p = r.params.unpack(cand);
        LossGradient next = loss_gradient(p, X_L, y_L, X_U, alpha);
        if (next.parts.total <= cur.parts.total) {
          theta = cand;
          r.params = std::move(p);
          cur = std::move(next);
          accepted = true;
          break;
        }
      } catch (const std::exception&) {
        // Unevaluable candidate (e.g. Cholesky failure): treat as a rejected step.
      }
      step *= 0.5;
      ++d.halvings;
    }
    d.iterations = it;
    if (!accepted) {
      // Stale moments can point uphill; restart them once before giving up.
      if (t == 1) {
        d.stop_reason = "no_descent";
        break;
      }
      m1.setZero();
      m2.setZero();
      t = 0;
      ++d.moment_resets;
      continue;
    }
    d.loss_curve.push_back(cur.parts.total);
    const std::size_t n = d.loss_curve.size();
    if (n > opt.stall_window) {
      const double before = d.loss_curve[n - 1 - opt.stall_window];
      if (before - cur.parts.total <= opt.rel_tol * std::max(std::abs(cur.parts.total), 1e-12)) {
        d.stop_reason = "converged";
        break;
      }
    }
  }
  d.final_parts = cur.parts;
  d.ok = true;
  return r;
}

namespace {

// Standard deviation of the labels, or 1 when they are (numerically) constant.
double label_scale(const VectorXd& y, double mean) {
  const double sd = std::sqrt((y.array() - mean).square().mean());
  return sd > 1e-12 * std::max(1.0, std::abs(mean)) && std::isfinite(sd) ? sd : 1.0;
}

double rmse_of(const VectorXd& a, const VectorXd& b) { return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size())); }

MatrixXd take_rows(const MatrixXd& A, const std::vector<std::size_t>& idx) {
  MatrixXd out(static_cast<Index>(idx.size()), A.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = A.row(static_cast<Index>(idx[i]));
  return out;
}

VectorXd take(const VectorXd& v, const std::vector<std::size_t>& idx) {
  VectorXd out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(i)] = v[static_cast<Index>(idx[i])];
  return out;
}

Params initial_params(ModelKind kind, Index in_dim, const TrainOptions& opt, std::size_t restart, Rng& rng) {
  Params p;
  p.kernel.noise_floor = opt.noise_floor;
  if (kind == ModelKind::GP) {
    // Restart 0 starts at the unit log-parameters, the rest are scattered.
    if (restart > 0) {
      p.kernel.log_lengthscale = rng.normal();
      p.kernel.log_signal_var = rng.normal();
      p.kernel.log_noise = rng.normal();
    }
    return p;
  }
  std::vector<Index> widths{in_dim};
  widths.insert(widths.end(), opt.hidden.begin(), opt.hidden.end());
  widths.push_back(opt.latent);
  p.net = FeatureNet::init(widths, rng, opt.activation);
  return p;
}

// Runs fn(i) for i in [0, count) on up to `threads` threads.
template <class Fn>
void for_each_index(std::size_t count, std::size_t threads, Fn fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct RestartOutcome {
  Params params;
  RestartDiagnostics diag;
};

}  // namespace

TrainResult train(ModelKind kind, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U, double alpha,
                  const TrainOptions& opt, std::uint64_t seed) {
  opt.validate();
  const auto m = static_cast<std::size_t>(X_L.rows());
  if (m < 2) throw std::invalid_argument("train: need at least 2 labels");
  if (static_cast<std::size_t>(y_L.size()) != m) throw std::invalid_argument("train: X_L rows differ from label count");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("train: alpha must be finite and >= 0");
  if (kind == ModelKind::GP || kind == ModelKind::DKL) alpha = 0.0;
  if (kind == ModelKind::SSDKL && X_U.rows() == 0) throw std::invalid_argument("train: SSDKL needs unlabeled points");
  if (X_U.rows() > 0 && X_U.cols() != X_L.cols()) throw std::invalid_argument("train: X_U width differs from X_L");

  TrainResult res;
  // Validation split, shared by all restarts.
  std::size_t n_val = 0;
  if (m >= 3 && opt.validation_fraction > 0.0)
    n_val = std::min<std::size_t>(std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.validation_fraction * static_cast<double>(m)))), m - 2);
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  res.validation_index = datagen::place_labels(all, n_val, derive_seed(seed, "validation"));
  for (std::size_t i = 0; i < m; ++i)
    if (!std::binary_search(res.validation_index.begin(), res.validation_index.end(), i)) res.train_index.push_back(i);

  const MatrixXd Xt = take_rows(X_L, res.train_index);
  const VectorXd yt_raw = take(y_L, res.train_index);
  const double offset = yt_raw.mean();
  const double scale = label_scale(yt_raw, offset);
  const VectorXd yt = ((yt_raw.array() - offset) / scale).matrix();
  const MatrixXd Xv = take_rows(X_L, res.validation_index);
  const VectorXd yv = take(y_L, res.validation_index);

  std::vector<RestartOutcome> outcomes(opt.restarts);
  for_each_index(opt.restarts, opt.threads, [&](std::size_t r) {
    RestartOutcome& o = outcomes[r];
    const std::uint64_t rseed = derive_seed(seed, "restart", r);
    try {
      Rng init_rng(derive_seed(rseed, "init"));
      Params p0 = initial_params(kind, X_L.cols(), opt, r, init_rng);
      MatrixXd batch;
      if (alpha > 0.0) {
        const auto nU = static_cast<std::size_t>(X_U.rows());
        std::vector<std::size_t> pool(nU);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        batch = take_rows(X_U, datagen::place_labels(pool, std::min(nU, opt.unlabeled_batch), derive_seed(rseed, "batch")));
      }
      OptimizeResult fit = optimize(std::move(p0), Xt, yt, batch, alpha, opt);
      o.params = std::move(fit.params);
      o.diag = std::move(fit.diagnostics);
      if (!res.validation_index.empty()) {
        const RegressorModel mdl = condition(kind, o.params.kernel, o.params.net, Xt, yt_raw, offset, scale, alpha);
        o.diag.validation_rmse = rmse_of(gp_predict(mdl, Xv).mean, yv);
        if (!std::isfinite(o.diag.validation_rmse)) throw std::runtime_error("non-finite validation RMSE");
      } else {
        o.diag.validation_rmse = std::numeric_limits<double>::quiet_NaN();
      }
    } catch (const std::exception& e) {
      o.diag.ok = false;
      o.diag.stop_reason = std::string("failed: ") + e.what();
      o.diag.validation_rmse = std::numeric_limits<double>::quiet_NaN();
    }
    o.diag.restart = r;
    o.diag.seed = rseed;
  });

  std::optional<std::size_t> best;
  std::string causes;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const auto& d = outcomes[r].diag;
    if (!d.ok) {
      causes += "\n  restart " + std::to_string(r) + ": " + d.stop_reason;
      continue;
    }
    if (!best) {
      best = r;
      continue;
    }
    const auto& b = outcomes[*best].diag;
    const bool better = res.validation_index.empty() ? d.final_parts.total < b.final_parts.total
                                                     : d.validation_rmse < b.validation_rmse;
    if (better) best = r;
  }
  if (!best) throw std::runtime_error("train: all " + std::to_string(opt.restarts) + " restarts failed:" + causes);

  res.selected = *best;
  const Params& p = outcomes[*best].params;
  res.model = condition(kind, p.kernel, p.net, Xt, yt_raw, offset, scale, alpha);
  res.model.metadata["selected_restart"] = *best;
  for (auto& o : outcomes) res.restarts.push_back(std::move(o.diag));
  return res;
}

TrainResult train(ModelKind kind, const datagen::SensorDataset& d, double alpha, const TrainOptions& opt,
                  std::uint64_t seed) {
  TrainResult r = train(kind, d.X_L, d.y_L, d.X_U, alpha, opt, seed);
  r.model.metadata["dataset"] = d.code.str();
  r.model.metadata["normalization"] = {{"x", d.norm.x}, {"y", d.norm.y}};
  r.model.metadata["feature_names"] = d.feature_names;
  return r;
}

RegressorModel gp_fit(const MatrixXd& X_L, const VectorXd& y_L, const TrainOptions& opt, std::uint64_t seed) {
  opt.validate();
  if (X_L.rows() < 2) throw std::invalid_argument("gp_fit: need at least 2 labels");
  if (X_L.rows() != y_L.size()) throw std::invalid_argument("gp_fit: X_L rows differ from label count");
  const double offset = y_L.mean();
  const double scale = label_scale(y_L, offset);
  const VectorXd yc = ((y_L.array() - offset) / scale).matrix();
  std::optional<OptimizeResult> best;
  std::string causes;
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    try {
      Rng rng(derive_seed(derive_seed(seed, "restart", r), "init"));
      OptimizeResult fit = optimize(initial_params(ModelKind::GP, X_L.cols(), opt, r, rng), X_L, yc, MatrixXd(), 0.0, opt);
      if (!best || fit.diagnostics.final_parts.total < best->diagnostics.final_parts.total) best = std::move(fit);
    } catch (const std::exception& e) {
      causes += "\n  restart " + std::to_string(r) + ": " + e.what();
    }
  }
  if (!best) throw std::runtime_error("gp_fit: all restarts failed:" + causes);
  return condition(ModelKind::GP, best->params.kernel, std::nullopt, X_L, y_L, offset, scale);
}

}  // namespace softsense::regress
