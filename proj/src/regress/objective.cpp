#include "softsense/regress/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "softsense/regress/autodiff.hpp"

namespace softsense::regress {

using Eigen::Index;

std::size_t Params::size() const { return (net ? net->parameter_count() : 0) + 3; }

VectorXd Params::pack() const {
  VectorXd theta(static_cast<Index>(size()));
  Index k = 0;
  if (net)
    for (std::size_t l = 0; l < net->weights.size(); ++l) {
      const MatrixXd& W = net->weights[l];
      theta.segment(k, W.size()) = Eigen::Map<const VectorXd>(W.data(), W.size());
      k += W.size();
      theta.segment(k, net->biases[l].size()) = net->biases[l].transpose();
      k += net->biases[l].size();
    }
  theta[k++] = kernel.log_lengthscale;
  theta[k++] = kernel.log_signal_var;
  theta[k++] = kernel.log_noise;
  return theta;
}

Params Params::unpack(const VectorXd& theta) const {
  if (static_cast<std::size_t>(theta.size()) != size())
    throw std::invalid_argument("Params::unpack: expected " + std::to_string(size()) + " values, got " +
                                std::to_string(theta.size()));
  Params p = *this;
  Index k = 0;
  if (p.net)
    for (std::size_t l = 0; l < p.net->weights.size(); ++l) {
      MatrixXd& W = p.net->weights[l];
      Eigen::Map<VectorXd>(W.data(), W.size()) = theta.segment(k, W.size());
      k += W.size();
      p.net->biases[l] = theta.segment(k, p.net->biases[l].size()).transpose();
      k += p.net->biases[l].size();
    }
  p.kernel.log_lengthscale = theta[k++];
  p.kernel.log_signal_var = theta[k++];
  p.kernel.log_noise = theta[k++];
  return p;
}

std::string Params::block_of(std::size_t i) const {
  std::size_t k = 0;
  if (net)
    for (std::size_t l = 0; l < net->weights.size(); ++l) {
      k += static_cast<std::size_t>(net->weights[l].size());
      if (i < k) return "layer" + std::to_string(l) + ".W";
      k += static_cast<std::size_t>(net->biases[l].size());
      if (i < k) return "layer" + std::to_string(l) + ".b";
    }
  static const char* names[3] = {"kernel.log_lengthscale", "kernel.log_signal_var", "kernel.log_noise"};
  if (i - k < 3) return names[i - k];
  return "out of range";
}

namespace {

struct Leaves {
  std::vector<ad::Var> W, b;
  ad::Var log_ell, log_sf2, log_noise;
};

ad::Var forward(ad::Tape& t, const Leaves& lv, Activation act, const MatrixXd& X) {
  ad::Var h = t.constant(X);
  for (std::size_t l = 0; l < lv.W.size(); ++l) {
    h = ad::add_row(ad::matmul(h, lv.W[l]), lv.b[l]);
    if (l + 1 < lv.W.size()) {
      if (act == Activation::Tanh) h = ad::tanh(h);
      else if (act == Activation::Relu) h = ad::relu(h);
    }
  }
  return h;
}

// likelihood / m (+ alpha * variance / n), as one node so the value is the
// weighted formula evaluated exactly as written.
ad::Var combine(ad::Var lik, double m, const ad::Var* var, double alpha, double n) {
  ad::Tape& t = *lik.tape;
  Eigen::MatrixXd v(1, 1);
  if (var == nullptr) {
    v(0, 0) = lik.scalar() / m;
    return t.push(std::move(v), {lik}, [lik, m](ad::Tape& t, std::size_t self) {
      t.accumulate(lik.id, t.grad(self) / m);
    });
  }
  const ad::Var vv = *var;
  v(0, 0) = lik.scalar() / m + alpha * vv.scalar() / n;
  return t.push(std::move(v), {lik, vv}, [lik, vv, m, alpha, n](ad::Tape& t, std::size_t self) {
    t.accumulate(lik.id, t.grad(self) / m);
    t.accumulate(vv.id, t.grad(self) * (alpha / n));
  });
}

struct Evaluation {
  SemisupLossParts parts;
  VectorXd gradient;
};

Evaluation evaluate(const Params& p, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U, double alpha,
                    bool want_gradient, bool report_variance) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("semisup_loss: alpha must be finite and >= 0");
  if (X_L.rows() < 2) throw std::invalid_argument("semisup_loss: need at least 2 labeled points");
  if (X_L.rows() != y_L.size()) throw std::invalid_argument("semisup_loss: X_L rows differ from label count");
  const Index in_dim = p.net ? p.net->in_dim() : X_L.cols();
  if (X_L.cols() != in_dim) throw std::invalid_argument("semisup_loss: X_L width differs from model input");
  const bool use_unlabeled = alpha > 0.0 || report_variance;
  if (use_unlabeled && X_U.rows() > 0 && X_U.cols() != in_dim)
    throw std::invalid_argument("semisup_loss: X_U width differs from model input");
  if (alpha > 0.0 && X_U.rows() == 0) throw std::invalid_argument("semisup_loss: alpha > 0 needs unlabeled points");
  p.kernel.validate();
  if (p.net) p.net->validate();

  ad::Tape t;
  Leaves lv;
  if (p.net)
    for (std::size_t l = 0; l < p.net->weights.size(); ++l) {
      lv.W.push_back(t.variable(p.net->weights[l]));
      lv.b.push_back(t.variable(p.net->biases[l]));
    }
  lv.log_ell = t.variable(MatrixXd::Constant(1, 1, p.kernel.log_lengthscale));
  lv.log_sf2 = t.variable(MatrixXd::Constant(1, 1, p.kernel.log_signal_var));
  lv.log_noise = t.variable(MatrixXd::Constant(1, 1, p.kernel.log_noise));
  const Activation act = p.net ? p.net->activation : Activation::Identity;

  const ad::Var ZL = forward(t, lv, act, X_L);
  const ad::Var K = ad::se_kernel(ZL, ZL, lv.log_ell, lv.log_sf2);
  const ad::Var Kn = ad::add_noise_diag(K, lv.log_noise, p.kernel.noise_floor);
  const auto f = ad::factorize(Kn.value());
  const ad::Var lik = ad::neg_log_marginal_likelihood(Kn, y_L, f);

  Evaluation e;
  e.parts.alpha = alpha;
  e.parts.m = static_cast<std::size_t>(X_L.rows());
  e.parts.n = use_unlabeled ? static_cast<std::size_t>(X_U.rows()) : 0;
  e.parts.likelihood = lik.scalar();
  const double m = static_cast<double>(e.parts.m), n = static_cast<double>(e.parts.n);

  ad::Var total;
  if (alpha > 0.0) {
    const ad::Var ZU = forward(t, lv, act, X_U);
    const ad::Var KLU = ad::se_kernel(ZL, ZU, lv.log_ell, lv.log_sf2);
    const ad::Var var = ad::posterior_variance_sum(Kn, KLU, lv.log_sf2, f);
    e.parts.variance = var.scalar();
    total = combine(lik, m, &var, alpha, n);
  } else {
    total = combine(lik, m, nullptr, 0.0, 0.0);
    if (report_variance && X_U.rows() > 0) {
      // Off the gradient path: nothing downstream of `total` depends on it.
      const ad::Var ZU = forward(t, lv, act, X_U);
      const ad::Var KLU = ad::se_kernel(ZL, ZU, lv.log_ell, lv.log_sf2);
      e.parts.variance = ad::posterior_variance_sum(Kn, KLU, lv.log_sf2, f).scalar();
    }
  }
  e.parts.total = total.scalar();
  if (!want_gradient) return e;

  t.backward(total);
  e.gradient.resize(static_cast<Index>(p.size()));
  Index k = 0;
  auto put = [&](ad::Var v) {
    const MatrixXd& g = t.grad(v);
    const Index sz = v.value().size();
    if (g.size() == 0)
      e.gradient.segment(k, sz).setZero();
    else
      e.gradient.segment(k, sz) = Eigen::Map<const VectorXd>(g.data(), sz);
    k += sz;
  };
  for (std::size_t l = 0; l < lv.W.size(); ++l) {
    put(lv.W[l]);
    put(lv.b[l]);
  }
  put(lv.log_ell);
  put(lv.log_sf2);
  put(lv.log_noise);
  for (Index i = 0; i < e.gradient.size(); ++i)
    if (!std::isfinite(e.gradient[i]))
      throw std::runtime_error("loss_gradient: non-finite gradient in block " + p.block_of(static_cast<std::size_t>(i)));
  return e;
}

}  // namespace

SemisupLossParts semisup_loss(const Params& p, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U,
                              double alpha, bool report_variance) {
  return evaluate(p, X_L, y_L, X_U, alpha, false, report_variance).parts;
}

LossGradient loss_gradient(const Params& p, const MatrixXd& X_L, const VectorXd& y_L, const MatrixXd& X_U,
                           double alpha) {
  Evaluation e = evaluate(p, X_L, y_L, X_U, alpha, true, false);
  return {e.parts, std::move(e.gradient)};
}

}  // namespace softsense::regress
