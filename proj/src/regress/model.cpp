#include "softsense/regress/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "softsense/regress/autodiff.hpp"

namespace softsense::regress {

using Eigen::Index;

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::GP: return "GP";
    case ModelKind::DKL: return "DKL";
    case ModelKind::SSDKL: return "SSDKL";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "GP" || s == "G") return ModelKind::GP;
  if (s == "DKL" || s == "D") return ModelKind::DKL;
  if (s == "SSDKL" || s == "S") return ModelKind::SSDKL;
  throw std::invalid_argument("unknown model kind '" + std::string(s) + "'");
}

double KernelSpec::signal_var() const { return std::exp(log_signal_var); }
double KernelSpec::lengthscale() const { return std::exp(log_lengthscale); }
double KernelSpec::noise_var() const { return std::exp(log_noise) + noise_floor; }

void KernelSpec::validate() const {
  if (!std::isfinite(log_signal_var) || !std::isfinite(log_lengthscale) || !std::isfinite(log_noise))
    throw std::invalid_argument("KernelSpec: log-parameters must be finite");
  if (!(noise_floor >= 0.0) || !std::isfinite(noise_floor)) throw std::invalid_argument("KernelSpec: noise_floor must be >= 0");
  if (!(signal_var() > 0.0) || !(lengthscale() > 0.0)) throw std::invalid_argument("KernelSpec: parameters under/overflow");
}

MatrixXd kernel_matrix(const MatrixXd& A, const MatrixXd& B, const KernelSpec& spec) {
  if (A.cols() != B.cols())
    throw std::invalid_argument("kernel_matrix: column counts differ (" + std::to_string(A.cols()) + " vs " +
                                std::to_string(B.cols()) + ")");
  const double ell2 = std::exp(2.0 * spec.log_lengthscale);
  const double sf2 = spec.signal_var();
  MatrixXd K(A.rows(), B.rows());
  for (Index j = 0; j < B.rows(); ++j)
    for (Index i = 0; i < A.rows(); ++i) {
      double s = 0.0;
      for (Index k = 0; k < A.cols(); ++k) {
        const double d = A(i, k) - B(j, k);
        s += d * d;
      }
      K(i, j) = sf2 * std::exp(-0.5 * s / ell2);
    }
  return K;
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

std::size_t FeatureNet::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
  return n;
}

void FeatureNet::validate() const {
  if (weights.empty()) throw std::invalid_argument("FeatureNet: no layers");
  if (weights.size() != biases.size()) throw std::invalid_argument("FeatureNet: weight/bias layer counts differ");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (biases[l].size() != weights[l].cols())
      throw std::invalid_argument("FeatureNet: bias width differs from layer " + std::to_string(l));
    if (l > 0 && weights[l].rows() != weights[l - 1].cols())
      throw std::invalid_argument("FeatureNet: layer " + std::to_string(l) + " does not chain");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw std::invalid_argument("FeatureNet: non-finite parameters in layer " + std::to_string(l));
  }
}

FeatureNet FeatureNet::init(const std::vector<Index>& widths, Rng& rng, Activation act) {
  if (widths.size() < 2) throw std::invalid_argument("FeatureNet::init: need at least input and output widths");
  FeatureNet net;
  net.activation = act;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] < 1 || widths[l + 1] < 1) throw std::invalid_argument("FeatureNet::init: widths must be >= 1");
    const double sd = 1.0 / std::sqrt(static_cast<double>(widths[l]));
    MatrixXd W(widths[l], widths[l + 1]);
    for (Index j = 0; j < W.cols(); ++j)
      for (Index i = 0; i < W.rows(); ++i) W(i, j) = sd * rng.normal();
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::RowVectorXd::Zero(widths[l + 1]));
  }
  return net;
}

MatrixXd feature_forward(const FeatureNet& net, const MatrixXd& X) {
  if (X.cols() != net.in_dim())
    throw std::invalid_argument("feature_forward: input has " + std::to_string(X.cols()) + " columns, net expects " +
                                std::to_string(net.in_dim()));
  // Same arithmetic as the tape ops, so trained losses and predictions agree bitwise.
  ad::Tape tape;
  ad::Var h = tape.constant(X);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    h = ad::add_row(ad::matmul(h, tape.constant(net.weights[l])), tape.constant(net.biases[l]));
    if (l + 1 < net.weights.size()) {
      if (net.activation == Activation::Tanh) h = ad::tanh(h);
      else if (net.activation == Activation::Relu) h = ad::relu(h);
    }
  }
  return h.value();
}

RegressorModel condition(ModelKind kind, const KernelSpec& kernel, std::optional<FeatureNet> net, const MatrixXd& X,
                         const VectorXd& y, double y_offset, double y_scale, double alpha) {
  kernel.validate();
  if (X.rows() != y.size()) throw std::invalid_argument("condition: row count differs from label count");
  if (X.rows() < 1) throw std::invalid_argument("condition: no training data");
  if (!(y_scale > 0.0) || !std::isfinite(y_scale)) throw std::invalid_argument("condition: y_scale must be positive");
  if (net) net->validate();
  RegressorModel m;
  m.kind = kind;
  m.kernel = kernel;
  m.net = std::move(net);
  m.alpha = alpha;
  m.X_train = X;
  m.y_train = y;
  m.y_offset = y_offset;
  m.y_scale = y_scale;
  m.Z_train = m.net ? feature_forward(*m.net, X) : X;
  MatrixXd K = kernel_matrix(m.Z_train, m.Z_train, kernel);
  K.diagonal().array() += kernel.noise_var();
  const auto f = ad::factorize(K);
  m.chol = f->llt.matrixL();
  m.jitter = f->jitter;
  m.weights = f->llt.solve(((y.array() - y_offset) / y_scale).matrix());
  return m;
}

Prediction gp_predict(const RegressorModel& model, const MatrixXd& Xq) {
  if (Xq.cols() != model.input_dim())
    throw std::invalid_argument("gp_predict: query has " + std::to_string(Xq.cols()) + " columns, model expects " +
                                std::to_string(model.input_dim()));
  const MatrixXd Zq = model.net ? feature_forward(*model.net, Xq) : Xq;
  const MatrixXd Ks = kernel_matrix(model.Z_train, Zq, model.kernel);
  Prediction p;
  p.mean = (Ks.transpose() * model.weights).array() * model.y_scale + model.y_offset;
  const MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks);
  const VectorXd explained = V.colwise().squaredNorm().transpose();
  const double prior = model.kernel.signal_var();
  p.variance = (((prior - explained.array()).max(0.0) + model.kernel.noise_var()) * (model.y_scale * model.y_scale)).matrix();
  return p;
}

double factorization_drift(const RegressorModel& model) {
  MatrixXd K = kernel_matrix(model.Z_train, model.Z_train, model.kernel);
  K.diagonal().array() += model.kernel.noise_var() + model.jitter;
  Eigen::LLT<MatrixXd> llt(K);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  const MatrixXd L = llt.matrixL();
  return (L - model.chol).cwiseAbs().maxCoeff();
}

std::uint64_t training_fingerprint(const RegressorModel& model) {
  std::uint64_t h = fnv1a(std::string_view(reinterpret_cast<const char*>(model.X_train.data()),
                                           sizeof(double) * static_cast<std::size_t>(model.X_train.size())));
  const Index shape[2] = {model.X_train.rows(), model.X_train.cols()};
  h = fnv1a(std::string_view(reinterpret_cast<const char*>(shape), sizeof(shape)), h);
  return fnv1a(std::string_view(reinterpret_cast<const char*>(model.y_train.data()),
                                sizeof(double) * static_cast<std::size_t>(model.y_train.size())),
               h);
}

}  // namespace softsense::regress
