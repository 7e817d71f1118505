#include "softsense/regress/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace softsense::ad {

using Eigen::Index;

const Matrix& Var::value() const { return tape->value(id); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::logic_error("Var::scalar on a non-scalar node");
  return v(0, 0);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), nullptr, true});
  return {this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  nodes_.push_back({std::move(value), Matrix(), nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape != this) throw std::logic_error("mixing nodes from different tapes");
    needs = needs || nodes_[v.id].needs_grad;
  }
  nodes_.push_back({std::move(value), Matrix(), needs ? std::move(backward) : nullptr, needs});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols())
    throw std::logic_error("gradient shape mismatch on node " + std::to_string(id));
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var out) {
  if (out.tape != this) throw std::logic_error("backward on a foreign node");
  if (nodes_[out.id].value.size() != 1) throw std::logic_error("backward needs a scalar output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  accumulate(out.id, Matrix::Ones(1, 1));
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().cols() != b.value().rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return t.push(a.value() * b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(a)) t.accumulate(a.id, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b.id, a.value().transpose() * g);
  });
}

Var add_row(Var a, Var row) {
  Tape& t = *a.tape;
  if (row.value().rows() != 1 || row.value().cols() != a.value().cols())
    throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return t.push(std::move(v), {a, row}, [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(a.id, g);
    if (t.needs_grad(row)) t.accumulate(row.id, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
    throw std::invalid_argument("add: shapes differ");
  return t.push(a.value() + b.value(), {a, b}, [a, b](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self));
    t.accumulate(b.id, t.grad(self));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.push(s * a.value(), {a}, [a, s](Tape& t, std::size_t self) { t.accumulate(a.id, s * t.grad(self)); });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  // Through the vectorized exp; libm tanh is scalar and dominated training time.
  const auto x = a.value().array();
  const Eigen::ArrayXXd e = (-2.0 * x.abs()).exp();
  const Eigen::ArrayXXd r = (1.0 - e) / (1.0 + e);
  Matrix v = (x < 0.0).select(-r, r).matrix();
  return t.push(std::move(v), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    t.accumulate(a.id, (t.grad(self).array() * (1.0 - y.array().square())).matrix());
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().cwiseMax(0.0);
  return t.push(std::move(v), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, (a.value().array() > 0.0).select(t.grad(self), 0.0));
  });
}

Var exp(Var a) {
  Tape& t = *a.tape;
  Matrix v = a.value().array().exp().matrix();
  return t.push(std::move(v), {a}, [a](Tape& t, std::size_t self) {
    t.accumulate(a.id, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return t.push(std::move(v), {a}, [a](Tape& t, std::size_t self) {
    const Matrix& av = a.value();
    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), t.grad(self)(0, 0)));
  });
}

Var slice_rows(Var a, Index start, Index count) {
  Tape& t = *a.tape;
  if (start < 0 || count < 0 || start + count > a.value().rows())
    throw std::invalid_argument("slice_rows: range outside the matrix");
  return t.push(a.value().middleRows(start, count), {a}, [a, start, count](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(a.value().rows(), a.value().cols());
    g.middleRows(start, count) = t.grad(self);
    t.accumulate(a.id, g);
  });
}

Var se_kernel(Var z1, Var z2, Var log_ell, Var log_sf2) {
  Tape& t = *z1.tape;
  const Matrix& A = z1.value();
  const Matrix& B = z2.value();
  if (A.cols() != B.cols()) throw std::invalid_argument("se_kernel: feature dimensions differ");
  const double ell2 = std::exp(2.0 * log_ell.scalar());
  const double sf2 = std::exp(log_sf2.scalar());
  const Index n1 = A.rows(), n2 = B.rows(), d = A.cols();
  Matrix K(n1, n2);
  for (Index j = 0; j < n2; ++j)
    for (Index i = 0; i < n1; ++i) {
      double s = 0.0;
      for (Index k = 0; k < d; ++k) {
        const double diff = A(i, k) - B(j, k);
        s += diff * diff;
      }
      K(i, j) = sf2 * std::exp(-0.5 * s / ell2);
    }
  return t.push(std::move(K), {z1, z2, log_ell, log_sf2}, [z1, z2, log_ell, log_sf2, ell2](Tape& t, std::size_t self) {
    const Matrix& A = z1.value();
    const Matrix& B = z2.value();
    const Matrix E = t.grad(self).cwiseProduct(t.value(self));
    if (t.needs_grad(z1))
      t.accumulate(z1.id, -(E.rowwise().sum().asDiagonal() * A - E * B) / ell2);
    if (t.needs_grad(z2))
      t.accumulate(z2.id, -(E.colwise().sum().transpose().asDiagonal() * B - E.transpose() * A) / ell2);
    if (t.needs_grad(log_ell)) {
      double s = 0.0;
      for (Index j = 0; j < B.rows(); ++j)
        for (Index i = 0; i < A.rows(); ++i) s += E(i, j) * (A.row(i) - B.row(j)).squaredNorm();
      t.accumulate(log_ell.id, Matrix::Constant(1, 1, s / ell2));
    }
    if (t.needs_grad(log_sf2)) t.accumulate(log_sf2.id, Matrix::Constant(1, 1, E.sum()));
  });
}

Var add_noise_diag(Var K, Var log_noise, double floor) {
  Tape& t = *K.tape;
  if (K.value().rows() != K.value().cols()) throw std::invalid_argument("add_noise_diag: K must be square");
  const double noise = std::exp(log_noise.scalar());
  Matrix v = K.value();
  v.diagonal().array() += noise + floor;
  return t.push(std::move(v), {K, log_noise}, [K, log_noise, noise](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(K.id, g);
    if (t.needs_grad(log_noise)) t.accumulate(log_noise.id, Matrix::Constant(1, 1, g.trace() * noise));
  });
}

std::shared_ptr<const Factorization> factorize(const Matrix& K) {
  if (K.rows() != K.cols()) throw std::invalid_argument("factorize: matrix must be square");
  if (!K.allFinite()) throw std::runtime_error("factorize: matrix has non-finite entries");
  auto f = std::make_shared<Factorization>();
  f->n = K.rows();
  const double mean_diag = K.rows() > 0 ? std::max(K.diagonal().mean(), 1e-300) : 1.0;
  for (double level : {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) {
    const double jitter = level * mean_diag;
    Matrix Kj = K;
    Kj.diagonal().array() += jitter;
    f->llt.compute(Kj);
    if (f->llt.info() == Eigen::Success && (f->llt.matrixLLT().diagonal().array() > 0.0).all()) {
      f->jitter = jitter;
      return f;
    }
  }
  throw std::runtime_error("factorize: Cholesky failed even with jitter 1e-4 x mean diagonal");
}

Var neg_log_marginal_likelihood(Var Kn, const Eigen::VectorXd& y, std::shared_ptr<const Factorization> f) {
  Tape& t = *Kn.tape;
  const Index m = Kn.value().rows();
  if (y.size() != m) throw std::invalid_argument("neg_log_marginal_likelihood: label count differs from K");
  if (f->n != m) throw std::invalid_argument("neg_log_marginal_likelihood: factorization size differs");
  const Eigen::VectorXd a = f->llt.solve(y);
  const double logdet = 2.0 * f->llt.matrixLLT().diagonal().array().log().sum();
  Matrix v(1, 1);
  v(0, 0) = 0.5 * y.dot(a) + 0.5 * logdet + 0.5 * static_cast<double>(m) * std::log(2.0 * std::numbers::pi);
  return t.push(std::move(v), {Kn}, [Kn, a, f, m](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    const Matrix Kinv = f->llt.solve(Matrix::Identity(m, m));
    t.accumulate(Kn.id, 0.5 * g * (Kinv - a * a.transpose()));
  });
}

Var posterior_variance_sum(Var Kn, Var K_LU, Var log_sf2, std::shared_ptr<const Factorization> f) {
  Tape& t = *Kn.tape;
  const Matrix& KLU = K_LU.value();
  if (KLU.rows() != Kn.value().rows()) throw std::invalid_argument("posterior_variance_sum: K_LU rows differ from K");
  const double sf2 = std::exp(log_sf2.scalar());
  Matrix A = f->llt.solve(KLU);
  const Eigen::ArrayXd explained = (KLU.array() * A.array()).colwise().sum().transpose();
  const Eigen::Array<bool, Eigen::Dynamic, 1> active = (sf2 - explained) > 0.0;
  double total = 0.0;
  for (Index j = 0; j < KLU.cols(); ++j)
    if (active[j]) total += sf2 - explained[j];
  Matrix v(1, 1);
  v(0, 0) = total;
  return t.push(std::move(v), {Kn, K_LU, log_sf2}, [Kn, K_LU, log_sf2, A = std::move(A), active, sf2](Tape& t, std::size_t self) {
    const double g = t.grad(self)(0, 0);
    Matrix Am = A;
    for (Index j = 0; j < Am.cols(); ++j)
      if (!active[j]) Am.col(j).setZero();
    if (t.needs_grad(K_LU)) t.accumulate(K_LU.id, -2.0 * g * Am);
    if (t.needs_grad(Kn)) t.accumulate(Kn.id, g * (Am * Am.transpose()));
    if (t.needs_grad(log_sf2))
      t.accumulate(log_sf2.id, Matrix::Constant(1, 1, g * sf2 * static_cast<double>(active.count())));
  });
}

}  // namespace softsense::ad
