#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace softsense::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  double scalar() const;
};

/// Matrix-valued reverse-mode tape. Nodes are appended in evaluation order,
/// so a reverse sweep visits every consumer before its inputs.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  /// Leaf whose gradient is wanted.
  Var variable(Matrix value);
  /// Leaf without gradient (data).
  Var constant(Matrix value);
  /// Interior node; `inputs` decide whether the node needs a gradient.
  Var push(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  /// Zero-sized until something flows into the node.
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  const Matrix& grad(Var v) const { return grad(v.id); }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id); }

  /// Adds `g` to the gradient of `id` (ignored for constants).
  void accumulate(std::size_t id, const Matrix& g);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and sweeps backwards.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
/// a + 1 * row, broadcasting a 1 x c row over the rows of a.
Var add_row(Var a, Var row);
Var add(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var sum(Var a);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

/// K_ij = exp(log_sf2) exp(-0.5 |z1_i - z2_j|^2 / exp(2 log_ell)), with 1x1
/// log-parameters. Passing the same Var twice gives a symmetric matrix whose
/// diagonal equals the signal variance exactly.
Var se_kernel(Var z1, Var z2, Var log_ell, Var log_sf2);

/// K + (exp(log_noise) + floor) I.
Var add_noise_diag(Var K, Var log_noise, double floor);

/// Cholesky factor of a symmetric matrix, with the diagonal jitter that
/// was needed (0 if none).
struct Factorization {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
  Eigen::Index n = 0;
};

/// Tries jitter 0, then 1e-10, 1e-9, ..., 1e-4 times the mean diagonal.
/// Throws std::runtime_error if every level fails.
std::shared_ptr<const Factorization> factorize(const Matrix& K);

/// 0.5 y^T K^-1 y + 0.5 log det K + 0.5 m log(2 pi), for K = value of `Kn`
/// factorized as `f`.
Var neg_log_marginal_likelihood(Var Kn, const Eigen::VectorXd& y, std::shared_ptr<const Factorization> f);

/// sum_j max(0, exp(log_sf2) - k_j^T K^-1 k_j), with k_j the columns of K_LU:
/// latent posterior variance summed over the unlabeled points.
Var posterior_variance_sum(Var Kn, Var K_LU, Var log_sf2, std::shared_ptr<const Factorization> f);

}  // namespace softsense::ad
