#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. A Tape records every operation eagerly (forward values are
// computed on construction) and replays the recorded backward rules in
// reverse order when backward() is called on a scalar output.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lpvdn::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const std::string& detail);
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A trainable array together with its gradient and Adam state.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Matrix init);

  std::string name;
  Matrix value;
  Matrix grad;
  Matrix moment1;
  Matrix moment2;
  std::int64_t step_count = 0;

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  int id() const { return id_; }

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  /// Backward rule: receives the node's adjoint and forward value and pushes
  /// contributions to its inputs through Tape::accumulate.
  using BackwardFn = std::function<void(Tape&, const Matrix& adjoint, const Matrix& value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(Parameter& p);

  /// Records a computed node. `inputs` are used for requires-grad propagation.
  Var record(std::string_view op, Matrix value, std::vector<Var> inputs, BackwardFn backward);

  /// Seeds d(out)/d(out) = 1 and accumulates (+=) into every Parameter reached.
  void backward(const Var& out);

  void accumulate(const Var& v, const Matrix& contribution);
  bool requires_grad(const Var& v) const { return nodes_.at(v.id()).requires_grad; }

  const Matrix& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  std::string_view op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  struct Node {
    std::string_view op;
    Matrix value;
    Matrix adjoint;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_owned(const Var& v, std::string_view op) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Binary elementwise ops broadcast a 1xN row, Mx1 column or 1x1
// scalar operand against an MxN one.

Var matmul(const Var& a, const Var& b);
/// a * b^T
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);
/// x * w + b with b a 1xN row broadcast over the rows of x.
Var affine(const Var& x, const Var& w, const Var& b);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
/// log(1 + e^t), evaluated as max(t, 0) + log1p(e^{-|t|}).
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
/// Elementwise clamp; the gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);
Var clamp_min(const Var& a, double lo);

Var sum(const Var& a);
Var mean(const Var& a);
/// Sum over columns: MxN -> Mx1.
Var row_sum(const Var& a);
/// Sum over rows: MxN -> 1xN.
Var col_sum(const Var& a);
/// Row-wise log-sum-exp: MxN -> Mx1.
Var logsumexp_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var softmax_rows(const Var& a);

Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& a, std::span<const int> rows);

// Scalar helpers shared with non-taped code paths.
double softplus(double t);
double sigmoid(double t);

/// Derives an independent stream seed (splitmix64 finaliser over both words).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// ---------------------------------------------------------------------------
// Optimisation.

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. All gradients are checked for finiteness
/// before any parameter is touched.
void adam_step(std::span<Parameter* const> params, const AdamOptions& opts);

void zero_grad(std::span<Parameter* const> params);

using LossFn = std::function<Var(Tape&)>;

/// Compares backward() against central differences. Returns the maximum of
/// |analytic - numeric| / max(1e-8, |numeric|) over the checked coordinates.
/// `max_coords_per_param == 0` checks every coordinate. Overwrites gradients.
double grad_check(const LossFn& loss_fn, std::span<Parameter* const> params, double eps = 1e-4,
                  std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Fully connected networks.

enum class Activation { none, relu, sigmoid };

/// Stack of affine layers with ReLU between them and a configurable output
/// activation. Weights are Glorot-uniform, biases zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<int> widths, Activation output, Rng& rng);

  Var forward(Tape& tape, const Var& x);
  /// Tape-free forward pass; safe to call concurrently on a frozen network.
  Matrix predict(const Matrix& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  const std::vector<int>& widths() const { return widths_; }
  Activation output_activation() const { return output_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }

  void set_zero();

 private:
  std::string name_;
  std::vector<int> widths_;
  Activation output_ = Activation::none;
  std::vector<Parameter> weights_;
  std::vector<Parameter> biases_;
};

std::string to_string(Activation a);
std::string shape_string(const Matrix& m);

}  // namespace lpvdn::diff
