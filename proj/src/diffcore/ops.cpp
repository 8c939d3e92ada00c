#include <algorithm>
#include <cmath>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::diff {
namespace {

using Index = Eigen::Index;

Index broadcast_dim(Index a, Index b, std::string_view op, const Matrix& ma, const Matrix& mb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(op, "cannot broadcast " + shape_string(ma) + " with " + shape_string(mb));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix r = g;
  if (rows == 1 && r.rows() != 1) r = r.colwise().sum().eval();
  if (cols == 1 && r.cols() != 1) r = r.rowwise().sum().eval();
  return r;
}

template <class Fwd, class GradA, class GradB>
Var binary(std::string_view op, const Var& a, const Var& b, Fwd fwd, GradA ga, GradB gb) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  const Index rows = broadcast_dim(va.rows(), vb.rows(), op, va, vb);
  const Index cols = broadcast_dim(va.cols(), vb.cols(), op, va, vb);
  const bool same = va.rows() == vb.rows() && va.cols() == vb.cols();
  Matrix out = same ? Matrix(fwd(va.array(), vb.array()))
                    : Matrix(fwd(expand(va, rows, cols).array(), expand(vb, rows, cols).array()));
  return a.tape().record(
      op, std::move(out), {a, b},
      [a, b, ga, gb, rows, cols, same](Tape& t, const Matrix& g, const Matrix& y) {
        const Matrix& va = a.value();
        const Matrix& vb = b.value();
        auto push = [&](const Matrix& ea, const Matrix& eb) {
          if (t.requires_grad(a)) {
            t.accumulate(a, reduce_to(Matrix(ga(g.array(), ea.array(), eb.array(), y.array())),
                                      va.rows(), va.cols()));
          }
          if (t.requires_grad(b)) {
            t.accumulate(b, reduce_to(Matrix(gb(g.array(), ea.array(), eb.array(), y.array())),
                                      vb.rows(), vb.cols()));
          }
        };
        if (same) {
          push(va, vb);
        } else {
          push(expand(va, rows, cols), expand(vb, rows, cols));
        }
      });
}

// `grad(x, y)` returns dy/dx elementwise given input x and output y.
template <class Fwd, class Grad>
Var unary(std::string_view op, const Var& a, Fwd fwd, Grad grad) {
  Matrix out = fwd(a.value().array());
  return a.tape().record(op, std::move(out), {a}, [a, grad](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, Matrix(g.array() * grad(a.value().array(), y.array())));
  });
}

}  // namespace

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Var matmul(const Var& a, const Var& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul", shape_string(va) + " * " + shape_string(vb));
  }
  Matrix out(va.rows(), vb.cols());
  out.noalias() = va * vb;
  return a.tape().record("matmul", std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(a)) {
      Matrix ga(g.rows(), b.cols());
      ga.noalias() = g * b.value().transpose();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(b)) {
      Matrix gb(a.cols(), g.cols());
      gb.noalias() = a.value().transpose() * g;
      t.accumulate(b, gb);
    }
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.cols() != vb.cols()) {
    throw ShapeError("matmul_nt", shape_string(va) + " * (" + shape_string(vb) + ")^T");
  }
  Matrix out(va.rows(), vb.rows());
  out.noalias() = va * vb.transpose();
  return a.tape().record("matmul_nt", std::move(out), {a, b},
                         [a, b](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(a)) {
                             Matrix ga(g.rows(), b.cols());
                             ga.noalias() = g * b.value();
                             t.accumulate(a, ga);
                           }
                           if (t.requires_grad(b)) {
                             Matrix gb(g.cols(), a.cols());
                             gb.noalias() = g.transpose() * a.value();
                             t.accumulate(b, gb);
                           }
                         });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return a.tape().record("transpose", std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix(g.transpose()));
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  const Matrix& vx = x.value();
  const Matrix& vw = w.value();
  const Matrix& vb = b.value();
  if (vx.cols() != vw.rows() || vb.rows() != 1 || vb.cols() != vw.cols()) {
    throw ShapeError("affine",
                     shape_string(vx) + " * " + shape_string(vw) + " + " + shape_string(vb));
  }
  Matrix out(vx.rows(), vw.cols());
  out.noalias() = vx * vw;
  out.rowwise() += vb.row(0);
  return x.tape().record("affine", std::move(out), {x, w, b},
                         [x, w, b](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(x)) {
                             Matrix gx(g.rows(), w.rows());
                             gx.noalias() = g * w.value().transpose();
                             t.accumulate(x, gx);
                           }
                           if (t.requires_grad(w)) {
                             Matrix gw(x.cols(), g.cols());
                             gw.noalias() = x.value().transpose() * g;
                             t.accumulate(w, gw);
                           }
                           if (t.requires_grad(b)) t.accumulate(b, Matrix(g.colwise().sum()));
                         });
}

Var operator+(const Var& a, const Var& b) {
  return binary(
      "add", a, b, [](const auto& x, const auto& y) { return x + y; },
      [](const auto& g, const auto&, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&, const auto&) { return g; });
}

Var operator-(const Var& a, const Var& b) {
  return binary(
      "sub", a, b, [](const auto& x, const auto& y) { return x - y; },
      [](const auto& g, const auto&, const auto&, const auto&) { return g; },
      [](const auto& g, const auto&, const auto&, const auto&) { return -g; });
}

Var operator*(const Var& a, const Var& b) {
  return binary(
      "mul", a, b, [](const auto& x, const auto& y) { return x * y; },
      [](const auto& g, const auto&, const auto& y, const auto&) { return g * y; },
      [](const auto& g, const auto& x, const auto&, const auto&) { return g * x; });
}

Var operator/(const Var& a, const Var& b) {
  return binary(
      "div", a, b, [](const auto& x, const auto& y) { return x / y; },
      [](const auto& g, const auto&, const auto& y, const auto&) { return g / y; },
      [](const auto& g, const auto&, const auto& y, const auto& out) { return -g * out / y; });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  Matrix out = s * a.value();
  return a.tape().record("scale", std::move(out), {a},
                         [a, s](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, Matrix(s * g)); });
}
Var operator*(const Var& a, double s) { return s * a; }

Var operator+(const Var& a, double s) {
  Matrix out = (a.value().array() + s).matrix();
  return a.tape().record("shift", std::move(out), {a},
                         [a](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(a, g); });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }

Var relu(const Var& a) {
  return unary(
      "relu", a, [](const auto& x) { return Matrix(x.max(0.0)); },
      // Derivative at exactly 0 is 0.
      [](const auto& x, const auto&) { return (x > 0.0).template cast<double>(); });
}

Var sigmoid(const Var& a) {
  return unary(
      "sigmoid", a, [](const auto& x) { return Matrix(x.unaryExpr([](double t) { return sigmoid(t); })); },
      [](const auto&, const auto& y) { return y * (1.0 - y); });
}

Var softplus(const Var& a) {
  return unary(
      "softplus", a, [](const auto& x) { return Matrix(x.unaryExpr([](double t) { return softplus(t); })); },
      [](const auto& x, const auto&) { return x.unaryExpr([](double t) { return sigmoid(t); }); });
}

Var exp(const Var& a) {
  return unary(
      "exp", a, [](const auto& x) { return Matrix(x.exp()); }, [](const auto&, const auto& y) { return y; });
}

Var log(const Var& a) {
  return unary(
      "log", a, [](const auto& x) { return Matrix(x.log()); },
      [](const auto& x, const auto&) { return x.inverse(); });
}

Var square(const Var& a) {
  return unary(
      "square", a, [](const auto& x) { return Matrix(x.square()); },
      [](const auto& x, const auto&) { return 2.0 * x; });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      "clamp", a, [lo, hi](const auto& x) { return Matrix(x.max(lo).min(hi)); },
      [lo, hi](const auto& x, const auto&) { return ((x > lo) && (x < hi)).template cast<double>(); });
}

Var clamp_min(const Var& a, double lo) {
  return unary(
      "clamp_min", a, [lo](const auto& x) { return Matrix(x.max(lo)); },
      [lo](const auto& x, const auto&) { return (x > lo).template cast<double>(); });
}

Var sum(const Var& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape().record("sum", std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().size());
  if (n == 0) throw ShapeError("mean", "empty input");
  return (1.0 / n) * sum(a);
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().record("row_sum", std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix(g.replicate(1, a.cols())));
  });
}

Var col_sum(const Var& a) {
  Matrix out = a.value().colwise().sum();
  return a.tape().record("col_sum", std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(a, Matrix(g.replicate(a.rows(), 1)));
  });
}

Var logsumexp_rows(const Var& a) {
  const Matrix& x = a.value();
  if (x.cols() == 0) throw ShapeError("logsumexp_rows", "no columns");
  const Eigen::VectorXd m = x.rowwise().maxCoeff();
  Matrix out(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    out(i, 0) = m(i) + std::log((x.row(i).array() - m(i)).exp().sum());
  }
  return a.tape().record("logsumexp_rows", std::move(out), {a}, [a](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& x = a.value();
    Matrix contrib(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
      contrib.row(i) = g(i, 0) * (x.row(i).array() - y(i, 0)).exp();
    }
    t.accumulate(a, contrib);
  });
}

Var log_softmax_rows(const Var& a) { return a - logsumexp_rows(a); }

Var softmax_rows(const Var& a) { return exp(log_softmax_rows(a)); }

Var concat_cols(const Var& a, const Var& b) {
  const Matrix& va = a.value();
  const Matrix& vb = b.value();
  if (va.rows() != vb.rows()) {
    throw ShapeError("concat_cols", shape_string(va) + " | " + shape_string(vb));
  }
  Matrix out(va.rows(), va.cols() + vb.cols());
  out << va, vb;
  const Index ca = va.cols();
  const Index cb = vb.cols();
  return a.tape().record("concat_cols", std::move(out), {a, b},
                         [a, b, ca, cb](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(a)) t.accumulate(a, Matrix(g.leftCols(ca)));
                           if (t.requires_grad(b)) t.accumulate(b, Matrix(g.rightCols(cb)));
                         });
}

Var slice_cols(const Var& a, Index start, Index count) {
  const Matrix& va = a.value();
  if (start < 0 || count < 0 || start + count > va.cols()) {
    throw ShapeError("slice_cols", "columns [" + std::to_string(start) + ", " +
                                       std::to_string(start + count) + ") of " + shape_string(va));
  }
  Matrix out = va.middleCols(start, count);
  return a.tape().record("slice_cols", std::move(out), {a},
                         [a, start, count](Tape& t, const Matrix& g, const Matrix&) {
                           Matrix full = Matrix::Zero(a.rows(), a.cols());
                           full.middleCols(start, count) = g;
                           t.accumulate(a, full);
                         });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  const Matrix& va = a.value();
  Matrix out(static_cast<Index>(rows.size()), va.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= va.rows()) {
      throw ShapeError("gather_rows", "row " + std::to_string(rows[i]) + " out of " + shape_string(va));
    }
    out.row(static_cast<Index>(i)) = va.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return a.tape().record("gather_rows", std::move(out), {a},
                         [a, idx = std::move(idx)](Tape& t, const Matrix& g, const Matrix&) {
                           Matrix full = Matrix::Zero(a.rows(), a.cols());
                           for (std::size_t i = 0; i < idx.size(); ++i) {
                             full.row(idx[i]) += g.row(static_cast<Index>(i));
                           }
                           t.accumulate(a, full);
                         });
}

}  // namespace lpvdn::diff
