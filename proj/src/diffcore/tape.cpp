#include "lpvdn/diffcore.hpp"

#include <sstream>

namespace lpvdn::diff {

ShapeError::ShapeError(std::string_view op, const std::string& detail)
    : std::invalid_argument(std::string(op) + ": " + detail), op_(op) {}

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Parameter::Parameter(std::string n, Matrix init)
    : name(std::move(n)),
      value(std::move(init)),
      grad(Matrix::Zero(value.rows(), value.cols())),
      moment1(Matrix::Zero(value.rows(), value.cols())),
      moment2(Matrix::Zero(value.rows(), value.cols())) {}

Tape& Var::tape() const {
  if (!tape_) throw GraphError("use of an unbound Var");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar", "expected 1x1, got " + shape_string(v));
  return v(0, 0);
}

void Tape::check_owned(const Var& v, std::string_view op) const {
  if (!v.valid()) throw GraphError(std::string(op) + ": input Var was never computed");
  if (&v.tape() != this) throw GraphError(std::string(op) + ": input Var belongs to another tape");
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(std::string_view op, Matrix value, std::vector<Var> inputs, BackwardFn backward) {
  if (backward_done_) throw GraphError(std::string(op) + ": tape already consumed by backward()");
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in, op);
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(const Var& v, const Matrix& contribution) {
  Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.requires_grad) return;
  if (contribution.rows() != n.value.rows() || contribution.cols() != n.value.cols()) {
    throw ShapeError(n.op, "adjoint " + shape_string(contribution) + " does not match value " +
                               shape_string(n.value));
  }
  if (n.adjoint.size() == 0) {
    n.adjoint = contribution;
  } else {
    n.adjoint += contribution;
  }
}

void Tape::backward(const Var& out) {
  if (!out.valid()) throw GraphError("backward: output was never computed (run forward first)");
  check_owned(out, "backward");
  if (backward_done_) throw GraphError("backward: already run on this tape");
  Node& root = nodes_[static_cast<std::size_t>(out.id())];
  if (root.value.size() != 1) {
    throw ShapeError("backward", "output must be a scalar, got " + shape_string(root.value));
  }
  backward_done_ = true;
  if (!root.requires_grad) return;
  root.adjoint = Matrix::Ones(1, 1);

  // Node ids are a topological order by construction.
  for (int id = out.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.adjoint.size() == 0) continue;
    if (n.param) {
      n.param->grad += n.adjoint;
    } else if (n.backward) {
      n.backward(*this, n.adjoint, n.value);
    }
    n.adjoint.resize(0, 0);
  }
}

}  // namespace lpvdn::diff

namespace lpvdn::diff {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  auto finalise = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return finalise(finalise(seed) ^ (stream * 0xd1b54a32d192ed03ULL));
}

}  // namespace lpvdn::diff
