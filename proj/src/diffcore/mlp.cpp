#include <cmath>

#include "lpvdn/diffcore.hpp"

namespace lpvdn::diff {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::none: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Mlp::Mlp(std::string name, std::vector<int> widths, Activation output, Rng& rng)
    : name_(std::move(name)), widths_(std::move(widths)), output_(output) {
  if (widths_.size() < 2) throw ShapeError("mlp", name_ + " needs at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const int fan_in = widths_[l];
    const int fan_out = widths_[l + 1];
    if (fan_in <= 0 || fan_out <= 0) throw ShapeError("mlp", name_ + " has a non-positive width");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
    weights_.emplace_back(name_ + "." + std::to_string(l) + ".weight", std::move(w));
    biases_.emplace_back(name_ + "." + std::to_string(l) + ".bias", Matrix::Zero(1, fan_out));
  }
}

Var Mlp::forward(Tape& tape, const Var& x) {
  if (x.cols() != widths_.front()) {
    throw ShapeError("mlp", name_ + " expects " + std::to_string(widths_.front()) + " inputs, got " +
                                shape_string(x.value()));
  }
  Var h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(h, tape.param(weights_[l]), tape.param(biases_[l]));
    if (l + 1 < layers) {
      h = relu(h);
    } else if (output_ == Activation::relu) {
      h = relu(h);
    } else if (output_ == Activation::sigmoid) {
      h = sigmoid(h);
    }
  }
  return h;
}

Matrix Mlp::predict(const Matrix& x) const {
  if (x.cols() != widths_.front()) {
    throw ShapeError("mlp", name_ + " expects " + std::to_string(widths_.front()) + " inputs, got " +
                                shape_string(x));
  }
  Matrix h = x;
  const std::size_t layers = weights_.size();
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix next(h.rows(), weights_[l].value.cols());
    next.noalias() = h * weights_[l].value;
    next.rowwise() += biases_[l].value.row(0);
    const bool last = l + 1 == layers;
    if (!last || output_ == Activation::relu) {
      next = next.cwiseMax(0.0);
    } else if (output_ == Activation::sigmoid) {
      next = next.unaryExpr([](double t) { return sigmoid(t); });
    }
    h = std::move(next);
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back(&weights_[l]);
    out.push_back(&biases_[l]);
  }
  return out;
}

void Mlp::set_zero() {
  for (auto& w : weights_) w.value.setZero();
  for (auto& b : biases_) b.value.setZero();
}

}  // namespace lpvdn::diff
