#include "ppe/generator.hpp"

#include "ppe/errors.hpp"

namespace ppe {

LatentCode Generator::backprop(const LatentCode&, const Image&) const {
  throw BackendError("generator is not differentiable");
}

LinearGenerator::LinearGenerator(LatentLayout layout, Eigen::MatrixXd weights, Eigen::VectorXd bias)
    : layout_(layout), weights_(std::move(weights)), bias_(std::move(bias)) {
  if (static_cast<std::size_t>(weights_.cols()) != layout_.size()) {
    throw ConfigError("generator weights do not match the latent layout");
  }
  if (bias_.size() != weights_.rows()) throw ConfigError("generator bias does not match the image size");
}

LinearGenerator::LinearGenerator(LatentLayout layout, Eigen::MatrixXd weights)
    : LinearGenerator(layout, weights, Eigen::VectorXd::Zero(weights.rows())) {}

Image LinearGenerator::generate(const LatentCode& w) const {
  if (static_cast<std::size_t>(w.size()) != layout_.size()) {
    throw ValidationError("latent has " + std::to_string(w.size()) + " values, generator expects " +
                          std::to_string(layout_.size()));
  }
  return weights_ * w + bias_;
}

LatentCode LinearGenerator::backprop(const LatentCode& w, const Image& grad_image) const {
  if (static_cast<std::size_t>(w.size()) != layout_.size()) throw ValidationError("latent dimension mismatch");
  return weights_.transpose() * grad_image;
}

}  // namespace ppe
