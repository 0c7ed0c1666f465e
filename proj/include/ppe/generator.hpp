#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "ppe/embedding.hpp"

namespace ppe {

/// Shape of a layered latent code (the W+ analog): `layers` rows of `width` values.
struct LatentLayout {
  std::size_t layers = 1;
  std::size_t width = 0;

  std::size_t size() const { return layers * width; }
  bool operator==(const LatentLayout&) const = default;
};

/// A latent code stored flat, layer after layer.
using LatentCode = Eigen::VectorXd;

/// Frozen image generator G.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual LatentLayout layout() const = 0;
  virtual std::size_t image_dim() const = 0;
  virtual bool differentiable() const { return false; }
  virtual Image generate(const LatentCode& w) const = 0;
  /// Vector-Jacobian product: d<grad_image, G(w)>/dw.
  virtual LatentCode backprop(const LatentCode& w, const Image& grad_image) const;
};

/// Toy generator G(w) = A w + b.
class LinearGenerator final : public Generator {
 public:
  LinearGenerator(LatentLayout layout, Eigen::MatrixXd weights, Eigen::VectorXd bias);
  LinearGenerator(LatentLayout layout, Eigen::MatrixXd weights);

  LatentLayout layout() const override { return layout_; }
  std::size_t image_dim() const override { return static_cast<std::size_t>(weights_.rows()); }
  bool differentiable() const override { return true; }
  Image generate(const LatentCode& w) const override;
  LatentCode backprop(const LatentCode& w, const Image& grad_image) const override;

  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::VectorXd& bias() const { return bias_; }

 private:
  LatentLayout layout_;
  Eigen::MatrixXd weights_;
  Eigen::VectorXd bias_;
};

/// Face-identity embedding used by the identity loss.
class IdentityModel {
 public:
  virtual ~IdentityModel() = default;
  virtual Eigen::VectorXd embed(const Image& image) const = 0;
  /// d<grad_embedding, embed(image)>/d image.
  virtual Image backprop(const Image& image, const Eigen::VectorXd& grad_embedding) const = 0;
};

/// Identity embedding as a fixed linear projection Q x.
class LinearIdentityModel final : public IdentityModel {
 public:
  explicit LinearIdentityModel(Eigen::MatrixXd projection) : projection_(std::move(projection)) {}
  Eigen::VectorXd embed(const Image& image) const override { return projection_ * image; }
  Image backprop(const Image&, const Eigen::VectorXd& grad_embedding) const override {
    return projection_.transpose() * grad_embedding;
  }
  const Eigen::MatrixXd& projection() const { return projection_; }

 private:
  Eigen::MatrixXd projection_;
};

}  // namespace ppe
