#pragma once

#include <atomic>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ppe {

/// Raw image content as seen by an embedding backend: a flat pixel vector.
using Image = Eigen::VectorXd;

/// Unit-norm joint-space embedding tagged with the model that produced it.
///
/// Values are held as 32-bit floats so cached and freshly computed embeddings
/// compare bit-equal.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  /// Normalizes `raw`; throws BackendError on non-finite or zero vectors.
  static EmbeddingVector normalized(std::span<const double> raw, std::string model_id);
  static EmbeddingVector normalized(const Eigen::VectorXd& raw, std::string model_id);
  /// Wraps values that are already unit norm (within 1e-6), e.g. read back from a cache.
  static EmbeddingVector from_unit(std::vector<float> values, std::string model_id);

  const std::vector<float>& values() const { return values_; }
  const std::string& model_id() const { return model_id_; }
  std::size_t dim() const { return values_.size(); }
  Eigen::VectorXd as_eigen() const;

  bool operator==(const EmbeddingVector&) const = default;

 private:
  EmbeddingVector(std::vector<float> values, std::string model_id)
      : values_(std::move(values)), model_id_(std::move(model_id)) {}

  std::vector<float> values_;
  std::string model_id_;
};

/// Cosine distance 1 - <a, b>, clamped to [0, 2]. Throws on model or dim mismatch.
double clip_distance(const EmbeddingVector& a, const EmbeddingVector& b);

/// Joint text-image embedding space.
///
/// embed_text/embed_image count their invocations so callers (and tests) can
/// verify cache behaviour. Implementations must be safe for concurrent calls.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;

  virtual const std::string& model_id() const = 0;
  virtual std::size_t dim() const = 0;
  /// Pixel count expected by embed_image, or 0 when any length is accepted.
  virtual std::size_t image_dim() const { return 0; }
  virtual bool available() const { return true; }
  virtual bool differentiable() const { return false; }

  EmbeddingVector embed_text(std::string_view text);
  EmbeddingVector embed_image(const Image& image);

  /// Cosine distance between the embedding of `image` and `text`, plus its
  /// gradient with respect to the pixels when `grad` is non-null.
  /// Computed in double precision without float rounding.
  /// Throws BackendError unless differentiable().
  virtual double image_distance(const Image& image, const EmbeddingVector& text, Image* grad) const;

  std::size_t text_calls() const { return text_calls_.load(); }
  std::size_t image_calls() const { return image_calls_.load(); }

 protected:
  virtual EmbeddingVector do_embed_text(std::string_view text) = 0;
  virtual EmbeddingVector do_embed_image(const Image& image) = 0;

 private:
  std::atomic<std::size_t> text_calls_{0};
  std::atomic<std::size_t> image_calls_{0};
};

/// Deterministic linear backend: image embedding = normalize(P x); text
/// embeddings are registered unit directions. Unregistered texts map to a
/// pseudo-random unit vector derived from the SHA-256 of the text.
class SyntheticBackend final : public EmbeddingBackend {
 public:
  /// `projection` is dim x image_dim.
  SyntheticBackend(std::string model_id, Eigen::MatrixXd projection);
  /// Identity projection of the given dimension.
  SyntheticBackend(std::string model_id, std::size_t dim);

  void register_text(const std::string& text, const Eigen::VectorXd& direction);
  bool has_text(std::string_view text) const;

  const std::string& model_id() const override { return model_id_; }
  std::size_t dim() const override { return static_cast<std::size_t>(projection_.rows()); }
  std::size_t image_dim() const override { return static_cast<std::size_t>(projection_.cols()); }
  bool differentiable() const override { return true; }

  double image_distance(const Image& image, const EmbeddingVector& text, Image* grad) const override;

  const Eigen::MatrixXd& projection() const { return projection_; }
  /// Unit direction for `text` (registered or hash-derived).
  Eigen::VectorXd text_direction(std::string_view text) const;

 protected:
  EmbeddingVector do_embed_text(std::string_view text) override;
  EmbeddingVector do_embed_image(const Image& image) override;

 private:
  std::string model_id_;
  Eigen::MatrixXd projection_;
  std::map<std::string, Eigen::VectorXd, std::less<>> texts_;
};

/// Distances from every row of `embeddings` to `text`.
std::vector<double> distances_to(std::span<const EmbeddingVector> embeddings, const EmbeddingVector& text);

}  // namespace ppe
