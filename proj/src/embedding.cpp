#include "ppe/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ppe/errors.hpp"
#include "ppe/hashing.hpp"

namespace ppe {

EmbeddingVector EmbeddingVector::normalized(std::span<const double> raw, std::string model_id) {
  if (raw.empty()) throw BackendError("embedding of model '" + model_id + "' is empty");
  double sq = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw BackendError("embedding of model '" + model_id + "' has non-finite entries");
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0)) throw BackendError("embedding of model '" + model_id + "' has zero norm");
  std::vector<float> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) values[i] = static_cast<float>(raw[i] / norm);
  return EmbeddingVector(std::move(values), std::move(model_id));
}

EmbeddingVector EmbeddingVector::normalized(const Eigen::VectorXd& raw, std::string model_id) {
  return normalized(std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())), std::move(model_id));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values, std::string model_id) {
  double sq = 0.0;
  for (float v : values) {
    if (!std::isfinite(v)) throw BackendError("embedding has non-finite entries");
    sq += static_cast<double>(v) * v;
  }
  if (values.empty() || std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
    throw BackendError("embedding of model '" + model_id + "' is not unit-normalized");
  }
  return EmbeddingVector(std::move(values), std::move(model_id));
}

Eigen::VectorXd EmbeddingVector::as_eigen() const {
  Eigen::VectorXd out(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out[static_cast<Eigen::Index>(i)] = values_[i];
  return out;
}

double clip_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.model_id() != b.model_id()) {
    throw BackendError("cannot compare embeddings of models '" + a.model_id() + "' and '" + b.model_id() + "'");
  }
  if (a.dim() != b.dim()) throw BackendError("embedding dimensions differ");
  double dot = 0.0;
  const auto& x = a.values();
  const auto& y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) dot += static_cast<double>(x[i]) * y[i];
  return std::clamp(1.0 - dot, 0.0, 2.0);
}

std::vector<double> distances_to(std::span<const EmbeddingVector> embeddings, const EmbeddingVector& text) {
  std::vector<double> out;
  out.reserve(embeddings.size());
  for (const auto& e : embeddings) out.push_back(clip_distance(e, text));
  return out;
}

EmbeddingVector EmbeddingBackend::embed_text(std::string_view text) {
  if (text.empty()) throw BackendError("cannot embed empty text");
  if (!available()) throw BackendError("embedding backend '" + model_id() + "' is unavailable");
  ++text_calls_;
  auto out = do_embed_text(text);
  if (out.dim() != dim()) throw BackendError("backend returned an embedding of the wrong dimension");
  return out;
}

EmbeddingVector EmbeddingBackend::embed_image(const Image& image) {
  if (!available()) throw BackendError("embedding backend '" + model_id() + "' is unavailable");
  if (image_dim() != 0 && static_cast<std::size_t>(image.size()) != image_dim()) {
    throw BackendError("image has " + std::to_string(image.size()) + " pixels, backend expects " +
                       std::to_string(image_dim()));
  }
  ++image_calls_;
  auto out = do_embed_image(image);
  if (out.dim() != dim()) throw BackendError("backend returned an embedding of the wrong dimension");
  return out;
}

double EmbeddingBackend::image_distance(const Image&, const EmbeddingVector&, Image*) const {
  throw BackendError("embedding backend '" + model_id() + "' is not differentiable");
}

// ---------------------------------------------------------------------------

SyntheticBackend::SyntheticBackend(std::string model_id, Eigen::MatrixXd projection)
    : model_id_(std::move(model_id)), projection_(std::move(projection)) {
  if (projection_.rows() == 0 || projection_.cols() == 0) throw ConfigError("synthetic projection is empty");
}

SyntheticBackend::SyntheticBackend(std::string model_id, std::size_t dim)
    : SyntheticBackend(std::move(model_id),
                       Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))) {}

void SyntheticBackend::register_text(const std::string& text, const Eigen::VectorXd& direction) {
  if (direction.size() != projection_.rows()) {
    throw ConfigError("direction for '" + text + "' has the wrong dimension");
  }
  const double norm = direction.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ConfigError("direction for '" + text + "' is degenerate");
  texts_[text] = direction / norm;
}

bool SyntheticBackend::has_text(std::string_view text) const { return texts_.find(text) != texts_.end(); }

Eigen::VectorXd SyntheticBackend::text_direction(std::string_view text) const {
  if (auto it = texts_.find(text); it != texts_.end()) return it->second;
  const std::string digest = sha256_hex(text);
  std::seed_seq seq(digest.begin(), digest.end());
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(projection_.rows());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return v / v.norm();
}

EmbeddingVector SyntheticBackend::do_embed_text(std::string_view text) {
  return EmbeddingVector::normalized(text_direction(text), model_id_);
}

EmbeddingVector SyntheticBackend::do_embed_image(const Image& image) {
  return EmbeddingVector::normalized(Eigen::VectorXd(projection_ * image), model_id_);
}

double SyntheticBackend::image_distance(const Image& image, const EmbeddingVector& text, Image* grad) const {
  if (text.model_id() != model_id_) throw BackendError("text embedding belongs to model '" + text.model_id() + "'");
  if (image.size() != projection_.cols()) throw BackendError("image dimension mismatch");
  const Eigen::VectorXd y = projection_ * image;
  const double norm = y.norm();
  if (!(norm > 0.0)) throw BackendError("image projects to the zero vector");
  const Eigen::VectorXd e = y / norm;
  const Eigen::VectorXd t = text.as_eigen();
  const double cos = e.dot(t);
  if (grad != nullptr) {
    const Eigen::VectorXd dy = -(t - e * cos) / norm;
    *grad = projection_.transpose() * dy;
  }
  return 1.0 - cos;
}

}  // namespace ppe
