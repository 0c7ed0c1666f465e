#include "ppe/losses.hpp"

#include <cmath>
#include <limits>

#include "ppe/embedding_cache.hpp"
#include "ppe/errors.hpp"

namespace ppe {

void LossConfig::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"lambda_l2", lambda_l2}, {"lambda_id", lambda_id}, {"lambda_e", lambda_e}};
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value) || value < 0.0) {
      throw ConfigError(std::string(name) + " must be a finite value >= 0");
    }
  }
}

nlohmann::json LossConfig::to_json() const {
  return {{"lambda_l2", lambda_l2}, {"lambda_id", lambda_id}, {"lambda_e", lambda_e}, {"use_identity", use_identity}};
}

LossConfig LossConfig::from_json(const nlohmann::json& doc) {
  LossConfig c;
  c.lambda_l2 = doc.value("lambda_l2", c.lambda_l2);
  c.lambda_id = doc.value("lambda_id", c.lambda_id);
  c.lambda_e = doc.value("lambda_e", c.lambda_e);
  c.use_identity = doc.value("use_identity", c.use_identity);
  c.validate();
  return c;
}

double clip_loss(const Image& edited, const EmbeddingVector& command, const EmbeddingBackend& backend, Image* grad) {
  return backend.image_distance(edited, command, grad);
}

double entanglement_loss(std::span<const double> before, std::span<const double> after) {
  if (before.empty()) throw ConfigError("entanglement loss needs at least one entangled attribute");
  if (before.size() != after.size()) throw ValidationError("entanglement loss: distance lists differ in length");
  double sum = 0.0;
  for (std::size_t n = 0; n < before.size(); ++n) {
    const double d = before[n] - after[n];
    sum += d * d;
  }
  return sum / static_cast<double>(before.size());
}

double entanglement_loss(const Image& original, const Image& edited, const std::vector<EmbeddingVector>& entangled,
                         const EmbeddingBackend& backend, Image* grad) {
  if (entangled.empty()) throw ConfigError("entanglement loss needs at least one entangled attribute");
  if (grad) *grad = Image::Zero(edited.size());
  const double inv_n = 1.0 / static_cast<double>(entangled.size());
  double sum = 0.0;
  Image g;
  for (const auto& t : entangled) {
    const double before = backend.image_distance(original, t, nullptr);
    const double after = backend.image_distance(edited, t, grad ? &g : nullptr);
    const double d = after - before;
    sum += d * d;
    if (grad) *grad += (2.0 * d * inv_n) * g;
  }
  return sum * inv_n;
}

double l2_loss(const LatentCode& offset, LatentCode* grad) {
  if (grad) *grad = 2.0 * offset;
  return offset.squaredNorm();
}

double id_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd* grad_b) {
  if (a.size() != b.size()) throw ValidationError("identity embeddings differ in size");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw BackendError("identity embedding has zero norm");
  const double cos = a.dot(b) / (na * nb);
  if (grad_b) *grad_b = -(a / (na * nb) - cos * b / (nb * nb));
  return 1.0 - cos;
}

double id_loss(const Image& original, const Image& edited, const IdentityModel& identity, Image* grad) {
  const Eigen::VectorXd a = identity.embed(original);
  const Eigen::VectorXd b = identity.embed(edited);
  Eigen::VectorXd gb;
  const double loss = id_loss(a, b, grad ? &gb : nullptr);
  if (grad) *grad = identity.backprop(edited, gb);
  return loss;
}

PpeObjective::PpeObjective(const Generator& generator, EmbeddingBackend& backend, const IdentityModel* identity,
                           const std::string& command, const std::vector<std::string>& entangled, LossConfig config)
    : generator_(generator), backend_(backend), identity_(identity), config_(config) {
  config_.validate();
  if (!generator.differentiable()) throw ConfigError("training needs a differentiable generator");
  if (!backend.differentiable()) {
    throw BackendError("embedding backend '" + backend.model_id() + "' is not differentiable; training refused");
  }
  if (!config_.use_identity) identity_ = nullptr;
  if (!identity_ && config_.lambda_id != 0.0) {
    if (config_.use_identity) warn("no identity model bound; identity loss disabled");
    config_.lambda_id = 0.0;
  }
  if (config_.lambda_e > 0.0 && entangled.empty()) {
    throw ConfigError("lambda_e > 0 needs a non-empty entanglement list (train with lambda_e = 0 instead)");
  }
  command_ = backend.embed_text(command);
  for (const auto& t : entangled) entangled_.push_back(backend.embed_text(t));
}

LossBreakdown PpeObjective::evaluate(const MapperModel& mapper, std::span<const LatentCode> batch,
                                     Eigen::VectorXd* grad, LossTerms terms) const {
  if (batch.empty()) throw ValidationError("empty training batch");
  if (grad && grad->size() != static_cast<Eigen::Index>(mapper.parameter_count())) {
    *grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mapper.parameter_count()));
  }
  const bool use_e = terms.entangle && !entangled_.empty();
  const bool use_id = terms.id && identity_ != nullptr;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  LossBreakdown out;
  Image g_clip, g_e, g_id;
  LatentCode g_l2;
  for (const auto& w : batch) {
    const LatentCode offset = mapper.offset(w);
    const LatentCode moved = w + offset;
    const Image original = generator_.generate(w);
    const Image edited = generator_.generate(moved);
    if (!offset.allFinite() || !edited.allFinite()) {
      // Diverged mapper: report a non-finite loss instead of failing inside the backend.
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return {nan, nan, nan, nan, nan};
    }

    const double lc = clip_loss(edited, command_, backend_, grad && terms.clip ? &g_clip : nullptr);
    const double l2 = l2_loss(offset, grad && terms.l2 ? &g_l2 : nullptr);
    const double lid = identity_ ? id_loss(original, edited, *identity_, grad && use_id ? &g_id : nullptr) : 0.0;
    const double le =
        entangled_.empty() ? 0.0 : entanglement_loss(original, edited, entangled_, backend_, grad && use_e ? &g_e : nullptr);

    out.clip += lc * inv_b;
    out.l2 += l2 * inv_b;
    out.id += lid * inv_b;
    out.entangle += le * inv_b;

    if (!grad) continue;
    Image g_img = Image::Zero(edited.size());
    if (terms.clip) g_img += g_clip;
    if (use_id) g_img += config_.lambda_id * g_id;
    if (use_e) g_img += config_.lambda_e * g_e;
    LatentCode g_offset = generator_.backprop(moved, g_img);
    if (terms.l2) g_offset += config_.lambda_l2 * g_l2;
    mapper.backprop(w, inv_b * g_offset, *grad);
  }
  out.total = (terms.clip ? out.clip : 0.0) + (terms.l2 ? config_.lambda_l2 * out.l2 : 0.0) +
              (use_id ? config_.lambda_id * out.id : 0.0) + (use_e ? config_.lambda_e * out.entangle : 0.0);
  return out;
}

}  // namespace ppe
