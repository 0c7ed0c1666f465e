#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ppe/embedding.hpp"
#include "ppe/generator.hpp"
#include "ppe/mapper.hpp"

namespace ppe {

struct LossConfig {
  double lambda_l2 = 0.8;
  double lambda_id = 0.1;
  double lambda_e = 100.0;
  /// When false (or no identity model is bound) the identity term is dropped.
  bool use_identity = true;

  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& doc);
};

/// D(i', t_comd). Gradient w.r.t. the image goes to `grad` when non-null.
double clip_loss(const Image& edited, const EmbeddingVector& command, const EmbeddingBackend& backend,
                 Image* grad = nullptr);

/// (1/N) sum_n (before_n - after_n)^2 over precomputed distances.
double entanglement_loss(std::span<const double> before, std::span<const double> after);

/// Image form. `grad` receives d/d(edited); the original image is held fixed.
double entanglement_loss(const Image& original, const Image& edited, const std::vector<EmbeddingVector>& entangled,
                         const EmbeddingBackend& backend, Image* grad = nullptr);

/// Squared norm of the mapped offset.
double l2_loss(const LatentCode& offset, LatentCode* grad = nullptr);

/// 1 - cos(a, b). `grad_b` receives d/db.
double id_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& b, Eigen::VectorXd* grad_b = nullptr);
double id_loss(const Image& original, const Image& edited, const IdentityModel& identity, Image* grad = nullptr);

struct LossBreakdown {
  double clip = 0.0;
  double l2 = 0.0;
  double id = 0.0;
  double entangle = 0.0;
  double total = 0.0;
};

/// Which terms enter `total` and the gradient.
struct LossTerms {
  bool clip = true;
  bool l2 = true;
  bool id = true;
  bool entangle = true;
};

/// Batch-mean training objective L_C + l2*L_2 + id*L_ID + e*L_E for a fixed
/// command and entanglement list.
class PpeObjective {
 public:
  PpeObjective(const Generator& generator, EmbeddingBackend& backend, const IdentityModel* identity,
               const std::string& command, const std::vector<std::string>& entangled, LossConfig config);

  /// Coefficients actually applied (lambda_id is 0 without an identity model).
  const LossConfig& effective_config() const { return config_; }
  bool identity_active() const { return identity_ != nullptr; }

  /// Adds the gradient w.r.t. the mapper parameters to `grad` when non-null.
  LossBreakdown evaluate(const MapperModel& mapper, std::span<const LatentCode> batch, Eigen::VectorXd* grad,
                         LossTerms terms = {}) const;

 private:
  const Generator& generator_;
  const EmbeddingBackend& backend_;
  const IdentityModel* identity_;
  EmbeddingVector command_;
  std::vector<EmbeddingVector> entangled_;
  LossConfig config_;
};

}  // namespace ppe
