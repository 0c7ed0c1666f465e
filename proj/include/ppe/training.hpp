#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ppe/generator.hpp"
#include "ppe/losses.hpp"
#include "ppe/mapper.hpp"

namespace ppe {

/// Adam; the learning rate is multiplied by `decay` once at `decay_at` of the run.
struct OptimizerConfig {
  double learning_rate = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double decay_at = 0.75;
  double decay = 0.5;

  void validate() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& doc);
};

struct TrainingConfig {
  LossConfig loss;
  OptimizerConfig optimizer;
  MapperArchitecture mapper;
  std::size_t steps = 500;
  std::size_t batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& doc);
};

struct TraceStep {
  std::size_t step = 0;
  LossBreakdown loss;

  bool operator==(const TraceStep& o) const {
    return step == o.step && loss.clip == o.loss.clip && loss.l2 == o.loss.l2 && loss.id == o.loss.id &&
           loss.entangle == o.loss.entangle && loss.total == o.loss.total;
  }
};

struct TrainingTrace {
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  /// Coefficients applied during the run.
  LossConfig effective;
  std::vector<TraceStep> records;

  /// Largest relative deviation from total = L_C + l2*L_2 + id*L_ID + e*L_E.
  double max_composition_error() const;

  bool operator==(const TrainingTrace& o) const { return seed == o.seed && steps == o.steps && records == o.records; }

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

struct TrainingResult {
  MapperModel mapper;
  TrainingTrace trace;
};

/// Minimizes the objective over seeded mini-batches of `latents`.
/// Throws TrainingError on a non-finite loss, BackendError on a non-differentiable backend.
TrainingResult train_mapper(const Generator& generator, EmbeddingBackend& backend, const IdentityModel* identity,
                            const std::string& command, const std::vector<std::string>& entangled,
                            const std::vector<LatentCode>& latents, const TrainingConfig& config);

/// G(w + strength * M(w)); strength 0 returns G(w) exactly.
Image manipulate(const Generator& generator, const MapperModel& mapper, const LatentCode& w, double strength = 1.0);

struct Checkpoint {
  MapperModel mapper;
  nlohmann::json metadata;
};

/// Writes `<stem>.bin` (little-endian float64 parameters) and `<stem>.json`.
/// The metadata is extended with layout, architecture and a parameter hash.
void save_checkpoint(const std::filesystem::path& stem, const MapperModel& mapper, nlohmann::json metadata);
Checkpoint load_checkpoint(const std::filesystem::path& stem);

}  // namespace ppe
