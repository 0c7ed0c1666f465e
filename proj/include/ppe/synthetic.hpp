#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ppe/attribute_schema.hpp"
#include "ppe/embedding.hpp"
#include "ppe/embedding_cache.hpp"
#include "ppe/generator.hpp"

namespace ppe {

/// Constructed attribute world with known co-occurrence structure.
///
/// Presence of each attribute is drawn from a Gaussian copula: latent
/// z ~ N(0, C) with C built from `co_occurrence` (unspecified pairs are 0),
/// and attribute k is present when z_k exceeds the (1 - prevalence_k) quantile.
/// An item's raw vector is loading * sum of present directions plus isotropic
/// Gaussian noise whose expected norm is `noise`.
struct SyntheticWorldSpec {
  std::size_t dim = 0;
  std::map<std::string, Eigen::VectorXd> attribute_directions;
  std::map<std::string, double> prevalence;
  double default_prevalence = 0.3;
  double loading = 1.0;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void set_co_occurrence(const std::string& a, const std::string& b, double correlation);
  double co_occurrence(const std::string& a, const std::string& b) const;
  const std::map<std::pair<std::string, std::string>, double>& co_occurrence_pairs() const { return co_occurrence_; }

  double prevalence_of(const std::string& text) const;
  std::vector<std::string> attribute_texts() const;

  /// Throws ValidationError on non-unit directions, wrong dimensions, or
  /// out-of-range correlations and prevalences.
  void validate() const;

  nlohmann::json to_json() const;
  static SyntheticWorldSpec from_json(const nlohmann::json& doc);

 private:
  std::map<std::pair<std::string, std::string>, double> co_occurrence_;
};

/// Unit directions for `texts`: orthonormal when dim >= count, otherwise random unit vectors.
std::map<std::string, Eigen::VectorXd> make_directions(const std::vector<std::string>& texts, std::size_t dim,
                                                       std::uint64_t seed);

struct WorldSample {
  std::vector<CorpusItem> items;                // raw vectors in direction space
  std::vector<std::vector<std::string>> present;  // ground truth per item, sorted
};

/// Throws ValidationError("infeasible correlation matrix") when C is not PSD.
WorldSample sample_world(const SyntheticWorldSpec& spec, std::size_t count);

/// Identity-projection backend with the world's directions registered as text embeddings.
std::shared_ptr<SyntheticBackend> make_world_backend(const SyntheticWorldSpec& spec, const std::string& model_id);

struct SyntheticCorpus {
  EmbeddedCorpus corpus;
  std::vector<std::vector<std::string>> present;
  std::shared_ptr<SyntheticBackend> backend;
};

/// Samples `count` items and embeds them with the world backend.
SyntheticCorpus generate_synthetic_corpus(const SyntheticWorldSpec& spec, std::size_t count,
                                          const std::string& model_id = "synthetic-world");

/// A command with planted co-occurring attributes among distractors, plus the
/// hierarchy that organizes them.
struct PlantedWorldOptions {
  std::string command = "command attribute";
  std::string sibling = "command alternative";
  std::size_t planted = 10;
  std::size_t distractors = 30;
  double correlation = 0.8;
  double command_prevalence = 0.2;
  double planted_prevalence = 0.2;
  double distractor_prevalence_min = 0.1;
  double distractor_prevalence_max = 0.5;
  double noise = 0.3;
  std::size_t dim = 128;
  std::uint64_t seed = 0;
};

struct PlantedWorld {
  SyntheticWorldSpec spec;
  AttributeHierarchy hierarchy;
  std::vector<std::string> planted;
  std::vector<std::string> distractors;
};

PlantedWorld make_planted_world(const PlantedWorldOptions& options);

// ---------------------------------------------------------------------------
// Toy differentiable stack: linear generator, linear embedder, linear identity.

struct ToyStackSpec {
  std::string model_id = "toy-linear";
  LatentLayout layout{1, 32};
  std::size_t image_dim = 64;
  std::size_t embed_dim = 64;
  std::size_t identity_dim = 16;
  /// Attribute texts, each given a latent direction.
  std::vector<std::string> attributes;
  std::vector<std::tuple<std::string, std::string, double>> co_occurrence;
  std::map<std::string, double> prevalence;
  double default_prevalence = 0.3;
  /// Text embedding of key = normalize(P A (v_key + sum_j weight_j v_j)): the
  /// text encoder has absorbed the attributes that co-occur with it.
  std::map<std::string, std::map<std::string, double>> text_leakage;
  double loading = 1.0;
  double latent_noise = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ToyStackSpec from_json(const nlohmann::json& doc);
};

class ToyStack {
 public:
  explicit ToyStack(ToyStackSpec spec);

  const ToyStackSpec& spec() const { return spec_; }
  const LinearGenerator& generator() const { return *generator_; }
  std::shared_ptr<const LinearGenerator> generator_ptr() const { return generator_; }
  const std::shared_ptr<SyntheticBackend>& backend() const { return backend_; }
  const LinearIdentityModel& identity() const { return *identity_; }
  std::shared_ptr<const LinearIdentityModel> identity_ptr() const { return identity_; }
  const Eigen::VectorXd& latent_direction(const std::string& text) const;

  /// The attribute world expressed in latent space.
  SyntheticWorldSpec latent_world(std::uint64_t seed) const;
  /// Latent codes sampled from the latent world; items carry latents, not images.
  WorldSample sample_latents(std::size_t count, std::uint64_t seed, const std::string& id_prefix = "latent") const;

 private:
  ToyStackSpec spec_;
  std::shared_ptr<LinearGenerator> generator_;
  std::shared_ptr<SyntheticBackend> backend_;
  std::shared_ptr<LinearIdentityModel> identity_;
  std::map<std::string, Eigen::VectorXd> latent_directions_;
};

/// Toy stack together with the hierarchy that organizes its attributes.
struct ToyWorld {
  ToyStackSpec spec;
  AttributeHierarchy hierarchy;
  std::string command;

  nlohmann::json to_json() const;
  static ToyWorld from_json(const nlohmann::json& doc);
};

/// Face-like toy world: "grey hair" co-occurs with "old" and "with wrinkles",
/// and its text embedding has absorbed both.
ToyWorld demo_toy_world(std::uint64_t seed = 7);

/// Renders latents through `generator` into image items with the same ids.
std::vector<CorpusItem> render_items(const Generator& generator, const std::vector<CorpusItem>& latents);

}  // namespace ppe
