#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppe/errors.hpp"
#include "ppe/evaluation.hpp"
#include "ppe/predictor.hpp"
#include "ppe/training.hpp"

namespace ppe {

std::string tool_version();

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitBackend = 3,
  kExitBusy = 4,
};

/// Thrown when another run holds the output directory.
class LockError : public Error {
 public:
  using Error::Error;
};

struct PipelinePaths {
  std::string corpus;
  std::string train_latents;
  std::string test_latents;
  std::string cache_dir;
  std::string output_dir;
  std::string world;
};

/// Parsed configuration. Keys are validated field by field; errors name the
/// offending key, e.g. "paths.corpus".
struct PipelineConfig {
  nlohmann::json document;  // merged input, kept for provenance

  std::string command;
  std::uint64_t seed = 0;
  std::string backend = "toy";    // "toy" or "process:<shell command>"
  std::string generator = "toy";  // "toy" or "none"
  std::string hierarchy;          // bundled id or path; empty: the world's hierarchy
  PredictorConfig predictor;
  TrainingConfig training;
  std::vector<double> strengths{0.0, 0.5, 1.0, 1.5, 2.0};
  std::size_t manipulate_count = 4;
  PipelinePaths paths;
  nlohmann::json mining = nlohmann::json::object();
  nlohmann::json find_category = nlohmann::json::object();

  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
};

/// Applies "dotted.key=value" to `doc`; the value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

enum class TrainMode { ppe, baseline };
std::string to_string(TrainMode mode);
TrainMode parse_mode(const std::string& text);

/// Writes a ready-to-run demo: world.json, corpus.json, train_latents.json,
/// test_latents.json and config.json. `kind` is "toy" or "planted".
std::filesystem::path write_demo(const std::filesystem::path& dir, const std::string& kind, std::uint64_t seed,
                                 std::size_t corpus_size = 2000, std::size_t test_size = 200);

/// Orchestrates the stages over one output directory, which it locks for its lifetime.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const PipelineConfig& config() const { return config_; }

  std::string predict_hash() const;
  std::string train_hash(TrainMode mode) const;
  std::string evaluate_hash(TrainMode mode) const;
  std::string report_hash() const;

  std::filesystem::path prediction_path() const;
  std::filesystem::path checkpoint_stem(TrainMode mode) const;
  std::filesystem::path evaluation_path(TrainMode mode) const;

  std::filesystem::path cmd_predict();
  std::filesystem::path cmd_train(TrainMode mode);
  std::filesystem::path cmd_evaluate(TrainMode mode);
  std::filesystem::path cmd_manipulate();
  std::filesystem::path cmd_mine();
  std::filesystem::path cmd_find_category();
  /// Reads persisted evaluation artifacts only; returns the rendered table.
  std::string cmd_report();

 private:
  struct Runtime;
  struct Bound {
    EmbeddingBackend* backend = nullptr;
    const Generator* generator = nullptr;
    const IdentityModel* identity = nullptr;
  };

  Runtime& runtime();
  void load_world();
  EmbeddingBackend& bind_backend();
  Bound bind_generator();
  const AttributeHierarchy& hierarchy();
  const EmbeddedCorpus& corpus();
  std::string input_digest(const std::string& path) const;
  std::string stage_hash(const nlohmann::json& payload) const;
  EntanglementPrediction load_or_predict();
  std::vector<LatentCode> load_latents(const std::string& path, const char* field) const;
  void record(const std::string& folder, const nlohmann::json& entry) const;
  void acquire_lock();

  PipelineConfig config_;
  std::filesystem::path out_;
  std::filesystem::path lock_path_;
  bool locked_ = false;
  std::unique_ptr<Runtime> runtime_;
};

/// Entry point shared by the tool and tests; returns the process exit code.
int run_cli(int argc, const char* const* argv);

}  // namespace ppe
