#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppe/attribute_schema.hpp"
#include "ppe/category_finder.hpp"
#include "ppe/embedding.hpp"

namespace ppe {

/// Runs `command` through the shell with `request` as JSON on stdin and
/// parses one JSON document from stdout. Throws BackendError on a non-zero
/// exit, unparsable output, or an {"error": ...} reply.
nlohmann::json run_json_process(const std::string& command, const nlohmann::json& request);

/// Embedding backend served by an external program, one process per request.
///
/// Requests: {"op": "info"} -> {"model_id", "dim"};
/// {"op": "embed_text", "text"} and {"op": "embed_image", "pixels"} -> {"embedding": [...]}.
class ProcessEmbeddingBackend final : public EmbeddingBackend {
 public:
  /// Queries the program for its model id and dimension.
  explicit ProcessEmbeddingBackend(std::string command);

  const std::string& model_id() const override { return model_id_; }
  std::size_t dim() const override { return dim_; }

 protected:
  EmbeddingVector do_embed_text(std::string_view text) override;
  EmbeddingVector do_embed_image(const Image& image) override;

 private:
  EmbeddingVector parse(const nlohmann::json& reply) const;

  std::string command_;
  std::string model_id_;
  std::size_t dim_ = 0;
};

/// {"op": "infill", "sentence", "top_k"} -> {"tokens": [...]}.
class ProcessInfiller final : public TextInfiller {
 public:
  explicit ProcessInfiller(std::string command) : command_(std::move(command)) {}
  bool available() const override;
  std::vector<std::string> infill(const std::string& masked_sentence, std::size_t top_k) override;

 private:
  std::string command_;
};

/// {"op": "perplexity", "sentence"} -> {"perplexity": x} or {"log_probs": [...]}.
class ProcessPerplexityScorer final : public PerplexityScorer {
 public:
  explicit ProcessPerplexityScorer(std::string command) : command_(std::move(command)) {}
  bool available() const override;
  double perplexity(const std::string& sentence) override;

 private:
  std::string command_;
};

}  // namespace ppe
