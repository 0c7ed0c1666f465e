#include "ppe/external.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ppe/errors.hpp"

namespace ppe {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

// Removes the request file when the call ends.
struct TempFile {
  std::filesystem::path path;
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

}  // namespace

nlohmann::json run_json_process(const std::string& command, const nlohmann::json& request) {
  std::string pattern = (std::filesystem::temp_directory_path() / "ppe-request-XXXXXX").string();
  const int fd = ::mkstemp(pattern.data());
  if (fd < 0) throw BackendError("cannot create a request file for '" + command + "'");
  ::close(fd);
  TempFile tmp{pattern};
  {
    std::ofstream out(tmp.path);
    out << request.dump();
    if (!out) throw BackendError("cannot write a request file for '" + command + "'");
  }

  const std::string full = command + " < " + shell_quote(tmp.path.string());
  FILE* pipe = ::popen(full.c_str(), "r");
  if (!pipe) throw BackendError("cannot start '" + command + "'");
  std::string output;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw BackendError("backend process '" + command + "' failed (status " + std::to_string(status) + ")");
  }
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(output);
  } catch (const nlohmann::json::exception&) {
    throw BackendError("backend process '" + command + "' returned invalid JSON");
  }
  if (reply.is_object() && reply.contains("error")) {
    throw BackendError("backend process '" + command + "': " + reply["error"].dump());
  }
  return reply;
}

ProcessEmbeddingBackend::ProcessEmbeddingBackend(std::string command) : command_(std::move(command)) {
  const nlohmann::json info = run_json_process(command_, {{"op", "info"}});
  try {
    model_id_ = info.at("model_id").get<std::string>();
    dim_ = info.at("dim").get<std::size_t>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("backend process '" + command_ + "' sent a malformed info reply");
  }
  if (dim_ == 0) throw BackendError("backend process '" + command_ + "' reports dimension 0");
}

EmbeddingVector ProcessEmbeddingBackend::parse(const nlohmann::json& reply) const {
  std::vector<double> values;
  try {
    values = reply.at("embedding").get<std::vector<double>>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("backend process '" + command_ + "' sent no embedding");
  }
  if (values.size() != dim_) {
    throw BackendError("backend process '" + command_ + "' returned " + std::to_string(values.size()) +
                       " values, expected " + std::to_string(dim_));
  }
  return EmbeddingVector::normalized(values, model_id_);
}

EmbeddingVector ProcessEmbeddingBackend::do_embed_text(std::string_view text) {
  return parse(run_json_process(command_, {{"op", "embed_text"}, {"text", std::string(text)}}));
}

EmbeddingVector ProcessEmbeddingBackend::do_embed_image(const Image& image) {
  const std::vector<double> pixels(image.data(), image.data() + image.size());
  return parse(run_json_process(command_, {{"op", "embed_image"}, {"pixels", pixels}}));
}

bool ProcessInfiller::available() const {
  try {
    run_json_process(command_, {{"op", "info"}});
    return true;
  } catch (const BackendError&) {
    return false;
  }
}

std::vector<std::string> ProcessInfiller::infill(const std::string& masked_sentence, std::size_t top_k) {
  const nlohmann::json reply =
      run_json_process(command_, {{"op", "infill"}, {"sentence", masked_sentence}, {"top_k", top_k}});
  try {
    return reply.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("infill process '" + command_ + "' sent no tokens");
  }
}

bool ProcessPerplexityScorer::available() const {
  try {
    run_json_process(command_, {{"op", "info"}});
    return true;
  } catch (const BackendError&) {
    return false;
  }
}

double ProcessPerplexityScorer::perplexity(const std::string& sentence) {
  const nlohmann::json reply = run_json_process(command_, {{"op", "perplexity"}, {"sentence", sentence}});
  double value = NAN;
  if (reply.contains("perplexity")) {
    value = reply["perplexity"].get<double>();
  } else if (reply.contains("log_probs")) {
    const auto lp = reply["log_probs"].get<std::vector<double>>();
    value = perplexity_from_log_probs(lp);
  }
  if (!std::isfinite(value)) throw BackendError("perplexity process '" + command_ + "' sent no finite score");
  return value;
}

}  // namespace ppe
