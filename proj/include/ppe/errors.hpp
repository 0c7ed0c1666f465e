#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input data: hierarchy files, prompts, corpora.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An embedding, language-model or generator backend failed or is unavailable.
class BackendError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace ppe
