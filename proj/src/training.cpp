#include "ppe/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "ppe/errors.hpp"
#include "ppe/hashing.hpp"

namespace ppe {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (!(decay_at >= 0.0 && decay_at <= 1.0)) throw ConfigError("decay_at must lie in [0, 1]");
  if (!(decay > 0.0)) throw ConfigError("decay must be > 0");
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"beta1", beta1},       {"beta2", beta2},
          {"epsilon", epsilon},             {"decay_at", decay_at}, {"decay", decay}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& doc) {
  OptimizerConfig c;
  c.learning_rate = doc.value("learning_rate", c.learning_rate);
  c.beta1 = doc.value("beta1", c.beta1);
  c.beta2 = doc.value("beta2", c.beta2);
  c.epsilon = doc.value("epsilon", c.epsilon);
  c.decay_at = doc.value("decay_at", c.decay_at);
  c.decay = doc.value("decay", c.decay);
  c.validate();
  return c;
}

void TrainingConfig::validate() const {
  loss.validate();
  optimizer.validate();
  if (steps == 0) throw ConfigError("steps must be >= 1");
  if (batch == 0) throw ConfigError("batch must be >= 1");
}

nlohmann::json TrainingConfig::to_json() const {
  return {{"loss", loss.to_json()}, {"optimizer", optimizer.to_json()}, {"mapper", mapper.to_json()},
          {"steps", steps},         {"batch", batch},                   {"seed", seed}};
}

TrainingConfig TrainingConfig::from_json(const nlohmann::json& doc) {
  TrainingConfig c;
  if (doc.contains("loss")) c.loss = LossConfig::from_json(doc.at("loss"));
  if (doc.contains("optimizer")) c.optimizer = OptimizerConfig::from_json(doc.at("optimizer"));
  if (doc.contains("mapper")) c.mapper = MapperArchitecture::from_json(doc.at("mapper"));
  c.steps = doc.value("steps", c.steps);
  c.batch = doc.value("batch", c.batch);
  c.seed = doc.value("seed", c.seed);
  c.validate();
  return c;
}

double TrainingTrace::max_composition_error() const {
  double worst = 0.0;
  for (const auto& r : records) {
    const double expect = r.loss.clip + effective.lambda_l2 * r.loss.l2 + effective.lambda_id * r.loss.id +
                          effective.lambda_e * r.loss.entangle;
    const double scale = std::max(std::abs(expect), 1e-12);
    worst = std::max(worst, std::abs(r.loss.total - expect) / scale);
  }
  return worst;
}

nlohmann::json TrainingTrace::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    rows.push_back({{"step", r.step},
                    {"L_C", r.loss.clip},
                    {"L_2", r.loss.l2},
                    {"L_ID", r.loss.id},
                    {"L_E", r.loss.entangle},
                    {"total", r.loss.total}});
  }
  return {{"seed", seed}, {"steps", steps}, {"coefficients", effective.to_json()}, {"records", std::move(rows)}};
}

std::string TrainingTrace::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,L_C,L_2,L_ID,L_E,total\n";
  for (const auto& r : records) {
    out << r.step << ',' << r.loss.clip << ',' << r.loss.l2 << ',' << r.loss.id << ',' << r.loss.entangle << ','
        << r.loss.total << '\n';
  }
  return out.str();
}

namespace {

// Epoch-wise shuffled batches; the order depends only on the seed.
class BatchSampler {
 public:
  BatchSampler(std::size_t count, std::size_t batch, std::uint64_t seed)
      : order_(count), batch_(std::min(batch, count)), rng_(seed) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < batch_) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    // Fisher-Yates with an explicit draw keeps the order portable across standard libraries.
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng_() % i);
      std::swap(order_[i - 1], order_[j]);
    }
    cursor_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
  std::mt19937_64 rng_;
};

}  // namespace

TrainingResult train_mapper(const Generator& generator, EmbeddingBackend& backend, const IdentityModel* identity,
                            const std::string& command, const std::vector<std::string>& entangled,
                            const std::vector<LatentCode>& latents, const TrainingConfig& config) {
  config.validate();
  if (latents.empty()) throw ValidationError("training needs at least one latent code");
  for (const auto& w : latents) {
    if (static_cast<std::size_t>(w.size()) != generator.layout().size()) {
      throw ValidationError("latent code does not match the generator layout");
    }
    if (!w.allFinite()) throw ValidationError("latent code has non-finite values");
  }
  const PpeObjective objective(generator, backend, identity, command, entangled, config.loss);

  TrainingResult result{MapperModel(generator.layout(), config.mapper, config.seed), {}};
  result.trace.seed = config.seed;
  result.trace.steps = config.steps;
  result.trace.effective = objective.effective_config();

  BatchSampler sampler(latents.size(), config.batch, config.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto n = static_cast<Eigen::Index>(result.mapper.parameter_count());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd grad(n);
  const OptimizerConfig& opt = config.optimizer;
  const auto decay_step = static_cast<std::size_t>(std::floor(opt.decay_at * static_cast<double>(config.steps)));
  std::vector<LatentCode> batch;

  for (std::size_t step = 0; step < config.steps; ++step) {
    batch.clear();
    for (std::size_t idx : sampler.next()) batch.push_back(latents[idx]);
    grad.setZero();
    const LossBreakdown loss = objective.evaluate(result.mapper, batch, &grad);
    if (!std::isfinite(loss.total) || !grad.allFinite()) {
      throw TrainingError("non-finite loss at step " + std::to_string(step), step);
    }
    result.trace.records.push_back({step, loss});

    const double lr = step >= decay_step ? opt.learning_rate * opt.decay : opt.learning_rate;
    const double t = static_cast<double>(step + 1);
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    Eigen::VectorXd params = result.mapper.parameters();
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.epsilon);
    result.mapper.set_parameters(params);
  }
  return result;
}

Image manipulate(const Generator& generator, const MapperModel& mapper, const LatentCode& w, double strength) {
  if (static_cast<std::size_t>(w.size()) != generator.layout().size() || !(mapper.layout() == generator.layout())) {
    throw ValidationError("latent, mapper and generator dimensions differ");
  }
  if (strength == 0.0) return generator.generate(w);
  return generator.generate(w + strength * mapper.offset(w));
}

namespace {

std::string params_bytes(const Eigen::VectorXd& params) {
  std::string bytes(static_cast<std::size_t>(params.size()) * 8, '\0');
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    std::uint64_t bits;
    const double value = params[i];
    std::memcpy(&bits, &value, 8);
    for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return bytes;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return stem.parent_path() / (stem.filename().string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const MapperModel& mapper, nlohmann::json metadata) {
  const std::string bytes = params_bytes(mapper.parameters());
  metadata["layout"] = {{"layers", mapper.layout().layers}, {"width", mapper.layout().width}};
  metadata["architecture"] = mapper.architecture().to_json();
  metadata["parameter_count"] = mapper.parameter_count();
  metadata["parameters_sha256"] = sha256_hex(bytes);
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(with_suffix(stem, ".bin"), std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("cannot write checkpoint " + with_suffix(stem, ".bin").string());
  }
  std::ofstream meta(with_suffix(stem, ".json"), std::ios::trunc);
  meta << metadata.dump(2) << '\n';
  if (!meta) throw Error("cannot write checkpoint metadata " + with_suffix(stem, ".json").string());
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream meta_in(with_suffix(stem, ".json"));
  if (!meta_in) throw ValidationError("missing checkpoint metadata " + with_suffix(stem, ".json").string());
  nlohmann::json metadata;
  try {
    metadata = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("checkpoint metadata is not valid JSON: " + std::string(e.what()));
  }
  std::ifstream in(with_suffix(stem, ".bin"), std::ios::binary);
  if (!in) throw ValidationError("missing checkpoint parameters " + with_suffix(stem, ".bin").string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (sha256_hex(bytes) != metadata.value("parameters_sha256", std::string())) {
    throw ValidationError("checkpoint parameters do not match their recorded hash");
  }
  const LatentLayout layout{metadata.at("layout").at("layers").get<std::size_t>(),
                            metadata.at("layout").at("width").get<std::size_t>()};
  MapperModel mapper(layout, MapperArchitecture::from_json(metadata.at("architecture")), 0);
  if (bytes.size() != mapper.parameter_count() * 8) throw ValidationError("checkpoint parameter count mismatch");
  Eigen::VectorXd params(static_cast<Eigen::Index>(mapper.parameter_count()));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[static_cast<std::size_t>(i) * 8 + b])) << (8 * b);
    }
    double value;
    std::memcpy(&value, &bits, 8);
    params[i] = value;
  }
  mapper.set_parameters(params);
  return {std::move(mapper), std::move(metadata)};
}

}  // namespace ppe
