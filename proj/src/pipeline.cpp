#include "ppe/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "ppe/category_finder.hpp"
#include "ppe/errors.hpp"
#include "ppe/external.hpp"
#include "ppe/hashing.hpp"
#include "ppe/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ppe {

std::string tool_version() { return PPE_VERSION; }

std::string to_string(TrainMode mode) { return mode == TrainMode::ppe ? "ppe" : "baseline"; }

TrainMode parse_mode(const std::string& text) {
  if (text == "ppe") return TrainMode::ppe;
  if (text == "baseline") return TrainMode::baseline;
  throw ConfigError("mode: expected 'ppe' or 'baseline', got '" + text + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::set<std::string> kTopLevelKeys = {
    "command",      "seed",        "backend",   "generator",     "hierarchy",     "lambda_l2",    "lambda_id",
    "lambda_e",     "use_identity", "n_entangled", "rank_cap",    "top_images",    "min_relevant", "score_negations",
    "category_hint", "steps",      "batch",     "learning_rate", "optimizer",     "mapper",       "strengths",
    "manipulate_count", "paths",   "mining",    "find_category"};
const std::set<std::string> kPathKeys = {"corpus", "train_latents", "test_latents", "cache_dir", "output_dir", "world"};

template <typename T>
T field(const json& doc, const std::string& key, const std::string& name, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(name + ": unexpected value " + doc.at(key).dump());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json parse_json_file(const fs::path& path, const std::string& name) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ValidationError(name + ": " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!kTopLevelKeys.contains(key)) throw ConfigError(key + ": unknown config key");
  }
  PipelineConfig c;
  c.document = doc;
  if (!doc.contains("seed")) throw ConfigError("seed: required");
  c.seed = field<std::uint64_t>(doc, "seed", "seed", 0);
  c.command = field<std::string>(doc, "command", "command", "");
  c.backend = field<std::string>(doc, "backend", "backend", c.backend);
  c.generator = field<std::string>(doc, "generator", "generator", c.generator);
  c.hierarchy = field<std::string>(doc, "hierarchy", "hierarchy", "");
  if (c.backend != "toy" && c.backend.rfind("process:", 0) != 0) {
    throw ConfigError("backend: expected 'toy' or 'process:<command>', got '" + c.backend + "'");
  }
  if (c.generator != "toy" && c.generator != "none") {
    throw ConfigError("generator: expected 'toy' or 'none', got '" + c.generator + "'");
  }

  auto& p = c.predictor;
  p.n_entangled = field<std::size_t>(doc, "n_entangled", "n_entangled", p.n_entangled);
  p.rank_cap = field<std::size_t>(doc, "rank_cap", "rank_cap", p.rank_cap);
  p.top_images = field<std::size_t>(doc, "top_images", "top_images", p.top_images);
  p.min_relevant = field<std::size_t>(doc, "min_relevant", "min_relevant", p.min_relevant);
  p.score_negations = field<bool>(doc, "score_negations", "score_negations", p.score_negations);
  if (doc.contains("category_hint")) p.category_hint = field<std::string>(doc, "category_hint", "category_hint", "");
  if (p.n_entangled < 1) throw ConfigError("n_entangled: must be >= 1");
  if (p.rank_cap < 1) throw ConfigError("rank_cap: must be >= 1");
  if (p.top_images < 1) throw ConfigError("top_images: must be >= 1");

  auto& t = c.training;
  t.loss.lambda_l2 = field<double>(doc, "lambda_l2", "lambda_l2", t.loss.lambda_l2);
  t.loss.lambda_id = field<double>(doc, "lambda_id", "lambda_id", t.loss.lambda_id);
  t.loss.lambda_e = field<double>(doc, "lambda_e", "lambda_e", t.loss.lambda_e);
  t.loss.use_identity = field<bool>(doc, "use_identity", "use_identity", t.loss.use_identity);
  for (const auto& [name, value] :
       {std::pair{"lambda_l2", t.loss.lambda_l2}, {"lambda_id", t.loss.lambda_id}, {"lambda_e", t.loss.lambda_e}}) {
    if (!(value >= 0.0) || !std::isfinite(value)) throw ConfigError(std::string(name) + ": must be a finite value >= 0");
  }
  t.steps = field<std::size_t>(doc, "steps", "steps", t.steps);
  t.batch = field<std::size_t>(doc, "batch", "batch", t.batch);
  t.seed = c.seed;
  if (t.steps < 1) throw ConfigError("steps: must be >= 1");
  if (t.batch < 1) throw ConfigError("batch: must be >= 1");
  try {
    if (doc.contains("optimizer")) t.optimizer = OptimizerConfig::from_json(doc.at("optimizer"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("optimizer: ") + e.what());
  }
  t.optimizer.learning_rate = field<double>(doc, "learning_rate", "learning_rate", t.optimizer.learning_rate);
  if (!(t.optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate: must be > 0");
  try {
    if (doc.contains("mapper")) t.mapper = MapperArchitecture::from_json(doc.at("mapper"));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("mapper: ") + e.what());
  }

  c.strengths = field<std::vector<double>>(doc, "strengths", "strengths", c.strengths);
  for (double s : c.strengths) {
    if (!std::isfinite(s)) throw ConfigError("strengths: values must be finite");
  }
  c.manipulate_count = field<std::size_t>(doc, "manipulate_count", "manipulate_count", c.manipulate_count);

  if (doc.contains("paths")) {
    const json& paths = doc.at("paths");
    if (!paths.is_object()) throw ConfigError("paths: expected an object");
    for (const auto& [key, _] : paths.items()) {
      if (!kPathKeys.contains(key)) throw ConfigError("paths." + key + ": unknown path key");
    }
    c.paths.corpus = field<std::string>(paths, "corpus", "paths.corpus", "");
    c.paths.train_latents = field<std::string>(paths, "train_latents", "paths.train_latents", "");
    c.paths.test_latents = field<std::string>(paths, "test_latents", "paths.test_latents", "");
    c.paths.cache_dir = field<std::string>(paths, "cache_dir", "paths.cache_dir", "");
    c.paths.output_dir = field<std::string>(paths, "output_dir", "paths.output_dir", "");
    c.paths.world = field<std::string>(paths, "world", "paths.world", "");
  }
  for (const auto& [name, value] : {std::pair{"paths.corpus", &c.paths.corpus},
                                    {"paths.train_latents", &c.paths.train_latents},
                                    {"paths.test_latents", &c.paths.test_latents},
                                    {"paths.world", &c.paths.world}}) {
    if (!value->empty() && !fs::is_regular_file(*value)) {
      throw ConfigError(std::string(name) + ": file not found: " + *value);
    }
  }
  if (c.paths.output_dir.empty()) throw ConfigError("paths.output_dir: required");

  c.mining = doc.value("mining", json::object());
  c.find_category = doc.value("find_category", json::object());
  if (!c.mining.is_object()) throw ConfigError("mining: expected an object");
  if (!c.find_category.is_object()) throw ConfigError("find_category: expected an object");
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "': expected key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "': empty key segment");
    if (!node->is_object()) throw ConfigError(key + ": cannot override inside a non-object value");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

PipelineConfig PipelineConfig::load(const fs::path& path, const std::vector<std::string>& overrides) {
  if (!fs::is_regular_file(path)) throw ConfigError("config: file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  // Paths written in the file are relative to the file; overrides stay relative to the working directory.
  if (doc.is_object() && doc.contains("paths") && doc["paths"].is_object()) {
    const fs::path base = fs::absolute(path).parent_path();
    for (auto& [key, value] : doc["paths"].items()) {
      if (value.is_string() && !value.get<std::string>().empty() && fs::path(value.get<std::string>()).is_relative()) {
        value = (base / value.get<std::string>()).lexically_normal().string();
      }
    }
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return from_json(doc);
}

// ---------------------------------------------------------------------------
// Data files

namespace {

json items_json(const std::vector<CorpusItem>& items, const std::string& kind, const json& extra = json::object()) {
  json arr = json::array();
  for (const auto& item : items) {
    const std::vector<double> values(item.pixels.data(), item.pixels.data() + item.pixels.size());
    json entry{{"id", item.id}, {"values", values}};
    if (!item.provenance.empty()) entry["provenance"] = item.provenance;
    arr.push_back(std::move(entry));
  }
  json doc{{"kind", kind}, {"items", std::move(arr)}};
  for (const auto& [k, v] : extra.items()) doc[k] = v;
  return doc;
}

std::vector<CorpusItem> read_items(const fs::path& path, const std::string& kind, const std::string& name) {
  const json doc = parse_json_file(path, name);
  if (doc.value("kind", std::string()) != kind) {
    throw ValidationError(name + ": " + path.string() + " is not a '" + kind + "' file");
  }
  std::vector<CorpusItem> out;
  try {
    for (const auto& e : doc.at("items")) {
      const auto values = e.at("values").get<std::vector<double>>();
      Image pixels = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
      out.push_back({e.at("id").get<std::string>(), std::move(pixels), e.value("provenance", path.filename().string())});
    }
  } catch (const json::exception& e) {
    throw ValidationError(name + ": malformed item list (" + std::string(e.what()) + ")");
  }
  return out;
}

}  // namespace

fs::path write_demo(const fs::path& dir, const std::string& kind, std::uint64_t seed, std::size_t corpus_size,
                    std::size_t test_size) {
  fs::create_directories(dir);
  json config{{"seed", seed}, {"backend", "toy"}, {"paths", {{"world", "world.json"}, {"corpus", "corpus.json"}, {"output_dir", "out"}}}};
  if (kind == "toy") {
    const ToyWorld world = demo_toy_world(seed);
    const ToyStack stack(world.spec);
    const auto train = stack.sample_latents(corpus_size, seed + 1, "train");
    const auto test = stack.sample_latents(test_size, seed + 2, "test");
    const json layout{{"layers", world.spec.layout.layers}, {"width", world.spec.layout.width}};
    write_json(dir / "world.json", world.to_json());
    write_json(dir / "corpus.json", items_json(render_items(stack.generator(), train.items), "images"));
    write_json(dir / "train_latents.json", items_json(train.items, "latents", {{"layout", layout}}));
    write_json(dir / "test_latents.json", items_json(test.items, "latents", {{"layout", layout}}));
    config["command"] = world.command;
    config["generator"] = "toy";
    config["n_entangled"] = 4;
    config["steps"] = 500;
    config["batch"] = 32;
    config["learning_rate"] = 0.01;
    config["lambda_l2"] = 0.8;
    config["lambda_id"] = 0.1;
    config["lambda_e"] = 100.0;
    config["strengths"] = {0.0, 0.5, 1.0, 1.5, 2.0};
    config["paths"]["train_latents"] = "train_latents.json";
    config["paths"]["test_latents"] = "test_latents.json";
  } else if (kind == "planted") {
    PlantedWorldOptions options;
    options.seed = seed;
    const PlantedWorld world = make_planted_world(options);
    const WorldSample sample = sample_world(world.spec, corpus_size);
    write_json(dir / "world.json", {{"kind", "planted"},
                                    {"command", options.command},
                                    {"world", world.spec.to_json()},
                                    {"hierarchy", to_json(world.hierarchy)},
                                    {"planted", world.planted}});
    write_json(dir / "corpus.json", items_json(sample.items, "images"));
    config["command"] = options.command;
    config["generator"] = "none";
    config["n_entangled"] = 10;
  } else {
    throw ConfigError("kind: expected 'toy' or 'planted', got '" + kind + "'");
  }
  write_json(dir / "config.json", config);
  return dir / "config.json";
}

// ---------------------------------------------------------------------------
// Pipeline

struct Pipeline::Runtime {
  json world_doc;
  std::optional<ToyStack> toy;
  std::optional<SyntheticWorldSpec> planted;
  std::optional<AttributeHierarchy> world_hierarchy;
  std::shared_ptr<EmbeddingBackend> backend;
  std::optional<AttributeHierarchy> hierarchy;
  std::optional<EmbeddedCorpus> corpus;
  std::unique_ptr<EmbeddingCache> cache;
  RangeCache ranges;
  FullScoreCache full_scores;
  bool world_loaded = false;
};

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)), out_(config_.paths.output_dir) {
  fs::create_directories(out_);
  acquire_lock();
}

Pipeline::~Pipeline() {
  if (locked_) {
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
}

void Pipeline::acquire_lock() {
  lock_path_ = out_ / ".ppe.lock";
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      if (::write(fd, pid.data(), pid.size()) < 0) {
        ::close(fd);
        throw Error("cannot write lock file " + lock_path_.string());
      }
      ::close(fd);
      locked_ = true;
      return;
    }
    if (errno != EEXIST) throw Error("cannot create lock file " + lock_path_.string());
    long owner = 0;
    {
      std::ifstream in(lock_path_);
      in >> owner;
    }
    const bool alive = owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM);
    if (alive) {
      throw LockError("output directory " + out_.string() + " is in use by process " + std::to_string(owner) +
                      " (lock file " + lock_path_.string() + ")");
    }
    warn("removing stale lock file " + lock_path_.string());
    std::error_code ec;
    fs::remove(lock_path_, ec);
  }
  throw LockError("cannot acquire lock file " + lock_path_.string());
}

Pipeline::Runtime& Pipeline::runtime() {
  if (!runtime_) runtime_ = std::make_unique<Runtime>();
  return *runtime_;
}

std::string Pipeline::input_digest(const std::string& path) const {
  if (path.empty()) return "";
  return sha256_hex(read_file(path));
}

std::string Pipeline::stage_hash(const json& payload) const { return sha256_hex(payload.dump()).substr(0, 16); }

std::string Pipeline::predict_hash() const {
  json payload{{"stage", "predict"},
               {"version", tool_version()},
               {"command", config_.command},
               {"backend", config_.backend},
               {"hierarchy", config_.hierarchy},
               {"world", input_digest(config_.paths.world)},
               {"corpus", input_digest(config_.paths.corpus)},
               {"predictor", config_.predictor.to_json()}};
  if (!config_.hierarchy.empty() && fs::is_regular_file(config_.hierarchy)) {
    payload["hierarchy_digest"] = input_digest(config_.hierarchy);
  }
  return stage_hash(payload);
}

namespace {

TrainingConfig mode_training(const TrainingConfig& base, TrainMode mode) {
  TrainingConfig t = base;
  if (mode == TrainMode::baseline) t.loss.lambda_e = 0.0;
  return t;
}

}  // namespace

std::string Pipeline::train_hash(TrainMode mode) const {
  const bool uses_prediction = mode_training(config_.training, mode).loss.lambda_e > 0.0;
  return stage_hash({{"stage", "train"},
                     {"version", tool_version()},
                     {"mode", to_string(mode)},
                     {"command", config_.command},
                     {"prediction", uses_prediction ? json(predict_hash()) : json(nullptr)},
                     {"training", mode_training(config_.training, mode).to_json()},
                     {"backend", config_.backend},
                     {"generator", config_.generator},
                     {"world", input_digest(config_.paths.world)},
                     {"train_latents", input_digest(config_.paths.train_latents)}});
}

std::string Pipeline::evaluate_hash(TrainMode mode) const {
  return stage_hash({{"stage", "evaluate"},
                     {"version", tool_version()},
                     {"train", train_hash(mode)},
                     {"prediction", predict_hash()},
                     {"corpus", input_digest(config_.paths.corpus)},
                     {"test_latents", input_digest(config_.paths.test_latents)},
                     {"strengths", config_.strengths}});
}

std::string Pipeline::report_hash() const {
  return stage_hash({{"stage", "report"},
                     {"version", tool_version()},
                     {"baseline", evaluate_hash(TrainMode::baseline)},
                     {"ppe", evaluate_hash(TrainMode::ppe)}});
}

fs::path Pipeline::prediction_path() const { return out_ / "predictions" / ("prediction-" + predict_hash() + ".json"); }

fs::path Pipeline::checkpoint_stem(TrainMode mode) const {
  return out_ / "checkpoints" / (to_string(mode) + "-" + train_hash(mode));
}

fs::path Pipeline::evaluation_path(TrainMode mode) const {
  return out_ / "reports" / ("evaluation-" + to_string(mode) + "-" + evaluate_hash(mode) + ".json");
}

void Pipeline::record(const std::string& folder, const json& entry) const {
  const fs::path path = out_ / folder / "manifest.json";
  json manifest{{"folder", folder}, {"artifacts", json::array()}};
  if (fs::is_regular_file(path)) manifest = parse_json_file(path, "manifest");
  manifest["tool_version"] = tool_version();
  std::map<std::string, json> by_file;
  for (const auto& e : manifest["artifacts"]) by_file[e.at("file").get<std::string>()] = e;
  json stamped = entry;
  stamped["tool_version"] = tool_version();
  by_file[entry.at("file").get<std::string>()] = stamped;
  json arr = json::array();
  for (auto& [_, e] : by_file) arr.push_back(std::move(e));
  manifest["artifacts"] = std::move(arr);
  write_json(path, manifest);
}

namespace {

void require(const std::string& value, const std::string& name, const std::string& why) {
  if (value.empty()) throw ConfigError(name + ": required " + why);
}

}  // namespace

EntanglementPrediction Pipeline::load_or_predict() {
  if (!fs::is_regular_file(prediction_path())) cmd_predict();
  const json doc = parse_json_file(prediction_path(), "prediction");
  return EntanglementPrediction::from_json(doc.at("prediction"));
}

std::vector<LatentCode> Pipeline::load_latents(const std::string& path, const char* field) const {
  require(path, field, "for this stage");
  std::vector<LatentCode> out;
  for (auto& item : read_items(path, "latents", field)) out.push_back(std::move(item.pixels));
  if (out.empty()) throw ValidationError(std::string(field) + ": no latent codes in " + path);
  return out;
}

void Pipeline::load_world() {
  auto& rt = runtime();
  if (rt.world_loaded) return;
  rt.world_loaded = true;
  if (config_.paths.world.empty()) return;
  rt.world_doc = parse_json_file(config_.paths.world, "paths.world");
  const std::string kind = rt.world_doc.value("kind", std::string("toy"));
  if (kind == "toy") {
    ToyWorld w = ToyWorld::from_json(rt.world_doc);
    rt.toy.emplace(w.spec);
    rt.world_hierarchy.emplace(w.hierarchy);
  } else if (kind == "planted") {
    try {
      rt.planted = SyntheticWorldSpec::from_json(rt.world_doc.at("world"));
      rt.world_hierarchy.emplace(parse_hierarchy(rt.world_doc.at("hierarchy")));
    } catch (const json::exception& e) {
      throw ValidationError("paths.world: malformed planted world (" + std::string(e.what()) + ")");
    }
  } else {
    throw ConfigError("paths.world: unknown world kind '" + kind + "'");
  }
}

EmbeddingBackend& Pipeline::bind_backend() {
  auto& rt = runtime();
  if (rt.backend) return *rt.backend;
  load_world();
  if (config_.backend == "toy") {
    if (rt.toy) {
      rt.backend = rt.toy->backend();
    } else if (rt.planted) {
      rt.backend = make_world_backend(*rt.planted, "synthetic-world");
    } else {
      throw ConfigError("paths.world: required for the 'toy' backend");
    }
  } else {
    rt.backend = std::make_shared<ProcessEmbeddingBackend>(config_.backend.substr(std::string("process:").size()));
  }
  if (!rt.backend->available()) throw BackendError("embedding backend '" + config_.backend + "' is unavailable");
  return *rt.backend;
}

Pipeline::Bound Pipeline::bind_generator() {
  Bound b;
  b.backend = &bind_backend();
  auto& rt = runtime();
  if (config_.generator == "none") throw ConfigError("generator: a generator is required for this stage");
  if (!rt.toy) throw ConfigError("paths.world: the 'toy' generator needs a toy world file");
  b.generator = &rt.toy->generator();
  b.identity = &rt.toy->identity();
  return b;
}

const AttributeHierarchy& Pipeline::hierarchy() {
  auto& rt = runtime();
  if (rt.hierarchy) return *rt.hierarchy;
  load_world();
  if (!config_.hierarchy.empty()) {
    rt.hierarchy.emplace(load_hierarchy(config_.hierarchy));
  } else if (rt.world_hierarchy) {
    rt.hierarchy.emplace(*rt.world_hierarchy);
  } else {
    throw ConfigError("hierarchy: required when the world file provides none");
  }
  return *rt.hierarchy;
}

const EmbeddedCorpus& Pipeline::corpus() {
  auto& rt = runtime();
  if (rt.corpus) return *rt.corpus;
  require(config_.paths.corpus, "paths.corpus", "for this stage");
  EmbeddingBackend& backend = bind_backend();
  const auto items = read_items(config_.paths.corpus, "images", "paths.corpus");
  const fs::path fallback = config_.paths.cache_dir.empty() ? out_ / "cache" : fs::path(config_.paths.cache_dir);
  rt.cache = std::make_unique<EmbeddingCache>(resolve_cache_dir(fallback));
  rt.corpus.emplace(build_cache(backend, items, rt.cache.get()));
  return *rt.corpus;
}

std::filesystem::path Pipeline::cmd_predict() {
  require(config_.command, "command", "for predict");
  require(config_.paths.corpus, "paths.corpus", "for predict");
  EmbeddingBackend& backend = bind_backend();
  const AttributeHierarchy& hier = hierarchy();
  const EmbeddedCorpus& images = corpus();
  auto& rt = runtime();
  const EntanglementPrediction prediction =
      predict_entangled(config_.command, images, hier, backend, config_.predictor, &rt.full_scores);

  const std::string hash = predict_hash();
  const json artifact{{"stage", "predict"},
                      {"tool_version", tool_version()},
                      {"config_hash", hash},
                      {"inputs",
                       {{"corpus", input_digest(config_.paths.corpus)},
                        {"world", input_digest(config_.paths.world)},
                        {"hierarchy", hier.fingerprint()},
                        {"model_id", backend.model_id()}}},
                      {"prediction", prediction.to_json()}};
  const fs::path path = prediction_path();
  write_json(path, artifact);
  record("predictions", {{"file", path.filename().string()},
                         {"stage", "predict"},
                         {"config_hash", hash},
                         {"command", config_.command},
                         {"sha256", sha256_hex(read_file(path))}});
  return path;
}

std::filesystem::path Pipeline::cmd_train(TrainMode mode) {
  require(config_.command, "command", "for train");
  const Bound bound = bind_generator();
  const TrainingConfig training = mode_training(config_.training, mode);
  std::vector<std::string> entangled;
  json prediction_ref = nullptr;
  if (training.loss.lambda_e > 0.0) {
    entangled = load_or_predict().entangled;
    prediction_ref = {{"file", prediction_path().filename().string()},
                      {"sha256", sha256_hex(read_file(prediction_path()))}};
  }
  const auto latents = load_latents(config_.paths.train_latents, "paths.train_latents");
  const TrainingResult result =
      train_mapper(*bound.generator, *bound.backend, bound.identity, config_.command, entangled, latents, training);

  const std::string hash = train_hash(mode);
  const fs::path stem = checkpoint_stem(mode);
  save_checkpoint(stem, result.mapper,
                  {{"command", config_.command},
                   {"mode", to_string(mode)},
                   {"config", training.to_json()},
                   {"steps", training.steps},
                   {"seed", training.seed},
                   {"entangled", entangled},
                   {"prediction", prediction_ref},
                   {"config_hash", hash},
                   {"tool_version", tool_version()}});
  const fs::path trace_stem = out_ / "checkpoints" / ("trace-" + to_string(mode) + "-" + hash);
  json trace = result.trace.to_json();
  trace["config_hash"] = hash;
  trace["tool_version"] = tool_version();
  write_json(trace_stem.string() + ".json", trace);
  write_text(trace_stem.string() + ".csv", result.trace.to_csv());
  for (const char* suffix : {".bin", ".json"}) {
    record("checkpoints", {{"file", stem.filename().string() + suffix},
                           {"stage", "train"},
                           {"mode", to_string(mode)},
                           {"config_hash", hash},
                           {"command", config_.command}});
  }
  for (const char* suffix : {".json", ".csv"}) {
    record("checkpoints", {{"file", trace_stem.filename().string() + suffix},
                           {"stage", "trace"},
                           {"mode", to_string(mode)},
                           {"config_hash", hash}});
  }
  return stem;
}

std::filesystem::path Pipeline::cmd_evaluate(TrainMode mode) {
  require(config_.command, "command", "for evaluate");
  require(config_.paths.corpus, "paths.corpus", "for evaluate");
  require(config_.paths.test_latents, "paths.test_latents", "for evaluate");
  const EntanglementPrediction prediction = load_or_predict();
  const Bound bound = bind_generator();
  const EmbeddedCorpus& images = corpus();
  auto& rt = runtime();
  if (!fs::is_regular_file(checkpoint_stem(mode).string() + ".json")) cmd_train(mode);
  const Checkpoint checkpoint = load_checkpoint(checkpoint_stem(mode));
  const auto test = load_latents(config_.paths.test_latents, "paths.test_latents");

  const std::string hash = evaluate_hash(mode);
  EvaluationRequest request{config_.command, prediction.entangled, 1.0, to_string(mode), hash};
  const EvaluationReport main =
      evaluate_run(test, *bound.generator, checkpoint.mapper, request, *bound.backend, images, &rt.ranges);
  const auto sweep = strength_sweep(test, *bound.generator, checkpoint.mapper, request, config_.strengths,
                                    *bound.backend, images, &rt.ranges);

  json sweep_json = json::array();
  std::ostringstream sweep_csv;
  sweep_csv.precision(17);
  sweep_csv << "strength,dc_raw,dc_normalized,mean_abs_entangled,indicator\n";
  for (const auto& r : sweep) {
    sweep_json.push_back(r.to_json());
    sweep_csv << r.strength << ',' << r.dc_raw << ',' << r.dc_normalized << ',' << r.mean_abs_entangled() << ','
              << (r.result.valid ? std::to_string(r.result.value) : std::string("invalid")) << '\n';
  }
  const fs::path path = evaluation_path(mode);
  write_json(path, {{"stage", "evaluate"},
                    {"tool_version", tool_version()},
                    {"config_hash", hash},
                    {"mode", to_string(mode)},
                    {"checkpoint", checkpoint_stem(mode).filename().string()},
                    {"report", main.to_json()},
                    {"sweep", std::move(sweep_json)}});
  const std::string base = "evaluation-" + to_string(mode) + "-" + hash;
  write_text(out_ / "reports" / (base + ".csv"), main.to_csv());
  write_text(out_ / "reports" / (base + "-sweep.csv"), sweep_csv.str());
  for (const std::string& file : {base + ".json", base + ".csv", base + "-sweep.csv"}) {
    record("reports", {{"file", file},
                       {"stage", "evaluate"},
                       {"mode", to_string(mode)},
                       {"config_hash", hash},
                       {"command", config_.command},
                       {"valid", main.result.valid}});
  }
  return path;
}

std::filesystem::path Pipeline::cmd_manipulate() {
  require(config_.command, "command", "for manipulate");
  const Bound bound = bind_generator();
  if (!fs::is_regular_file(checkpoint_stem(TrainMode::ppe).string() + ".json")) cmd_train(TrainMode::ppe);
  const Checkpoint checkpoint = load_checkpoint(checkpoint_stem(TrainMode::ppe));
  auto test = read_items(config_.paths.test_latents.empty() ? config_.paths.train_latents : config_.paths.test_latents,
                         "latents", "paths.test_latents");
  if (test.size() > config_.manipulate_count) test.resize(config_.manipulate_count);

  const std::string hash = stage_hash({{"stage", "manipulate"},
                                       {"version", tool_version()},
                                       {"train", train_hash(TrainMode::ppe)},
                                       {"test_latents", input_digest(config_.paths.test_latents)},
                                       {"strengths", config_.strengths},
                                       {"count", config_.manipulate_count}});
  const fs::path image_dir = out_ / "images" / ("manipulate-" + hash);
  fs::create_directories(image_dir);

  std::vector<std::vector<Image>> images;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& item : test) {
    images.emplace_back();
    for (double s : config_.strengths) {
      images.back().push_back(manipulate(*bound.generator, checkpoint.mapper, item.pixels, s));
      lo = std::min(lo, images.back().back().minCoeff());
      hi = std::max(hi, images.back().back().maxCoeff());
    }
  }
  const EmbeddingVector command = bound.backend->embed_text(config_.command);
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(bound.generator->image_dim()))));
  const bool square = side * side == bound.generator->image_dim();

  json items = json::array();
  for (std::size_t i = 0; i < test.size(); ++i) {
    json frames = json::array();
    const EmbeddingVector original = bound.backend->embed_image(bound.generator->generate(test[i].pixels));
    for (std::size_t k = 0; k < config_.strengths.size(); ++k) {
      const Image& img = images[i][k];
      json frame{{"strength", config_.strengths[k]},
                 {"delta_command", delta_distance(clip_distance(original, command),
                                                  clip_distance(bound.backend->embed_image(img), command))},
                 {"pixels", std::vector<double>(img.data(), img.data() + img.size())}};
      if (square) {
        std::ostringstream name;
        name << test[i].id << "_s" << config_.strengths[k] << ".pgm";
        std::string pgm = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
        for (Eigen::Index p = 0; p < img.size(); ++p) {
          const double v = hi > lo ? (img[p] - lo) / (hi - lo) : 0.5;
          pgm.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
        }
        write_text(image_dir / name.str(), pgm);
        frame["file"] = (fs::path("manipulate-" + hash) / name.str()).string();
      }
      frames.push_back(std::move(frame));
    }
    items.push_back({{"id", test[i].id}, {"frames", std::move(frames)}});
  }
  const fs::path path = out_ / "images" / ("manipulate-" + hash + ".json");
  write_json(path, {{"stage", "manipulate"},
                    {"tool_version", tool_version()},
                    {"config_hash", hash},
                    {"command", config_.command},
                    {"strengths", config_.strengths},
                    {"items", std::move(items)}});
  record("images", {{"file", path.filename().string()}, {"stage", "manipulate"}, {"config_hash", hash}});
  return path;
}

namespace {

std::unique_ptr<TextInfiller> make_infiller(const std::string& spec) {
  if (spec.rfind("process:", 0) != 0) throw ConfigError("mining.infiller: expected 'process:<command>'");
  return std::make_unique<ProcessInfiller>(spec.substr(8));
}

std::unique_ptr<PerplexityScorer> make_scorer(const std::string& spec) {
  if (spec.rfind("process:", 0) != 0) throw ConfigError("find_category.scorer: expected 'process:<command>'");
  return std::make_unique<ProcessPerplexityScorer>(spec.substr(8));
}

}  // namespace

std::filesystem::path Pipeline::cmd_mine() {
  const json& m = config_.mining;
  if (!m.contains("prompts") || !m["prompts"].is_array() || m["prompts"].empty()) {
    throw ConfigError("mining.prompts: required (list of {template, keyword})");
  }
  if (!m.contains("infiller")) throw ConfigError("mining.infiller: required");
  std::vector<MiningPrompt> prompts;
  try {
    for (const auto& p : m["prompts"]) {
      prompts.push_back({p.at("template").get<std::string>(), p.at("keyword").get<std::string>()});
    }
  } catch (const json::exception&) {
    throw ConfigError("mining.prompts: each entry needs string 'template' and 'keyword'");
  }
  const std::size_t top_k = field<std::size_t>(m, "top_k", "mining.top_k", kDefaultMiningTopK);
  auto infiller = make_infiller(field<std::string>(m, "infiller", "mining.infiller", ""));
  const auto records = mine_attributes(prompts, *infiller, top_k);

  const std::string hash = stage_hash({{"stage", "mine"}, {"version", tool_version()}, {"mining", m}});
  std::ostringstream out;
  write_mining_jsonl(records, out);
  const fs::path path = out_ / "reports" / ("mining-" + hash + ".jsonl");
  write_text(path, out.str());
  record("reports", {{"file", path.filename().string()}, {"stage", "mine"}, {"config_hash", hash}});
  return path;
}

std::filesystem::path Pipeline::cmd_find_category() {
  require(config_.command, "command", "for find-category");
  const json& f = config_.find_category;
  CategoryQuery query;
  if (f.contains("candidates")) {
    query = {config_.command, field<std::vector<std::string>>(f, "candidates", "find_category.candidates", {}),
             std::string(kDefaultCategoryTemplate)};
  } else {
    if (config_.hierarchy.empty() && config_.paths.world.empty()) {
      throw ConfigError("find_category.candidates: required when no hierarchy is configured");
    }
    query = CategoryQuery::from_hierarchy(config_.command, hierarchy());
  }
  query.template_text = field<std::string>(f, "template", "find_category.template", query.template_text);
  const auto overrides =
      field<std::map<std::string, std::string>>(f, "overrides", "find_category.overrides", std::map<std::string, std::string>{});
  std::unique_ptr<PerplexityScorer> scorer;
  if (f.contains("scorer")) scorer = make_scorer(field<std::string>(f, "scorer", "find_category.scorer", ""));
  if (!scorer && !overrides.contains(config_.command)) throw ConfigError("find_category.scorer: required");
  const CategoryResult result = find_category(query, scorer.get(), overrides);

  const std::string hash = stage_hash(
      {{"stage", "find-category"}, {"version", tool_version()}, {"command", config_.command}, {"find_category", f}});
  json doc = result.to_json();
  doc["config_hash"] = hash;
  doc["tool_version"] = tool_version();
  const fs::path path = out_ / "reports" / ("category-" + hash + ".json");
  write_json(path, doc);
  record("reports", {{"file", path.filename().string()}, {"stage", "find-category"}, {"config_hash", hash}});
  return path;
}

std::string Pipeline::cmd_report() {
  std::map<TrainMode, json> docs;
  for (TrainMode mode : {TrainMode::baseline, TrainMode::ppe}) {
    const fs::path path = evaluation_path(mode);
    if (!fs::is_regular_file(path)) {
      throw Error("missing evaluation artifact " + path.string() + "; run 'ppe evaluate --mode " + to_string(mode) +
                  "' first");
    }
    docs[mode] = parse_json_file(path, "evaluation");
  }
  const EvaluationReport baseline = EvaluationReport::from_json(docs[TrainMode::baseline].at("report"));
  const EvaluationReport ppe = EvaluationReport::from_json(docs[TrainMode::ppe].at("report"));

  const std::string hash = report_hash();
  std::ostringstream text;
  text << "command: " << baseline.command << "  (report " << hash << ", tool " << tool_version() << ")\n";
  text << comparison_table(baseline, ppe);

  std::ostringstream strength_csv;
  strength_csv.precision(17);
  strength_csv << "strength,baseline_dc_normalized,baseline_mean_abs_entangled,ppe_dc_normalized,ppe_mean_abs_entangled\n";
  const auto& bs = docs[TrainMode::baseline].at("sweep");
  const auto& ps = docs[TrainMode::ppe].at("sweep");
  text << "\nstrength  dc'(baseline)  mean|de'|(baseline)  dc'(ppe)  mean|de'|(ppe)\n";
  for (std::size_t k = 0; k < std::min(bs.size(), ps.size()); ++k) {
    const auto b = EvaluationReport::from_json(bs[k]);
    const auto p = EvaluationReport::from_json(ps[k]);
    strength_csv << b.strength << ',' << b.dc_normalized << ',' << b.mean_abs_entangled() << ',' << p.dc_normalized
                 << ',' << p.mean_abs_entangled() << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%8.2f  %13.4f  %19.4f  %8.4f  %14.4f\n", b.strength, b.dc_normalized,
                  b.mean_abs_entangled(), p.dc_normalized, p.mean_abs_entangled());
    text << line;
  }
  if (!baseline.result.valid || !ppe.result.valid) text << "\nflagged: at least one indicator is invalid\n";

  const std::string base = "comparison-" + hash;
  write_text(out_ / "reports" / (base + ".txt"), text.str());
  write_text(out_ / "reports" / (base + ".csv"), comparison_csv(baseline, ppe));
  write_text(out_ / "reports" / ("strength-" + hash + ".csv"), strength_csv.str());
  for (const std::string& file : {base + ".txt", base + ".csv", "strength-" + hash + ".csv"}) {
    record("reports", {{"file", file}, {"stage", "report"}, {"config_hash", hash}});
  }
  return text.str();
}

// ---------------------------------------------------------------------------
// Command line

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Predict, prevent and evaluate attribute entanglement in text-driven latent manipulation"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  std::string mode = "both";

  // Flags mirror config keys; each becomes an override.
  const std::vector<std::pair<std::string, std::string>> mirrored = {
      {"command", "command"},         {"seed", "seed"},
      {"backend", "backend"},         {"generator", "generator"},
      {"hierarchy", "hierarchy"},     {"lambda_l2", "lambda_l2"},
      {"lambda_id", "lambda_id"},     {"lambda_e", "lambda_e"},
      {"n_entangled", "n_entangled"}, {"rank_cap", "rank_cap"},
      {"top_images", "top_images"},   {"steps", "steps"},
      {"batch", "batch"},             {"learning_rate", "learning_rate"},
      {"corpus", "paths.corpus"},     {"train_latents", "paths.train_latents"},
      {"test_latents", "paths.test_latents"}, {"cache_dir", "paths.cache_dir"},
      {"output_dir", "paths.output_dir"},     {"world", "paths.world"}};

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file")->required();
    sub->add_option("--set", sets, "Override a config key: dotted.key=value");
    for (const auto& [flag, key] : mirrored) {
      sub->add_option("--" + flag, flag_values[key], "Overrides '" + key + "'");
    }
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic demo world, corpus and config");
  std::string synth_dir;
  std::string synth_kind = "toy";
  std::uint64_t synth_seed = 7;
  std::size_t corpus_size = 2000;
  std::size_t test_size = 200;
  synth->add_option("--out", synth_dir, "Target directory")->required();
  synth->add_option("--kind", synth_kind, "toy or planted")->check(CLI::IsMember({"toy", "planted"}));
  synth->add_option("--seed", synth_seed, "World seed");
  synth->add_option("--corpus_size", corpus_size, "Corpus items");
  synth->add_option("--test_size", test_size, "Test latents (toy only)");

  auto* mine = app.add_subcommand("mine", "Mine attribute candidates with a masked language model");
  auto* find = app.add_subcommand("find-category", "Find the category of an out-of-hierarchy command");
  auto* predict = app.add_subcommand("predict", "Predict entangled attributes for the command");
  auto* train = app.add_subcommand("train", "Train mappers (ppe and/or baseline)");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate trained mappers");
  auto* manip = app.add_subcommand("manipulate", "Render manipulations over the configured strengths");
  auto* report = app.add_subcommand("report", "Compare baseline and ppe evaluation artifacts");
  for (auto* sub : {mine, find, predict, train, evaluate, manip, report}) add_common(sub);
  for (auto* sub : {train, evaluate}) {
    sub->add_option("--mode", mode, "ppe, baseline or both")->check(CLI::IsMember({"ppe", "baseline", "both"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) {
      const fs::path cfg = write_demo(synth_dir, synth_kind, synth_seed, corpus_size, test_size);
      std::cout << "wrote " << cfg.string() << '\n';
      return kExitOk;
    }
    std::vector<std::string> overrides;
    for (const auto& [key, value] : flag_values) {
      if (!value.empty()) overrides.push_back(key + "=" + value);
    }
    overrides.insert(overrides.end(), sets.begin(), sets.end());
    Pipeline pipeline(PipelineConfig::load(config_path, overrides));
    std::vector<TrainMode> modes;
    if (mode == "both") {
      modes = {TrainMode::baseline, TrainMode::ppe};
    } else {
      modes = {parse_mode(mode)};
    }

    if (predict->parsed()) {
      const fs::path path = pipeline.cmd_predict();
      const auto doc = parse_json_file(path, "prediction");
      std::cout << "entangled attributes for '" << pipeline.config().command << "':\n";
      for (const auto& row : doc["prediction"]["entangled"]) {
        std::cout << "  " << row["attribute"].get<std::string>() << "  (score " << row["score_final"].get<double>()
                  << ")\n";
      }
      std::cout << "wrote " << path.string() << '\n';
    } else if (train->parsed()) {
      for (TrainMode m : modes) {
        const fs::path stem = pipeline.cmd_train(m);
        std::cout << "wrote " << stem.string() << ".{bin,json}\n";
      }
    } else if (evaluate->parsed()) {
      for (TrainMode m : modes) {
        const fs::path path = pipeline.cmd_evaluate(m);
        const auto r = EvaluationReport::from_json(parse_json_file(path, "evaluation").at("report"));
        std::cout << to_string(m) << ": ";
        if (r.result.valid) {
          std::cout << "indicator " << r.result.value << ", dc' " << r.dc_normalized << '\n';
        } else {
          std::cout << "report flagged invalid: " << r.result.reason << '\n';
        }
        std::cout << "wrote " << path.string() << '\n';
      }
    } else if (manip->parsed()) {
      const fs::path path = pipeline.cmd_manipulate();
      std::cout << "wrote " << path.string() << '\n';
    } else if (mine->parsed()) {
      const fs::path path = pipeline.cmd_mine();
      std::cout << "wrote " << path.string() << '\n';
    } else if (find->parsed()) {
      const fs::path path = pipeline.cmd_find_category();
      std::cout << "category: " << parse_json_file(path, "category")["category"].get<std::string>() << '\n';
      std::cout << "wrote " << path.string() << '\n';
    } else if (report->parsed()) {
      std::cout << pipeline.cmd_report();
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const LockError& e) {
    std::cerr << "busy: " << e.what() << '\n';
    return kExitBusy;
  } catch (const TrainingError& e) {
    std::cerr << "training failed at step " << e.step() << ": " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace ppe
