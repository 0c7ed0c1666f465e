#include "ppe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include <boost/math/distributions/normal.hpp>

#include "ppe/errors.hpp"

namespace ppe {

namespace {

std::pair<std::string, std::string> ordered(const std::string& a, const std::string& b) {
  return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  }
  return m;
}

// Random matrix with orthonormal columns when rows >= cols, else scaled Gaussian.
Eigen::MatrixXd random_isometry(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::MatrixXd g = gaussian(rows, cols, rng);
  if (rows < cols) return g / std::sqrt(static_cast<double>(cols));
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
  // Fix column signs so the result does not depend on QR sign conventions.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < cols; ++c) {
    if (r(c, c) < 0) q.col(c) *= -1.0;
  }
  return q;
}

std::string padded(std::string_view prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return std::string(prefix) + buf;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

// ---------------------------------------------------------------------------

void SyntheticWorldSpec::set_co_occurrence(const std::string& a, const std::string& b, double correlation) {
  if (a == b) throw ValidationError("co-occurrence of '" + a + "' with itself is fixed at 1");
  auto key = ordered(a, b);
  if (auto it = co_occurrence_.find(key); it != co_occurrence_.end() && it->second != correlation) {
    throw ValidationError("co-occurrence of '" + a + "' and '" + b + "' given twice with different values");
  }
  co_occurrence_[key] = correlation;
}

double SyntheticWorldSpec::co_occurrence(const std::string& a, const std::string& b) const {
  if (a == b) return 1.0;
  auto it = co_occurrence_.find(ordered(a, b));
  return it == co_occurrence_.end() ? 0.0 : it->second;
}

double SyntheticWorldSpec::prevalence_of(const std::string& text) const {
  auto it = prevalence.find(text);
  return it == prevalence.end() ? default_prevalence : it->second;
}

std::vector<std::string> SyntheticWorldSpec::attribute_texts() const {
  std::vector<std::string> out;
  for (const auto& [text, _] : attribute_directions) out.push_back(text);
  return out;
}

void SyntheticWorldSpec::validate() const {
  if (dim == 0) throw ValidationError("world dimension must be positive");
  if (attribute_directions.empty()) throw ValidationError("world has no attributes");
  for (const auto& [text, dir] : attribute_directions) {
    if (static_cast<std::size_t>(dir.size()) != dim) {
      throw ValidationError("direction of '" + text + "' has dimension " + std::to_string(dir.size()));
    }
    if (!dir.allFinite() || std::abs(dir.norm() - 1.0) > 1e-9) {
      throw ValidationError("direction of '" + text + "' is not unit length");
    }
  }
  for (const auto& [pair, value] : co_occurrence_) {
    if (!attribute_directions.contains(pair.first) || !attribute_directions.contains(pair.second)) {
      throw ValidationError("co-occurrence references unknown attribute '" +
                            (attribute_directions.contains(pair.first) ? pair.second : pair.first) + "'");
    }
    if (!(value >= -1.0 && value <= 1.0)) {
      throw ValidationError("co-occurrence of '" + pair.first + "' and '" + pair.second + "' is outside [-1, 1]");
    }
  }
  for (const auto& text : attribute_texts()) {
    const double p = prevalence_of(text);
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("prevalence of '" + text + "' is outside [0, 1]");
  }
  for (const auto& [text, _] : prevalence) {
    if (!attribute_directions.contains(text)) throw ValidationError("prevalence for unknown attribute '" + text + "'");
  }
  if (!(noise >= 0.0) || !std::isfinite(loading)) throw ValidationError("world noise/loading out of range");
}

nlohmann::json SyntheticWorldSpec::to_json() const {
  nlohmann::json dirs = nlohmann::json::object();
  for (const auto& [text, dir] : attribute_directions) dirs[text] = vector_to_json(dir);
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [pair, value] : co_occurrence_) pairs.push_back({pair.first, pair.second, value});
  return {{"dim", dim},
          {"attribute_directions", std::move(dirs)},
          {"co_occurrence", std::move(pairs)},
          {"prevalence", prevalence},
          {"default_prevalence", default_prevalence},
          {"loading", loading},
          {"noise", noise},
          {"seed", seed}};
}

SyntheticWorldSpec SyntheticWorldSpec::from_json(const nlohmann::json& doc) {
  SyntheticWorldSpec spec;
  try {
    spec.dim = doc.at("dim").get<std::size_t>();
    for (const auto& [text, dir] : doc.at("attribute_directions").items()) {
      spec.attribute_directions[text] = vector_from_json(dir);
    }
    for (const auto& p : doc.value("co_occurrence", nlohmann::json::array())) {
      spec.set_co_occurrence(p.at(0).get<std::string>(), p.at(1).get<std::string>(), p.at(2).get<double>());
    }
    spec.prevalence = doc.value("prevalence", std::map<std::string, double>{});
    spec.default_prevalence = doc.value("default_prevalence", 0.3);
    spec.loading = doc.value("loading", 1.0);
    spec.noise = doc.value("noise", 0.0);
    spec.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed world spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::map<std::string, Eigen::VectorXd> make_directions(const std::vector<std::string>& texts, std::size_t dim,
                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(texts.size());
  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd basis = random_isometry(d, n, rng);
  std::map<std::string, Eigen::VectorXd> out;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::VectorXd v = basis.col(i);
    out[texts[static_cast<std::size_t>(i)]] = v / v.norm();
  }
  return out;
}

WorldSample sample_world(const SyntheticWorldSpec& spec, std::size_t count) {
  spec.validate();
  const auto texts = spec.attribute_texts();
  const auto m = static_cast<Eigen::Index>(texts.size());

  Eigen::MatrixXd corr(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      corr(a, b) = spec.co_occurrence(texts[static_cast<std::size_t>(a)], texts[static_cast<std::size_t>(b)]);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(corr);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-9) {
    throw ValidationError("infeasible correlation matrix: co-occurrence values are not jointly realizable");
  }
  const Eigen::MatrixXd factor =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  boost::math::normal standard;
  std::vector<double> thresholds;
  for (const auto& t : texts) {
    const double p = spec.prevalence_of(t);
    if (p <= 0.0) {
      thresholds.push_back(std::numeric_limits<double>::infinity());
    } else if (p >= 1.0) {
      thresholds.push_back(-std::numeric_limits<double>::infinity());
    } else {
      thresholds.push_back(boost::math::quantile(standard, 1.0 - p));
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal;
  const double noise_scale = spec.noise / std::sqrt(static_cast<double>(spec.dim));
  const int width = count > 99999 ? 8 : 5;

  WorldSample out;
  out.items.reserve(count);
  out.present.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Eigen::VectorXd n(m);
    for (Eigen::Index k = 0; k < m; ++k) n[k] = normal(rng);
    const Eigen::VectorXd z = factor * n;
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim));
    std::vector<std::string> present;
    for (Eigen::Index k = 0; k < m; ++k) {
      if (z[k] > thresholds[static_cast<std::size_t>(k)]) {
        const auto& t = texts[static_cast<std::size_t>(k)];
        raw += spec.loading * spec.attribute_directions.at(t);
        present.push_back(t);
      }
    }
    if (noise_scale > 0.0) {
      for (Eigen::Index d = 0; d < raw.size(); ++d) raw[d] += noise_scale * normal(rng);
    }
    out.items.push_back({padded("item_", i, width), std::move(raw), "synthetic:seed=" + std::to_string(spec.seed)});
    out.present.push_back(std::move(present));
  }
  return out;
}

std::shared_ptr<SyntheticBackend> make_world_backend(const SyntheticWorldSpec& spec, const std::string& model_id) {
  auto backend = std::make_shared<SyntheticBackend>(model_id, spec.dim);
  for (const auto& [text, dir] : spec.attribute_directions) backend->register_text(text, dir);
  return backend;
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticWorldSpec& spec, std::size_t count,
                                          const std::string& model_id) {
  auto sample = sample_world(spec, count);
  auto backend = make_world_backend(spec, model_id);
  auto corpus = build_cache(*backend, sample.items, nullptr);
  return {std::move(corpus), std::move(sample.present), std::move(backend)};
}

PlantedWorld make_planted_world(const PlantedWorldOptions& o) {
  std::vector<std::string> planted;
  std::vector<std::string> distractors;
  for (std::size_t i = 0; i < o.planted; ++i) planted.push_back(padded("planted attribute ", i + 1, 2));
  for (std::size_t i = 0; i < o.distractors; ++i) distractors.push_back(padded("distractor attribute ", i + 1, 2));

  std::vector<std::string> all{o.command, o.sibling};
  all.insert(all.end(), planted.begin(), planted.end());
  all.insert(all.end(), distractors.begin(), distractors.end());

  SyntheticWorldSpec spec;
  spec.dim = o.dim;
  spec.seed = o.seed;
  spec.noise = o.noise;
  spec.attribute_directions = make_directions(all, o.dim, o.seed ^ 0x9e3779b97f4a7c15ULL);
  spec.prevalence[o.command] = o.command_prevalence;
  spec.prevalence[o.sibling] = o.command_prevalence;
  for (const auto& p : planted) {
    spec.prevalence[p] = o.planted_prevalence;
    spec.set_co_occurrence(o.command, p, o.correlation);
  }
  // Planted attributes share the command as a common factor, so their mutual
  // correlation is the square of their correlation with it.
  for (std::size_t a = 0; a < planted.size(); ++a) {
    for (std::size_t b = a + 1; b < planted.size(); ++b) {
      spec.set_co_occurrence(planted[a], planted[b], o.correlation * o.correlation);
    }
  }
  std::mt19937_64 rng(o.seed + 17);
  std::uniform_real_distribution<double> uniform(o.distractor_prevalence_min, o.distractor_prevalence_max);
  for (const auto& d : distractors) spec.prevalence[d] = uniform(rng);

  std::vector<Category> categories;
  auto add_category = [&](const std::string& name, std::vector<std::string> texts) {
    Category c{name, name, false, {}};
    for (auto& t : texts) c.attributes.push_back(Attribute{std::move(t), name, false, std::nullopt, false});
    categories.push_back(std::move(c));
  };
  add_category("command", {o.command, o.sibling});
  auto pair_up = [&](const std::vector<std::string>& texts, const std::string& prefix) {
    // Groups of two; an odd tail joins the last group.
    std::size_t group = 0;
    for (std::size_t i = 0; i + 1 < texts.size();) {
      const std::size_t take = (texts.size() - i == 3) ? 3 : 2;
      add_category(padded(prefix, ++group, 2),
                   std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(i),
                                            texts.begin() + static_cast<std::ptrdiff_t>(i + take)));
      i += take;
    }
    if (texts.size() == 1) throw ValidationError("planted world needs at least two attributes per group");
  };
  pair_up(planted, "planted group ");
  pair_up(distractors, "distractor group ");

  return {std::move(spec), AttributeHierarchy(std::move(categories), "planted-world", HierarchySource::user),
          std::move(planted), std::move(distractors)};
}

// ---------------------------------------------------------------------------

void ToyStackSpec::validate() const {
  if (layout.size() == 0 || image_dim == 0 || embed_dim == 0 || identity_dim == 0) {
    throw ValidationError("toy stack dimensions must be positive");
  }
  if (attributes.empty()) throw ValidationError("toy stack has no attributes");
  auto known = [&](const std::string& t) {
    return std::find(attributes.begin(), attributes.end(), t) != attributes.end();
  };
  for (const auto& [a, b, v] : co_occurrence) {
    if (!known(a) || !known(b)) throw ValidationError("toy co-occurrence references unknown attribute");
    if (!(v >= -1.0 && v <= 1.0)) throw ValidationError("toy co-occurrence outside [-1, 1]");
  }
  for (const auto& [key, weights] : text_leakage) {
    if (!known(key)) throw ValidationError("text leakage for unknown attribute '" + key + "'");
    for (const auto& [other, _] : weights) {
      if (!known(other)) throw ValidationError("text leakage into unknown attribute '" + other + "'");
    }
  }
}

nlohmann::json ToyStackSpec::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b, v] : co_occurrence) pairs.push_back({a, b, v});
  return {{"model_id", model_id},
          {"latent_layers", layout.layers},
          {"latent_width", layout.width},
          {"image_dim", image_dim},
          {"embed_dim", embed_dim},
          {"identity_dim", identity_dim},
          {"attributes", attributes},
          {"co_occurrence", std::move(pairs)},
          {"prevalence", prevalence},
          {"default_prevalence", default_prevalence},
          {"text_leakage", text_leakage},
          {"loading", loading},
          {"latent_noise", latent_noise},
          {"seed", seed}};
}

ToyStackSpec ToyStackSpec::from_json(const nlohmann::json& doc) {
  ToyStackSpec s;
  try {
    s.model_id = doc.value("model_id", s.model_id);
    s.layout.layers = doc.value("latent_layers", std::size_t{1});
    s.layout.width = doc.value("latent_width", std::size_t{32});
    s.image_dim = doc.value("image_dim", s.image_dim);
    s.embed_dim = doc.value("embed_dim", s.embed_dim);
    s.identity_dim = doc.value("identity_dim", s.identity_dim);
    s.attributes = doc.at("attributes").get<std::vector<std::string>>();
    for (const auto& p : doc.value("co_occurrence", nlohmann::json::array())) {
      s.co_occurrence.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>(), p.at(2).get<double>());
    }
    s.prevalence = doc.value("prevalence", std::map<std::string, double>{});
    s.default_prevalence = doc.value("default_prevalence", s.default_prevalence);
    s.text_leakage = doc.value("text_leakage", std::map<std::string, std::map<std::string, double>>{});
    s.loading = doc.value("loading", s.loading);
    s.latent_noise = doc.value("latent_noise", s.latent_noise);
    s.seed = doc.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed toy stack spec: ") + e.what());
  }
  s.validate();
  return s;
}

ToyStack::ToyStack(ToyStackSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  const auto latent = static_cast<Eigen::Index>(spec_.layout.size());
  const auto image = static_cast<Eigen::Index>(spec_.image_dim);
  const auto embed = static_cast<Eigen::Index>(spec_.embed_dim);
  const auto ident = static_cast<Eigen::Index>(spec_.identity_dim);

  generator_ = std::make_shared<LinearGenerator>(spec_.layout, random_isometry(image, latent, rng));
  Eigen::MatrixXd projection = random_isometry(embed, image, rng);
  identity_ = std::make_shared<LinearIdentityModel>(gaussian(ident, image, rng) / std::sqrt(static_cast<double>(image)));
  latent_directions_ = make_directions(spec_.attributes, spec_.layout.size(), spec_.seed + 1);

  backend_ = std::make_shared<SyntheticBackend>(spec_.model_id, projection);
  for (const auto& text : spec_.attributes) {
    Eigen::VectorXd v = latent_directions_.at(text);
    if (auto it = spec_.text_leakage.find(text); it != spec_.text_leakage.end()) {
      for (const auto& [other, weight] : it->second) v += weight * latent_directions_.at(other);
    }
    backend_->register_text(text, projection * generator_->weights() * v);
  }
}

const Eigen::VectorXd& ToyStack::latent_direction(const std::string& text) const {
  auto it = latent_directions_.find(text);
  if (it == latent_directions_.end()) throw ValidationError("toy stack has no attribute '" + text + "'");
  return it->second;
}

SyntheticWorldSpec ToyStack::latent_world(std::uint64_t seed) const {
  SyntheticWorldSpec w;
  w.dim = spec_.layout.size();
  w.attribute_directions = latent_directions_;
  for (const auto& [a, b, v] : spec_.co_occurrence) w.set_co_occurrence(a, b, v);
  w.prevalence = spec_.prevalence;
  w.default_prevalence = spec_.default_prevalence;
  w.loading = spec_.loading;
  w.noise = spec_.latent_noise;
  w.seed = seed;
  return w;
}

WorldSample ToyStack::sample_latents(std::size_t count, std::uint64_t seed, const std::string& id_prefix) const {
  auto sample = sample_world(latent_world(seed), count);
  for (auto& item : sample.items) {
    item.id = id_prefix + item.id.substr(item.id.find('_'));
    item.provenance = "toy-latent:seed=" + std::to_string(seed);
  }
  return sample;
}

nlohmann::json ToyWorld::to_json() const {
  return {{"kind", "toy"}, {"command", command}, {"toy_stack", spec.to_json()}, {"hierarchy", ppe::to_json(hierarchy)}};
}

ToyWorld ToyWorld::from_json(const nlohmann::json& doc) {
  if (doc.value("kind", std::string("toy")) != "toy") throw ValidationError("world file is not a toy world");
  try {
    return {ToyStackSpec::from_json(doc.at("toy_stack")), parse_hierarchy(doc.at("hierarchy")),
            doc.at("command").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed toy world: ") + e.what());
  }
}

ToyWorld demo_toy_world(std::uint64_t seed) {
  const nlohmann::json hierarchy = {
      {"version", "toy-face-v1"},
      {"categories",
       {{{"name", "hair colour"}, {"attributes", {"grey hair", "black hair", "blond hair"}}},
        {{"name", "age"}, {"attributes", {"old", "young"}}},
        {{"name", "skin texture"}, {"attributes", {"with wrinkles", "smooth skin"}}},
        {{"name", "complexion"}, {"attributes", {"pale", "tanned"}}},
        {{"name", "eye colour"}, {"attributes", {"blue eyes", "brown eyes"}}},
        {{"name", "accessories"}, {"attributes", {"with glasses", "with earrings"}}},
        {{"name", "expression"}, {"attributes", {"smiling", "neutral expression"}}}}}};
  ToyWorld world{{}, parse_hierarchy(hierarchy), "grey hair"};
  for (const Attribute* a : world.hierarchy.attributes()) world.spec.attributes.push_back(a->text);
  // old and with wrinkles correlate through grey hair, so their own correlation is the product.
  world.spec.co_occurrence = {{"grey hair", "old", 0.85}, {"grey hair", "with wrinkles", 0.8}, {"old", "with wrinkles", 0.68}};
  world.spec.text_leakage["grey hair"] = {{"old", 0.7}, {"with wrinkles", 0.6}};
  world.spec.seed = seed;
  return world;
}

std::vector<CorpusItem> render_items(const Generator& generator, const std::vector<CorpusItem>& latents) {
  std::vector<CorpusItem> out;
  out.reserve(latents.size());
  for (const auto& l : latents) out.push_back({l.id, generator.generate(l.pixels), l.provenance + ";rendered"});
  return out;
}

}  // namespace ppe
