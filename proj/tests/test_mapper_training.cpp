#include <cmath>
#include <random>

#include "doctest.h"
#include "experiments.hpp"
#include "json.hpp"
#include "ppe/errors.hpp"
#include "ppe/external.hpp"
#include "ppe/mapper.hpp"
#include "ppe/training.hpp"
#include "test_support.hpp"

namespace {

ppe::LatentCode random_latent(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ppe::LatentCode w(static_cast<Eigen::Index>(n));
  for (auto& v : w) v = normal(rng);
  return w;
}

std::vector<ppe::LatentCode> small_latents(const ppe::ToyStack& stack, std::size_t n) {
  std::vector<ppe::LatentCode> out;
  for (const auto& item : stack.sample_latents(n, 4, "t").items) out.push_back(item.pixels);
  return out;
}

}  // namespace

TEST_CASE("mapper offsets and parameter layout") {
  ppe::MapperArchitecture arch;
  arch.hidden = {5, 4};
  ppe::MapperModel m({3, 6}, arch, 1);
  // Per layer: 6x5+5, 5x4+4, 4x6+6 parameters, one group shared across layers.
  CHECK(m.parameter_count() == 35 + 24 + 30);
  const auto w = random_latent(18, 2);
  CHECK(m.offset(w).size() == 18);
  CHECK(ppe::MapperModel({3, 6}, arch, 1) == m);
  CHECK_FALSE(ppe::MapperModel({3, 6}, arch, 2) == m);
  CHECK_THROWS_AS(m.offset(random_latent(5, 1)), ppe::ValidationError);
  CHECK_THROWS_AS(m.set_parameters(Eigen::VectorXd::Zero(3)), ppe::ValidationError);

  arch.groups = {{0, 1}, {1, 3}};
  CHECK(ppe::MapperModel({3, 6}, arch, 1).parameter_count() == 2 * (35 + 24 + 30));
  arch.groups = {{0, 2}, {1, 3}};
  CHECK_THROWS_AS(ppe::MapperModel({3, 6}, arch, 1), ppe::ConfigError);

  ppe::MapperArchitecture constant;
  constant.kind = ppe::MapperKind::constant;
  ppe::MapperModel c({3, 6}, constant, 1);
  CHECK(c.parameter_count() == 18);
  CHECK(c.offset(w) == c.offset(random_latent(18, 9)));

  auto round = ppe::MapperArchitecture::from_json(arch.to_json());
  CHECK(round.to_json() == arch.to_json());
}

TEST_CASE("mapper backprop matches finite differences") {
  for (auto act : {ppe::Activation::tanh, ppe::Activation::leaky_relu}) {
    ppe::MapperArchitecture arch;
    arch.hidden = {7};
    arch.activation = act;
    arch.groups = {{0, 1}, {1, 2}};
    ppe::MapperModel m({2, 4}, arch, 3);
    const auto w = random_latent(8, 4);
    const auto g_out = random_latent(8, 5);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m.parameter_count()));
    m.backprop(w, g_out, grad);
    const Eigen::VectorXd base = m.parameters();
    for (Eigen::Index i = 0; i < base.size(); i += 3) {
      Eigen::VectorXd q = base;
      q[i] += 1e-6;
      m.set_parameters(q);
      const double hi = g_out.dot(m.offset(w));
      q[i] = base[i] - 1e-6;
      m.set_parameters(q);
      const double lo = g_out.dot(m.offset(w));
      CHECK(grad[i] == doctest::Approx((hi - lo) / 2e-6).epsilon(1e-5));
    }
    m.set_parameters(base);
  }
}

TEST_CASE("loss terms have correct analytic gradients") {
  for (const auto& c : experiments::gradient_checks(3, 1e-4)) {
    INFO(c.term);
    CHECK(c.max_relative_error < 1e-3);
  }
}

TEST_CASE("entanglement loss values") {
  const std::vector<double> before{0.2, 0.4};
  const std::vector<double> after{0.5, 0.4};
  CHECK(ppe::entanglement_loss(before, after) == doctest::Approx(0.045));
  CHECK_THROWS_AS(ppe::entanglement_loss(std::vector<double>{}, std::vector<double>{}), ppe::ConfigError);
  CHECK(ppe::id_loss(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 3)) == doctest::Approx(1.0));
  CHECK(ppe::l2_loss(Eigen::Vector2d(3, 4)) == doctest::Approx(25.0));
}

TEST_CASE("training is reproducible and the trace composes") {
  ppe::ToyStack stack(experiments::small_stack_spec());
  const auto latents = small_latents(stack, 40);
  auto config = experiments::toy_training(100.0, 60);
  config.batch = 8;
  config.mapper.hidden = {16};
  auto a = ppe::train_mapper(stack.generator(), *stack.backend(), &stack.identity(), "grey hair", {"old"}, latents,
                             config);
  auto b = ppe::train_mapper(stack.generator(), *stack.backend(), &stack.identity(), "grey hair", {"old"}, latents,
                             config);
  CHECK(a.mapper == b.mapper);
  CHECK(a.trace == b.trace);
  CHECK(a.trace.to_csv() == b.trace.to_csv());
  CHECK(a.trace.records.size() == 60);
  CHECK(a.trace.max_composition_error() < 1e-12);
  CHECK(a.trace.records.back().loss.clip < a.trace.records.front().loss.clip);

  config.seed = 4;
  auto c = ppe::train_mapper(stack.generator(), *stack.backend(), &stack.identity(), "grey hair", {"old"}, latents,
                             config);
  CHECK_FALSE(c.mapper == a.mapper);
}

TEST_CASE("missing identity model disables the identity term") {
  ppe::ToyStack stack(experiments::small_stack_spec());
  const auto latents = small_latents(stack, 10);
  std::vector<std::string> warnings;
  ppe::set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  auto config = experiments::toy_training(1.0, 5);
  auto r = ppe::train_mapper(stack.generator(), *stack.backend(), nullptr, "grey hair", {"old"}, latents, config);
  ppe::set_warning_sink(nullptr);
  CHECK(r.trace.effective.lambda_id == 0.0);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("identity") != std::string::npos);
}

TEST_CASE("training refuses unusable setups") {
  ppe::ToyStack stack(experiments::small_stack_spec());
  const auto latents = small_latents(stack, 10);
  auto config = experiments::toy_training(100.0, 5);
  CHECK_THROWS_AS(ppe::train_mapper(stack.generator(), *stack.backend(), nullptr, "grey hair", {}, latents, config),
                  ppe::ConfigError);
  config.loss.lambda_e = 0.0;
  CHECK_NOTHROW(ppe::train_mapper(stack.generator(), *stack.backend(), nullptr, "grey hair", {}, latents, config));

  ppe::ProcessEmbeddingBackend frozen(testing::fixture("fake_clip.py"));
  CHECK_THROWS_AS(ppe::train_mapper(stack.generator(), frozen, nullptr, "grey hair", {}, latents, config),
                  ppe::BackendError);

  config.steps = 0;
  CHECK_THROWS_AS(config.validate(), ppe::ConfigError);
  config = experiments::toy_training(0.0, 5);
  config.optimizer.learning_rate = -1.0;
  CHECK_THROWS_AS(config.validate(), ppe::ConfigError);
  config = experiments::toy_training(0.0, 5);
  config.loss.lambda_l2 = std::nan("");
  CHECK_THROWS_AS(config.validate(), ppe::ConfigError);
}

TEST_CASE("a diverging run stops with the failing step") {
  ppe::ToyStack stack(experiments::small_stack_spec());
  const auto latents = small_latents(stack, 10);
  auto config = experiments::toy_training(0.0, 50);
  config.optimizer.learning_rate = 1e300;
  config.optimizer.decay_at = 1.0;
  try {
    ppe::train_mapper(stack.generator(), *stack.backend(), nullptr, "grey hair", {}, latents, config);
    FAIL("expected a training error");
  } catch (const ppe::TrainingError& e) {
    CHECK(e.step() >= 1);
    CHECK(std::string(e.what()).find("step " + std::to_string(e.step())) != std::string::npos);
  }
}

TEST_CASE("manipulation at strength zero is the unedited image") {
  ppe::ToyStack stack(experiments::small_stack_spec());
  ppe::MapperModel m(stack.generator().layout(), {}, 1);
  const auto w = small_latents(stack, 1).front();
  CHECK(ppe::manipulate(stack.generator(), m, w, 0.0) == stack.generator().generate(w));
  CHECK_FALSE(ppe::manipulate(stack.generator(), m, w, 1.0) == stack.generator().generate(w));
}

TEST_CASE("checkpoint round trip and tamper detection") {
  testing::TempDir dir;
  ppe::MapperArchitecture arch;
  arch.hidden = {6};
  ppe::MapperModel m({2, 5}, arch, 7);
  ppe::save_checkpoint(dir / "ck", m, {{"command", "grey hair"}});
  auto back = ppe::load_checkpoint(dir / "ck");
  CHECK(back.mapper == m);
  CHECK(back.metadata["command"] == "grey hair");
  CHECK(back.metadata["parameter_count"] == m.parameter_count());

  auto bytes = testing::slurp(dir / "ck.bin");
  bytes[3] ^= 1;
  testing::spit(dir / "ck.bin", bytes);
  CHECK_THROWS_AS(ppe::load_checkpoint(dir / "ck"), ppe::ValidationError);
  CHECK_THROWS_AS(ppe::load_checkpoint(dir / "missing"), ppe::ValidationError);
}

TEST_CASE("stronger entanglement weight reduces entangled drift") {
  auto data = experiments::toy_data(600, 60);
  auto& backend = *data.stack.backend();
  const std::vector<std::string> entangled{"old", "with wrinkles"};
  std::vector<double> drift;
  for (double lambda_e : {0.0, 10.0, 100.0}) {
    auto r = ppe::train_mapper(data.stack.generator(), backend, &data.stack.identity(), data.world.command,
                               entangled, data.train, experiments::toy_training(lambda_e, 300));
    ppe::EvaluationRequest req{data.world.command, entangled, 1.0, "x", ""};
    auto rep = ppe::evaluate_run(data.test, data.stack.generator(), r.mapper, req, backend, data.corpus);
    CHECK(rep.dc_normalized > 0.0);
    drift.push_back(rep.mean_abs_entangled());
  }
  CHECK(drift[1] < drift[0]);
  CHECK(drift[2] < drift[1]);
}
