#pragma once

// Small end-to-end experiments shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ppe/evaluation.hpp"
#include "ppe/losses.hpp"
#include "ppe/predictor.hpp"
#include "ppe/synthetic.hpp"
#include "ppe/training.hpp"

namespace experiments {

struct TermCheck {
  std::string term;
  double max_relative_error = 0.0;
  std::size_t points = 0;
};

/// Compact differentiable stack for gradient checks.
inline ppe::ToyStackSpec small_stack_spec() {
  ppe::ToyStackSpec s;
  s.model_id = "toy-small";
  s.layout = {2, 6};
  s.image_dim = 10;
  s.embed_dim = 8;
  s.identity_dim = 4;
  s.attributes = {"grey hair", "black hair", "old", "young", "pale", "tanned"};
  s.co_occurrence = {{"grey hair", "old", 0.8}};
  s.text_leakage["grey hair"] = {{"old", 0.5}};
  s.seed = 5;
  return s;
}

/// Central differences of each loss term with respect to the mapper parameters,
/// compared to the analytic gradient as ||fd - g|| / max(||fd||, ||g||).
inline std::vector<TermCheck> gradient_checks(std::size_t points, double step) {
  ppe::ToyStack stack(small_stack_spec());
  const auto latents = stack.sample_latents(4, 11, "g");
  std::vector<ppe::LatentCode> batch;
  for (const auto& item : latents.items) batch.push_back(item.pixels);

  ppe::LossConfig config;
  const ppe::PpeObjective objective(stack.generator(), *stack.backend(), &stack.identity(), "grey hair",
                                    {"old", "pale"}, config);
  ppe::MapperArchitecture arch;
  arch.hidden = {8};
  arch.activation = ppe::Activation::tanh;
  arch.output_scale = 1.0;

  struct Term {
    std::string name;
    ppe::LossTerms mask;
  };
  const std::vector<Term> terms{{"clip", {true, false, false, false}},
                                {"l2", {false, true, false, false}},
                                {"id", {false, false, true, false}},
                                {"entangle", {false, false, false, true}},
                                {"total", {}}};
  std::vector<TermCheck> out;
  for (const auto& t : terms) out.push_back({t.name, 0.0, points});

  for (std::size_t p = 0; p < points; ++p) {
    ppe::MapperModel mapper(stack.generator().layout(), arch, 100 + p);
    for (std::size_t k = 0; k < terms.size(); ++k) {
      Eigen::VectorXd analytic;
      objective.evaluate(mapper, batch, &analytic, terms[k].mask);
      Eigen::VectorXd fd(analytic.size());
      const Eigen::VectorXd base = mapper.parameters();
      for (Eigen::Index i = 0; i < base.size(); ++i) {
        Eigen::VectorXd q = base;
        q[i] += step;
        mapper.set_parameters(q);
        const double hi = objective.evaluate(mapper, batch, nullptr, terms[k].mask).total;
        q[i] = base[i] - step;
        mapper.set_parameters(q);
        const double lo = objective.evaluate(mapper, batch, nullptr, terms[k].mask).total;
        fd[i] = (hi - lo) / (2.0 * step);
      }
      mapper.set_parameters(base);
      const double scale = std::max({fd.norm(), analytic.norm(), 1e-12});
      out[k].max_relative_error = std::max(out[k].max_relative_error, (fd - analytic).norm() / scale);
    }
  }
  return out;
}

struct ToyRun {
  std::vector<std::string> entangled;
  ppe::EvaluationReport baseline;
  ppe::EvaluationReport ppe;
  std::vector<ppe::EvaluationReport> baseline_sweep;
  std::vector<ppe::EvaluationReport> ppe_sweep;
  ppe::TrainingTrace ppe_trace;
};

struct ToyData {
  ppe::ToyWorld world;
  ppe::ToyStack stack;
  std::vector<ppe::LatentCode> train;
  std::vector<ppe::LatentCode> test;
  ppe::EmbeddedCorpus corpus;
};

inline ToyData toy_data(std::size_t corpus_size = 2000, std::size_t test_size = 200) {
  auto world = ppe::demo_toy_world();
  ppe::ToyStack stack(world.spec);
  auto train = stack.sample_latents(corpus_size, 1, "train");
  auto test = stack.sample_latents(test_size, 2, "test");
  auto corpus = ppe::build_cache(*stack.backend(), ppe::render_items(stack.generator(), train.items), nullptr);
  std::vector<ppe::LatentCode> tl, el;
  for (const auto& i : train.items) tl.push_back(i.pixels);
  for (const auto& i : test.items) el.push_back(i.pixels);
  return {world, std::move(stack), std::move(tl), std::move(el), std::move(corpus)};
}

inline ppe::TrainingConfig toy_training(double lambda_e, std::size_t steps = 500) {
  ppe::TrainingConfig c;
  c.steps = steps;
  c.seed = 3;
  c.loss.lambda_e = lambda_e;
  c.optimizer.learning_rate = 0.01;
  return c;
}

/// Predicts the entanglement list, trains baseline and PPE mappers, evaluates both.
inline ToyRun toy_run(const ToyData& d, const std::vector<double>& strengths, std::size_t steps = 500) {
  ToyRun run;
  ppe::PredictorConfig pc;
  pc.n_entangled = 4;
  auto& backend = *d.stack.backend();
  run.entangled = ppe::predict_entangled(d.world.command, d.corpus, d.world.hierarchy, backend, pc).entangled;

  const auto base = ppe::train_mapper(d.stack.generator(), backend, &d.stack.identity(), d.world.command,
                                      run.entangled, d.train, toy_training(0.0, steps));
  auto ours = ppe::train_mapper(d.stack.generator(), backend, &d.stack.identity(), d.world.command, run.entangled,
                                d.train, toy_training(100.0, steps));
  run.ppe_trace = ours.trace;

  ppe::RangeCache ranges;
  ppe::EvaluationRequest req{d.world.command, run.entangled, 1.0, "baseline", ""};
  run.baseline = ppe::evaluate_run(d.test, d.stack.generator(), base.mapper, req, backend, d.corpus, &ranges);
  run.baseline_sweep =
      ppe::strength_sweep(d.test, d.stack.generator(), base.mapper, req, strengths, backend, d.corpus, &ranges);
  req.label = "ppe";
  run.ppe = ppe::evaluate_run(d.test, d.stack.generator(), ours.mapper, req, backend, d.corpus, &ranges);
  run.ppe_sweep =
      ppe::strength_sweep(d.test, d.stack.generator(), ours.mapper, req, strengths, backend, d.corpus, &ranges);
  return run;
}

/// Number of planted attributes among the predicted list for one seed.
inline std::size_t planted_recovery(std::uint64_t seed, std::size_t corpus_size = 2000) {
  ppe::PlantedWorldOptions o;
  o.seed = seed;
  auto world = ppe::make_planted_world(o);
  auto sc = ppe::generate_synthetic_corpus(world.spec, corpus_size);
  auto p = ppe::predict_entangled(o.command, sc.corpus, world.hierarchy, *sc.backend, {});
  std::size_t hits = 0;
  for (const auto& e : p.entangled) hits += std::count(world.planted.begin(), world.planted.end(), e);
  return hits;
}

}  // namespace experiments
