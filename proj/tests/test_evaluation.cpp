#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "experiments.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "ppe/errors.hpp"
#include "ppe/evaluation.hpp"
#include "published_results.hpp"
#include "test_support.hpp"

TEST_CASE("indicator arithmetic") {
  const std::vector<double> de{0.1, -0.3, 0.2};
  auto r = ppe::indicator(0.4, de);
  CHECK(r.valid);
  CHECK(r.value == doctest::Approx(0.5));
  auto flat = ppe::indicator(0.0, de);
  CHECK_FALSE(flat.valid);
  CHECK(flat.reason == "no manipulation effect");
  CHECK_FALSE(ppe::indicator(-0.1, de).valid);
  CHECK_THROWS_AS(ppe::indicator(0.4, std::vector<double>{}), ppe::ValidationError);
}

TEST_CASE("delta sign and normalization") {
  CHECK(ppe::delta_distance(0.9, 0.6) == doctest::Approx(0.3));
  const ppe::AttributeRange range{"x", 0.5, 0.9};
  CHECK(ppe::normalize_delta(0.2, range) == doctest::Approx(0.5));
  CHECK_THROWS_AS(ppe::normalize_delta(0.2, ppe::AttributeRange{"x", 0.5, 0.5}), ppe::ValidationError);
}

TEST_CASE("published sub-tables recompute from their own rows") {
  // Only the baseline columns of (b) and (l) disagree with their printed indicator.
  std::set<char> mismatched;
  for (const auto& t : published::kSubTables) {
    std::vector<double> de;
    for (const auto& row : t.rows) de.push_back(row.baseline);
    const auto r = ppe::indicator(t.baseline_dc, de);
    CHECK(r.value == doctest::Approx(oracle::indicator(t.baseline_dc, de)).epsilon(1e-12));
    if (std::fabs(r.value - t.baseline_indicator) > 1e-3) mismatched.insert(t.label);
  }
  CHECK(mismatched == std::set<char>{'b', 'l'});
}

TEST_CASE("attribute ranges are cached and degenerate ranges are named") {
  auto c = oracle::random_case(3);
  ppe::RangeCache cache;
  const auto first = ppe::attribute_range(*c.corpus, c.command, *c.backend, &cache);
  double lo = 2.0, hi = 0.0;
  for (const auto& img : c.images) {
    lo = std::min(lo, oracle::distance(img, c.texts.at(c.command)));
    hi = std::max(hi, oracle::distance(img, c.texts.at(c.command)));
  }
  CHECK(first.min == lo);
  CHECK(first.max == hi);
  const auto calls = c.backend->text_calls();
  CHECK(ppe::attribute_range(*c.corpus, c.command, *c.backend, &cache) == first);
  CHECK(c.backend->text_calls() == calls);
  CHECK(cache.size() == 1);

  auto e = ppe::EmbeddingVector::normalized(Eigen::Vector2d(1, 0), "m");
  ppe::EmbeddedCorpus same({"a", "b"}, {e, e}, "m");
  ppe::SyntheticBackend backend("m", 2);
  CHECK(testing::error_of([&] { ppe::attribute_range(same, "anything", backend); })
            .find("zero normalization range for 'anything'") != std::string::npos);
  ppe::EmbeddedCorpus single({"a"}, {e}, "m");
  CHECK_THROWS_AS(ppe::attribute_range(single, "anything", backend), ppe::ValidationError);
}

TEST_CASE("evaluation matches a direct recomputation") {
  auto data = experiments::toy_data(300, 20);
  auto& backend = *data.stack.backend();
  ppe::MapperModel mapper(data.stack.generator().layout(), {}, 9);
  ppe::EvaluationRequest req{"grey hair", {"old", "pale"}, 1.5, "ppe", "abc"};
  auto report = ppe::evaluate_run(data.test, data.stack.generator(), mapper, req, backend, data.corpus);
  if (!report.result.valid) {
    // An untrained mapper may move away from the command; the reverse edit moves toward it.
    req.strength = -1.5;
    report = ppe::evaluate_run(data.test, data.stack.generator(), mapper, req, backend, data.corpus);
  }
  REQUIRE(report.result.valid);

  std::vector<std::string> texts{"grey hair", "old", "pale"};
  std::vector<double> mean(3, 0.0);
  const double inv = 1.0 / static_cast<double>(data.test.size());
  for (const auto& w : data.test) {
    const auto before = backend.embed_image(data.stack.generator().generate(w)).values();
    const ppe::LatentCode moved = w + req.strength * mapper.offset(w);
    const auto after = backend.embed_image(data.stack.generator().generate(moved)).values();
    for (std::size_t k = 0; k < 3; ++k) {
      const auto t = backend.embed_text(texts[k]).values();
      mean[k] += inv * (oracle::distance(before, t) - oracle::distance(after, t));
    }
  }
  std::vector<double> normalized;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto t = backend.embed_text(texts[k]).values();
    double lo = 2.0, hi = 0.0;
    for (const auto& e : data.corpus.embeddings()) {
      lo = std::min(lo, oracle::distance(e.values(), t));
      hi = std::max(hi, oracle::distance(e.values(), t));
    }
    normalized.push_back(mean[k] / (hi - lo));
  }
  CHECK(report.dc_normalized == doctest::Approx(normalized[0]).epsilon(1e-12));
  CHECK(report.rows[0].normalized == doctest::Approx(normalized[1]).epsilon(1e-12));
  CHECK(report.rows[1].normalized == doctest::Approx(normalized[2]).epsilon(1e-12));
  const std::vector<double> de{normalized[1], normalized[2]};
  CHECK(report.result.value == doctest::Approx(oracle::indicator(normalized[0], de)).epsilon(1e-12));
  CHECK(report.item_count == 20);
  CHECK(report.config_hash == "abc");
}

TEST_CASE("strength zero is flagged as no manipulation effect") {
  auto data = experiments::toy_data(200, 10);
  ppe::MapperModel mapper(data.stack.generator().layout(), {}, 1);
  ppe::EvaluationRequest req{"grey hair", {"old"}, 0.0, "ppe", ""};
  auto r = ppe::evaluate_run(data.test, data.stack.generator(), mapper, req, *data.stack.backend(), data.corpus);
  CHECK(r.dc_raw == 0.0);
  CHECK(r.rows[0].raw == 0.0);
  CHECK_FALSE(r.result.valid);
  CHECK(r.result.reason == "no manipulation effect");
  CHECK(r.to_csv().find("invalid,no manipulation effect") != std::string::npos);
}

TEST_CASE("reports serialize and compare") {
  auto data = experiments::toy_data(200, 10);
  auto& backend = *data.stack.backend();
  ppe::MapperModel a(data.stack.generator().layout(), {}, 1);
  ppe::MapperModel b(data.stack.generator().layout(), {}, 2);
  ppe::EvaluationRequest req{"grey hair", {"old", "pale"}, 1.0, "baseline", ""};
  auto ra = ppe::evaluate_run(data.test, data.stack.generator(), a, req, backend, data.corpus);
  req.label = "ppe";
  auto rb = ppe::evaluate_run(data.test, data.stack.generator(), b, req, backend, data.corpus);

  auto back = ppe::EvaluationReport::from_json(nlohmann::json::parse(ra.to_json().dump()));
  CHECK(back.to_json() == ra.to_json());
  CHECK(back.recompute().value == ra.result.value);

  const auto csv = ppe::comparison_csv(ra, rb);
  CHECK(csv.rfind("row,attribute,baseline,ppe\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(ppe::comparison_table(ra, rb).find("pale") != std::string::npos);

  req.entangled = {"old"};
  auto rc = ppe::evaluate_run(data.test, data.stack.generator(), b, req, backend, data.corpus);
  CHECK_THROWS_AS(ppe::comparison_csv(ra, rc), ppe::ValidationError);
}

TEST_CASE("sweep reports one row per strength") {
  auto data = experiments::toy_data(200, 10);
  ppe::MapperModel mapper(data.stack.generator().layout(), {}, 1);
  ppe::EvaluationRequest req{"grey hair", {"old"}, 1.0, "ppe", ""};
  auto sweep = ppe::strength_sweep(data.test, data.stack.generator(), mapper, req, {0.0, 1.0, 2.0},
                                   *data.stack.backend(), data.corpus);
  REQUIRE(sweep.size() == 3);
  CHECK(sweep[0].strength == 0.0);
  CHECK(sweep[2].strength == 2.0);
}
