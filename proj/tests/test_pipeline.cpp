#include <unistd.h>

#include <filesystem>

#include "doctest.h"
#include "json.hpp"
#include "ppe/errors.hpp"
#include "ppe/pipeline.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kTool = PPE_TOOL;

// Small toy demo written once per test binary.
const fs::path& demo_dir() {
  static testing::TempDir dir;
  static bool ready = false;
  if (!ready) {
    auto r = testing::run(kTool + " synth --out '" + (dir / "demo").string() + "' --corpus_size 600 --test_size 40",
                          dir.path());
    REQUIRE(r.exit_code == 0);
    ready = true;
  }
  static const fs::path demo = dir / "demo";
  return demo;
}

std::string config() { return (demo_dir() / "config.json").string(); }

testing::RunResult cli(const std::string& args, const fs::path& scratch) {
  return testing::run(kTool + " " + args, scratch);
}

std::string quick(const fs::path& out) { return " --steps 120 --output_dir '" + out.string() + "'"; }

std::vector<fs::path> files_in(const fs::path& dir, const std::string& prefix) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().rfind(prefix, 0) == 0) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string json_named(const fs::path& dir, const std::string& prefix) {
  for (const auto& p : files_in(dir, prefix)) {
    if (p.extension() == ".json") return p.filename().string();
  }
  return "";
}

}  // namespace

TEST_CASE("full toy run through the command line") {
  testing::TempDir scratch;
  const auto out = scratch / "out";
  auto r = cli("predict -c " + config() + quick(out), scratch.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("entangled attributes for 'grey hair'") != std::string::npos);

  // Evaluation trains whatever it is missing.
  r = cli("evaluate --mode both -c " + config() + quick(out), scratch.path());
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(files_in(out / "checkpoints", "ppe-").size() == 2);
  CHECK(files_in(out / "checkpoints", "baseline-").size() == 2);
  CHECK(files_in(out / "reports", "evaluation-ppe-").size() == 3);

  r = cli("report -c " + config() + quick(out), scratch.path());
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("Indicator") != std::string::npos);
  const auto comparison = files_in(out / "reports", "comparison-");
  REQUIRE(comparison.size() == 2);
  const auto csv = testing::slurp(comparison[0].extension() == ".csv" ? comparison[0] : comparison[1]);
  CHECK(csv.rfind("row,attribute,baseline,ppe\n", 0) == 0);
  REQUIRE(files_in(out / "reports", "strength-").size() == 1);

  // The entanglement-aware mapper drifts less than the baseline.
  const auto ppe_doc = json::parse(testing::slurp(out / "reports" / json_named(out / "reports", "evaluation-ppe-")));
  const auto base_doc = json::parse(testing::slurp(out / "reports" / json_named(out / "reports", "evaluation-baseline-")));
  CHECK(ppe_doc["report"]["indicator"].get<double>() <
        base_doc["report"]["indicator"].get<double>());

  r = cli("manipulate -c " + config() + quick(out), scratch.path());
  REQUIRE(r.exit_code == 0);
  const auto images = json_named(out / "images", "manipulate-");
  REQUIRE_FALSE(images.empty());
  CHECK(fs::is_directory(out / "images" / fs::path(images).stem()));

  const auto manifest = json::parse(testing::slurp(out / "reports" / "manifest.json"));
  CHECK(manifest["artifacts"].size() >= 5);
  CHECK_FALSE(fs::exists(out / ".ppe.lock"));
}

TEST_CASE("prediction and training artifacts are byte-identical across runs") {
  testing::TempDir scratch;
  for (const char* name : {"a", "b"}) {
    auto r = cli("train --mode ppe -c " + config() + quick(scratch / name), scratch.path());
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
  }
  const auto pa = files_in(scratch / "a" / "predictions", "prediction-");
  const auto pb = files_in(scratch / "b" / "predictions", "prediction-");
  REQUIRE(pa.size() == 1);
  REQUIRE(pb.size() == 1);
  CHECK(pa[0].filename() == pb[0].filename());
  CHECK(testing::slurp(pa[0]) == testing::slurp(pb[0]));
  const auto ta = files_in(scratch / "a" / "checkpoints", "trace-ppe-");
  const auto tb = files_in(scratch / "b" / "checkpoints", "trace-ppe-");
  REQUIRE(ta.size() == 2);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(testing::slurp(ta[i]) == testing::slurp(tb[i]));
  CHECK(testing::slurp(files_in(scratch / "a" / "checkpoints", "ppe-")[0]) ==
        testing::slurp(files_in(scratch / "b" / "checkpoints", "ppe-")[0]));
}

TEST_CASE("configuration errors exit with code 2 and name the key") {
  testing::TempDir scratch;
  auto r = cli("predict -c " + config() + " --corpus /nonexistent/corpus.json" + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("paths.corpus") != std::string::npos);

  r = cli("predict -c " + config() + " --set bogus_key=1" + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("bogus_key") != std::string::npos);

  r = cli("predict -c " + config() + " --set rank_cap=0" + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 2);

  r = cli("predict -c " + (scratch / "none.json").string(), scratch.path());
  CHECK(r.exit_code == 2);

  r = cli("predict", scratch.path());
  CHECK(r.exit_code == 2);
}

TEST_CASE("backend failures exit with code 3") {
  testing::TempDir scratch;
  auto r = cli("predict -c " + config() + " --backend process:false" + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 3);
  // A non-differentiable backend refuses training.
  r = cli("train --mode baseline -c " + config() + " --backend 'process:" + testing::fixture("fake_clip.py") + "'" +
              quick(scratch / "o2"),
          scratch.path());
  CHECK(r.exit_code == 3);
}

TEST_CASE("report needs evaluation artifacts") {
  testing::TempDir scratch;
  auto r = cli("report -c " + config() + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("missing evaluation artifact") != std::string::npos);
}

TEST_CASE("output directory lock") {
  testing::TempDir scratch;
  const auto out = scratch / "o";
  fs::create_directories(out);
  testing::spit(out / ".ppe.lock", std::to_string(::getpid()));
  auto r = cli("predict -c " + config() + quick(out), scratch.path());
  CHECK(r.exit_code == 4);
  CHECK(fs::exists(out / ".ppe.lock"));

  testing::spit(out / ".ppe.lock", "999999999");
  r = cli("predict -c " + config() + quick(out), scratch.path());
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("stale lock") != std::string::npos);
  CHECK_FALSE(fs::exists(out / ".ppe.lock"));

  ppe::PipelineConfig c = ppe::PipelineConfig::load(config(), {"paths.output_dir=" + (scratch / "p").string()});
  ppe::Pipeline first(c);
  CHECK_THROWS_AS(ppe::Pipeline{c}, ppe::LockError);
}

TEST_CASE("an edit with no effect is flagged rather than failing") {
  testing::TempDir scratch;
  auto r = cli("evaluate --mode ppe -c " + config() +
                   " --set 'mapper={\"kind\":\"constant\",\"init_scale\":0}' --learning_rate 1e-300" +
                   quick(scratch / "o"),
               scratch.path());
  INFO(r.err);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("report flagged invalid: no manipulation effect") != std::string::npos);
}

TEST_CASE("mining and category lookup through external programs") {
  testing::TempDir scratch;
  const std::string mining = "mining={\"infiller\":\"process:" + testing::fixture("fake_mlm.py") +
                             "\",\"top_k\":3,\"prompts\":[{\"template\":\"a face with [MASK] [X]\",\"keyword\":\"eyes\"}]}";
  auto r = cli("mine -c " + config() + " --set '" + mining + "'" + quick(scratch / "o"), scratch.path());
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  const auto mined = files_in(scratch / "o" / "reports", "mining-");
  REQUIRE(mined.size() == 1);
  const auto line = json::parse(testing::slurp(mined[0]));
  CHECK(line["attributes"] == json{"blue eyes", "brown eyes"});

  const std::string finder = "find_category={\"scorer\":\"process:" + testing::fixture("fake_lm.py") +
                             "\",\"candidates\":[\"eye color\",\"hair color\"]}";
  r = cli("find-category -c " + config() + " --command 'silver hair' --set '" + finder + "'" + quick(scratch / "o"),
          scratch.path());
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(r.out.find("category: hair color") != std::string::npos);

  r = cli("mine -c " + config() + quick(scratch / "o"), scratch.path());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("mining.prompts") != std::string::npos);
}

TEST_CASE("demo writer rejects unknown kinds") {
  testing::TempDir scratch;
  CHECK_THROWS_AS(ppe::write_demo(scratch / "x", "bogus", 1), ppe::ConfigError);
  auto cfg = ppe::write_demo(scratch / "p", "planted", 1, 300);
  CHECK(fs::exists(cfg));
  auto c = ppe::PipelineConfig::load(cfg);
  CHECK(c.generator == "none");
  CHECK(c.predictor.n_entangled == 10);
}

TEST_CASE("overrides parse JSON values and keep strings") {
  json doc = json::object();
  ppe::apply_override(doc, "paths.corpus=c.json");
  ppe::apply_override(doc, "steps=12");
  ppe::apply_override(doc, "strengths=[0,1]");
  CHECK(doc["paths"]["corpus"] == "c.json");
  CHECK(doc["steps"] == 12);
  CHECK(doc["strengths"].size() == 2);
  CHECK_THROWS_AS(ppe::apply_override(doc, "novalue"), ppe::ConfigError);
}
