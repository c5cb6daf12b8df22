#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "cocot/config.hpp"

#include "helpers.hpp"

using namespace cocot;

namespace {

// Builds a minimal valid config document; tests mutate single keys from here.
json base_doc() {
  return json{
      {"run_id", "unit"},
      {"datasets", json::array({json{{"manifest", "m.json"}}})},
      {"providers", json::array({json{{"provider_id", "mock-vlm"},
                                      {"dialect", "mock"},
                                      {"mock_fixtures", "rules.jsonl"}}})},
  };
}

std::filesystem::path write_config(const testutil::TempDir& dir, const json& doc,
                                   const std::string& name = "config.json") {
  std::filesystem::path p = dir / name;
  std::ofstream out(p);
  out << doc.dump(2) << "\n";
  return p;
}

}  // namespace

TEST_CASE("the committed acceptance config loads with every field populated") {
  ExperimentConfig cfg = load_config(testutil::fixture("configs/acceptance.json"));
  CHECK(cfg.run_id == "acceptance");

  REQUIRE(cfg.datasets.size() == 3);
  CHECK(cfg.datasets[0].conditions ==
        std::vector<GroundingCondition>{GroundingCondition::SocraticCaption,
                                        GroundingCondition::RawImage});
  CHECK(cfg.datasets[1].conditions ==
        std::vector<GroundingCondition>{GroundingCondition::RawImage});
  for (const auto& d : cfg.datasets) {
    CHECK(std::filesystem::exists(d.manifest_path));  // resolved against the config dir
  }

  REQUIRE(cfg.strategies.size() == 9);
  for (size_t i = 0; i < 9; ++i) CHECK(cfg.strategies[i] == kAllStrategies[i]);

  REQUIRE(cfg.providers.size() == 1);
  CHECK(cfg.providers[0].provider_id == "mock-vlm");
  CHECK(cfg.providers[0].dialect == Dialect::Mock);
  CHECK(cfg.providers[0].max_parallel == 4);
  CHECK(std::filesystem::exists(cfg.providers[0].mock_fixtures));

  CHECK(cfg.caption_provider == "mock-vlm");
  CHECK(cfg.judge.mode == JudgeMode::Rules);
  CHECK_FALSE(cfg.multi_turn_stages);

  // digest is over the raw file bytes
  CHECK(cfg.config_digest ==
        sha256_hex(read_file(testutil::fixture("configs/acceptance.json"))));
}

TEST_CASE("defaults fill in strategies, conditions, judge, and directories") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));
  auto path = write_config(dir, base_doc());

  ExperimentConfig cfg = load_config(path);
  CHECK(cfg.strategies.size() == 9);  // all strategies when the key is absent
  REQUIRE(cfg.datasets.size() == 1);
  CHECK(cfg.datasets[0].conditions ==
        std::vector<GroundingCondition>{GroundingCondition::RawImage});
  CHECK(cfg.judge.mode == JudgeMode::Rules);
  CHECK_FALSE(cfg.judge.policy_file.has_value());
  CHECK_FALSE(cfg.templates_dir.has_value());
  CHECK_FALSE(cfg.sample.has_value());
  CHECK(cfg.cache_dir == dir / "cache");
  CHECK(cfg.output_dir == dir / "out");
  CHECK(cfg.caption_provider.empty());
}

TEST_CASE("structural mistakes are rejected with ConfigError") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));

  auto expect_config_error = [&](const json& doc, const std::string& fragment) {
    auto path = write_config(dir, doc);
    try {
      load_config(path);
      FAIL("expected ConfigError for: " + fragment);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ConfigError);
      INFO(e.what());
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };

  json no_datasets = base_doc();
  no_datasets["datasets"] = json::array();
  expect_config_error(no_datasets, "no datasets");

  json no_providers = base_doc();
  no_providers["providers"] = json::array();
  expect_config_error(no_providers, "no providers");

  json empty_strategies = base_doc();
  empty_strategies["strategies"] = json::array();
  expect_config_error(empty_strategies, "no strategies");

  json dup_provider = base_doc();
  dup_provider["providers"].push_back(dup_provider["providers"][0]);
  expect_config_error(dup_provider, "duplicate provider_id mock-vlm");

  json dup_strategy = base_doc();
  dup_strategy["strategies"] = {"direct", "cot", "direct"};
  expect_config_error(dup_strategy, "duplicate strategy direct");

  json unknown_strategy = base_doc();
  unknown_strategy["strategies"] = {"galaxy_brain"};
  expect_config_error(unknown_strategy, "galaxy_brain");

  json no_conditions = base_doc();
  no_conditions["datasets"][0]["conditions"] = json::array();
  expect_config_error(no_conditions, "lists no conditions");

  json bad_condition = base_doc();
  bad_condition["datasets"][0]["conditions"] = {"hologram"};
  expect_config_error(bad_condition, "hologram");

  json ghost_captioner = base_doc();
  ghost_captioner["caption_provider"] = "nobody";
  expect_config_error(ghost_captioner, "caption_provider nobody is not a configured provider");

  json external_no_judge = base_doc();
  external_no_judge["judge"] = {{"mode", "external"}};
  expect_config_error(external_no_judge, "judge_provider");

  json bad_judge_mode = base_doc();
  bad_judge_mode["judge"] = {{"mode", "vibes"}};
  expect_config_error(bad_judge_mode, "judge.mode");

  json bad_stage = base_doc();
  bad_stage["stage_instructions"] = {{"moonphase", "look up"}};
  expect_config_error(bad_stage, "moonphase");

  json empty_stage = base_doc();
  empty_stage["stage_instructions"] = {{"perception", ""}};
  expect_config_error(empty_stage, "stage_instructions.perception is empty");
}

TEST_CASE("missing and malformed config files are fatal") {
  testutil::TempDir dir("config");
  try {
    load_config(dir / "absent.json");
    FAIL("expected FileMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FileMissing);
  }

  write_file_atomic(dir / "broken.json", std::string("{not json"));
  try {
    load_config(dir / "broken.json");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
  }
}

TEST_CASE("the config digest tracks file bytes exactly") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));

  auto p1 = write_config(dir, base_doc(), "a.json");
  ExperimentConfig first = load_config(p1);
  ExperimentConfig again = load_config(p1);
  CHECK(first.config_digest == again.config_digest);

  json changed = base_doc();
  changed["run_id"] = "other";
  auto p2 = write_config(dir, changed, "b.json");
  CHECK(load_config(p2).config_digest != first.config_digest);
}

TEST_CASE("the registry honors templates_dir and stage overrides") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));
  PromptRegistry::builtin().write_dir(dir / "tpl");

  json doc = base_doc();
  doc["templates_dir"] = "tpl";
  doc["stage_instructions"] = {{"norm", "Pick the kindest reading."}};
  ExperimentConfig cfg = load_config(write_config(dir, doc));

  PromptRegistry reg = registry_for(cfg);
  CHECK(reg.stage_instruction(Stage::Norm) == "Pick the kindest reading.");
  CHECK(reg.stage_instruction(Stage::Perception) == kPerceptionInstruction);
  CHECK(reg.combined_hash() != PromptRegistry::builtin().combined_hash());

  ExperimentConfig plain = load_config(write_config(dir, base_doc(), "plain.json"));
  CHECK(registry_for(plain).combined_hash() == PromptRegistry::builtin().combined_hash());
}

TEST_CASE("the judge policy comes from the named file or the defaults") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));

  ExperimentConfig plain = load_config(write_config(dir, base_doc(), "plain.json"));
  CHECK(policy_for(plain).hash() == ExtractionPolicy::defaults().hash());

  // a file policy with one extra marker diverges from the defaults
  ExtractionPolicy custom = ExtractionPolicy::defaults().with_extra_refusal_marker("no dice");
  write_file_atomic(dir / "custom.policy", custom.canonical_text());
  json doc = base_doc();
  doc["judge"] = {{"mode", "rules"}, {"policy_file", "custom.policy"}};
  ExperimentConfig cfg = load_config(write_config(dir, doc));
  CHECK(policy_for(cfg).hash() == custom.hash());
  CHECK(policy_for(cfg).hash() != ExtractionPolicy::defaults().hash());
}

TEST_CASE("sampling and provider knobs survive the round trip") {
  testutil::TempDir dir("config");
  write_file_atomic(dir / "rules.jsonl", std::string(R"({"default_response": "x"})" "\n"));

  json doc = base_doc();
  doc["sample"] = {{"count", 5}, {"seed", 99}};
  doc["multi_turn_stages"] = true;
  doc["providers"][0]["max_parallel"] = 7;
  doc["providers"][0]["rate_limit_per_minute"] = 120.0;
  doc["providers"][0]["retry"] = {{"max_attempts", 4}, {"base_backoff_ms", 9}, {"jitter", 0.25}};
  doc["providers"][0]["timeout_ms"] = 1234;

  ExperimentConfig cfg = load_config(write_config(dir, doc));
  REQUIRE(cfg.sample.has_value());
  CHECK(cfg.sample->count == 5);
  CHECK(cfg.sample->seed == 99);
  CHECK(cfg.multi_turn_stages);
  CHECK(cfg.providers[0].max_parallel == 7);
  CHECK(cfg.providers[0].rate_limit_per_minute == 120.0);
  CHECK(cfg.providers[0].retry.max_attempts == 4);
  CHECK(cfg.providers[0].retry.base_backoff_ms == 9);
  CHECK(cfg.providers[0].retry.jitter == 0.25);
  CHECK(cfg.providers[0].timeout_ms == 1234);
}
