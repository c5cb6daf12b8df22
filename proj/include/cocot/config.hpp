#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/dataset.hpp"
#include "cocot/domain.hpp"
#include "cocot/errors.hpp"
#include "cocot/judgment.hpp"
#include "cocot/strategy.hpp"
#include "cocot/wire.hpp"

namespace cocot {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct DatasetRef {
  std::filesystem::path manifest_path;
  // Grid conditions for this dataset; listing socratic_caption for a
  // non-intent dataset is rejected at plan time.
  std::vector<GroundingCondition> conditions = {GroundingCondition::RawImage};
};

enum class JudgeMode { Rules, External };

inline const char* to_string(JudgeMode m) {
  return m == JudgeMode::Rules ? "rules" : "external";
}

struct JudgeConfig {
  JudgeMode mode = JudgeMode::Rules;
  std::optional<std::filesystem::path> policy_file;  // built-in defaults when absent
  std::string judge_provider;                        // required for External
  std::string rubric;                                // defaults to kDefaultJudgeRubric
};

struct SampleSpec {
  size_t count = 0;
  uint64_t seed = 0;
};

struct ExperimentConfig {
  std::string run_id;  // empty -> derived from UTC stamp at report time
  std::vector<DatasetRef> datasets;
  std::vector<StrategyId> strategies;
  std::vector<ProviderConfig> providers;
  std::string caption_provider;  // provider_id; defaults to the first provider
  JudgeConfig judge;
  std::optional<std::filesystem::path> templates_dir;  // built-in set when absent
  std::map<std::string, std::string> stage_instructions;  // explicit overrides
  std::optional<SampleSpec> sample;  // per-dataset deterministic subsample
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path output_dir = "out";
  bool multi_turn_stages = false;
  std::string config_digest;  // sha256 of the config file bytes
};

namespace detail {

inline ProviderConfig provider_from_json(const json& j, const std::filesystem::path& base) {
  ProviderConfig cfg;
  cfg.provider_id = j.at("provider_id").get<std::string>();
  cfg.dialect = dialect_from_string(j.at("dialect").get<std::string>());
  cfg.endpoint_url = j.value("endpoint_url", std::string());
  cfg.model_name = j.value("model_name", std::string());
  cfg.max_parallel = j.value("max_parallel", 1);
  if (j.contains("retry")) {
    const json& r = j.at("retry");
    cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
    cfg.retry.base_backoff_ms = r.value("base_backoff_ms", cfg.retry.base_backoff_ms);
    cfg.retry.jitter = r.value("jitter", cfg.retry.jitter);
  }
  cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
  if (j.contains("sampling")) cfg.sampling = j.at("sampling");
  cfg.rate_limit_per_minute = j.value("rate_limit_per_minute", 0.0);
  cfg.image_size_cap_bytes = j.value("image_size_cap_bytes", cfg.image_size_cap_bytes);
  if (j.contains("mock_fixtures")) {
    cfg.mock_fixtures = base / j.at("mock_fixtures").get<std::string>();
  }
  return cfg;
}

}  // namespace detail

inline void validate_config(const ExperimentConfig& cfg);

// Reads the experiment config (JSON; a documented hierarchical key-value
// schema). Relative paths resolve against the config file's directory so a
// config travels with its fixtures.
inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::FileMissing, "config not found: " + path.string());
  }
  std::string raw = read_file(path);
  json doc;
  try {
    doc = json::parse(raw);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }

  std::filesystem::path base = path.parent_path();
  ExperimentConfig cfg;
  cfg.config_digest = sha256_hex(raw);
  try {
    cfg.run_id = doc.value("run_id", std::string());

    for (const json& d : doc.at("datasets")) {
      DatasetRef ref;
      ref.manifest_path = base / d.at("manifest").get<std::string>();
      if (d.contains("conditions")) {
        ref.conditions.clear();
        for (const json& c : d.at("conditions")) {
          ref.conditions.push_back(condition_from_string(c.get<std::string>()));
        }
      }
      cfg.datasets.push_back(std::move(ref));
    }

    if (doc.contains("strategies")) {
      for (const json& s : doc.at("strategies")) {
        cfg.strategies.push_back(strategy_from_string(s.get<std::string>()));
      }
    } else {
      cfg.strategies.assign(std::begin(kAllStrategies), std::end(kAllStrategies));
    }

    for (const json& p : doc.at("providers")) {
      cfg.providers.push_back(detail::provider_from_json(p, base));
    }
    cfg.caption_provider = doc.value("caption_provider", std::string());

    if (doc.contains("judge")) {
      const json& jj = doc.at("judge");
      std::string mode = jj.value("mode", std::string("rules"));
      if (mode == "rules") {
        cfg.judge.mode = JudgeMode::Rules;
      } else if (mode == "external") {
        cfg.judge.mode = JudgeMode::External;
      } else {
        throw Error(ErrorCode::ConfigError, "judge.mode must be \"rules\" or \"external\"");
      }
      if (jj.contains("policy_file")) {
        cfg.judge.policy_file = base / jj.at("policy_file").get<std::string>();
      }
      cfg.judge.judge_provider = jj.value("judge_provider", std::string());
      cfg.judge.rubric = jj.value("rubric", std::string());
    }

    if (doc.contains("templates_dir")) {
      cfg.templates_dir = base / doc.at("templates_dir").get<std::string>();
    }
    if (doc.contains("stage_instructions")) {
      cfg.stage_instructions =
          doc.at("stage_instructions").get<std::map<std::string, std::string>>();
    }
    if (doc.contains("sample")) {
      SampleSpec s;
      s.count = doc.at("sample").at("count").get<size_t>();
      s.seed = doc.at("sample").at("seed").get<uint64_t>();
      cfg.sample = s;
    }
    cfg.cache_dir = base / doc.value("cache_dir", std::string("cache"));
    cfg.output_dir = base / doc.value("output_dir", std::string("out"));
    cfg.multi_turn_stages = doc.value("multi_turn_stages", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }

  validate_config(cfg);
  return cfg;
}

inline void validate_config(const ExperimentConfig& cfg) {
  if (cfg.datasets.empty()) throw Error(ErrorCode::ConfigError, "config lists no datasets");
  if (cfg.strategies.empty()) throw Error(ErrorCode::ConfigError, "config lists no strategies");
  if (cfg.providers.empty()) throw Error(ErrorCode::ConfigError, "config lists no providers");

  std::set<std::string> ids;
  for (const auto& p : cfg.providers) {
    validate(p);
    if (!ids.insert(p.provider_id).second) {
      throw Error(ErrorCode::ConfigError, "duplicate provider_id " + p.provider_id);
    }
  }
  std::set<StrategyId> seen;
  for (StrategyId s : cfg.strategies) {
    if (!seen.insert(s).second) {
      throw Error(ErrorCode::ConfigError, std::string("duplicate strategy ") + to_string(s));
    }
  }
  for (const auto& d : cfg.datasets) {
    if (d.conditions.empty()) {
      throw Error(ErrorCode::ConfigError,
                  "dataset " + d.manifest_path.string() + " lists no conditions");
    }
  }
  if (!cfg.caption_provider.empty() && !ids.count(cfg.caption_provider)) {
    throw Error(ErrorCode::ConfigError, "caption_provider " + cfg.caption_provider +
                                            " is not a configured provider");
  }
  if (cfg.judge.mode == JudgeMode::External) {
    if (cfg.judge.judge_provider.empty() || !ids.count(cfg.judge.judge_provider)) {
      throw Error(ErrorCode::ConfigError,
                  "judge.mode=external requires judge_provider naming a configured provider");
    }
  }
  for (const auto& [name, text] : cfg.stage_instructions) {
    stage_from_string(name);  // throws on unknown stage names
    if (text.empty()) {
      throw Error(ErrorCode::ConfigError, "stage_instructions." + name + " is empty");
    }
  }
}

// Builds the registry the config asks for: directory templates or built-ins,
// plus any explicit stage overrides.
inline PromptRegistry registry_for(const ExperimentConfig& cfg) {
  PromptRegistry reg =
      cfg.templates_dir ? PromptRegistry::load_dir(*cfg.templates_dir) : PromptRegistry::builtin();
  for (const auto& [name, text] : cfg.stage_instructions) {
    reg.set_stage_instruction(stage_from_string(name), text);
  }
  return reg;
}

inline ExtractionPolicy policy_for(const ExperimentConfig& cfg) {
  return cfg.judge.policy_file ? ExtractionPolicy::load(*cfg.judge.policy_file)
                               : ExtractionPolicy::defaults();
}

}  // namespace cocot
