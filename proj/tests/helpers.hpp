// Shared scaffolding for the test suite: fixture paths, scratch directories,
// item builders, and a scripted HTTP transport for exercising the gateway
// without a network.
#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "cocot/config.hpp"
#include "cocot/domain.hpp"
#include "cocot/provider.hpp"

namespace testutil {

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(FIXTURES_DIR) / rel;
}

inline std::filesystem::path templates_dir() { return std::filesystem::path(TEMPLATES_DIR); }
inline std::filesystem::path policies_dir() { return std::filesystem::path(POLICIES_DIR); }

// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cocot-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline cocot::TaskItem choice_item(std::string id, int n_choices = 4, char gold = 'A') {
  cocot::TaskItem item;
  item.id = std::move(id);
  item.kind = cocot::TaskKind::MultiChoiceReasoning;
  item.text = "What does the image show?";
  item.image_path = fixture("images/golden.png").string();
  for (int i = 0; i < n_choices; ++i) {
    item.choices.push_back({static_cast<char>('A' + i), "choice " + std::to_string(i)});
  }
  item.gold = gold;
  return item;
}

inline cocot::TaskItem intent_item(std::string id, char gold = 'A') {
  cocot::TaskItem item = choice_item(std::move(id), 4, gold);
  item.kind = cocot::TaskKind::IntentDisambiguation;
  item.text = "Well, that's just great.";
  return item;
}

inline cocot::TaskItem safety_item(std::string id, bool instruction_safe, bool image_safe) {
  cocot::TaskItem item;
  item.id = std::move(id);
  item.kind = cocot::TaskKind::SafetyInstruction;
  item.text = "Describe the scene.";
  item.image_path = fixture("images/golden.png").string();
  item.gold = cocot::SafetyLabel{instruction_safe, image_safe};
  return item;
}

// Plays back a scripted sequence of HTTP results; records request bodies.
class ScriptedTransport : public cocot::HttpTransport {
 public:
  explicit ScriptedTransport(std::vector<cocot::HttpResult> script)
      : script_(std::move(script)) {}

  cocot::HttpResult post(const cocot::WireRequest& request, long) override {
    std::lock_guard<std::mutex> lock(mu_);
    requests.push_back(request);
    if (calls_ >= script_.size()) return script_.back();
    return script_[calls_++];
  }

  std::vector<cocot::WireRequest> requests;

 private:
  std::vector<cocot::HttpResult> script_;
  size_t calls_ = 0;
  std::mutex mu_;
};

inline cocot::ProviderConfig mock_provider(const std::string& id = "mock-vlm") {
  cocot::ProviderConfig cfg;
  cfg.provider_id = id;
  cfg.dialect = cocot::Dialect::Mock;
  cfg.model_name = "mock-model";
  cfg.mock_fixtures = fixture("mock/rules.jsonl");
  return cfg;
}

// The committed acceptance config with cache/output redirected to `scratch`.
inline cocot::ExperimentConfig acceptance_config(const std::filesystem::path& scratch) {
  cocot::ExperimentConfig cfg = cocot::load_config(fixture("configs/acceptance.json"));
  cfg.cache_dir = scratch / "cache";
  cfg.output_dir = scratch / "out";
  cocot::validate_config(cfg);
  return cfg;
}

}  // namespace testutil
