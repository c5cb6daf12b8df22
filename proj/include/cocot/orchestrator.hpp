#pragma once

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cocot/config.hpp"
#include "cocot/dataset.hpp"
#include "cocot/domain.hpp"
#include "cocot/errors.hpp"
#include "cocot/judgment.hpp"
#include "cocot/provider.hpp"
#include "cocot/strategy.hpp"
#include "cocot/version.hpp"

namespace cocot {

// ---------------------------------------------------------------------------
// Plan
// ---------------------------------------------------------------------------

// One execution unit of the grid.
struct Cell {
  std::string dataset;
  TaskItem item;
  StrategyId strategy = StrategyId::Direct;
  GroundingCondition condition = GroundingCondition::RawImage;
  std::string provider_id;
  std::string digest;  // cache key
};

struct Plan {
  std::vector<Cell> cells;  // deterministic order
  std::map<std::string, DatasetManifest> manifests;    // by dataset name
  std::map<std::string, std::vector<TaskItem>> items;  // sampled, by dataset name
  std::vector<std::string> dataset_order;              // config order
  std::vector<std::string> warnings;                   // item-level load errors
};

// Everything that affects a cell's prompts or judging feeds its digest, so a
// template/policy/model change re-executes exactly the affected cells.
inline std::string cell_digest(const std::string& dataset, const TaskItem& item,
                               StrategyId strategy, GroundingCondition condition,
                               const std::string& provider_model, const PromptRegistry& registry,
                               const std::string& policy_hash, bool multi_turn) {
  std::string acc;
  for (const std::string& part :
       {dataset, item.id, std::string(to_string(strategy)), std::string(to_string(condition)),
        provider_model, registry.hash_for(strategy, item.kind, condition), policy_hash,
        std::to_string(kVersionMajor), std::string(multi_turn ? "multi_turn" : "single_call")}) {
    acc += part;
    acc += '\x1f';
  }
  return sha256_hex(acc);
}

// Enumerates the full (item x strategy x condition x provider) grid in a
// deterministic order: dataset (config order), item (file order), strategy
// (enum order), condition (enum order), provider (config order). Invalid
// combinations fail here, never mid-run.
inline Plan make_plan(const ExperimentConfig& cfg, const PromptRegistry& registry,
                      const std::string& policy_hash) {
  Plan plan;
  for (const auto& ref : cfg.datasets) {
    DatasetManifest manifest = load_manifest(ref.manifest_path);
    if (plan.manifests.count(manifest.name)) {
      throw Error(ErrorCode::ConfigError, "duplicate dataset name " + manifest.name);
    }
    for (GroundingCondition condition : ref.conditions) {
      if (condition == GroundingCondition::SocraticCaption &&
          manifest.kind != TaskKind::IntentDisambiguation) {
        throw Error(ErrorCode::InvalidCombination,
                    "socratic_caption is only valid for intent_disambiguation datasets; " +
                        manifest.name + " is " + to_string(manifest.kind));
      }
    }

    LoadResult loaded = load(manifest);
    for (const auto& err : loaded.errors) {
      plan.warnings.push_back(manifest.items_file.string() + ":" + std::to_string(err.line) +
                              ": " + err.reason);
    }
    std::vector<TaskItem> items = loaded.items;
    if (cfg.sample) items = sample_items(items, cfg.sample->count, cfg.sample->seed);

    // strategy iteration in enum order, restricted to the configured set
    std::set<StrategyId> wanted(cfg.strategies.begin(), cfg.strategies.end());
    for (const TaskItem& item : items) {
      for (StrategyId strategy : kAllStrategies) {
        if (!wanted.count(strategy)) continue;
        for (GroundingCondition condition :
             {GroundingCondition::SocraticCaption, GroundingCondition::RawImage}) {
          bool listed = false;
          for (GroundingCondition c : ref.conditions) listed |= c == condition;
          if (!listed) continue;
          for (const ProviderConfig& provider : cfg.providers) {
            Cell cell;
            cell.dataset = manifest.name;
            cell.item = item;
            cell.strategy = strategy;
            cell.condition = condition;
            cell.provider_id = provider.provider_id;
            cell.digest = cell_digest(manifest.name, item, strategy, condition,
                                      provider.model_name, registry, policy_hash,
                                      cfg.multi_turn_stages);
            plan.cells.push_back(std::move(cell));
          }
        }
      }
    }

    plan.dataset_order.push_back(manifest.name);
    plan.items[manifest.name] = std::move(items);
    plan.manifests[manifest.name] = std::move(manifest);
  }

  if (plan.cells.empty()) {
    throw Error(ErrorCode::EmptyPlan, "the configured grid contains no cells");
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

enum class CellStatus { Pending, Done, Failed };

struct CellOutcome {
  CellStatus status = CellStatus::Pending;
  bool from_cache = false;
  std::string error;
};

struct RunLedger {
  size_t planned = 0;
  std::map<std::string, CellOutcome> outcomes;  // by cell digest

  size_t count(CellStatus status) const {
    size_t n = 0;
    for (const auto& [_, o] : outcomes) n += o.status == status ? 1 : 0;
    return n;
  }
  size_t done() const { return count(CellStatus::Done); }
  size_t failed() const { return count(CellStatus::Failed); }
  bool all_done() const { return done() == planned; }
};

struct RunOptions {
  bool resume = false;
  // Executes only the first N pending cells, then returns: a deterministic
  // stand-in for killing a run partway through.
  size_t stop_after_cells = 0;  // 0 = no limit
};

// ---------------------------------------------------------------------------
// Caption store
// ---------------------------------------------------------------------------

struct CaptionEntry {
  std::string caption_text;
  TranscriptCall call;  // replayed into each transcript that reuses the caption
};

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

class Runner {
 public:
  explicit Runner(ExperimentConfig cfg, std::shared_ptr<HttpTransport> transport = nullptr)
      : cfg_(std::move(cfg)), registry_(registry_for(cfg_)), policy_(policy_for(cfg_)) {
    for (const ProviderConfig& p : cfg_.providers) {
      gateways_[p.provider_id] = std::make_shared<ProviderGateway>(p, transport);
    }
    caption_provider_ =
        cfg_.caption_provider.empty() ? cfg_.providers.front().provider_id : cfg_.caption_provider;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const PromptRegistry& registry() const { return registry_; }
  const ExtractionPolicy& policy() const { return policy_; }

  ProviderGateway& gateway(const std::string& provider_id) { return *gateways_.at(provider_id); }

  ProviderGateway* judge_gateway() {
    if (cfg_.judge.mode != JudgeMode::External) return nullptr;
    return gateways_.at(cfg_.judge.judge_provider).get();
  }

  Plan plan() const { return make_plan(cfg_, registry_, policy_.hash()); }

  std::filesystem::path transcript_path(const Cell& cell) const {
    return cfg_.cache_dir / cell.provider_id / (cell.digest + ".json");
  }

  // Loads a cell's cached transcript if it exists, parses, and carries the
  // matching digest; anything else (corruption included) reads as absent.
  std::optional<Transcript> load_cached(const Cell& cell) const {
    std::filesystem::path path = transcript_path(cell);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      json doc = json::parse(read_file(path));
      if (doc.at("cell_digest").get<std::string>() != cell.digest) return std::nullopt;
      Transcript t = doc.at("transcript").get<Transcript>();
      if (t.item_id != cell.item.id) return std::nullopt;
      return t;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  // Executes pending cells on a bounded worker pool. Per-cell failures are
  // recorded and skipped; configuration and authentication failures abort the
  // whole run. The ledger is folded by the coordinator after workers finish.
  RunLedger run(const Plan& plan, const RunOptions& opts = {}) {
    RunLedger ledger;
    ledger.planned = plan.cells.size();

    std::vector<const Cell*> pending;
    for (const Cell& cell : plan.cells) {
      if (opts.resume) {
        if (auto cached = load_cached(cell)) {
          ledger.outcomes[cell.digest] = {CellStatus::Done, true, ""};
          continue;
        }
      }
      ledger.outcomes[cell.digest] = {CellStatus::Pending, false, ""};
      pending.push_back(&cell);
    }
    if (opts.stop_after_cells > 0 && pending.size() > opts.stop_after_cells) {
      pending.resize(opts.stop_after_cells);
    }
    if (pending.empty()) return ledger;

    size_t parallel = 0;
    for (const auto& p : cfg_.providers) parallel += static_cast<size_t>(p.max_parallel);
    size_t workers = std::min({pending.size(), parallel, size_t{16}});
    workers = std::max(workers, size_t{1});

    std::atomic<size_t> next{0};
    std::vector<CellOutcome> results(pending.size());
    std::atomic<bool> abort{false};
    std::mutex abort_mu;
    std::exception_ptr abort_error;

    auto worker = [&] {
      while (!abort.load()) {
        size_t i = next.fetch_add(1);
        if (i >= pending.size()) return;
        const Cell& cell = *pending[i];
        try {
          Transcript t = execute_cell(cell);
          persist(cell, t);
          results[i] = {CellStatus::Done, false, ""};
        } catch (const Error& e) {
          if (is_fatal(e)) {
            std::lock_guard lock(abort_mu);
            if (!abort_error) abort_error = std::current_exception();
            abort.store(true);
            return;
          }
          results[i] = {CellStatus::Failed, false, e.what()};
        } catch (const std::exception& e) {
          results[i] = {CellStatus::Failed, false, e.what()};
        }
      }
    };

    std::vector<std::thread> threads;
    for (size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (abort_error) std::rethrow_exception(abort_error);

    for (size_t i = 0; i < pending.size(); ++i) {
      if (results[i].status != CellStatus::Pending) {
        ledger.outcomes[pending[i]->digest] = results[i];
      }
    }
    return ledger;
  }

  // Runs the full pipeline for one cell and returns its transcript. Public so
  // tests can drive single cells directly.
  Transcript execute_cell(const Cell& cell) {
    ProviderGateway& gw = *gateways_.at(cell.provider_id);
    Transcript t;
    t.item_id = cell.item.id;
    t.strategy = cell.strategy;
    t.condition = cell.condition;
    t.provider_id = cell.provider_id;
    t.created_at = utc_timestamp_now();
    t.harness_version = kHarnessVersion;

    std::optional<std::string> caption;
    if (cell.condition == GroundingCondition::SocraticCaption) {
      CaptionEntry entry = caption_for(cell.item);
      caption = entry.caption_text;
      t.calls.push_back(entry.call);  // replay: one fetch serves every strategy
    }

    const auto& stages = spec_for(cell.strategy).stages;
    bool multi_turn = cfg_.multi_turn_stages && !stages.empty();

    AssembledPrompt prompt = registry_.assemble(cell.strategy, cell.condition, cell.item, caption);

    if (spec_for(cell.strategy).two_call) {
      CompletionResult first = gw.complete(prompt);
      t.calls.push_back(make_call(prompt, first));
      if (trim(first.text).empty()) {
        throw Error(ErrorCode::EmptySceneGraph,
                    "scene-graph call returned empty text for item " + cell.item.id);
      }
      AssembledPrompt second = registry_.assemble_ccot_second_call(cell.item, first.text);
      CompletionResult result = gw.complete(second);
      t.calls.push_back(make_call(second, result));
    } else if (multi_turn) {
      // Per-stage conversation: the full staged body opens the exchange, each
      // stage is elicited in its own turn, and a closing turn asks for the
      // final answer.
      prompt.messages.back().text += "\nRespond with Step 1 only.";
      for (size_t turn = 0; turn <= stages.size(); ++turn) {
        if (turn > 0) {
          std::string ask =
              turn < stages.size()
                  ? "Now respond with Step " + std::to_string(turn + 1) + " only."
                  : (cell.item.kind == TaskKind::SafetyInstruction
                         ? std::string("Now give your final response to the instruction.")
                         : std::string("Now give your final answer. ") + kLetterDirective);
          prompt.messages.push_back({Role::User, std::move(ask)});
        }
        CompletionResult result = gw.complete(prompt);
        t.calls.push_back(make_call(prompt, result));
        prompt.messages.push_back({Role::Assistant, result.text});
      }
    } else {
      CompletionResult result = gw.complete(prompt);
      t.calls.push_back(make_call(prompt, result));
    }
    return t;
  }

  // Judges a transcript's final response for its item.
  Judgment judge(const Cell& cell, const Transcript& t) {
    const std::string& final_text = t.calls.empty() ? std::string() : t.calls.back().response_text;
    return judge_item(cell.item, final_text, policy_, judge_gateway(),
                      cfg_.judge.rubric.empty() ? kDefaultJudgeRubric : cfg_.judge.rubric);
  }

 private:
  static TranscriptCall make_call(const AssembledPrompt& prompt, const CompletionResult& result) {
    TranscriptCall call;
    call.request_digest = request_digest(prompt);
    call.response_text = result.text;
    call.latency_ms = result.latency_ms;
    call.usage = result.usage;
    call.truncated = result.truncated;
    return call;
  }

  static bool is_fatal(const Error& e) {
    if (e.code() == ErrorCode::ConfigError) return true;
    if (const auto* pe = dynamic_cast<const ProviderError*>(&e)) {
      return pe->status() == 401 || pe->status() == 403;
    }
    return false;
  }

  void persist(const Cell& cell, const Transcript& t) {
    json doc;
    doc["cell_digest"] = cell.digest;
    doc["dataset"] = cell.dataset;
    doc["transcript"] = t;
    write_file_atomic(transcript_path(cell), doc.dump(2) + "\n");
  }

  // One caption per (image bytes, caption template), fetched at most once per
  // process and persisted for reuse across runs. Concurrent requests for the
  // same key share a single in-flight fetch.
  CaptionEntry caption_for(const TaskItem& item) {
    if (!item.image_path || item.image_path->empty()) {
      throw Error(ErrorCode::MissingImage, "caption needed but item has no image: " + item.id);
    }
    std::string image_digest = sha256_hex(read_file(*item.image_path));
    std::string key = image_digest + "-" + registry_.caption_template_hash().substr(0, 16);
    std::filesystem::path path = cfg_.cache_dir / "captions" / (key + ".json");

    std::shared_future<CaptionEntry> fut;
    std::shared_ptr<std::promise<CaptionEntry>> promise;
    {
      std::lock_guard lock(captions_mu_);
      auto it = captions_.find(key);
      if (it != captions_.end()) {
        fut = it->second;
      } else if (auto cached = load_caption(path)) {
        std::promise<CaptionEntry> ready;
        ready.set_value(*cached);
        fut = ready.get_future().share();
        captions_[key] = fut;
      } else {
        promise = std::make_shared<std::promise<CaptionEntry>>();
        fut = promise->get_future().share();
        captions_[key] = fut;
      }
    }

    if (promise) {
      try {
        AssembledPrompt request = registry_.assemble_caption_request(item);
        CompletionResult result = gateways_.at(caption_provider_)->complete(request);
        CaptionEntry entry{result.text, make_call(request, result)};
        json doc;
        doc["image_sha256"] = image_digest;
        doc["caption_template_hash"] = registry_.caption_template_hash();
        doc["caption_text"] = entry.caption_text;
        doc["call"] = entry.call;
        write_file_atomic(path, doc.dump(2) + "\n");
        promise->set_value(entry);
      } catch (...) {
        promise->set_exception(std::current_exception());
        std::lock_guard lock(captions_mu_);
        captions_.erase(key);  // allow a later retry
        throw;
      }
    }
    return fut.get();
  }

  static std::optional<CaptionEntry> load_caption(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      json doc = json::parse(read_file(path));
      CaptionEntry entry;
      entry.caption_text = doc.at("caption_text").get<std::string>();
      entry.call = doc.at("call").get<TranscriptCall>();
      return entry;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  ExperimentConfig cfg_;
  PromptRegistry registry_;
  ExtractionPolicy policy_;
  std::map<std::string, std::shared_ptr<ProviderGateway>> gateways_;
  std::string caption_provider_;
  std::mutex captions_mu_;
  std::map<std::string, std::shared_future<CaptionEntry>> captions_;
};

}  // namespace cocot
