#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/metrics.hpp"
#include "cocot/orchestrator.hpp"
#include "cocot/version.hpp"

namespace cocot {

using ojson = nlohmann::ordered_json;

inline std::string render_csv(const ojson& report);
inline std::string render_markdown(const ojson& report);

// ---------------------------------------------------------------------------
// Result collection
// ---------------------------------------------------------------------------

struct CellResult {
  const Cell* cell = nullptr;
  Transcript transcript;
  Judgment judgment;
};

struct CollectedResults {
  std::vector<CellResult> results;  // plan order, cells with transcripts only
  size_t missing_cells = 0;
};

inline CollectedResults collect_results(const Plan& plan, Runner& runner) {
  CollectedResults out;
  for (const Cell& cell : plan.cells) {
    auto cached = runner.load_cached(cell);
    if (!cached) {
      ++out.missing_cells;
      continue;
    }
    CellResult r;
    r.cell = &cell;
    r.judgment = runner.judge(cell, *cached);
    r.transcript = std::move(*cached);
    out.results.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation scaffolding
// ---------------------------------------------------------------------------

namespace detail {

struct GroupStats {
  std::vector<ScoredItem> scored;
  size_t planned = 0;
  TokenUsage usage;
};

inline std::string group_key(const std::string& dataset, StrategyId strategy,
                             GroundingCondition condition, const std::string& provider) {
  return dataset + '\x1f' + to_string(strategy) + '\x1f' + to_string(condition) + '\x1f' +
         provider;
}

inline ojson usage_json(const TokenUsage& u) {
  return ojson{{"prompt_tokens", u.prompt_tokens},
               {"completion_tokens", u.completion_tokens},
               {"total_tokens", u.total_tokens}};
}

inline ojson choice_block(const std::vector<ScoredItem>& scored) {
  Counts c = fold_counts(scored);
  Rate acc = accuracy(scored);
  ojson block = ojson::object();
  block["n"] = c.n;
  block["n_correct"] = c.correct;
  block["n_unparsed"] = c.unparsed;
  block["accuracy"] = acc.display();
  block["accuracy_exact"] = ojson::array({acc.num, acc.den});
  return block;
}

// Splits a safety subset's items into the harmful-input population (unsafe
// instructions; the ASR base) and the safe-instruction population (the FRR
// base, defined only where images are unsafe).
inline ojson safety_subset_block(const std::vector<ScoredItem>& scored) {
  std::vector<ScoredItem> harmful;
  std::vector<ScoredItem> safe_instr;
  for (const auto& s : scored) {
    const SafetyLabel& label = std::get<SafetyLabel>(s.item.gold);
    (label.instruction_safe ? safe_instr : harmful).push_back(s);
  }

  ojson block = ojson::object();
  block["n"] = scored.size();
  if (!harmful.empty()) {
    Counts c = fold_counts(harmful);
    if (c.compliance + c.refusal + c.unparsed != c.n) {
      throw Error(ErrorCode::MixedTaskKinds,
                  "safety verdict tallies do not partition the harmful population");
    }
    Rate asr = attack_success_rate(harmful);
    ojson h = ojson::object();
    h["n"] = c.n;
    h["n_attack_success"] = c.compliance;
    h["n_refusal"] = c.refusal;
    h["n_unparsed"] = c.unparsed;
    h["asr"] = asr.display();
    h["asr_exact"] = ojson::array({asr.num, asr.den});
    block["harmful"] = std::move(h);
  }
  bool frr_defined = !safe_instr.empty() &&
                     !std::get<SafetyLabel>(safe_instr.front().item.gold).image_safe;
  if (frr_defined) {
    Counts c = fold_counts(safe_instr);
    Rate frr = false_rejection_rate(safe_instr);
    ojson f = ojson::object();
    f["n"] = c.n;
    f["n_false_reject"] = c.refusal;
    f["n_compliance"] = c.compliance;
    f["n_unparsed"] = c.unparsed;
    f["frr"] = frr.display();
    f["frr_exact"] = ojson::array({frr.num, frr.den});
    block["safe_instructions"] = std::move(f);
  }
  return block;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Report building
// ---------------------------------------------------------------------------

struct ReportBundle {
  std::string run_id;
  ojson report;
  std::string csv;
  std::string markdown;
};

// Builds the full report document. Deterministic modulo the header's run_id
// and created_at fields: iteration follows plan/config order and sorted maps,
// and every rate comes from integer tallies.
inline ReportBundle build_report(const Plan& plan, Runner& runner,
                                 const CollectedResults& collected) {
  const ExperimentConfig& cfg = runner.config();
  std::string run_id = cfg.run_id.empty()
                           ? utc_run_stamp_now() + "-" + cfg.config_digest.substr(0, 8)
                           : cfg.run_id;

  // group scored items by (dataset, strategy, condition, provider)
  std::map<std::string, detail::GroupStats> groups;
  for (const Cell& cell : plan.cells) {
    groups[detail::group_key(cell.dataset, cell.strategy, cell.condition, cell.provider_id)]
        .planned++;
  }
  TokenUsage total_usage;
  for (const CellResult& r : collected.results) {
    auto& g = groups[detail::group_key(r.cell->dataset, r.cell->strategy, r.cell->condition,
                                       r.cell->provider_id)];
    g.scored.push_back({r.cell->item, r.judgment});
    for (const TranscriptCall& call : r.transcript.calls) {
      if (call.usage) {
        g.usage += *call.usage;
        total_usage += *call.usage;
      }
    }
  }

  ojson report = ojson::object();
  ojson header = ojson::object();
  header["harness_version"] = kHarnessVersion;
  header["run_id"] = run_id;
  header["created_at"] = utc_timestamp_now();
  header["config_digest"] = cfg.config_digest;
  header["template_set_hash"] = runner.registry().combined_hash();
  header["policy_hash"] = runner.policy().hash();
  header["judge_mode"] = to_string(cfg.judge.mode);
  ojson providers = ojson::array();
  for (const auto& p : cfg.providers) {
    providers.push_back({{"provider_id", p.provider_id},
                         {"dialect", to_string(p.dialect)},
                         {"model_name", p.model_name}});
  }
  header["providers"] = std::move(providers);
  ojson strategies = ojson::array();
  for (StrategyId s : cfg.strategies) strategies.push_back(to_string(s));
  header["strategies"] = std::move(strategies);
  header["planned_cells"] = plan.cells.size();
  header["cells_with_transcripts"] = plan.cells.size() - collected.missing_cells;
  header["missing_cells"] = collected.missing_cells;
  report["header"] = std::move(header);

  ojson datasets = ojson::array();
  for (size_t ds_index = 0; ds_index < plan.dataset_order.size(); ++ds_index) {
    const std::string& name = plan.dataset_order[ds_index];
    const DatasetManifest& manifest = plan.manifests.at(name);
    const std::vector<TaskItem>& items = plan.items.at(name);
    const DatasetRef& ref = cfg.datasets.at(ds_index);  // plan preserves config order

    ojson ds = ojson::object();
    ds["name"] = name;
    ds["kind"] = to_string(manifest.kind);
    ds["n_items"] = items.size();

    // slice tallies over loaded items; partitioning tags must sum to the total
    ojson slice_counts_json = ojson::object();
    std::vector<std::string> tags = manifest.slice_keys;
    if (manifest.kind == TaskKind::SafetyInstruction) tags.push_back("safety_subset");
    for (const std::string& tag : tags) {
      ojson per_value = ojson::object();
      size_t sum = 0;
      for (const auto& [value, count] : slice_counts(items, tag)) {
        per_value[value] = count;
        sum += count;
      }
      if (sum != items.size()) {
        throw Error(ErrorCode::CountMismatch,
                    "slice tag " + tag + " does not partition dataset " + name);
      }
      slice_counts_json[tag] = std::move(per_value);
    }
    ds["slice_counts"] = std::move(slice_counts_json);

    // category of each sub-topic, for grouped table rendering
    bool has_cat = false, has_sub = false;
    for (const std::string& k : manifest.slice_keys) {
      has_cat |= k == "category";
      has_sub |= k == "sub_topic";
    }
    if (has_cat && has_sub) {
      std::map<std::string, std::string> sub_cat;
      for (const TaskItem& item : items) {
        auto s = item.slices.find("sub_topic");
        auto c = item.slices.find("category");
        if (s != item.slices.end() && c != item.slices.end()) sub_cat[s->second] = c->second;
      }
      ojson m = ojson::object();
      for (const auto& [sub, cat] : sub_cat) m[sub] = cat;
      ds["sub_topic_category"] = std::move(m);
    }

    ojson results = ojson::array();
    for (StrategyId strategy : cfg.strategies) {
      for (GroundingCondition condition :
           {GroundingCondition::SocraticCaption, GroundingCondition::RawImage}) {
        bool listed = false;
        for (GroundingCondition c : ref.conditions) listed |= c == condition;
        if (!listed) continue;
        for (const ProviderConfig& provider : cfg.providers) {
          auto it = groups.find(detail::group_key(name, strategy, condition, provider.provider_id));
          if (it == groups.end()) continue;
          const detail::GroupStats& g = it->second;

          ojson res = ojson::object();
          res["strategy"] = to_string(strategy);
          res["condition"] = to_string(condition);
          res["provider"] = provider.provider_id;
          res["n"] = g.scored.size();
          res["missing_cells"] = g.planned - g.scored.size();

          if (manifest.kind == TaskKind::SafetyInstruction) {
            ojson subsets = ojson::object();
            size_t subset_sum = 0;
            for (const auto& [value, subset] : group_by_tag(g.scored, "safety_subset")) {
              subsets[value] = detail::safety_subset_block(subset);
              subset_sum += subset.size();
            }
            if (subset_sum != g.scored.size()) {
              throw Error(ErrorCode::CountMismatch,
                          "safety_subset does not partition the scored items");
            }
            res["subsets"] = std::move(subsets);
          } else if (!g.scored.empty()) {
            ojson overall = detail::choice_block(g.scored);
            for (auto it2 = overall.begin(); it2 != overall.end(); ++it2) {
              res[it2.key()] = it2.value();
            }
            ojson slices = ojson::object();
            for (const std::string& tag : manifest.slice_keys) {
              ojson per_value = ojson::object();
              size_t sum = 0;
              for (const auto& [value, subset] : group_by_tag(g.scored, tag)) {
                per_value[value] = detail::choice_block(subset);
                sum += subset.size();
              }
              if (sum != g.scored.size()) {
                throw Error(ErrorCode::CountMismatch,
                            "slice tag " + tag + " does not partition the scored items");
              }
              slices[tag] = std::move(per_value);
            }
            res["slices"] = std::move(slices);
          }
          res["token_usage"] = detail::usage_json(g.usage);
          results.push_back(std::move(res));
        }
      }
    }
    ds["results"] = std::move(results);
    datasets.push_back(std::move(ds));
  }
  report["datasets"] = std::move(datasets);
  report["totals"] = ojson{{"token_usage", detail::usage_json(total_usage)}};

  ReportBundle bundle;
  bundle.run_id = run_id;
  bundle.report = std::move(report);
  bundle.csv = render_csv(bundle.report);
  bundle.markdown = render_markdown(bundle.report);
  return bundle;
}

// ---------------------------------------------------------------------------
// CSV rendering (pure function of the JSON document)
// ---------------------------------------------------------------------------

inline std::string render_csv(const ojson& report) {
  std::string out =
      "dataset,kind,strategy,condition,provider,slice_tag,slice_value,"
      "n,n_correct,accuracy,n_unparsed,n_harmful,n_attack_success,asr,"
      "n_safe_instructions,n_false_reject,frr,missing_cells\n";

  auto row = [&](const std::vector<std::string>& fields) {
    std::string line;
    for (size_t i = 0; i < fields.size(); ++i) {
      if (i) line += ',';
      line += detail::csv_escape(fields[i]);
    }
    out += line + "\n";
  };
  auto str = [](const ojson& j) { return std::to_string(j.get<long>()); };

  for (const ojson& ds : report.at("datasets")) {
    std::string dataset = ds.at("name");
    std::string kind = ds.at("kind");
    for (const ojson& res : ds.at("results")) {
      std::string strategy = res.at("strategy");
      std::string condition = res.at("condition");
      std::string provider = res.at("provider");
      std::string missing = str(res.at("missing_cells"));

      if (res.contains("subsets")) {
        for (auto it = res.at("subsets").begin(); it != res.at("subsets").end(); ++it) {
          const ojson& sub = it.value();
          std::string n_h, n_as, asr, n_si, n_fr, frr;
          long unparsed = 0;
          if (sub.contains("harmful")) {
            n_h = str(sub.at("harmful").at("n"));
            n_as = str(sub.at("harmful").at("n_attack_success"));
            asr = sub.at("harmful").at("asr");
            unparsed += sub.at("harmful").at("n_unparsed").get<long>();
          }
          if (sub.contains("safe_instructions")) {
            n_si = str(sub.at("safe_instructions").at("n"));
            n_fr = str(sub.at("safe_instructions").at("n_false_reject"));
            frr = sub.at("safe_instructions").at("frr");
            unparsed += sub.at("safe_instructions").at("n_unparsed").get<long>();
          }
          row({dataset, kind, strategy, condition, provider, "safety_subset", it.key(),
               str(sub.at("n")), "", "", std::to_string(unparsed), n_h, n_as, asr, n_si, n_fr,
               frr, missing});
        }
      } else if (res.contains("accuracy")) {
        row({dataset, kind, strategy, condition, provider, "<all>", "<all>", str(res.at("n")),
             str(res.at("n_correct")), res.at("accuracy"), str(res.at("n_unparsed")), "", "", "",
             "", "", "", missing});
        if (res.contains("slices")) {
          for (auto tag_it = res.at("slices").begin(); tag_it != res.at("slices").end();
               ++tag_it) {
            for (auto val_it = tag_it.value().begin(); val_it != tag_it.value().end(); ++val_it) {
              const ojson& block = val_it.value();
              row({dataset, kind, strategy, condition, provider, tag_it.key(), val_it.key(),
                   str(block.at("n")), str(block.at("n_correct")), block.at("accuracy"),
                   str(block.at("n_unparsed")), "", "", "", "", "", "", ""});
            }
          }
        }
      } else {
        // group with no transcripts at all
        row({dataset, kind, strategy, condition, provider, "<all>", "<all>", str(res.at("n")),
             "", "", "", "", "", "", "", "", "", missing});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Markdown rendering (pure function of the JSON document)
// ---------------------------------------------------------------------------

inline std::string render_markdown(const ojson& report) {
  const ojson& header = report.at("header");
  std::string md = "# cocot report " + header.at("run_id").get<std::string>() + "\n\n";
  md += "- created: " + header.at("created_at").get<std::string>() + "\n";
  md += "- harness: " + header.at("harness_version").get<std::string>() + "\n";
  md += "- config: " + header.at("config_digest").get<std::string>().substr(0, 12) + "\n";
  md += "- templates: " + header.at("template_set_hash").get<std::string>().substr(0, 12) + "\n";
  md += "- policy: " + header.at("policy_hash").get<std::string>().substr(0, 12) + "\n";
  md += "- judge: " + header.at("judge_mode").get<std::string>() + "\n";
  for (const ojson& p : header.at("providers")) {
    md += "- provider: " + p.at("provider_id").get<std::string>() + " (" +
          p.at("dialect").get<std::string>() + ", model " +
          p.at("model_name").get<std::string>() + ")\n";
  }
  md += "\n";

  std::vector<std::string> strategies;
  for (const ojson& s : header.at("strategies")) strategies.push_back(s.get<std::string>());

  for (const ojson& ds : report.at("datasets")) {
    std::string kind = ds.at("kind");
    md += "## " + ds.at("name").get<std::string>() + " (" + kind + ")\n\n";

    // organize results into (condition, provider) panels of strategy columns
    std::vector<std::pair<std::string, std::string>> panels;
    std::map<std::string, std::map<std::string, const ojson*>> by_panel;
    for (const ojson& res : ds.at("results")) {
      std::string panel_key =
          res.at("condition").get<std::string>() + '\x1f' + res.at("provider").get<std::string>();
      if (!by_panel.count(panel_key)) {
        panels.emplace_back(res.at("condition"), res.at("provider"));
      }
      by_panel[panel_key][res.at("strategy").get<std::string>()] = &res;
    }

    for (const auto& [condition, provider] : panels) {
      const auto& cols = by_panel.at(condition + '\x1f' + provider);
      md += "### condition: " + condition + " - provider: " + provider + "\n\n";
      long missing = 0;
      for (const auto& [_, res] : cols) missing += res->at("missing_cells").get<long>();

      if (kind == "safety_instruction") {
        md += "| Metric |";
        for (const auto& s : strategies) md += " " + s + " |";
        md += "\n|---|";
        for (size_t i = 0; i < strategies.size(); ++i) md += "---|";
        md += "\n";

        auto metric_row = [&](const std::string& label, const std::string& subset,
                              const std::string& pop, const std::string& field) {
          bool any = false;
          for (const auto& s : strategies) {
            auto it = cols.find(s);
            if (it != cols.end() && it->second->contains("subsets") &&
                it->second->at("subsets").contains(subset) &&
                it->second->at("subsets").at(subset).contains(pop)) {
              any = true;
            }
          }
          if (!any) return;
          md += "| " + label + " |";
          for (const auto& s : strategies) {
            std::string value;
            auto it = cols.find(s);
            if (it != cols.end() && it->second->contains("subsets") &&
                it->second->at("subsets").contains(subset) &&
                it->second->at("subsets").at(subset).contains(pop)) {
              value = it->second->at("subsets").at(subset).at(pop).at(field).get<std::string>();
            }
            md += " " + value + " |";
          }
          md += "\n";
        };
        for (const std::string& subset :
             {std::string("Safe_Unsafe"), std::string("Unsafe"), std::string("Safe_Safe")}) {
          metric_row("ASR % (" + subset + ")", subset, "harmful", "asr");
        }
        metric_row("FRR % (Unsafe, safe instructions)", "Unsafe", "safe_instructions", "frr");
        md += "\n";
      } else {
        bool grouped = ds.contains("sub_topic_category");
        bool has_source = ds.at("slice_counts").contains("source");
        std::string tag = grouped ? "sub_topic" : (has_source ? "source" : "");

        // row list from dataset-level slice counts (complete even when cells
        // are missing); grouped layout sorts by (category, sub_topic)
        std::vector<std::pair<std::string, std::string>> rows;  // (category, value)
        if (grouped) {
          for (auto it = ds.at("sub_topic_category").begin();
               it != ds.at("sub_topic_category").end(); ++it) {
            rows.emplace_back(it.value().get<std::string>(), it.key());
          }
          std::sort(rows.begin(), rows.end());
        } else if (!tag.empty()) {
          for (auto it = ds.at("slice_counts").at(tag).begin();
               it != ds.at("slice_counts").at(tag).end(); ++it) {
            rows.emplace_back("", it.key());
          }
        }

        if (grouped) {
          md += "| Category | Sub-Topic | n |";
        } else {
          md += std::string("| ") + (tag.empty() ? "Slice" : "Source") + " | n |";
        }
        for (const auto& s : strategies) md += " " + s + " |";
        md += grouped ? "\n|---|---|---|" : "\n|---|---|";
        for (size_t i = 0; i < strategies.size(); ++i) md += "---|";
        md += "\n";

        auto accuracy_cells = [&](const std::string& slice_tag, const std::string& slice_value,
                                  std::string& n_text) {
          std::string cells;
          for (const auto& s : strategies) {
            std::string value;
            auto it = cols.find(s);
            if (it != cols.end()) {
              const ojson* block = nullptr;
              if (slice_tag.empty()) {
                if (it->second->contains("accuracy")) block = &*it->second;
              } else if (it->second->contains("slices") &&
                         it->second->at("slices").contains(slice_tag) &&
                         it->second->at("slices").at(slice_tag).contains(slice_value)) {
                block = &it->second->at("slices").at(slice_tag).at(slice_value);
              }
              if (block) {
                value = block->at("accuracy").get<std::string>();
                if (n_text.empty()) n_text = std::to_string(block->at("n").get<long>());
              }
            }
            cells += " " + value + " |";
          }
          return cells;
        };

        std::string prev_category;
        for (const auto& [category, value] : rows) {
          std::string n_text;
          std::string cells = accuracy_cells(tag, value, n_text);
          if (grouped) {
            std::string cat_cell = category == prev_category ? "" : category;
            prev_category = category;
            md += "| " + cat_cell + " | " + value + " | " + n_text + " |" + cells + "\n";
          } else {
            md += "| " + value + " | " + n_text + " |" + cells + "\n";
          }
        }
        std::string n_text;
        std::string cells = accuracy_cells("", "", n_text);
        if (grouped) {
          md += "| **(all)** | | " + n_text + " |" + cells + "\n";
        } else {
          md += "| **(all)** | " + n_text + " |" + cells + "\n";
        }
        md += "\n";
      }
      if (missing > 0) {
        md += "_" + std::to_string(missing) + " planned cell(s) missing from cache._\n\n";
      }
    }
  }

  long total_missing = header.at("missing_cells").get<long>();
  if (total_missing > 0) {
    md += "---\n\n_" + std::to_string(total_missing) +
          " planned cell(s) have no transcript; their slices show blanks._\n";
  }
  return md;
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

// Writes report.{json,csv,md} under a fresh run directory and repoints the
// `latest` link. Existing run directories are never overwritten; a numeric
// suffix is appended instead.
inline std::filesystem::path write_reports(const ReportBundle& bundle,
                                           const std::filesystem::path& output_dir) {
  std::filesystem::path run_dir = output_dir / bundle.run_id;
  for (int i = 2; std::filesystem::exists(run_dir); ++i) {
    run_dir = output_dir / (bundle.run_id + "-" + std::to_string(i));
  }
  write_file_atomic(run_dir / "report.json", bundle.report.dump(2) + "\n");
  write_file_atomic(run_dir / "report.csv", bundle.csv);
  write_file_atomic(run_dir / "report.md", bundle.markdown);

  std::error_code ec;
  std::filesystem::path latest = output_dir / "latest";
  std::filesystem::remove(latest, ec);
  std::filesystem::create_directory_symlink(run_dir.filename(), latest, ec);
  return run_dir;
}

}  // namespace cocot
