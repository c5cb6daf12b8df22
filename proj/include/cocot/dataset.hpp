#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/domain.hpp"
#include "cocot/errors.hpp"

namespace cocot {

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct DatasetManifest {
  std::string name;
  TaskKind kind = TaskKind::MultiChoiceReasoning;
  std::filesystem::path items_file;   // canonical JSONL
  std::filesystem::path images_root;  // item image paths resolve under here
  std::optional<size_t> expected_count;
  std::vector<std::string> slice_keys;  // tags every item must carry
};

// Reads a manifest JSON file; relative paths resolve against the manifest's
// own directory so a dataset directory is relocatable as a unit.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::FileMissing, "manifest not found: " + path.string());
  }
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.kind = task_kind_from_string(doc.at("kind").get<std::string>());
    std::filesystem::path base = path.parent_path();
    m.items_file = base / doc.at("items_file").get<std::string>();
    m.images_root = base / doc.at("images_root").get<std::string>();
    if (doc.contains("expected_count") && !doc.at("expected_count").is_null()) {
      m.expected_count = doc.at("expected_count").get<size_t>();
    }
    if (doc.contains("slice_keys")) {
      m.slice_keys = doc.at("slice_keys").get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

struct LoadError {
  size_t line = 0;  // 1-based line number in items_file
  std::string item_id;
  std::string reason;
};

struct LoadResult {
  std::vector<TaskItem> items;  // file order, validated
  std::vector<LoadError> errors;
};

// Loads the manifest's items file. Malformed or invalid lines become entries
// in `errors` and never abort the load; only a missing file or a violated
// expected_count is fatal. Image paths in returned items are resolved against
// images_root; image bytes themselves are only existence-checked here and
// read lazily at request time.
inline LoadResult load(const DatasetManifest& manifest) {
  if (!std::filesystem::exists(manifest.items_file)) {
    throw Error(ErrorCode::FileMissing, "items file not found: " + manifest.items_file.string());
  }

  LoadResult result;
  std::ifstream in(manifest.items_file);
  std::string line;
  size_t line_no = 0;
  std::set<std::string> seen_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;

    TaskItem item;
    try {
      item = json::parse(line).get<TaskItem>();
    } catch (const std::exception& e) {
      result.errors.push_back({line_no, "", e.what()});
      continue;
    }

    bool bad = false;
    auto report = [&](std::string reason) {
      result.errors.push_back({line_no, item.id, std::move(reason)});
      bad = true;
    };

    for (const std::string& v : validate_item(item).violations) report(v);
    if (item.kind != manifest.kind) {
      report(std::string("item kind ") + to_string(item.kind) + " does not match manifest kind " +
             to_string(manifest.kind));
    }
    if (!item.id.empty() && !seen_ids.insert(item.id).second) {
      report("duplicate item id");
    }
    if (item.image_path && !item.image_path->empty()) {
      std::filesystem::path resolved = manifest.images_root / *item.image_path;
      if (!std::filesystem::exists(resolved)) {
        report("image file not found: " + resolved.string());
      } else {
        item.image_path = resolved.string();
      }
    }
    for (const std::string& key : manifest.slice_keys) {
      // safety_subset is derived below, so its absence in the file is fine
      if (key != "safety_subset" && !item.slices.count(key)) {
        report("missing slice tag \"" + key + "\"");
      }
    }

    if (bad) continue;

    // Subset tags are derived from the gold label, never trusted from the file.
    if (const SafetyLabel* label = std::get_if<SafetyLabel>(&item.gold)) {
      item.slices["safety_subset"] = safety_subset(*label);
    }
    result.items.push_back(std::move(item));
  }

  if (manifest.expected_count && result.items.size() != *manifest.expected_count) {
    throw Error(ErrorCode::CountMismatch,
                manifest.items_file.string() + ": expected " +
                    std::to_string(*manifest.expected_count) + " items, loaded " +
                    std::to_string(result.items.size()) + " (" +
                    std::to_string(result.errors.size()) + " line errors)");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Slicing and sampling
// ---------------------------------------------------------------------------

inline std::map<std::string, size_t> slice_counts(const std::vector<TaskItem>& items,
                                                  const std::string& tag) {
  std::map<std::string, size_t> counts;
  for (const auto& item : items) {
    auto it = item.slices.find(tag);
    counts[it == item.slices.end() ? "<untagged>" : it->second]++;
  }
  return counts;
}

// Deterministic sample of n items. A hand-rolled Fisher-Yates shuffle (not
// std::sample/std::shuffle, whose draws are implementation-defined) keeps the
// subset identical across standard libraries for a given seed. Selection
// preserves original dataset order.
inline std::vector<TaskItem> sample_items(const std::vector<TaskItem>& items, size_t n,
                                          uint64_t seed) {
  if (n >= items.size()) return items;
  std::vector<size_t> index(items.size());
  for (size_t i = 0; i < index.size(); ++i) index[i] = i;
  std::mt19937_64 rng(seed);
  for (size_t i = index.size() - 1; i > 0; --i) {
    size_t j = static_cast<size_t>(rng() % (i + 1));
    std::swap(index[i], index[j]);
  }
  index.resize(n);
  std::sort(index.begin(), index.end());
  std::vector<TaskItem> out;
  out.reserve(n);
  for (size_t i : index) out.push_back(items[i]);
  return out;
}

}  // namespace cocot
