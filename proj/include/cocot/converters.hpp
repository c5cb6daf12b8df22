#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cocot/dataset.hpp"
#include "cocot/domain.hpp"
#include "cocot/errors.hpp"

// Converters from each benchmark's native layout to the canonical JSONL
// schema (id, kind, image, text, choices[], gold, slices{}). Native formats
// drift upstream, so each converter documents the exact input shape it
// accepts; anything else is a per-line error.

namespace cocot {

namespace detail {

template <typename Fn>
size_t convert_lines(const std::filesystem::path& input, const std::filesystem::path& output,
                     Fn line_to_items) {
  if (!std::filesystem::exists(input)) {
    throw Error(ErrorCode::FileMissing, "input not found: " + input.string());
  }
  std::ifstream in(input);
  std::string line;
  size_t line_no = 0;
  size_t count = 0;
  std::string out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError,
                  input.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::vector<TaskItem> items;
    try {
      items = line_to_items(doc);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ConfigError,
                  input.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    for (TaskItem& item : items) {
      ValidationResult check = validate_item(item);
      if (!check.ok()) {
        throw Error(ErrorCode::ConfigError, input.string() + ":" + std::to_string(line_no) +
                                                ": " + check.violations.front());
      }
      out += json(item).dump() + "\n";
      ++count;
    }
  }
  write_file_atomic(output, out);
  return count;
}

}  // namespace detail

// Input: one JSON object per line with fields
//   uid:       string item id
//   image:     image path relative to the release's image root
//   utterance: the ambiguous utterance
//   options:   array of four interpretation texts, or an object keyed a-d
//   answer:    the gold option letter
//   source:    scene origin tag (e.g. staged scenes vs egocentric frames)
inline size_t convert_vague(const std::filesystem::path& input,
                            const std::filesystem::path& output) {
  return detail::convert_lines(input, output, [](const json& doc) {
    TaskItem item;
    item.id = doc.at("uid").get<std::string>();
    item.kind = TaskKind::IntentDisambiguation;
    item.image_path = doc.at("image").get<std::string>();
    item.text = doc.at("utterance").get<std::string>();
    const json& options = doc.at("options");
    char letter = 'A';
    if (options.is_array()) {
      for (const json& o : options) item.choices.push_back({letter++, o.get<std::string>()});
    } else {
      for (auto it = options.begin(); it != options.end(); ++it) {
        item.choices.push_back({letter++, it.value().get<std::string>()});
      }
    }
    std::string answer = doc.at("answer").get<std::string>();
    item.gold = static_cast<char>(std::toupper(static_cast<unsigned char>(answer.at(0))));
    item.slices["source"] = doc.at("source").get<std::string>();
    return std::vector<TaskItem>{item};
  });
}

// Input: one JSON object per line with fields
//   id:       string item id
//   image:    image path
//   question: the question text
//   choices:  array of option texts
//   answer:   gold letter
//   domain:   top-level category (science / commonsense / mathematics)
//   topic:    sub-topic within the domain
inline size_t convert_m3cot(const std::filesystem::path& input,
                            const std::filesystem::path& output) {
  return detail::convert_lines(input, output, [](const json& doc) {
    TaskItem item;
    item.id = doc.at("id").get<std::string>();
    item.kind = TaskKind::MultiChoiceReasoning;
    item.image_path = doc.at("image").get<std::string>();
    item.text = doc.at("question").get<std::string>();
    char letter = 'A';
    for (const json& c : doc.at("choices")) item.choices.push_back({letter++, c.get<std::string>()});
    std::string answer = doc.at("answer").get<std::string>();
    item.gold = static_cast<char>(std::toupper(static_cast<unsigned char>(answer.at(0))));
    item.slices["category"] = doc.at("domain").get<std::string>();
    item.slices["sub_topic"] = doc.at("topic").get<std::string>();
    return std::vector<TaskItem>{item};
  });
}

// Input: one JSON object per line, one line per image, with fields
//   id:               string image id
//   image:            image path
//   safe:             whether the image itself is safe
//   harmful_category: harm taxonomy tag (optional, kept as a slice)
//   instructions:     array of {text, safe} instruction pairings
// Every (image, instruction) pairing becomes one item, id "<id>-<index>".
// The Safe_Unsafe / Unsafe subset tags are derived at load time from the
// safety labels, never read from the input.
inline size_t convert_vlguard(const std::filesystem::path& input,
                              const std::filesystem::path& output) {
  return detail::convert_lines(input, output, [](const json& doc) {
    std::vector<TaskItem> items;
    bool image_safe = doc.at("safe").get<bool>();
    size_t index = 0;
    for (const json& instr : doc.at("instructions")) {
      TaskItem item;
      item.id = doc.at("id").get<std::string>() + "-" + std::to_string(index++);
      item.kind = TaskKind::SafetyInstruction;
      item.image_path = doc.at("image").get<std::string>();
      item.text = instr.at("text").get<std::string>();
      SafetyLabel label;
      label.instruction_safe = instr.at("safe").get<bool>();
      label.image_safe = image_safe;
      item.gold = label;
      if (doc.contains("harmful_category")) {
        item.slices["harm_category"] = doc.at("harmful_category").get<std::string>();
      }
      items.push_back(std::move(item));
    }
    return items;
  });
}

}  // namespace cocot
