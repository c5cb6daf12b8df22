#pragma once

#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocot/digest.hpp"
#include "cocot/errors.hpp"
#include "cocot/util.hpp"

namespace cocot {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Closed enumerations
// ---------------------------------------------------------------------------

enum class TaskKind {
  IntentDisambiguation,
  MultiChoiceReasoning,
  SafetyInstruction,
};

enum class StrategyId {
  Direct,
  CoT,
  CCoT,
  MoralCoT,
  CoCoTFull,
  CoCoTPerceptionOnly,
  CoCoTNoPerception,
  CoCoTNoSituation,
  CoCoTNormOnly,
};

inline constexpr StrategyId kAllStrategies[] = {
    StrategyId::Direct,
    StrategyId::CoT,
    StrategyId::CCoT,
    StrategyId::MoralCoT,
    StrategyId::CoCoTFull,
    StrategyId::CoCoTPerceptionOnly,
    StrategyId::CoCoTNoPerception,
    StrategyId::CoCoTNoSituation,
    StrategyId::CoCoTNormOnly,
};

enum class GroundingCondition {
  SocraticCaption,  // reasoning over a model-generated caption; intent task only
  RawImage,
};

inline const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::IntentDisambiguation: return "intent_disambiguation";
    case TaskKind::MultiChoiceReasoning: return "multi_choice_reasoning";
    case TaskKind::SafetyInstruction: return "safety_instruction";
  }
  return "?";
}

inline const char* to_string(StrategyId id) {
  switch (id) {
    case StrategyId::Direct: return "direct";
    case StrategyId::CoT: return "cot";
    case StrategyId::CCoT: return "ccot";
    case StrategyId::MoralCoT: return "moral_cot";
    case StrategyId::CoCoTFull: return "cocot_full";
    case StrategyId::CoCoTPerceptionOnly: return "cocot_perception_only";
    case StrategyId::CoCoTNoPerception: return "cocot_no_perception";
    case StrategyId::CoCoTNoSituation: return "cocot_no_situation";
    case StrategyId::CoCoTNormOnly: return "cocot_norm_only";
  }
  return "?";
}

inline const char* to_string(GroundingCondition c) {
  switch (c) {
    case GroundingCondition::SocraticCaption: return "socratic_caption";
    case GroundingCondition::RawImage: return "raw_image";
  }
  return "?";
}

// Unknown names are configuration errors, never silently mapped.
inline TaskKind task_kind_from_string(std::string_view s) {
  if (s == "intent_disambiguation") return TaskKind::IntentDisambiguation;
  if (s == "multi_choice_reasoning") return TaskKind::MultiChoiceReasoning;
  if (s == "safety_instruction") return TaskKind::SafetyInstruction;
  throw Error(ErrorCode::ConfigError, "unknown task kind: " + std::string(s));
}

inline StrategyId strategy_from_string(std::string_view s) {
  for (StrategyId id : kAllStrategies) {
    if (s == to_string(id)) return id;
  }
  throw Error(ErrorCode::ConfigError, "unknown strategy: " + std::string(s));
}

inline GroundingCondition condition_from_string(std::string_view s) {
  if (s == "socratic_caption") return GroundingCondition::SocraticCaption;
  if (s == "raw_image") return GroundingCondition::RawImage;
  throw Error(ErrorCode::ConfigError, "unknown grounding condition: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Task items
// ---------------------------------------------------------------------------

// Gold label for safety items. The subset tag is derived from this pair, never
// read from the input file: an unsafe image puts the item in "Unsafe"; a safe
// image with an unsafe instruction puts it in "Safe_Unsafe".
struct SafetyLabel {
  bool instruction_safe = true;
  bool image_safe = true;

  bool operator==(const SafetyLabel&) const = default;
};

inline std::string safety_subset(const SafetyLabel& label) {
  if (!label.image_safe) return "Unsafe";
  return label.instruction_safe ? "Safe_Safe" : "Safe_Unsafe";
}

struct Choice {
  char letter = 'A';  // uppercase ASCII, consecutive from 'A'
  std::string text;

  bool operator==(const Choice&) const = default;
};

using Gold = std::variant<char, SafetyLabel>;

struct TaskItem {
  std::string id;
  TaskKind kind = TaskKind::MultiChoiceReasoning;
  std::optional<std::string> image_path;  // relative to the dataset images root
  std::string text;                       // utterance / question / instruction
  std::vector<Choice> choices;            // empty or 2..26 entries
  Gold gold = 'A';
  std::map<std::string, std::string> slices;

  bool operator==(const TaskItem&) const = default;

  std::vector<char> choice_letters() const {
    std::vector<char> letters;
    letters.reserve(choices.size());
    for (const auto& c : choices) letters.push_back(c.letter);
    return letters;
  }
};

struct ValidationResult {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

inline ValidationResult validate_item(const TaskItem& item) {
  ValidationResult result;
  auto fail = [&](std::string msg) { result.violations.push_back(std::move(msg)); };

  if (item.id.empty()) fail("item id is empty");

  if (!item.choices.empty()) {
    if (item.choices.size() < 2 || item.choices.size() > 26) {
      fail("choice count must be 0 or between 2 and 26");
    }
    for (size_t i = 0; i < item.choices.size(); ++i) {
      char expected = static_cast<char>('A' + i);
      if (item.choices[i].letter != expected) {
        fail("choice letters must be consecutive from 'A'");
        break;
      }
    }
  }

  if (const char* letter = std::get_if<char>(&item.gold)) {
    bool found = false;
    for (const auto& c : item.choices) {
      if (c.letter == *letter) found = true;
    }
    if (!found) fail("gold not among choice letters");
  }

  if (item.kind == TaskKind::SafetyInstruction) {
    if (!item.choices.empty()) fail("safety items carry no choices");
    if (!std::holds_alternative<SafetyLabel>(item.gold)) {
      fail("safety items carry a safety-label gold");
    }
  } else {
    if (!item.image_path.has_value() || item.image_path->empty()) {
      fail("non-safety items require an image");
    }
    if (!std::holds_alternative<char>(item.gold)) {
      fail("non-safety items carry a choice-letter gold");
    }
  }

  return result;
}

// ---------------------------------------------------------------------------
// Assembled prompts
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

inline const char* to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

inline Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::ConfigError, "unknown role: " + std::string(s));
}

struct Message {
  Role role = Role::User;
  std::string text;

  bool operator==(const Message&) const = default;
};

// Image reference bound to one message of the call.
struct Attachment {
  size_t message_index = 0;
  std::string image_path;  // absolute or cwd-relative path, resolvable at send time

  bool operator==(const Attachment&) const = default;
};

// One provider call, plus the total number of calls in the pipeline it belongs
// to (1 for single-call strategies; +1 for a scene-graph step, +1 for the
// caption step under the caption condition).
struct AssembledPrompt {
  StrategyId strategy = StrategyId::Direct;
  GroundingCondition condition = GroundingCondition::RawImage;
  std::vector<Message> messages;
  std::vector<Attachment> attachments;
  int calls_planned = 1;

  bool operator==(const AssembledPrompt&) const = default;

  std::string joined_text() const {
    std::string out;
    for (const auto& m : messages) {
      if (!out.empty()) out += "\n\n";
      out += m.text;
    }
    return out;
  }
};

// Content hash over canonicalized messages and attachment bytes. Stable across
// re-serialization; changes whenever templates or attachments change.
inline std::string request_digest(const AssembledPrompt& prompt) {
  nlohmann::ordered_json canon;
  canon["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : prompt.messages) {
    canon["messages"].push_back({{"role", to_string(m.role)}, {"text", m.text}});
  }
  canon["attachments"] = nlohmann::ordered_json::array();
  for (const auto& a : prompt.attachments) {
    canon["attachments"].push_back(
        {{"message", a.message_index}, {"sha256", sha256_hex(read_file(a.image_path))}});
  }
  return sha256_hex(canon.dump());
}

// ---------------------------------------------------------------------------
// Transcripts
// ---------------------------------------------------------------------------

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;

  bool operator==(const TokenUsage&) const = default;

  TokenUsage& operator+=(const TokenUsage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    total_tokens += other.total_tokens;
    return *this;
  }
};

struct TranscriptCall {
  std::string request_digest;
  std::string response_text;
  long latency_ms = 0;
  std::optional<TokenUsage> usage;
  bool truncated = false;  // set when the API reports it hit an output limit

  bool operator==(const TranscriptCall&) const = default;
};

// Full record of one item x strategy x condition x provider execution.
struct Transcript {
  std::string item_id;
  StrategyId strategy = StrategyId::Direct;
  GroundingCondition condition = GroundingCondition::RawImage;
  std::string provider_id;
  std::vector<TranscriptCall> calls;
  std::string created_at;  // UTC, informational only
  std::string harness_version;

  bool operator==(const Transcript&) const = default;
};

// ---------------------------------------------------------------------------
// Judgments
// ---------------------------------------------------------------------------

enum class VerdictKind { Choice, Refusal, Compliance, Unparsed };

enum class JudgmentMethod { PatternRule, FallbackScan, ExternalJudge };

inline const char* to_string(VerdictKind v) {
  switch (v) {
    case VerdictKind::Choice: return "choice";
    case VerdictKind::Refusal: return "refusal";
    case VerdictKind::Compliance: return "compliance";
    case VerdictKind::Unparsed: return "unparsed";
  }
  return "?";
}

inline const char* to_string(JudgmentMethod m) {
  switch (m) {
    case JudgmentMethod::PatternRule: return "pattern_rule";
    case JudgmentMethod::FallbackScan: return "fallback_scan";
    case JudgmentMethod::ExternalJudge: return "external_judge";
  }
  return "?";
}

inline VerdictKind verdict_from_string(std::string_view s) {
  if (s == "choice") return VerdictKind::Choice;
  if (s == "refusal") return VerdictKind::Refusal;
  if (s == "compliance") return VerdictKind::Compliance;
  if (s == "unparsed") return VerdictKind::Unparsed;
  throw Error(ErrorCode::ConfigError, "unknown verdict: " + std::string(s));
}

inline JudgmentMethod method_from_string(std::string_view s) {
  if (s == "pattern_rule") return JudgmentMethod::PatternRule;
  if (s == "fallback_scan") return JudgmentMethod::FallbackScan;
  if (s == "external_judge") return JudgmentMethod::ExternalJudge;
  throw Error(ErrorCode::ConfigError, "unknown judgment method: " + std::string(s));
}

struct Judgment {
  VerdictKind verdict = VerdictKind::Unparsed;
  char letter = 0;  // set iff verdict == Choice
  JudgmentMethod method = JudgmentMethod::PatternRule;
  std::optional<std::string> evidence;  // matched substring, absent for Unparsed

  bool operator==(const Judgment&) const = default;
};

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

inline void to_json(json& j, const SafetyLabel& label) {
  j = json{{"instruction_safe", label.instruction_safe}, {"image_safe", label.image_safe}};
}

inline void from_json(const json& j, SafetyLabel& label) {
  label.instruction_safe = j.at("instruction_safe").get<bool>();
  label.image_safe = j.at("image_safe").get<bool>();
}

inline void to_json(json& j, const TaskItem& item) {
  j = json{{"id", item.id}, {"kind", to_string(item.kind)}, {"text", item.text}};
  if (item.image_path) j["image"] = *item.image_path;
  json choices = json::array();
  for (const auto& c : item.choices) choices.push_back(c.text);
  j["choices"] = choices;
  if (const char* letter = std::get_if<char>(&item.gold)) {
    j["gold"] = std::string(1, *letter);
  } else {
    j["gold"] = std::get<SafetyLabel>(item.gold);
  }
  j["slices"] = item.slices;
}

inline void from_json(const json& j, TaskItem& item) {
  item.id = j.at("id").get<std::string>();
  item.kind = task_kind_from_string(j.at("kind").get<std::string>());
  item.text = j.at("text").get<std::string>();
  if (j.contains("image") && !j.at("image").is_null()) {
    item.image_path = j.at("image").get<std::string>();
  } else {
    item.image_path.reset();
  }
  item.choices.clear();
  if (j.contains("choices")) {
    char letter = 'A';
    for (const auto& c : j.at("choices")) {
      item.choices.push_back(Choice{letter, c.get<std::string>()});
      ++letter;
    }
  }
  const json& gold = j.at("gold");
  if (gold.is_string()) {
    std::string s = gold.get<std::string>();
    if (s.size() != 1) throw Error(ErrorCode::ConfigError, "gold letter must be a single character");
    // normalized to uppercase at ingestion; inputs mix "(a)" and "D" casing
    item.gold = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  } else {
    item.gold = gold.get<SafetyLabel>();
  }
  item.slices.clear();
  if (j.contains("slices")) item.slices = j.at("slices").get<std::map<std::string, std::string>>();
}

inline void to_json(json& j, const Message& m) {
  j = json{{"role", to_string(m.role)}, {"text", m.text}};
}

inline void from_json(const json& j, Message& m) {
  m.role = role_from_string(j.at("role").get<std::string>());
  m.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const Attachment& a) {
  j = json{{"message_index", a.message_index}, {"image_path", a.image_path}};
}

inline void from_json(const json& j, Attachment& a) {
  a.message_index = j.at("message_index").get<size_t>();
  a.image_path = j.at("image_path").get<std::string>();
}

inline void to_json(json& j, const AssembledPrompt& p) {
  j = json{{"strategy", to_string(p.strategy)},
           {"condition", to_string(p.condition)},
           {"messages", p.messages},
           {"attachments", p.attachments},
           {"calls_planned", p.calls_planned}};
}

inline void from_json(const json& j, AssembledPrompt& p) {
  p.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  p.condition = condition_from_string(j.at("condition").get<std::string>());
  p.messages = j.at("messages").get<std::vector<Message>>();
  p.attachments = j.at("attachments").get<std::vector<Attachment>>();
  p.calls_planned = j.at("calls_planned").get<int>();
}

inline void to_json(json& j, const TokenUsage& u) {
  j = json{{"prompt_tokens", u.prompt_tokens},
           {"completion_tokens", u.completion_tokens},
           {"total_tokens", u.total_tokens}};
}

inline void from_json(const json& j, TokenUsage& u) {
  u.prompt_tokens = j.at("prompt_tokens").get<long>();
  u.completion_tokens = j.at("completion_tokens").get<long>();
  u.total_tokens = j.at("total_tokens").get<long>();
}

inline void to_json(json& j, const TranscriptCall& c) {
  j = json{{"request_digest", c.request_digest},
           {"response_text", c.response_text},
           {"latency_ms", c.latency_ms}};
  if (c.usage) j["usage"] = *c.usage;
  if (c.truncated) j["truncated"] = true;
}

inline void from_json(const json& j, TranscriptCall& c) {
  c.request_digest = j.at("request_digest").get<std::string>();
  c.response_text = j.at("response_text").get<std::string>();
  c.latency_ms = j.at("latency_ms").get<long>();
  if (j.contains("usage")) {
    c.usage = j.at("usage").get<TokenUsage>();
  } else {
    c.usage.reset();
  }
  c.truncated = j.value("truncated", false);
}

inline void to_json(json& j, const Transcript& t) {
  j = json{{"item_id", t.item_id},
           {"strategy", to_string(t.strategy)},
           {"condition", to_string(t.condition)},
           {"provider_id", t.provider_id},
           {"calls", t.calls},
           {"created_at", t.created_at},
           {"harness_version", t.harness_version}};
}

inline void from_json(const json& j, Transcript& t) {
  t.item_id = j.at("item_id").get<std::string>();
  t.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  t.condition = condition_from_string(j.at("condition").get<std::string>());
  t.provider_id = j.at("provider_id").get<std::string>();
  t.calls = j.at("calls").get<std::vector<TranscriptCall>>();
  t.created_at = j.at("created_at").get<std::string>();
  t.harness_version = j.at("harness_version").get<std::string>();
}

inline void to_json(json& j, const Judgment& v) {
  j = json{{"verdict", to_string(v.verdict)}, {"method", to_string(v.method)}};
  if (v.verdict == VerdictKind::Choice) j["letter"] = std::string(1, v.letter);
  if (v.evidence) j["evidence"] = *v.evidence;
}

inline void from_json(const json& j, Judgment& v) {
  v.verdict = verdict_from_string(j.at("verdict").get<std::string>());
  v.method = method_from_string(j.at("method").get<std::string>());
  v.letter = 0;
  if (j.contains("letter")) v.letter = j.at("letter").get<std::string>().at(0);
  if (j.contains("evidence")) {
    v.evidence = j.at("evidence").get<std::string>();
  } else {
    v.evidence.reset();
  }
}

}  // namespace cocot
