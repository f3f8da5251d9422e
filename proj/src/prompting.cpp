#include "dstkit/prompting.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "dstkit/error.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "prompting";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(kModule), message);
}

void append_segment(std::string& out, std::string_view token, std::string_view content) {
  if (!out.empty()) out.push_back(' ');
  out.append(token);
  out.push_back(' ');
  out.append(content);
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// True when `token` occurs at `pos` as a whole whitespace-delimited word.
bool marker_at(std::string_view s, std::size_t pos, std::string_view token) {
  if (s.compare(pos, token.size(), token) != 0) return false;
  if (pos > 0 && !is_space(s[pos - 1])) return false;
  const std::size_t end = pos + token.size();
  return end == s.size() || is_space(s[end]);
}

enum class Marker { kDomain, kSlot, kValue };

struct Segment {
  Marker marker;
  std::string_view content;
};

}  // namespace

void SegmentTokens::validate() const {
  const std::vector<const std::string*> all = {&user, &system, &domain, &slot, &value};
  std::set<std::string> seen;
  for (const std::string* token : all) {
    if (token->empty() || text::contains_whitespace(*token)) {
      fail(ErrorKind::kValidation, "segment token '" + *token + "' is empty or contains whitespace");
    }
    if (!seen.insert(*token).second) {
      fail(ErrorKind::kValidation, "segment token '" + *token + "' is used twice");
    }
  }
}

std::string_view to_string(DecodingMode mode) {
  return mode == DecodingMode::kIndependent ? "independent" : "sequential";
}

std::optional<DecodingMode> parse_decoding_mode(std::string_view tag) {
  if (text::iequals(tag, "independent")) return DecodingMode::kIndependent;
  if (text::iequals(tag, "sequential")) return DecodingMode::kSequential;
  return std::nullopt;
}

std::string PromptExample::id() const {
  std::string out = dialogue_id + "|" + std::to_string(turn_index);
  if (domain && slot) out += "|" + *domain + "|" + *slot;
  return out;
}

std::optional<SlotKey> PromptExample::key() const {
  if (!domain || !slot) return std::nullopt;
  return SlotKey{*domain, *slot};
}

std::string domain_prompt(const DomainDef& domain, const DescriptionConfig& config) {
  std::string out = domain.name;
  if (config.use_domain_desc && domain.description) {
    out += " ";
    out += *domain.description;
  }
  return out;
}

std::string slot_prompt(const SlotDef& slot, const DescriptionConfig& config) {
  std::string out = slot.name;
  if (config.use_slot_desc && slot.description) {
    out += " ";
    out += *slot.description;
  }
  if (config.use_value_list && slot.is_categorical) {
    for (const auto& value : slot.possible_values) {
      out += " ";
      out += value;
    }
  }
  return out;
}

std::string serialize_context(const ContextWindow& ctx, const SegmentTokens& tokens) {
  std::string out;
  for (const auto& [speaker, utterance] : ctx.utterances) {
    append_segment(out, tokens.for_speaker(speaker), utterance);
  }
  return out;
}

PromptExample serialize_independent(const ContextWindow& ctx, const DomainDef& domain,
                                    const SlotDef& slot, const DialogueState& gold,
                                    const SegmentTokens& tokens, const DescriptionConfig& config) {
  PromptExample ex;
  ex.dialogue_id = ctx.dialogue_id;
  ex.turn_index = ctx.turn_index;
  ex.domain = domain.name;
  ex.slot = slot.name;
  ex.mode = DecodingMode::kIndependent;
  ex.input_text = serialize_context(ctx, tokens);
  append_segment(ex.input_text, tokens.domain, domain_prompt(domain, config));
  append_segment(ex.input_text, tokens.slot, slot_prompt(slot, config));
  const std::string* value = gold.find({domain.name, slot.name});
  ex.target_text = value ? *value : std::string(kNoneValue);
  return ex;
}

std::string sequential_target(const Schema& schema, const DialogueState& state,
                              const SegmentTokens& tokens) {
  std::string out;
  for (const SlotKey& key : schema.slot_keys()) {
    const std::string* value = state.find(key);
    if (value == nullptr) continue;
    append_segment(out, tokens.domain, key.domain);
    append_segment(out, tokens.slot, key.slot);
    append_segment(out, tokens.value, *value);
  }
  return out.empty() ? std::string(kNoneValue) : out;
}

PromptExample serialize_sequential(const ContextWindow& ctx, const Schema& schema,
                                   const DialogueState& gold, const SegmentTokens& tokens) {
  PromptExample ex;
  ex.dialogue_id = ctx.dialogue_id;
  ex.turn_index = ctx.turn_index;
  ex.mode = DecodingMode::kSequential;
  ex.input_text = serialize_context(ctx, tokens);
  ex.target_text = sequential_target(schema, gold, tokens);
  return ex;
}

SequentialParse parse_sequential(std::string_view output_text, const Schema& schema,
                                 const SegmentTokens& tokens) {
  SequentialParse result;
  const std::string_view trimmed = text::trim(output_text);
  if (trimmed.empty() || text::iequals(trimmed, kNoneValue)) return result;

  struct Hit {
    Marker marker;
    std::size_t start;
    std::size_t content_start;
  };
  std::vector<Hit> hits;
  const std::pair<Marker, std::string_view> markers[] = {
      {Marker::kDomain, tokens.domain}, {Marker::kSlot, tokens.slot}, {Marker::kValue, tokens.value}};
  for (std::size_t pos = 0; pos < trimmed.size(); ++pos) {
    for (const auto& [marker, token] : markers) {
      if (marker_at(trimmed, pos, token)) {
        hits.push_back({marker, pos, pos + token.size()});
        pos += token.size() - 1;
        break;
      }
    }
  }

  if (hits.empty() || !text::is_blank(trimmed.substr(0, hits.front().start))) {
    ++result.malformed_segments;
  }
  std::vector<Segment> segments;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const std::size_t end = i + 1 < hits.size() ? hits[i + 1].start : trimmed.size();
    segments.push_back(
        {hits[i].marker, text::trim(trimmed.substr(hits[i].content_start, end - hits[i].content_start))});
  }

  std::size_t i = 0;
  while (i < segments.size()) {
    if (segments[i].marker != Marker::kDomain || i + 2 >= segments.size() ||
        segments[i + 1].marker != Marker::kSlot || segments[i + 2].marker != Marker::kValue) {
      ++result.malformed_segments;
      ++i;
      continue;
    }
    SlotKey key{std::string(segments[i].content), std::string(segments[i + 1].content)};
    const std::string_view value = segments[i + 2].content;
    if (!schema.contains(key) || value.empty() || text::iequals(value, kNoneValue)) {
      ++result.malformed_segments;
    } else {
      result.state.set(key, std::string(value));
    }
    i += 3;
  }
  return result;
}

void for_each_example(std::span<const Dialogue> dialogues, const Schema& schema, DecodingMode mode,
                      const SegmentTokens& tokens, const DescriptionConfig& config,
                      const ExampleSink& sink) {
  tokens.validate();
  for (const Dialogue& dialogue : dialogues) {
    const int users = dialogue.num_user_turns();
    for (int t = 1; t <= users; ++t) {
      const ContextWindow ctx = build_context(dialogue, t);
      const DialogueState& gold = gold_at(dialogue, t).state;
      if (mode == DecodingMode::kSequential) {
        sink(serialize_sequential(ctx, schema, gold, tokens));
        continue;
      }
      for (const DomainDef& domain : schema.domains()) {
        for (const SlotDef& slot : domain.slots) {
          sink(serialize_independent(ctx, domain, slot, gold, tokens, config));
        }
      }
    }
  }
}

std::vector<PromptExample> expand_examples(std::span<const Dialogue> dialogues, const Schema& schema,
                                           DecodingMode mode, const SegmentTokens& tokens,
                                           const DescriptionConfig& config) {
  std::vector<PromptExample> out;
  for_each_example(dialogues, schema, mode, tokens, config,
                   [&](PromptExample&& ex) { out.push_back(std::move(ex)); });
  return out;
}

std::vector<std::string> find_token_collisions(std::span<const Dialogue> dialogues,
                                               const SegmentTokens& tokens) {
  std::vector<std::string> out;
  const std::string* all[] = {&tokens.user, &tokens.system, &tokens.domain, &tokens.slot,
                              &tokens.value};
  for (const Dialogue& dialogue : dialogues) {
    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
      for (const std::string* token : all) {
        if (dialogue.turns[i].text.find(*token) != std::string::npos) {
          out.push_back(dialogue.dialogue_id + " " + std::to_string(i) + ": " + *token);
        }
      }
    }
  }
  return out;
}

std::vector<std::string> find_out_of_vocabulary_targets(std::span<const Dialogue> dialogues,
                                                        const Schema& schema) {
  std::vector<std::string> out;
  for (const Dialogue& dialogue : dialogues) {
    for (const Turn& turn : dialogue.turns) {
      if (!turn.gold) continue;
      for (const auto& [key, value] : turn.gold->state) {
        const SlotDef* slot = schema.find_slot(key);
        if (slot == nullptr || !slot->is_categorical || value == "dontcare") continue;
        bool found = false;
        for (const auto& v : slot->possible_values) found = found || v == value;
        if (!found) out.push_back(dialogue.dialogue_id + " " + key.str() + "=" + value);
      }
    }
  }
  return out;
}

std::string example_to_jsonl(const PromptExample& example) {
  nlohmann::ordered_json j;
  j["dialogue_id"] = example.dialogue_id;
  j["turn_index"] = example.turn_index;
  j["domain"] = example.domain ? nlohmann::ordered_json(*example.domain) : nlohmann::ordered_json();
  j["slot"] = example.slot ? nlohmann::ordered_json(*example.slot) : nlohmann::ordered_json();
  j["mode"] = std::string(to_string(example.mode));
  j["input"] = example.input_text;
  j["target"] = example.target_text;
  try {
    return j.dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, "example " + example.id() + " is not valid UTF-8: " + e.what());
  }
}

PromptExample example_from_jsonl(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    PromptExample ex;
    ex.dialogue_id = j.at("dialogue_id").get<std::string>();
    ex.turn_index = j.at("turn_index").get<int>();
    if (!j.at("domain").is_null()) ex.domain = j.at("domain").get<std::string>();
    if (!j.at("slot").is_null()) ex.slot = j.at("slot").get<std::string>();
    auto mode = parse_decoding_mode(j.at("mode").get<std::string>());
    if (!mode) fail(ErrorKind::kInput, "unknown mode in examples record");
    ex.mode = *mode;
    ex.input_text = j.at("input").get<std::string>();
    ex.target_text = j.at("target").get<std::string>();
    if ((ex.mode == DecodingMode::kIndependent) != (ex.domain && ex.slot)) {
      fail(ErrorKind::kInput, "example " + ex.id() + ": domain/slot presence does not match mode");
    }
    return ex;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed examples record: ") + e.what());
  }
}

std::vector<PromptExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open examples file " + path.string());
  std::vector<PromptExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      out.push_back(example_from_jsonl(line));
    } catch (const Error& e) {
      fail(ErrorKind::kInput, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dstkit
