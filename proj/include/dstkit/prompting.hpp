#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstkit/corpus.hpp"
#include "dstkit/schema.hpp"

namespace dstkit {

// Marker words inserted between serialized segments. Must be pairwise
// distinct and whitespace-free.
struct SegmentTokens {
  std::string user = "[user]";
  std::string system = "[system]";
  std::string domain = "[domain]";
  std::string slot = "[slot]";
  std::string value = "[value]";

  void validate() const;
  const std::string& for_speaker(Speaker speaker) const {
    return speaker == Speaker::kUser ? user : system;
  }
};

enum class DecodingMode { kIndependent, kSequential };

std::string_view to_string(DecodingMode mode);
std::optional<DecodingMode> parse_decoding_mode(std::string_view tag);

// Reserved target for a pair absent from the state.
inline constexpr std::string_view kNoneValue = "none";

struct PromptExample {
  std::string dialogue_id;
  int turn_index = 0;
  std::optional<std::string> domain;  // independent mode only
  std::optional<std::string> slot;    // independent mode only
  std::string input_text;
  std::string target_text;
  DecodingMode mode = DecodingMode::kIndependent;

  // Stable request id: "<dialogue>|<turn>" plus "|<domain>|<slot>" in
  // independent mode.
  std::string id() const;
  std::optional<SlotKey> key() const;

  bool operator==(const PromptExample&) const = default;
};

std::string domain_prompt(const DomainDef& domain, const DescriptionConfig& config);
std::string slot_prompt(const SlotDef& slot, const DescriptionConfig& config);

// "[user] U_1 [system] A_1 ... [user] U_t"
std::string serialize_context(const ContextWindow& ctx, const SegmentTokens& tokens);

PromptExample serialize_independent(const ContextWindow& ctx, const DomainDef& domain,
                                    const SlotDef& slot, const DialogueState& gold,
                                    const SegmentTokens& tokens, const DescriptionConfig& config);

// Target lists every active pair in canonical schema order as
// "[domain] d [slot] s [value] v", or "none" for an empty state.
PromptExample serialize_sequential(const ContextWindow& ctx, const Schema& schema,
                                   const DialogueState& gold, const SegmentTokens& tokens);

std::string sequential_target(const Schema& schema, const DialogueState& state,
                              const SegmentTokens& tokens);

struct SequentialParse {
  DialogueState state;
  int malformed_segments = 0;
};

// Best-effort inverse of sequential_target(). Never throws: unparseable
// fragments, unknown pairs and "none" values are counted and skipped; a
// repeated pair keeps its last value.
SequentialParse parse_sequential(std::string_view output_text, const Schema& schema,
                                 const SegmentTokens& tokens);

using ExampleSink = std::function<void(PromptExample&&)>;

// Emits examples in (dialogue, turn, domain, slot) order: one per user turn
// and schema pair in independent mode, one per user turn in sequential mode.
void for_each_example(std::span<const Dialogue> dialogues, const Schema& schema, DecodingMode mode,
                      const SegmentTokens& tokens, const DescriptionConfig& config,
                      const ExampleSink& sink);

std::vector<PromptExample> expand_examples(std::span<const Dialogue> dialogues, const Schema& schema,
                                           DecodingMode mode, const SegmentTokens& tokens,
                                           const DescriptionConfig& config);

// Utterances that contain a segment token, as "dialogue_id turn: token".
std::vector<std::string> find_token_collisions(std::span<const Dialogue> dialogues,
                                               const SegmentTokens& tokens);

// Gold categorical targets outside possible_values ∪ {none, dontcare}.
std::vector<std::string> find_out_of_vocabulary_targets(std::span<const Dialogue> dialogues,
                                                        const Schema& schema);

// Examples file: one JSON object per line, fields in the fixed order
// dialogue_id, turn_index, domain, slot, mode, input, target.
std::string example_to_jsonl(const PromptExample& example);
PromptExample example_from_jsonl(std::string_view line);
std::vector<PromptExample> read_examples(const std::filesystem::path& path);

}  // namespace dstkit
