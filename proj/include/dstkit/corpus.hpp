#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dstkit/schema.hpp"

namespace dstkit {

enum class Speaker { kUser, kSystem };

std::string_view to_string(Speaker speaker);

// Mapping (domain, slot) -> value. Absence encodes "none"; storing the
// literal value "none" is rejected. "dontcare" is an ordinary value.
class DialogueState {
 public:
  using Map = std::map<SlotKey, std::string>;

  DialogueState() = default;

  // Throws a validation error for "none" (any case) or a blank value.
  void set(const SlotKey& key, std::string value);
  void erase(const SlotKey& key) { entries_.erase(key); }

  const std::string* find(const SlotKey& key) const;
  bool contains(const SlotKey& key) const { return entries_.contains(key); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Map::const_iterator begin() const { return entries_.begin(); }
  Map::const_iterator end() const { return entries_.end(); }
  const Map& entries() const { return entries_; }

  bool operator==(const DialogueState&) const = default;

 private:
  Map entries_;
};

// Annotated state of one user turn. `state` holds the first listed
// alternative of every value (used for targets); `alternatives` holds the
// full list for keys annotated with more than one variant.
struct GoldState {
  DialogueState state;
  std::map<SlotKey, std::vector<std::string>> alternatives;

  // Every acceptable value for `key`; empty when the key is absent.
  std::vector<std::string> alternatives_for(const SlotKey& key) const;

  bool operator==(const GoldState&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;
  std::optional<GoldState> gold;  // present iff speaker == kUser

  bool operator==(const Turn&) const = default;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Turn> turns;

  int num_user_turns() const;
  bool operator==(const Dialogue&) const = default;
};

// Utterances U_1, A_1, ..., A_{t-1}, U_t for 1-based user turn t.
struct ContextWindow {
  std::string dialogue_id;
  int turn_index = 0;
  std::vector<std::pair<Speaker, std::string>> utterances;
};

struct ParseOptions {
  // States on these domains are dropped silently; other keys the schema does
  // not know are dropped with a warning.
  std::set<std::string> excluded_domains;
};

// Parses SGD-format dialogues from a JSON file, or from every *.json file
// (except schema.json) below a directory, in sorted path order.
std::vector<Dialogue> parse_dialogues(const std::filesystem::path& path, const Schema& schema,
                                      const ParseOptions& options = {});
std::vector<Dialogue> parse_dialogues_json(std::string_view json_text, const Schema& schema,
                                           const ParseOptions& options = {},
                                           std::string_view source = "<memory>");

// Imports M2M (Sim-M / Sim-R) native dialogues. Each M2M turn contributes its
// system utterance (if any) followed by its user utterance. `domain` names the
// schema domain the slots belong to; when empty it is inferred from the path
// ("sim-M" -> movie, "sim-R" -> restaurant).
std::vector<Dialogue> import_m2m(const std::filesystem::path& path, const Schema& schema,
                                 std::string domain = "", const ParseOptions& options = {});
std::vector<Dialogue> import_m2m_json(std::string_view json_text, const Schema& schema,
                                      const std::string& domain, const ParseOptions& options = {},
                                      std::string_view source = "<memory>");

// Checks turn alternation, non-empty utterances and gold placement. Throws a
// validation error naming the dialogue.
void validate_dialogue(const Dialogue& dialogue);

ContextWindow build_context(const Dialogue& dialogue, int turn_index);
const GoldState& gold_at(const Dialogue& dialogue, int turn_index);
DialogueState gold_state_at(const Dialogue& dialogue, int turn_index);

struct CorpusStats {
  std::size_t dialogues = 0;
  std::size_t total_turns = 0;
  std::size_t user_turns = 0;
  double avg_turns_per_dialogue = 0.0;
  double avg_tokens_per_turn = 0.0;
  std::string tokenizer = "whitespace";
};

CorpusStats corpus_stats(std::span<const Dialogue> dialogues);

// SGD-format rendering of parsed dialogues (one frame per domain in the
// state). Parsing the output reproduces the dialogues exactly.
std::string to_sgd_json(std::span<const Dialogue> dialogues);

// Hash over the canonical rendering, independent of source file layout.
std::string corpus_hash(std::span<const Dialogue> dialogues);

}  // namespace dstkit
