#include "dstkit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dstkit/error.hpp"
#include "dstkit/hashing.hpp"
#include "dstkit/log.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "corpus";

[[noreturn]] void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(kModule), message);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::filesystem::path> json_files_under(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (entry.path().filename() == "schema.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Collects dropped-key counts so each unknown key is reported once per file.
class DropLog {
 public:
  void unknown(const std::string& key) { ++unknown_[key]; }

  void flush(std::string_view source) const {
    for (const auto& [key, count] : unknown_) {
      log::warn(kModule, std::string(source) + ": dropped " + std::to_string(count) +
                             " state value(s) for unknown slot '" + key + "'");
    }
  }

 private:
  std::map<std::string, std::size_t> unknown_;
};

// Resolves a state key as written in a frame of `service` to a schema key.
// Returns nullopt when the value must be dropped.
std::optional<SlotKey> resolve_key(const std::string& service, const std::string& raw_slot,
                                   const Schema& schema, const ParseOptions& options,
                                   DropLog& drops) {
  std::string domain = service;
  std::string slot = raw_slot;
  const std::string prefix = service + "-";
  if (slot.size() > prefix.size() && slot.compare(0, prefix.size(), prefix) == 0) {
    slot = slot.substr(prefix.size());
  }
  if (options.excluded_domains.contains(domain)) return std::nullopt;
  SlotKey key{domain, slot};
  if (!schema.contains(key)) {
    drops.unknown(key.str());
    return std::nullopt;
  }
  return key;
}

void add_gold_value(GoldState& gold, const SlotKey& key, std::vector<std::string> values,
                    const std::string& dialogue_id) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](const std::string& v) { return text::is_blank(v); }),
               values.end());
  if (values.empty()) return;
  for (const auto& v : values) {
    if (text::iequals(text::trim(v), "none")) {
      fail(ErrorKind::kValidation, "dialogue '" + dialogue_id + "': slot '" + key.str() +
                                       "' annotated with reserved value \"none\"");
    }
  }
  gold.state.set(key, values.front());
  if (values.size() > 1) {
    gold.alternatives[key] = std::move(values);
  } else {
    gold.alternatives.erase(key);
  }
}

std::vector<std::string> values_of(const nlohmann::json& v) {
  std::vector<std::string> out;
  if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_array()) {
    for (const auto& item : v) {
      if (item.is_string()) out.push_back(item.get<std::string>());
    }
  }
  return out;
}

Dialogue parse_sgd_dialogue(const nlohmann::json& obj, const Schema& schema,
                            const ParseOptions& options, DropLog& drops) {
  if (!obj.is_object()) fail(ErrorKind::kInput, "dialogue entry is not an object");
  auto id_it = obj.find("dialogue_id");
  if (id_it == obj.end() || !id_it->is_string()) {
    fail(ErrorKind::kInput, "dialogue without a string \"dialogue_id\"");
  }
  Dialogue dialogue;
  dialogue.dialogue_id = id_it->get<std::string>();
  auto turns_it = obj.find("turns");
  if (turns_it == obj.end() || !turns_it->is_array()) {
    fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': missing \"turns\" list");
  }
  for (const auto& t : *turns_it) {
    Turn turn;
    const std::string speaker = t.value("speaker", "");
    if (speaker == "USER") {
      turn.speaker = Speaker::kUser;
    } else if (speaker == "SYSTEM") {
      turn.speaker = Speaker::kSystem;
    } else {
      fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': unknown speaker '" +
                                  speaker + "'");
    }
    auto utt = t.find("utterance");
    if (utt == t.end() || !utt->is_string()) {
      fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': turn without utterance");
    }
    turn.text = utt->get<std::string>();
    if (turn.speaker == Speaker::kUser) {
      GoldState gold;
      if (auto frames = t.find("frames"); frames != t.end() && frames->is_array()) {
        for (const auto& frame : *frames) {
          const std::string service = frame.value("service", "");
          auto state = frame.find("state");
          if (state == frame.end() || !state->is_object()) continue;
          auto slot_values = state->find("slot_values");
          if (slot_values == state->end() || !slot_values->is_object()) continue;
          for (const auto& [raw_slot, raw_values] : slot_values->items()) {
            auto key = resolve_key(service, raw_slot, schema, options, drops);
            if (!key) continue;
            add_gold_value(gold, *key, values_of(raw_values), dialogue.dialogue_id);
          }
        }
      }
      turn.gold = std::move(gold);
    }
    dialogue.turns.push_back(std::move(turn));
  }
  validate_dialogue(dialogue);
  return dialogue;
}

std::string infer_m2m_domain(const std::filesystem::path& path) {
  for (const auto& part : path) {
    const std::string lower = text::to_lower(part.string());
    if (lower.find("sim-m") != std::string::npos) return "movie";
    if (lower.find("sim-r") != std::string::npos) return "restaurant";
  }
  return "";
}

const nlohmann::json* find_text(const nlohmann::json& turn, const char* field) {
  auto it = turn.find(field);
  if (it == turn.end() || !it->is_object()) return nullptr;
  auto t = it->find("text");
  if (t == it->end() || !t->is_string()) return nullptr;
  return &*t;
}

}  // namespace

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::kUser ? "USER" : "SYSTEM";
}

void DialogueState::set(const SlotKey& key, std::string value) {
  if (text::is_blank(value)) {
    fail(ErrorKind::kValidation, "blank value for slot '" + key.str() + "'");
  }
  if (text::iequals(text::trim(value), "none")) {
    fail(ErrorKind::kValidation, "slot '" + key.str() + "': \"none\" is encoded by absence");
  }
  entries_[key] = std::move(value);
}

const std::string* DialogueState::find(const SlotKey& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> GoldState::alternatives_for(const SlotKey& key) const {
  if (auto it = alternatives.find(key); it != alternatives.end()) return it->second;
  if (const std::string* v = state.find(key)) return {*v};
  return {};
}

int Dialogue::num_user_turns() const {
  return static_cast<int>(std::count_if(turns.begin(), turns.end(),
                                        [](const Turn& t) { return t.speaker == Speaker::kUser; }));
}

void validate_dialogue(const Dialogue& dialogue) {
  const std::string where = "dialogue '" + dialogue.dialogue_id + "'";
  if (dialogue.turns.empty()) fail(ErrorKind::kValidation, where + " has no turns");
  for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
    const Turn& turn = dialogue.turns[i];
    const Speaker expected = i % 2 == 0 ? Speaker::kUser : Speaker::kSystem;
    if (turn.speaker != expected) {
      fail(ErrorKind::kValidation, where + ": turn " + std::to_string(i) + " is " +
                                       std::string(to_string(turn.speaker)) +
                                       ", expected strict USER/SYSTEM alternation");
    }
    if (text::is_blank(turn.text)) {
      fail(ErrorKind::kValidation, where + ": turn " + std::to_string(i) + " has an empty utterance");
    }
    if (turn.gold.has_value() != (turn.speaker == Speaker::kUser)) {
      fail(ErrorKind::kValidation, where + ": turn " + std::to_string(i) +
                                       " has a gold state iff it is a user turn");
    }
  }
}

std::vector<Dialogue> parse_dialogues_json(std::string_view json_text, const Schema& schema,
                                           const ParseOptions& options, std::string_view source) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kInput, std::string(source) + ": malformed dialogue JSON: " + e.what());
  }
  if (root.is_object()) root = nlohmann::json::array({root});
  if (!root.is_array()) fail(ErrorKind::kInput, std::string(source) + ": expected a list of dialogues");
  DropLog drops;
  std::vector<Dialogue> dialogues;
  dialogues.reserve(root.size());
  for (const auto& obj : root) dialogues.push_back(parse_sgd_dialogue(obj, schema, options, drops));
  drops.flush(source);
  return dialogues;
}

std::vector<Dialogue> parse_dialogues(const std::filesystem::path& path, const Schema& schema,
                                      const ParseOptions& options) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kInput, "no such file or directory: " + path.string());
  if (!std::filesystem::is_directory(path)) {
    return parse_dialogues_json(read_file(path), schema, options, path.string());
  }
  auto files = json_files_under(path);
  if (files.empty()) fail(ErrorKind::kInput, "no dialogue files found in " + path.string());
  std::vector<Dialogue> all;
  for (const auto& file : files) {
    auto part = parse_dialogues_json(read_file(file), schema, options, file.string());
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return all;
}

std::vector<Dialogue> import_m2m_json(std::string_view json_text, const Schema& schema,
                                      const std::string& domain, const ParseOptions& options,
                                      std::string_view source) {
  if (domain.empty()) fail(ErrorKind::kInput, std::string(source) + ": cannot determine M2M domain");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kInput, std::string(source) + ": malformed M2M JSON: " + e.what());
  }
  if (!root.is_array()) fail(ErrorKind::kInput, std::string(source) + ": expected a list of dialogues");

  DropLog drops;
  std::vector<Dialogue> dialogues;
  for (const auto& obj : root) {
    Dialogue dialogue;
    dialogue.dialogue_id = obj.value("dialogue_id", "");
    if (dialogue.dialogue_id.empty()) fail(ErrorKind::kInput, std::string(source) + ": dialogue without id");
    const auto& turns = obj.at("turns");
    for (const auto& t : turns) {
      if (const auto* sys = find_text(t, "system_utterance"); sys != nullptr) {
        if (dialogue.turns.empty()) {
          log::warn(kModule, "dialogue '" + dialogue.dialogue_id +
                                 "': dropping system utterance before the first user turn");
        } else {
          dialogue.turns.push_back({Speaker::kSystem, sys->get<std::string>(), std::nullopt});
        }
      }
      const auto* usr = find_text(t, "user_utterance");
      if (usr == nullptr) {
        fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': turn without user utterance");
      }
      GoldState gold;
      if (auto ds = t.find("dialogue_state"); ds != t.end() && ds->is_array()) {
        for (const auto& sv : *ds) {
          auto key = resolve_key(domain, sv.value("slot", ""), schema, options, drops);
          if (!key) continue;
          add_gold_value(gold, *key, {sv.value("value", "")}, dialogue.dialogue_id);
        }
      }
      dialogue.turns.push_back({Speaker::kUser, usr->get<std::string>(), std::move(gold)});
    }
    validate_dialogue(dialogue);
    dialogues.push_back(std::move(dialogue));
  }
  drops.flush(source);
  return dialogues;
}

std::vector<Dialogue> import_m2m(const std::filesystem::path& path, const Schema& schema,
                                 std::string domain, const ParseOptions& options) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::kInput, "no such file or directory: " + path.string());
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    files = json_files_under(path);
    if (files.empty()) fail(ErrorKind::kInput, "no dialogue files found in " + path.string());
  } else {
    files.push_back(path);
  }
  std::vector<Dialogue> all;
  for (const auto& file : files) {
    const std::string file_domain = domain.empty() ? infer_m2m_domain(file) : domain;
    auto part = import_m2m_json(read_file(file), schema, file_domain, options, file.string());
    std::move(part.begin(), part.end(), std::back_inserter(all));
  }
  return all;
}

ContextWindow build_context(const Dialogue& dialogue, int turn_index) {
  const int users = dialogue.num_user_turns();
  if (turn_index < 1 || turn_index > users) {
    fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': user turn " +
                                std::to_string(turn_index) + " out of range [1, " +
                                std::to_string(users) + "]");
  }
  ContextWindow ctx;
  ctx.dialogue_id = dialogue.dialogue_id;
  ctx.turn_index = turn_index;
  int seen = 0;
  for (const Turn& turn : dialogue.turns) {
    ctx.utterances.emplace_back(turn.speaker, turn.text);
    if (turn.speaker == Speaker::kUser && ++seen == turn_index) break;
  }
  return ctx;
}

const GoldState& gold_at(const Dialogue& dialogue, int turn_index) {
  int seen = 0;
  for (const Turn& turn : dialogue.turns) {
    if (turn.speaker == Speaker::kUser && ++seen == turn_index) return *turn.gold;
  }
  fail(ErrorKind::kInput, "dialogue '" + dialogue.dialogue_id + "': user turn " +
                              std::to_string(turn_index) + " out of range [1, " +
                              std::to_string(seen) + "]");
}

DialogueState gold_state_at(const Dialogue& dialogue, int turn_index) {
  return gold_at(dialogue, turn_index).state;
}

CorpusStats corpus_stats(std::span<const Dialogue> dialogues) {
  CorpusStats stats;
  std::size_t tokens = 0;
  for (const auto& dialogue : dialogues) {
    ++stats.dialogues;
    for (const auto& turn : dialogue.turns) {
      ++stats.total_turns;
      if (turn.speaker == Speaker::kUser) ++stats.user_turns;
      tokens += text::split_whitespace(turn.text).size();
    }
  }
  if (stats.dialogues > 0) {
    stats.avg_turns_per_dialogue =
        static_cast<double>(stats.total_turns) / static_cast<double>(stats.dialogues);
  }
  if (stats.total_turns > 0) {
    stats.avg_tokens_per_turn = static_cast<double>(tokens) / static_cast<double>(stats.total_turns);
  }
  return stats;
}

std::string to_sgd_json(std::span<const Dialogue> dialogues) {
  nlohmann::ordered_json root = nlohmann::ordered_json::array();
  for (const auto& dialogue : dialogues) {
    nlohmann::ordered_json d;
    d["dialogue_id"] = dialogue.dialogue_id;
    nlohmann::ordered_json turns = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < dialogue.turns.size(); ++i) {
      const Turn& turn = dialogue.turns[i];
      nlohmann::ordered_json t;
      nlohmann::ordered_json frames = nlohmann::ordered_json::array();
      if (turn.gold) {
        std::map<std::string, nlohmann::ordered_json> by_domain;
        for (const auto& [key, value] : turn.gold->state) {
          auto& slot_values = by_domain[key.domain];
          if (slot_values.is_null()) slot_values = nlohmann::ordered_json::object();
          slot_values[key.str()] = turn.gold->alternatives_for(key);
        }
        for (auto& [domain, slot_values] : by_domain) {
          nlohmann::ordered_json frame;
          frame["service"] = domain;
          frame["state"]["slot_values"] = std::move(slot_values);
          frames.push_back(std::move(frame));
        }
      }
      t["frames"] = std::move(frames);
      t["speaker"] = std::string(to_string(turn.speaker));
      t["turn_id"] = std::to_string(i);
      t["utterance"] = turn.text;
      turns.push_back(std::move(t));
    }
    d["turns"] = std::move(turns);
    root.push_back(std::move(d));
  }
  return root.dump(2);
}

std::string corpus_hash(std::span<const Dialogue> dialogues) {
  return sha256_hex(to_sgd_json(dialogues));
}

}  // namespace dstkit
