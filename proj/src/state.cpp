#include "dstkit/state.hpp"

#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "dstkit/error.hpp"
#include "dstkit/log.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "state";

using TurnId = std::pair<std::string, int>;

std::string turn_label(const TurnId& id) { return id.first + "#" + std::to_string(id.second); }

// Keeps turns in first-seen order.
class TurnTable {
 public:
  TurnPrediction& at(const std::string& dialogue_id, int turn_index) {
    TurnId id{dialogue_id, turn_index};
    auto [it, inserted] = index_.emplace(id, turns_.size());
    if (inserted) turns_.push_back({dialogue_id, turn_index, {}, 0});
    return turns_[it->second];
  }
  std::vector<TurnPrediction> release() { return std::move(turns_); }

 private:
  std::map<TurnId, std::size_t> index_;
  std::vector<TurnPrediction> turns_;
};

}  // namespace

bool is_none_output(std::string_view output) {
  return text::iequals(text::trim(output), kNoneValue);
}

std::vector<TurnPrediction> assemble_independent(std::span<const SlotResponse> responses,
                                                 const Schema& schema) {
  TurnTable table;
  std::map<TurnId, std::set<SlotKey>> seen;
  std::vector<std::string> problems;
  for (const auto& r : responses) {
    TurnId id{r.dialogue_id, r.turn_index};
    TurnPrediction& turn = table.at(r.dialogue_id, r.turn_index);
    if (!schema.contains(r.key)) {
      problems.push_back("unknown " + turn_label(id) + " " + r.key.str());
      continue;
    }
    if (!seen[id].insert(r.key).second) {
      problems.push_back("duplicate " + turn_label(id) + " " + r.key.str());
      continue;
    }
    if (is_none_output(r.output_text) || text::is_blank(r.output_text)) continue;
    turn.state.set(r.key, r.output_text);
  }
  const auto keys = schema.slot_keys();
  for (const auto& [id, got] : seen) {
    for (const auto& key : keys) {
      if (!got.contains(key)) problems.push_back("missing " + turn_label(id) + " " + key.str());
    }
  }
  if (!problems.empty()) {
    const std::size_t shown = std::min<std::size_t>(problems.size(), 20);
    std::vector<std::string> head(problems.begin(), problems.begin() + static_cast<long>(shown));
    std::string message = std::to_string(problems.size()) + " response gap(s): " + text::join(head, "; ");
    if (shown < problems.size()) message += "; ...";
    throw Error(ErrorKind::kValidation, std::string(kModule), message);
  }
  return table.release();
}

std::vector<TurnPrediction> assemble_sequential(std::span<const TurnResponse> responses,
                                                const Schema& schema, const SegmentTokens& tokens) {
  std::vector<TurnPrediction> out;
  out.reserve(responses.size());
  std::set<TurnId> seen;
  for (const auto& r : responses) {
    if (!seen.insert({r.dialogue_id, r.turn_index}).second) {
      throw Error(ErrorKind::kValidation, std::string(kModule),
                  "duplicate response for " + turn_label({r.dialogue_id, r.turn_index}));
    }
    SequentialParse parsed = parse_sequential(r.output_text, schema, tokens);
    out.push_back({r.dialogue_id, r.turn_index, std::move(parsed.state), parsed.malformed_segments});
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const TurnPrediction> predictions,
                       const Schema& schema) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kInput, std::string(kModule), "cannot write " + path.string());
  const auto keys = schema.slot_keys();
  for (const auto& p : predictions) {
    for (const auto& key : keys) {
      const std::string* value = p.state.find(key);
      nlohmann::ordered_json j;
      j["dialogue_id"] = p.dialogue_id;
      j["turn_index"] = p.turn_index;
      j["domain"] = key.domain;
      j["slot"] = key.slot;
      j["value"] = value ? *value : std::string(kNoneValue);
      out << j.dump() << '\n';
    }
  }
  if (!out) throw Error(ErrorKind::kInput, std::string(kModule), "write failed for " + path.string());
}

std::vector<TurnPrediction> read_predictions(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kInput, std::string(kModule), "cannot open predictions file " + path.string());
  TurnTable table;
  std::map<std::string, std::size_t> unknown;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::is_blank(line)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      TurnPrediction& turn =
          table.at(j.at("dialogue_id").get<std::string>(), j.at("turn_index").get<int>());
      if (j.at("domain").is_null() || j.at("slot").is_null()) continue;
      SlotKey key{j.at("domain").get<std::string>(), j.at("slot").get<std::string>()};
      const std::string value = j.at("value").get<std::string>();
      if (!schema.contains(key)) {
        ++unknown[key.str()];
        continue;
      }
      if (is_none_output(value) || text::is_blank(value)) continue;
      turn.state.set(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kInput, std::string(kModule),
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const auto& [key, count] : unknown) {
    log::warn(kModule, path.string() + ": dropped " + std::to_string(count) +
                           " prediction(s) for unknown slot '" + key + "'");
  }
  return table.release();
}

}  // namespace dstkit
