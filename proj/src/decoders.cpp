#include "dstkit/decoders.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <unordered_set>

#include <json.hpp>

#include "dstkit/error.hpp"
#include "dstkit/log.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "decoders";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

struct Match {
  std::size_t utterance = 0;
  std::size_t length = 0;
  std::size_t position = 0;

  bool better_than(const Match& other) const {
    return std::tie(utterance, length, position) > std::tie(other.utterance, other.length, other.position);
  }
};

// Last whole-word occurrence of `needle` in `haystack`; both lowercase.
std::optional<std::size_t> last_word_occurrence(std::string_view haystack, std::string_view needle) {
  if (needle.empty() || needle.size() > haystack.size()) return std::nullopt;
  std::size_t pos = haystack.rfind(needle);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !text::is_word_char(haystack[pos - 1]);
    const std::size_t end = pos + needle.size();
    const bool right_ok = end == haystack.size() || !text::is_word_char(haystack[end]);
    if (left_ok && right_ok) return pos;
    if (pos == 0) break;
    pos = haystack.rfind(needle, pos - 1);
  }
  return std::nullopt;
}

// Position of the last whole-word occurrence of `token` in `s`.
std::size_t last_marker(std::string_view s, std::string_view token) {
  std::size_t pos = s.rfind(token);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || is_space(s[pos - 1]);
    const std::size_t end = pos + token.size();
    const bool right_ok = end == s.size() || is_space(s[end]);
    if (left_ok && right_ok) return pos;
    if (pos == 0) break;
    pos = s.rfind(token, pos - 1);
  }
  return std::string_view::npos;
}

}  // namespace

DecodeRequest make_request(const PromptExample& example, int max_output_tokens) {
  return DecodeRequest{example.id(), example.input_text, max_output_tokens, example.key()};
}

std::vector<DecodeResponse> decode_batch(const Backend& backend,
                                         std::span<const DecodeRequest> requests) {
  std::unordered_set<std::string> ids;
  for (const auto& r : requests) {
    if (!ids.insert(r.request_id).second) {
      throw Error(ErrorKind::kValidation, std::string(kModule),
                  "duplicate request id '" + r.request_id + "' in batch");
    }
  }
  auto responses = backend.decode(requests);
  std::unordered_set<std::string> answered;
  for (const auto& r : responses) {
    if (!ids.contains(r.request_id) || !answered.insert(r.request_id).second) {
      throw Error(ErrorKind::kBackend, std::string(kModule),
                  backend.name() + " backend returned unexpected response id '" + r.request_id + "'");
    }
  }
  if (answered.size() != ids.size()) {
    throw Error(ErrorKind::kBackend, std::string(kModule),
                backend.name() + " backend answered " + std::to_string(answered.size()) + " of " +
                    std::to_string(ids.size()) + " requests");
  }
  return responses;
}

GoldIndex build_gold_index(std::span<const PromptExample> examples) {
  GoldIndex index;
  for (const auto& ex : examples) index[ex.id()] = ex.target_text;
  return index;
}

std::vector<DecodeResponse> OracleBackend::decode(std::span<const DecodeRequest> requests) const {
  std::vector<DecodeResponse> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    auto it = gold_.find(r.request_id);
    if (it == gold_.end()) {
      log::warn(kModule, "oracle has no gold value for '" + r.request_id + "'; answering none");
      out.push_back({r.request_id, std::string(kNoneValue)});
    } else {
      out.push_back({r.request_id, it->second});
    }
  }
  return out;
}

Gazetteer build_gazetteer(std::span<const Dialogue> training_dialogues) {
  std::map<SlotKey, std::set<std::string>> values;
  for (const auto& dialogue : training_dialogues) {
    for (const auto& turn : dialogue.turns) {
      if (!turn.gold) continue;
      for (const auto& [key, value] : turn.gold->state) {
        if (value != "dontcare") values[key].insert(value);
      }
    }
  }
  Gazetteer out;
  for (auto& [key, set] : values) out[key].assign(set.begin(), set.end());
  return out;
}

ExtractiveBackend::ExtractiveBackend(Schema schema, Gazetteer gazetteer, SegmentTokens tokens)
    : schema_(std::move(schema)), gazetteer_(std::move(gazetteer)), tokens_(std::move(tokens)) {
  tokens_.validate();
}

std::vector<std::string> ExtractiveBackend::context_utterances(std::string_view input_text) const {
  std::string_view context = input_text;
  if (std::size_t cut = last_marker(context, tokens_.domain); cut != std::string_view::npos) {
    context = context.substr(0, cut);
  }
  std::vector<std::string> utterances;
  std::string current;
  bool started = false;
  for (std::string_view word : text::split_whitespace(context)) {
    if (word == tokens_.user || word == tokens_.system) {
      if (started) utterances.push_back(text::to_lower(current));
      current.clear();
      started = true;
      continue;
    }
    if (!current.empty()) current.push_back(' ');
    current.append(word);
    started = true;
  }
  if (started && !current.empty()) utterances.push_back(text::to_lower(current));
  return utterances;
}

std::string ExtractiveBackend::extract(const SlotKey& key, std::string_view input_text) const {
  const SlotDef* slot = schema_.find_slot(key);
  if (slot == nullptr) return std::string(kNoneValue);
  const std::vector<std::string>* candidates = nullptr;
  if (slot->is_categorical) {
    candidates = &slot->possible_values;
  } else if (auto it = gazetteer_.find(key); it != gazetteer_.end()) {
    candidates = &it->second;
  }
  if (candidates == nullptr) return std::string(kNoneValue);

  const auto utterances = context_utterances(input_text);
  std::optional<Match> best;
  const std::string* best_value = nullptr;
  for (const std::string& value : *candidates) {
    if (value == "dontcare") continue;
    const std::string needle = text::to_lower(value);
    for (std::size_t u = utterances.size(); u-- > 0;) {
      auto pos = last_word_occurrence(utterances[u], needle);
      if (!pos) continue;
      Match m{u, needle.size(), *pos};
      if (!best || m.better_than(*best)) {
        best = m;
        best_value = &value;
      }
      break;
    }
  }
  return best_value ? *best_value : std::string(kNoneValue);
}

std::vector<DecodeResponse> ExtractiveBackend::decode(std::span<const DecodeRequest> requests) const {
  std::vector<DecodeResponse> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    if (!r.slot) {
      throw Error(ErrorKind::kInput, std::string(kModule),
                  "extractive backend supports independent mode only (request '" + r.request_id + "')");
    }
    out.push_back({r.request_id, extract(*r.slot, r.input_text)});
  }
  return out;
}

std::unique_ptr<Backend> oracle_backend(GoldIndex gold_index) {
  return std::make_unique<OracleBackend>(std::move(gold_index));
}

std::unique_ptr<Backend> extractive_backend(Schema schema, Gazetteer gazetteer, SegmentTokens tokens) {
  return std::make_unique<ExtractiveBackend>(std::move(schema), std::move(gazetteer), std::move(tokens));
}

std::unique_ptr<Backend> remote_backend(RemoteOptions options) {
  return std::make_unique<RemoteBackend>(std::move(options));
}

namespace wire {

namespace {
[[noreturn]] void protocol_error(const std::string& message) {
  throw Error(ErrorKind::kBackend, "wire", message);
}
}  // namespace

std::string encode_request(const Request& request) {
  nlohmann::ordered_json j;
  j["id"] = request.id;
  j["input"] = request.input;
  j["max_tokens"] = request.max_tokens;
  return j.dump();
}

Request decode_request(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    Request r;
    r.id = j.at("id").get<std::string>();
    r.input = j.at("input").get<std::string>();
    r.max_tokens = j.value("max_tokens", kDefaultMaxOutputTokens);
    return r;
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("malformed request line: ") + e.what());
  }
}

std::string encode_response(const Response& response) {
  nlohmann::ordered_json j;
  j["id"] = response.id;
  if (response.output) j["output"] = *response.output;
  if (response.error) j["error"] = *response.error;
  return j.dump();
}

Response decode_response(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    Response r;
    r.id = j.at("id").get<std::string>();
    if (auto it = j.find("output"); it != j.end() && it->is_string()) r.output = it->get<std::string>();
    if (auto it = j.find("error"); it != j.end() && !it->is_null()) {
      r.error = it->is_string() ? it->get<std::string>() : it->dump();
    }
    if (!r.output && !r.error) protocol_error("response for '" + r.id + "' has neither output nor error");
    return r;
  } catch (const nlohmann::json::exception& e) {
    protocol_error(std::string("malformed response line: ") + e.what());
  }
}

}  // namespace wire

}  // namespace dstkit
