#include <doctest.h>

#include <random>

#include "dstkit/error.hpp"
#include "dstkit/state.hpp"
#include "test_support.hpp"

using namespace dstkit;

namespace {

std::vector<SlotResponse> full_turn(const Schema& schema, const std::string& id, int turn,
                                    const std::map<SlotKey, std::string>& values) {
  std::vector<SlotResponse> out;
  for (const auto& key : schema.slot_keys()) {
    auto it = values.find(key);
    out.push_back({id, turn, key, it == values.end() ? "none" : it->second});
  }
  return out;
}

std::string error_message(const std::function<void()>& fn, ErrorKind expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.kind() == expected);
    return e.what();
  }
  FAIL("expected dstkit::Error");
  return "";
}

}  // namespace

TEST_CASE("none detection") {
  CHECK(is_none_output("none"));
  CHECK(is_none_output(" NONE\n"));
  CHECK_FALSE(is_none_output("nonel"));
  CHECK_FALSE(is_none_output("dontcare"));
}

TEST_CASE("independent assembly") {
  const Schema schema = testing::mwoz_schema();
  auto responses = full_turn(schema, "b", 2, {{{"train", "day"}, "Friday"}, {{"hotel", "area"}, "dontcare"}});
  auto first = full_turn(schema, "a", 1, {{{"hotel", "stars"}, " None "}});
  responses.insert(responses.end(), first.begin(), first.end());
  const auto turns = assemble_independent(responses, schema);
  REQUIRE(turns.size() == 2);
  CHECK(turns[0].dialogue_id == "b");
  CHECK(turns[0].state.size() == 2);
  CHECK(*turns[0].state.find({"train", "day"}) == "Friday");
  CHECK(*turns[0].state.find({"hotel", "area"}) == "dontcare");
  CHECK(turns[1].state.empty());
}

TEST_CASE("independent assembly reports every gap") {
  const Schema schema = testing::mwoz_schema();
  auto responses = full_turn(schema, "a", 1, {});
  responses.pop_back();
  responses.push_back(responses.front());
  responses.push_back({"a", 1, {"train", "color"}, "red"});
  const std::string msg =
      error_message([&] { assemble_independent(responses, schema); }, ErrorKind::kValidation);
  CHECK(msg.find("3 response gap(s)") != std::string::npos);
  CHECK(msg.find("missing a#1 bus-day") != std::string::npos);
  CHECK(msg.find("duplicate a#1 hotel-pricerange") != std::string::npos);
  CHECK(msg.find("unknown a#1 train-color") != std::string::npos);
}

TEST_CASE("sequential assembly") {
  const Schema schema = testing::mwoz_schema();
  const std::vector<TurnResponse> responses = {
      {"a", 1, "[domain] train [slot] day [value] friday"},
      {"a", 2, "junk [domain] train [slot] day [value] friday [domain] hotel [slot] nope [value] x"},
      {"b", 1, "none"},
  };
  const auto turns = assemble_sequential(responses, schema, {});
  REQUIRE(turns.size() == 3);
  CHECK(turns[0].malformed_segments == 0);
  CHECK(turns[1].malformed_segments == 2);
  CHECK(turns[1].state.size() == 1);
  CHECK(turns[2].state.empty());
  const std::vector<TurnResponse> dup = {{"a", 1, "none"}, {"a", 1, "none"}};
  error_message([&] { assemble_sequential(dup, schema, {}); }, ErrorKind::kValidation);
}

TEST_CASE("predictions file round-trip") {
  const Schema schema = testing::mwoz_schema();
  std::mt19937_64 rng(5);
  std::vector<TurnPrediction> preds;
  for (int i = 0; i < 30; ++i) {
    preds.push_back({"d" + std::to_string(i / 3), i % 3 + 1, testing::random_state(schema, rng, 0.1), 0});
  }
  testing::TempDir dir;
  write_predictions(dir / "p.jsonl", preds, schema);
  const std::string text = testing::read_text(dir / "p.jsonl");
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == preds.size() * schema.num_slots());
  CHECK(read_predictions(dir / "p.jsonl", schema) == preds);
  CHECK(text.rfind(R"({"dialogue_id":"d0","turn_index":1,"domain":"hotel","slot":"pricerange","value":)", 0) == 0);
}

TEST_CASE("predictions reader is tolerant") {
  const Schema schema = testing::mwoz_schema();
  testing::TempDir dir;
  testing::write_text(dir / "p.jsonl",
                      R"({"dialogue_id":"a","turn_index":1,"domain":"train","slot":"day","value":"friday"})"
                      "\n\n"
                      R"({"dialogue_id":"a","turn_index":2,"domain":"train","slot":"day","value":"NONE"})"
                      "\n"
                      R"({"dialogue_id":"a","turn_index":2,"domain":"police","slot":"name","value":"x"})"
                      "\n"
                      R"({"dialogue_id":"a","turn_index":2,"domain":"police","slot":"name","value":"y"})"
                      "\n");
  testing::WarningCapture warnings;
  const auto preds = read_predictions(dir / "p.jsonl", schema);
  REQUIRE(preds.size() == 2);
  CHECK(*preds[0].state.find({"train", "day"}) == "friday");
  CHECK(preds[1].state.empty());
  REQUIRE(warnings.messages().size() == 1);
  CHECK(warnings.contains("dropped 2 prediction(s) for unknown slot 'police-name'"));

  testing::write_text(dir / "bad.jsonl", "{\"dialogue_id\": \"a\"}\n");
  CHECK(error_message([&] { read_predictions(dir / "bad.jsonl", schema); }, ErrorKind::kInput).find(":1:") !=
        std::string::npos);
  error_message([&] { read_predictions(dir / "missing.jsonl", schema); }, ErrorKind::kInput);
}
