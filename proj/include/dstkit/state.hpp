#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dstkit/corpus.hpp"
#include "dstkit/prompting.hpp"
#include "dstkit/schema.hpp"

namespace dstkit {

struct TurnPrediction {
  std::string dialogue_id;
  int turn_index = 0;
  DialogueState state;
  int malformed_segments = 0;  // sequential mode only

  bool operator==(const TurnPrediction&) const = default;
};

// Decoder output for one (turn, domain, slot) example.
struct SlotResponse {
  std::string dialogue_id;
  int turn_index = 0;
  SlotKey key;
  std::string output_text;
};

// Decoder output for one sequential-mode turn.
struct TurnResponse {
  std::string dialogue_id;
  int turn_index = 0;
  std::string output_text;
};

// True for "none" in any case, surrounded by any whitespace.
bool is_none_output(std::string_view output);

// Groups per-slot outputs into turn states, in first-seen turn order.
// "none" outputs are dropped; other outputs are stored verbatim. Throws a
// validation error listing every missing or duplicated (turn, domain, slot).
std::vector<TurnPrediction> assemble_independent(std::span<const SlotResponse> responses,
                                                 const Schema& schema);

std::vector<TurnPrediction> assemble_sequential(std::span<const TurnResponse> responses,
                                                const Schema& schema, const SegmentTokens& tokens);

// Predictions file: one line per (turn, domain, slot) with fields
// dialogue_id, turn_index, domain, slot, value. The writer emits every schema
// pair (absent pairs as "none"), so every turn is represented.
void write_predictions(const std::filesystem::path& path, std::span<const TurnPrediction> predictions,
                       const Schema& schema);

// Reads a predictions file. "none" rows may be present or omitted; rows for
// pairs outside the schema are dropped with a warning. Turns appear in
// first-seen order.
std::vector<TurnPrediction> read_predictions(const std::filesystem::path& path, const Schema& schema);

}  // namespace dstkit
