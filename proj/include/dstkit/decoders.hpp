#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dstkit/corpus.hpp"
#include "dstkit/prompting.hpp"
#include "dstkit/schema.hpp"

namespace dstkit {

inline constexpr int kDefaultMaxOutputTokens = 64;

struct DecodeRequest {
  std::string request_id;
  std::string input_text;
  int max_output_tokens = kDefaultMaxOutputTokens;
  // Local routing metadata, never sent over the wire. Set for independent
  // mode requests.
  std::optional<SlotKey> slot;
};

struct DecodeResponse {
  std::string request_id;
  std::string output_text;

  bool operator==(const DecodeResponse&) const = default;
};

DecodeRequest make_request(const PromptExample& example,
                           int max_output_tokens = kDefaultMaxOutputTokens);

// Decoder contract: one response per request, deterministic for a given
// backend state, safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) const = 0;
};

// Runs `backend` and checks the response ids against the request ids.
// Throws a validation error for duplicate request ids and a backend error
// when the responses do not cover the requests exactly.
std::vector<DecodeResponse> decode_batch(const Backend& backend,
                                         std::span<const DecodeRequest> requests);

// Example id -> gold target.
using GoldIndex = std::unordered_map<std::string, std::string>;

GoldIndex build_gold_index(std::span<const PromptExample> examples);

// Returns the gold target for every request; unknown ids decode to "none"
// with a warning.
class OracleBackend final : public Backend {
 public:
  explicit OracleBackend(GoldIndex gold_index) : gold_(std::move(gold_index)) {}
  std::string name() const override { return "oracle"; }
  std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) const override;

 private:
  GoldIndex gold_;
};

// Slot -> known surface values. Built from a training split only.
using Gazetteer = std::map<SlotKey, std::vector<std::string>>;

Gazetteer build_gazetteer(std::span<const Dialogue> training_dialogues);

// String-matching baseline for independent mode. Categorical slots pick the
// latest case-insensitive whole-word mention of a possible value;
// non-categorical slots do the same over the gazetteer. Ranking: later
// utterance, then longer value, then later position. No match -> "none".
class ExtractiveBackend final : public Backend {
 public:
  ExtractiveBackend(Schema schema, Gazetteer gazetteer, SegmentTokens tokens = {});
  std::string name() const override { return "extractive"; }
  std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) const override;

  // Decodes a single independent-mode input for `key`.
  std::string extract(const SlotKey& key, std::string_view input_text) const;

 private:
  std::vector<std::string> context_utterances(std::string_view input_text) const;

  Schema schema_;
  Gazetteer gazetteer_;
  SegmentTokens tokens_;
};

struct RemoteOptions {
  // tcp://host:port or unix:///path for the line protocol,
  // http://host:port for POST /decode.
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 8;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
};

// Client for the model service. Every request is sent as one line
// {"id","input","max_tokens"} and answered by one line {"id","output"}.
// At most max_in_flight requests are outstanding; each request is retried
// with exponential backoff before the batch fails with a backend error that
// names the endpoint.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(RemoteOptions options);
  std::string name() const override { return "remote"; }
  std::vector<DecodeResponse> decode(std::span<const DecodeRequest> requests) const override;

  const RemoteOptions& options() const { return options_; }

 private:
  RemoteOptions options_;
};

std::unique_ptr<Backend> oracle_backend(GoldIndex gold_index);
std::unique_ptr<Backend> extractive_backend(Schema schema, Gazetteer gazetteer,
                                            SegmentTokens tokens = {});
std::unique_ptr<Backend> remote_backend(RemoteOptions options);

// Wire protocol encoding. Each message is a single line without the
// trailing newline.
namespace wire {

struct Request {
  std::string id;
  std::string input;
  int max_tokens = kDefaultMaxOutputTokens;
};

struct Response {
  std::string id;
  std::optional<std::string> output;
  std::optional<std::string> error;
};

std::string encode_request(const Request& request);
Request decode_request(std::string_view line);
std::string encode_response(const Response& response);
Response decode_response(std::string_view line);

}  // namespace wire

}  // namespace dstkit
