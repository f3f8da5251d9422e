#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dstkit/corpus.hpp"
#include "dstkit/decoders.hpp"
#include "dstkit/evalkit.hpp"
#include "dstkit/prompting.hpp"
#include "dstkit/schema.hpp"

namespace dstkit {

enum class BackendKind { kOracle, kExtractive, kRemote };

std::string_view to_string(BackendKind kind);
std::optional<BackendKind> parse_backend_kind(std::string_view tag);

// Everything that determines the output of a command.
struct RunConfig {
  Provenance dataset = Provenance::kMultiwoz22;
  std::filesystem::path schema_path;
  std::filesystem::path dialogues_path;
  std::optional<std::filesystem::path> descriptions_path;
  DecodingMode mode = DecodingMode::kIndependent;
  DescriptionConfig desc;  // includes the sampling seed
  SegmentTokens tokens;
  BackendKind backend = BackendKind::kOracle;
  std::optional<std::string> endpoint;
  std::optional<std::filesystem::path> train_dialogues_path;  // extractive gazetteer
  MatchMode match_mode = MatchMode::kExact;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  Aggregation aggregation = Aggregation::kTurn;
  // nullopt selects the dataset default.
  std::optional<std::set<std::string>> excluded_domains;
  int max_output_tokens = kDefaultMaxOutputTokens;
  std::chrono::milliseconds timeout{30000};
  int max_in_flight = 8;

  std::set<std::string> effective_exclusions() const;
  EvalOptions eval_options() const { return {match_mode, fuzzy_threshold, aggregation}; }

  // Throws an input error for inconsistent settings, e.g. a remote backend
  // without an endpoint.
  void validate() const;
};

// Schema after description resolution and domain filtering.
Schema load_schema(const RunConfig& config);

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path, const Schema& schema,
                                     const RunConfig& config);

struct PreprocessResult {
  std::size_t examples = 0;
  std::string content_hash;  // sha256 of the examples file
};

PreprocessResult cmd_preprocess(const RunConfig& config, const std::filesystem::path& out);

struct DecodeResult {
  std::size_t examples = 0;
  std::size_t resumed = 0;  // taken from an existing journal
  std::size_t turns = 0;
  std::size_t malformed_segments = 0;
};

// Journal of completed requests, one {"id","output"} line each.
std::filesystem::path journal_path(const std::filesystem::path& predictions);

// Decodes every example with the configured backend. Completed responses are
// appended to the journal as they arrive, so an interrupted run resumes where
// it stopped. The journal is removed once the predictions file is written.
DecodeResult cmd_decode(const RunConfig& config, const std::filesystem::path& examples_path,
                        const std::filesystem::path& predictions_path);

// Same, with a caller-supplied backend.
DecodeResult cmd_decode(const RunConfig& config, const std::filesystem::path& examples_path,
                        const std::filesystem::path& predictions_path, const Backend& backend);

struct EvaluateResult {
  EvalReport report;
  nlohmann::ordered_json report_json;
  std::string summary;
  std::size_t filled_turns = 0;  // gold turns absent from the predictions file
};

// Scores a predictions file against the configured dialogues. Gold turns with
// no prediction rows are scored as empty states and counted in the metadata.
EvaluateResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& predictions_path);

// Writes the report JSON and, next to it, the summary table
// ("<report>.summary.txt").
void write_report(const EvaluateResult& result, const std::filesystem::path& report_path);

EvalReport read_report(const std::filesystem::path& report_path);

struct StatsResult {
  CorpusStats corpus;
  std::size_t domains_all = 0;
  std::size_t slots_all = 0;
  std::size_t categorical_all = 0;
  std::size_t noncategorical_all = 0;
  std::size_t domains_filtered = 0;
  std::size_t slots_filtered = 0;
  std::size_t categorical_filtered = 0;
  std::size_t noncategorical_filtered = 0;
};

StatsResult cmd_stats(const RunConfig& config);
std::string format_stats(const StatsResult& stats);

}  // namespace dstkit
