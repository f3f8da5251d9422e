#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dstkit/corpus.hpp"
#include "dstkit/schema.hpp"
#include "dstkit/state.hpp"

namespace dstkit {

enum class MatchMode { kExact, kFuzzy };
enum class Aggregation { kTurn, kFrame };
enum class ErrorCategory { kMissedSlot, kSpuriousSlot, kWrongValue, kMixed };

std::string_view to_string(MatchMode mode);
std::string_view to_string(Aggregation aggregation);
std::string_view to_string(ErrorCategory category);
std::optional<MatchMode> parse_match_mode(std::string_view tag);
std::optional<Aggregation> parse_aggregation(std::string_view tag);
std::optional<ErrorCategory> parse_error_category(std::string_view tag);

inline constexpr double kDefaultFuzzyThreshold = 0.95;

struct EvalOptions {
  MatchMode match_mode = MatchMode::kExact;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  // kTurn scores each user turn over the whole state. kFrame scores each
  // (turn, domain) where the domain is active in gold or prediction.
  Aggregation aggregation = Aggregation::kTurn;
};

// 1 - levenshtein(a, b) / max(|a|, |b|); 1.0 for two empty strings.
double edit_similarity(std::string_view a, std::string_view b);

// EXACT: case-insensitive equality after trimming, against any alternative.
// FUZZY: edit similarity >= threshold on the folded strings, non-categorical
// slots only; categorical slots always use EXACT.
bool value_match(std::string_view predicted, std::span<const std::string> gold_alternatives,
                 const SlotDef& slot, MatchMode mode, double threshold = kDefaultFuzzyThreshold);

// A (domain, slot) where prediction and gold disagree. Empty `gold` means
// the pair is absent from the gold state.
struct SlotDiff {
  SlotKey key;
  std::optional<std::string> predicted;
  std::vector<std::string> gold;

  bool operator==(const SlotDiff&) const = default;
};

struct TurnResult {
  std::string dialogue_id;
  int turn_index = 0;
  bool correct = false;
  bool cat_correct = false;
  bool noncat_correct = false;
  std::map<std::string, bool> domain_correct;
  std::optional<ErrorCategory> category;  // set iff !correct
  std::vector<SlotDiff> diffs;
  DialogueState predicted;
  DialogueState gold;

  std::string id() const { return dialogue_id + "#" + std::to_string(turn_index); }
};

struct EvalReport {
  double jga = 0.0;
  double cat_jga = 0.0;
  double noncat_jga = 0.0;
  std::map<std::string, double> per_domain_jga;
  std::size_t turns_evaluated = 0;
  std::size_t frames_evaluated = 0;  // kFrame aggregation only
  std::map<ErrorCategory, std::size_t> error_counts;
  EvalOptions options;
  std::vector<TurnResult> turns;  // gold corpus order
};

// Classifies the disagreement of one incorrect turn.
ErrorCategory classify_turn(std::span<const SlotDiff> diffs);

// Joint goal accuracy with categorical/non-categorical/per-domain
// restrictions. Requires exactly one prediction per gold user turn and
// throws an evaluation error otherwise. Restrictions with no slots are
// vacuously correct.
EvalReport jga(std::span<const TurnPrediction> predictions, std::span<const Dialogue> gold,
               const Schema& schema, const EvalOptions& options = {});

struct CategoryStats {
  std::size_t count = 0;
  double fraction = 0.0;  // over all erroneous turns
  std::vector<std::string> turn_ids;
};

std::map<ErrorCategory, CategoryStats> categorize_errors(const EvalReport& report);
std::map<ErrorCategory, CategoryStats> categorize_errors(std::span<const TurnPrediction> predictions,
                                                         std::span<const Dialogue> gold,
                                                         const Schema& schema,
                                                         const EvalOptions& options = {});

struct SlotComparison {
  SlotKey key;
  std::optional<std::string> a;
  std::optional<std::string> b;
  std::optional<std::string> gold;
};

struct TurnComparison {
  std::string turn_id;
  std::vector<SlotComparison> slots;  // pairs where A and B differ
};

struct RunDiff {
  std::vector<TurnComparison> a_only_correct;
  std::vector<TurnComparison> b_only_correct;
};

// Turns one run gets right and the other does not. Throws an evaluation
// error when the runs were scored on different turns.
RunDiff compare_runs(const EvalReport& a, const EvalReport& b);

// Structured report: the EvalReport fields, error breakdown, per-turn
// results and the caller's metadata object.
nlohmann::ordered_json report_to_json(const EvalReport& report, const nlohmann::ordered_json& metadata);
EvalReport report_from_json(const nlohmann::json& j);

// Table rows "label  JGA  CAT  NON-CAT" in percent, followed by the
// per-domain and error-category breakdowns.
std::string summary_table(const EvalReport& report, std::string_view label);

std::string format_run_diff(const RunDiff& diff, std::string_view label_a, std::string_view label_b);

}  // namespace dstkit
