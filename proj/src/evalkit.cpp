#include "dstkit/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "dstkit/error.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "evalkit";

[[noreturn]] void fail(const std::string& message) {
  throw Error(ErrorKind::kEvaluation, std::string(kModule), message);
}

using TurnId = std::pair<std::string, int>;

double fraction(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
  return buf;
}

TurnResult score_turn(const std::string& dialogue_id, int turn_index, const DialogueState& predicted,
                      const GoldState& gold, const Schema& schema, const EvalOptions& options) {
  TurnResult r;
  r.dialogue_id = dialogue_id;
  r.turn_index = turn_index;
  r.predicted = predicted;
  r.gold = gold.state;
  r.cat_correct = true;
  r.noncat_correct = true;
  for (const DomainDef& domain : schema.domains()) {
    bool domain_ok = true;
    for (const SlotDef& slot : domain.slots) {
      const SlotKey key{domain.name, slot.name};
      const std::vector<std::string> alternatives = gold.alternatives_for(key);
      const std::string* value = predicted.find(key);
      bool ok = false;
      if (value == nullptr) {
        ok = alternatives.empty();
      } else if (!alternatives.empty()) {
        ok = value_match(*value, alternatives, slot, options.match_mode, options.fuzzy_threshold);
      }
      if (ok) continue;
      domain_ok = false;
      (slot.is_categorical ? r.cat_correct : r.noncat_correct) = false;
      r.diffs.push_back({key, value ? std::optional<std::string>(*value) : std::nullopt, alternatives});
    }
    r.domain_correct[domain.name] = domain_ok;
  }
  r.correct = r.diffs.empty();
  if (!r.correct) r.category = classify_turn(r.diffs);
  return r;
}

bool domain_active(const DialogueState& state, const std::string& domain) {
  for (const auto& [key, value] : state) {
    if (key.domain == domain) return true;
  }
  return false;
}

nlohmann::ordered_json state_to_json(const DialogueState& state) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& [key, value] : state) out.push_back({key.domain, key.slot, value});
  return out;
}

DialogueState state_from_json(const nlohmann::json& j) {
  DialogueState state;
  for (const auto& triple : j) {
    state.set({triple.at(0).get<std::string>(), triple.at(1).get<std::string>()},
              triple.at(2).get<std::string>());
  }
  return state;
}

std::optional<std::string> value_or_null(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<std::string>();
}

nlohmann::ordered_json optional_json(const std::optional<std::string>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json();
}

constexpr ErrorCategory kAllCategories[] = {ErrorCategory::kMissedSlot, ErrorCategory::kSpuriousSlot,
                                            ErrorCategory::kWrongValue, ErrorCategory::kMixed};

}  // namespace

std::string_view to_string(MatchMode mode) { return mode == MatchMode::kExact ? "exact" : "fuzzy"; }

std::string_view to_string(Aggregation aggregation) {
  return aggregation == Aggregation::kTurn ? "turn" : "frame";
}

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kMissedSlot:
      return "MISSED_SLOT";
    case ErrorCategory::kSpuriousSlot:
      return "SPURIOUS_SLOT";
    case ErrorCategory::kWrongValue:
      return "WRONG_VALUE";
    case ErrorCategory::kMixed:
      return "MIXED";
  }
  return "MIXED";
}

std::optional<MatchMode> parse_match_mode(std::string_view tag) {
  if (text::iequals(tag, "exact")) return MatchMode::kExact;
  if (text::iequals(tag, "fuzzy")) return MatchMode::kFuzzy;
  return std::nullopt;
}

std::optional<Aggregation> parse_aggregation(std::string_view tag) {
  if (text::iequals(tag, "turn")) return Aggregation::kTurn;
  if (text::iequals(tag, "frame")) return Aggregation::kFrame;
  return std::nullopt;
}

std::optional<ErrorCategory> parse_error_category(std::string_view tag) {
  for (ErrorCategory c : kAllCategories) {
    if (tag == to_string(c)) return c;
  }
  return std::nullopt;
}

double edit_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(a.size(), b.size());
  if (longest == 0) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t substitution = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, substitution});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) / static_cast<double>(longest);
}

bool value_match(std::string_view predicted, std::span<const std::string> gold_alternatives,
                 const SlotDef& slot, MatchMode mode, double threshold) {
  const std::string folded = text::to_lower(text::trim(predicted));
  for (const std::string& gold : gold_alternatives) {
    const std::string g = text::to_lower(text::trim(gold));
    if (folded == g) return true;
    if (mode == MatchMode::kFuzzy && !slot.is_categorical && edit_similarity(folded, g) >= threshold) {
      return true;
    }
  }
  return false;
}

ErrorCategory classify_turn(std::span<const SlotDiff> diffs) {
  bool missed = false;
  bool spurious = false;
  bool wrong = false;
  for (const auto& d : diffs) {
    if (!d.predicted) {
      missed = true;
    } else if (d.gold.empty()) {
      spurious = true;
    } else {
      wrong = true;
    }
  }
  const int kinds = int{missed} + int{spurious} + int{wrong};
  if (kinds != 1) return ErrorCategory::kMixed;
  if (missed) return ErrorCategory::kMissedSlot;
  if (spurious) return ErrorCategory::kSpuriousSlot;
  return ErrorCategory::kWrongValue;
}

EvalReport jga(std::span<const TurnPrediction> predictions, std::span<const Dialogue> gold,
               const Schema& schema, const EvalOptions& options) {
  std::map<TurnId, const TurnPrediction*> by_turn;
  for (const auto& p : predictions) {
    if (!by_turn.emplace(TurnId{p.dialogue_id, p.turn_index}, &p).second) {
      fail("duplicate prediction for " + p.dialogue_id + "#" + std::to_string(p.turn_index));
    }
  }

  EvalReport report;
  report.options = options;
  std::vector<std::string> missing;
  std::size_t consumed = 0;
  for (const Dialogue& dialogue : gold) {
    const int users = dialogue.num_user_turns();
    for (int t = 1; t <= users; ++t) {
      auto it = by_turn.find({dialogue.dialogue_id, t});
      if (it == by_turn.end()) {
        missing.push_back(dialogue.dialogue_id + "#" + std::to_string(t));
        continue;
      }
      ++consumed;
      report.turns.push_back(
          score_turn(dialogue.dialogue_id, t, it->second->state, gold_at(dialogue, t), schema, options));
    }
  }
  if (!missing.empty()) {
    fail(std::to_string(missing.size()) + " gold turn(s) without prediction, first: " + missing.front());
  }
  if (consumed != by_turn.size()) {
    std::set<TurnId> gold_turns;
    for (const auto& r : report.turns) gold_turns.insert({r.dialogue_id, r.turn_index});
    for (const auto& [id, p] : by_turn) {
      if (!gold_turns.contains(id)) {
        fail("prediction for turn not in gold corpus: " + id.first + "#" + std::to_string(id.second));
      }
    }
  }

  report.turns_evaluated = report.turns.size();
  for (const auto& r : report.turns) {
    if (r.category) ++report.error_counts[*r.category];
  }

  if (options.aggregation == Aggregation::kTurn) {
    std::size_t ok = 0, cat_ok = 0, noncat_ok = 0;
    std::map<std::string, std::size_t> domain_ok;
    for (const auto& r : report.turns) {
      ok += r.correct;
      cat_ok += r.cat_correct;
      noncat_ok += r.noncat_correct;
      for (const auto& [domain, correct] : r.domain_correct) domain_ok[domain] += correct;
    }
    const std::size_t n = report.turns_evaluated;
    report.jga = fraction(ok, n);
    report.cat_jga = fraction(cat_ok, n);
    report.noncat_jga = fraction(noncat_ok, n);
    for (const DomainDef& domain : schema.domains()) {
      report.per_domain_jga[domain.name] = fraction(domain_ok[domain.name], n);
    }
    return report;
  }

  std::size_t units = 0, ok = 0, cat_ok = 0, noncat_ok = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> domain_units;  // (correct, total)
  for (const auto& r : report.turns) {
    for (const DomainDef& domain : schema.domains()) {
      if (!domain_active(r.gold, domain.name) && !domain_active(r.predicted, domain.name)) continue;
      bool cat = true, noncat = true;
      for (const auto& d : r.diffs) {
        if (d.key.domain != domain.name) continue;
        (schema.find_slot(d.key)->is_categorical ? cat : noncat) = false;
      }
      const bool correct = r.domain_correct.at(domain.name);
      ++units;
      ok += correct;
      cat_ok += cat;
      noncat_ok += noncat;
      auto& [dc, dt] = domain_units[domain.name];
      dc += correct;
      ++dt;
    }
  }
  report.frames_evaluated = units;
  report.jga = fraction(ok, units);
  report.cat_jga = fraction(cat_ok, units);
  report.noncat_jga = fraction(noncat_ok, units);
  for (const auto& [domain, counts] : domain_units) {
    report.per_domain_jga[domain] = fraction(counts.first, counts.second);
  }
  return report;
}

std::map<ErrorCategory, CategoryStats> categorize_errors(const EvalReport& report) {
  std::map<ErrorCategory, CategoryStats> out;
  for (ErrorCategory c : kAllCategories) out[c];
  std::size_t erroneous = 0;
  for (const auto& r : report.turns) {
    if (!r.category) continue;
    ++erroneous;
    auto& stats = out[*r.category];
    ++stats.count;
    stats.turn_ids.push_back(r.id());
  }
  for (auto& [c, stats] : out) stats.fraction = fraction(stats.count, erroneous);
  return out;
}

std::map<ErrorCategory, CategoryStats> categorize_errors(std::span<const TurnPrediction> predictions,
                                                         std::span<const Dialogue> gold,
                                                         const Schema& schema,
                                                         const EvalOptions& options) {
  return categorize_errors(jga(predictions, gold, schema, options));
}

RunDiff compare_runs(const EvalReport& a, const EvalReport& b) {
  std::map<std::string, const TurnResult*> b_turns;
  for (const auto& r : b.turns) b_turns[r.id()] = &r;
  if (a.turns.size() != b.turns.size()) {
    fail("runs were evaluated on different turn sets (" + std::to_string(a.turns.size()) + " vs " +
         std::to_string(b.turns.size()) + " turns)");
  }
  RunDiff diff;
  for (const auto& ra : a.turns) {
    auto it = b_turns.find(ra.id());
    if (it == b_turns.end()) fail("turn " + ra.id() + " missing from second run");
    const TurnResult& rb = *it->second;
    if (ra.correct == rb.correct) continue;

    TurnComparison cmp;
    cmp.turn_id = ra.id();
    std::set<SlotKey> keys;
    for (const auto& [k, v] : ra.predicted) keys.insert(k);
    for (const auto& [k, v] : rb.predicted) keys.insert(k);
    for (const auto& [k, v] : ra.gold) keys.insert(k);
    for (const SlotKey& key : keys) {
      const std::string* va = ra.predicted.find(key);
      const std::string* vb = rb.predicted.find(key);
      const bool same = (va == nullptr && vb == nullptr) || (va && vb && *va == *vb);
      if (same) continue;
      const std::string* g = ra.gold.find(key);
      cmp.slots.push_back({key, va ? std::optional<std::string>(*va) : std::nullopt,
                           vb ? std::optional<std::string>(*vb) : std::nullopt,
                           g ? std::optional<std::string>(*g) : std::nullopt});
    }
    (ra.correct ? diff.a_only_correct : diff.b_only_correct).push_back(std::move(cmp));
  }
  return diff;
}

nlohmann::ordered_json report_to_json(const EvalReport& report, const nlohmann::ordered_json& metadata) {
  nlohmann::ordered_json j;
  j["metadata"] = metadata;
  j["match_mode"] = std::string(to_string(report.options.match_mode));
  j["fuzzy_threshold"] = report.options.fuzzy_threshold;
  j["aggregation"] = std::string(to_string(report.options.aggregation));
  j["jga"] = report.jga;
  j["cat_jga"] = report.cat_jga;
  j["noncat_jga"] = report.noncat_jga;
  j["per_domain_jga"] = nlohmann::ordered_json::object();
  for (const auto& [domain, v] : report.per_domain_jga) j["per_domain_jga"][domain] = v;
  j["turns_evaluated"] = report.turns_evaluated;
  j["frames_evaluated"] = report.frames_evaluated;
  const auto breakdown = categorize_errors(report);
  j["error_counts"] = nlohmann::ordered_json::object();
  j["error_fractions"] = nlohmann::ordered_json::object();
  for (const auto& [c, stats] : breakdown) {
    j["error_counts"][std::string(to_string(c))] = stats.count;
    j["error_fractions"][std::string(to_string(c))] = stats.fraction;
  }
  nlohmann::ordered_json turns = nlohmann::ordered_json::array();
  for (const auto& r : report.turns) {
    nlohmann::ordered_json t;
    t["dialogue_id"] = r.dialogue_id;
    t["turn_index"] = r.turn_index;
    t["correct"] = r.correct;
    t["cat_correct"] = r.cat_correct;
    t["noncat_correct"] = r.noncat_correct;
    t["domain_correct"] = nlohmann::ordered_json::object();
    for (const auto& [domain, ok] : r.domain_correct) t["domain_correct"][domain] = ok;
    t["category"] = r.category ? nlohmann::ordered_json(std::string(to_string(*r.category)))
                               : nlohmann::ordered_json();
    nlohmann::ordered_json diffs = nlohmann::ordered_json::array();
    for (const auto& d : r.diffs) {
      diffs.push_back({{"domain", d.key.domain},
                       {"slot", d.key.slot},
                       {"predicted", optional_json(d.predicted)},
                       {"gold", d.gold}});
    }
    t["diffs"] = std::move(diffs);
    t["predicted"] = state_to_json(r.predicted);
    t["gold"] = state_to_json(r.gold);
    turns.push_back(std::move(t));
  }
  j["turns"] = std::move(turns);
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport report;
    report.options.match_mode = parse_match_mode(j.at("match_mode").get<std::string>()).value();
    report.options.fuzzy_threshold = j.at("fuzzy_threshold").get<double>();
    report.options.aggregation = parse_aggregation(j.at("aggregation").get<std::string>()).value();
    report.jga = j.at("jga").get<double>();
    report.cat_jga = j.at("cat_jga").get<double>();
    report.noncat_jga = j.at("noncat_jga").get<double>();
    for (const auto& [domain, v] : j.at("per_domain_jga").items()) report.per_domain_jga[domain] = v.get<double>();
    report.turns_evaluated = j.at("turns_evaluated").get<std::size_t>();
    report.frames_evaluated = j.value("frames_evaluated", std::size_t{0});
    for (const auto& [name, count] : j.at("error_counts").items()) {
      auto c = parse_error_category(name);
      if (c && count.get<std::size_t>() > 0) report.error_counts[*c] = count.get<std::size_t>();
    }
    for (const auto& t : j.at("turns")) {
      TurnResult r;
      r.dialogue_id = t.at("dialogue_id").get<std::string>();
      r.turn_index = t.at("turn_index").get<int>();
      r.correct = t.at("correct").get<bool>();
      r.cat_correct = t.at("cat_correct").get<bool>();
      r.noncat_correct = t.at("noncat_correct").get<bool>();
      for (const auto& [domain, ok] : t.at("domain_correct").items()) r.domain_correct[domain] = ok.get<bool>();
      if (!t.at("category").is_null()) r.category = parse_error_category(t.at("category").get<std::string>());
      for (const auto& d : t.at("diffs")) {
        r.diffs.push_back({{d.at("domain").get<std::string>(), d.at("slot").get<std::string>()},
                           value_or_null(d.at("predicted")),
                           d.at("gold").get<std::vector<std::string>>()});
      }
      r.predicted = state_from_json(t.at("predicted"));
      r.gold = state_from_json(t.at("gold"));
      report.turns.push_back(std::move(r));
    }
    return report;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::kInput, std::string(kModule), std::string("malformed report: ") + e.what());
  }
}

std::string summary_table(const EvalReport& report, std::string_view label) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-32s %7s %7s %8s\n", "Model", "JGA", "CAT", "NON-CAT");
  out << line;
  std::snprintf(line, sizeof(line), "%-32.32s %7s %7s %8s\n", std::string(label).c_str(),
                percent(report.jga).c_str(), percent(report.cat_jga).c_str(),
                percent(report.noncat_jga).c_str());
  out << line;
  out << "\nturns evaluated: " << report.turns_evaluated << " (aggregation "
      << to_string(report.options.aggregation) << ", match " << to_string(report.options.match_mode);
  if (report.options.match_mode == MatchMode::kFuzzy) out << " >= " << report.options.fuzzy_threshold;
  out << ")\n";
  if (report.options.aggregation == Aggregation::kFrame) {
    out << "frames evaluated: " << report.frames_evaluated << "\n";
  }
  out << "\nper-domain JGA\n";
  for (const auto& [domain, v] : report.per_domain_jga) {
    std::snprintf(line, sizeof(line), "  %-30s %7s\n", domain.c_str(), percent(v).c_str());
    out << line;
  }
  const auto breakdown = categorize_errors(report);
  std::size_t erroneous = 0;
  for (const auto& [c, stats] : breakdown) erroneous += stats.count;
  out << "\nerrors (" << erroneous << " turns)\n";
  for (const auto& [c, stats] : breakdown) {
    std::snprintf(line, sizeof(line), "  %-30s %7zu %7s%%\n", std::string(to_string(c)).c_str(),
                  stats.count, percent(stats.fraction).c_str());
    out << line;
  }
  return out.str();
}

std::string format_run_diff(const RunDiff& diff, std::string_view label_a, std::string_view label_b) {
  std::ostringstream out;
  auto show = [](const std::optional<std::string>& v) { return v ? "(" + *v + ")" : std::string("-"); };
  auto section = [&](const std::vector<TurnComparison>& turns, std::string_view good, std::string_view bad) {
    out << "correct in " << good << " only, wrong in " << bad << ": " << turns.size() << " turn(s)\n";
    for (const auto& t : turns) {
      out << "  " << t.turn_id << "\n";
      for (const auto& s : t.slots) {
        out << "    " << s.key.domain << ", " << s.key.slot << ": " << label_a << " " << show(s.a) << "  "
            << label_b << " " << show(s.b) << "  gold " << show(s.gold) << "\n";
      }
    }
  };
  section(diff.a_only_correct, label_a, label_b);
  section(diff.b_only_correct, label_b, label_a);
  return out.str();
}

}  // namespace dstkit
