#include "eval_fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <stdexcept>

namespace dstkit::testing {
namespace {

std::string normalize(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out;
  for (std::size_t i = b; i < e; ++i) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  return out;
}

const GoldState* gold_for_turn(const Dialogue& d, int turn) {
  int seen = 0;
  for (const auto& t : d.turns) {
    if (t.speaker == Speaker::kUser) {
      ++seen;
      if (seen == turn) return &*t.gold;
    }
  }
  return nullptr;
}

bool restricted_match(const DialogueState& pred, const GoldState& gold,
                      const std::function<bool(const SlotKey&)>& include) {
  std::set<SlotKey> keys;
  for (const auto& [k, v] : pred) keys.insert(k);
  for (const auto& [k, v] : gold.state) keys.insert(k);
  for (const SlotKey& k : keys) {
    if (!include(k)) continue;
    const std::string* p = pred.find(k);
    const std::vector<std::string> alts = gold.alternatives_for(k);
    if (p == nullptr && alts.empty()) continue;
    if (p == nullptr || alts.empty()) return false;
    bool any = false;
    for (const auto& a : alts) any = any || normalize(a) == normalize(*p);
    if (!any) return false;
  }
  return true;
}

Turn user_turn(GoldState gold) { return Turn{Speaker::kUser, "user says something", std::move(gold)}; }
Turn system_turn() { return Turn{Speaker::kSystem, "system replies", std::nullopt}; }

}  // namespace

std::vector<TurnPrediction> gold_predictions(const std::vector<Dialogue>& dialogues) {
  std::vector<TurnPrediction> out;
  for (const auto& d : dialogues) {
    int t = 0;
    for (const auto& turn : d.turns) {
      if (turn.speaker != Speaker::kUser) continue;
      out.push_back({d.dialogue_id, ++t, turn.gold->state, 0});
    }
  }
  return out;
}

void edit_prediction(std::vector<TurnPrediction>& predictions, const std::string& dialogue_id, int turn,
                     const std::function<void(DialogueState&)>& edit) {
  for (auto& p : predictions) {
    if (p.dialogue_id == dialogue_id && p.turn_index == turn) {
      edit(p.state);
      return;
    }
  }
  throw std::runtime_error("no prediction for " + dialogue_id + "#" + std::to_string(turn));
}

ReferenceScores reference_scores(const std::vector<TurnPrediction>& predictions,
                                 const std::vector<Dialogue>& gold, const Schema& schema) {
  std::size_t n = 0;
  std::size_t ok = 0;
  std::size_t cat_ok = 0;
  std::size_t noncat_ok = 0;
  std::map<std::string, std::size_t> domain_ok;
  auto is_cat = [&](const SlotKey& k) {
    const SlotDef* s = schema.find_slot(k);
    return s != nullptr && s->is_categorical;
  };
  for (const auto& d : gold) {
    for (int t = 1; gold_for_turn(d, t) != nullptr; ++t) {
      const GoldState& g = *gold_for_turn(d, t);
      const TurnPrediction* p = nullptr;
      for (const auto& candidate : predictions) {
        if (candidate.dialogue_id == d.dialogue_id && candidate.turn_index == t) p = &candidate;
      }
      if (p == nullptr) throw std::runtime_error("reference scorer: missing prediction");
      ++n;
      ok += restricted_match(p->state, g, [](const SlotKey&) { return true; });
      cat_ok += restricted_match(p->state, g, is_cat);
      noncat_ok += restricted_match(p->state, g, [&](const SlotKey& k) { return !is_cat(k); });
      for (const auto& domain : schema.domains()) {
        domain_ok[domain.name] +=
            restricted_match(p->state, g, [&](const SlotKey& k) { return k.domain == domain.name; });
      }
    }
  }
  ReferenceScores r;
  if (n == 0) return r;
  r.jga = static_cast<double>(ok) / static_cast<double>(n);
  r.cat = static_cast<double>(cat_ok) / static_cast<double>(n);
  r.noncat = static_cast<double>(noncat_ok) / static_cast<double>(n);
  for (const auto& domain : schema.domains()) {
    r.per_domain[domain.name] = static_cast<double>(domain_ok[domain.name]) / static_cast<double>(n);
  }
  return r;
}

Schema small_schema() {
  auto cat = [](std::string name, std::vector<std::string> values) {
    return SlotDef{std::move(name), std::nullopt, true, std::move(values)};
  };
  auto noncat = [](std::string name) { return SlotDef{std::move(name), std::nullopt, false, {}}; };
  std::vector<DomainDef> domains = {
      {"hotel", std::nullopt, {cat("area", {"north", "south", "centre"}), cat("stars", {"1", "2", "3"}), noncat("name")}},
      {"train", std::nullopt, {cat("day", {"monday", "friday"}), noncat("leaveat"), noncat("arriveby")}},
      {"taxi", std::nullopt, {noncat("destination")}},
  };
  return Schema(std::move(domains), Provenance::kCustom);
}

RandomCase random_case(const Schema& schema, std::mt19937_64& rng) {
  static const std::vector<std::string> free_values = {"a", "b c", "19:00", "dontcare", "the place"};
  auto pick = [&](const std::vector<std::string>& v) { return v[rng() % v.size()]; };
  auto value_for = [&](const SlotKey& k) {
    const SlotDef* s = schema.find_slot(k);
    return s->is_categorical ? pick(s->possible_values) : pick(free_values);
  };
  const auto keys = schema.slot_keys();

  RandomCase c;
  const int dialogues = 1 + static_cast<int>(rng() % 3);
  for (int di = 0; di < dialogues; ++di) {
    Dialogue d;
    d.dialogue_id = "r" + std::to_string(di);
    const int turns = 1 + static_cast<int>(rng() % 4);
    for (int t = 0; t < turns; ++t) {
      GoldState g;
      for (const auto& k : keys) {
        if (rng() % 3 != 0) continue;
        g.state.set(k, value_for(k));
        if (rng() % 5 == 0) {
          std::string other = value_for(k);
          if (other != *g.state.find(k)) g.alternatives[k] = {*g.state.find(k), other};
        }
      }
      if (t > 0) d.turns.push_back(system_turn());
      d.turns.push_back(user_turn(std::move(g)));
    }
    c.gold.push_back(std::move(d));
  }

  c.predictions = gold_predictions(c.gold);
  for (auto& p : c.predictions) {
    for (const auto& k : keys) {
      switch (rng() % 12) {
        case 0:
          p.state.erase(k);
          break;
        case 1:
          p.state.set(k, value_for(k));
          break;
        case 2:
          if (const std::string* v = p.state.find(k)) {
            std::string upper = *v;
            for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            p.state.set(k, " " + upper + " ");
          }
          break;
        default:
          break;
      }
    }
  }
  std::shuffle(c.predictions.begin(), c.predictions.end(), rng);
  return c;
}

std::vector<TurnPrediction> planted_error_predictions(const std::vector<Dialogue>& test_split) {
  auto preds = gold_predictions(test_split);
  edit_prediction(preds, "fx-test-table5-arriveby", 3, [](DialogueState& s) { s.erase({"train", "arriveby"}); });
  edit_prediction(preds, "fx-test-table5-pm", 1, [](DialogueState& s) { s.set({"train", "arriveby"}, "04:45"); });
  edit_prediction(preds, "fx-test-table5-typo", 1,
                  [](DialogueState& s) { s.set({"train", "destination"}, "london kings street"); });
  return preds;
}

}  // namespace dstkit::testing
