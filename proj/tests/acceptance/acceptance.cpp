// Runs every primary acceptance criterion and prints one PASS/FAIL/SKIP line
// per criterion. Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dstkit/evalkit.hpp"
#include "dstkit/hashing.hpp"
#include "dstkit/prompting.hpp"
#include "dstkit/run.hpp"
#include "eval_fixtures.hpp"
#include "test_support.hpp"

using namespace dstkit;
namespace fs = std::filesystem;

namespace {

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

// Collects failed checks of one criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  Outcome outcome(const std::string& pass_detail) const {
    if (failures_.empty()) return {Status::kPass, pass_detail};
    std::string detail = failures_.front();
    if (failures_.size() > 1) detail += " (+" + std::to_string(failures_.size() - 1) + " more)";
    return {Status::kFail, detail};
  }

 private:
  std::vector<std::string> failures_;
};

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

const Dialogue* find_dialogue(const std::vector<Dialogue>& all, const std::string& id) {
  for (const auto& d : all) {
    if (d.dialogue_id == id) return &d;
  }
  return nullptr;
}

RunConfig fixture_config(const fs::path& dialogues) {
  RunConfig c;
  c.dataset = Provenance::kMultiwoz22;
  c.schema_path = testing::mwoz_schema_path();
  c.dialogues_path = dialogues;
  return c;
}

Outcome oracle_round_trip() {
  Checker check;
  testing::TempDir dir;
  const auto start = std::chrono::steady_clock::now();
  std::size_t dialogues = 0;
  std::string scores;
  for (DecodingMode mode : {DecodingMode::kIndependent, DecodingMode::kSequential}) {
    RunConfig c = fixture_config(testing::fixtures_dir() / "mwoz");
    c.mode = mode;
    c.desc = DescriptionConfig::all_on();
    cmd_preprocess(c, dir / "ex.jsonl");
    const auto decoded = cmd_decode(c, dir / "ex.jsonl", dir / "pred.jsonl");
    const auto result = cmd_evaluate(c, dir / "pred.jsonl");
    dialogues = load_dialogues(c.dialogues_path, load_schema(c), c).size();
    const std::string tag(to_string(mode));
    check.expect(result.report.jga == 1.0, tag + " JGA " + fmt(result.report.jga));
    check.expect(result.filled_turns == 0, tag + " filled turns");
    check.expect(decoded.malformed_segments == 0, tag + " malformed segments");
    scores += tag + " JGA " + fmt(result.report.jga) + " over " + std::to_string(result.report.turns_evaluated) +
              " turns; ";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  check.expect(dialogues >= 20, "only " + std::to_string(dialogues) + " fixture dialogues");
  check.expect(seconds < 10.0, "took " + fmt(seconds) + " s");
  return check.outcome(scores + std::to_string(dialogues) + " dialogues, " + fmt(seconds) + " s");
}

Outcome serialization_golden() {
  Checker check;
  const Schema schema = testing::mwoz_schema();
  const auto test = testing::mwoz_split("test", schema);
  const auto independent = [&](const std::string& id, int turn, const SlotKey& key, const DescriptionConfig& desc) {
    const Dialogue* d = find_dialogue(test, id);
    if (d == nullptr) throw std::runtime_error("fixture dialogue missing: " + id);
    return serialize_independent(build_context(*d, turn), *schema.find_domain(key.domain), *schema.find_slot(key),
                                 gold_state_at(*d, turn), SegmentTokens{}, desc);
  };

  const PromptExample fig1 = independent("fx-test-fig1", 1, {"train", "day"}, {});
  check.expect(fig1.input_text == testing::golden("fig1_train_day.input.txt"), "train/day input differs");
  check.expect(fig1.target_text == testing::golden("fig1_train_day.target.txt"), "train/day target differs");
  check.expect(fig1.input_text.ends_with(" [domain] train [slot] day"), "train/day suffix structure");

  const PromptExample stars = independent("fx-test-hotel-stars", 5, {"hotel", "stars"}, DescriptionConfig::all_on());
  check.expect(stars.input_text == testing::golden("hotel_stars_full_desc.input.txt"), "hotel/stars input differs");
  check.expect(stars.target_text == testing::golden("hotel_stars_full_desc.target.txt"), "hotel/stars target differs");
  const auto domain_at = stars.input_text.rfind(" [domain] hotel ");
  const auto slot_at = stars.input_text.rfind(" [slot] stars ");
  check.expect(domain_at != std::string::npos && slot_at != std::string::npos && domain_at < slot_at,
               "hotel/stars suffix structure");
  return check.outcome("2 exemplars byte-exact");
}

Outcome sequential_round_trip() {
  Checker check;
  const Schema schema = testing::mwoz_schema();
  std::mt19937_64 rng(1000);
  std::size_t non_empty = 0;
  for (int i = 0; i < 1000; ++i) {
    const DialogueState s = testing::random_state(schema, rng, i % 10 == 0 ? 0.0 : 0.08);
    non_empty += !s.empty();
    const SequentialParse parsed = parse_sequential(sequential_target(schema, s, {}), schema, {});
    check.expect(parsed.state == s, "state " + std::to_string(i) + " did not round-trip");
    check.expect(parsed.malformed_segments == 0, "state " + std::to_string(i) + " had malformed segments");
  }
  return check.outcome("1000 states (" + std::to_string(non_empty) + " non-empty)");
}

Outcome metric_equivalence() {
  Checker check;
  const Schema schema = testing::small_schema();
  std::mt19937_64 rng(0xacce97);
  for (int i = 0; i < 100; ++i) {
    const auto c = testing::random_case(schema, rng);
    const EvalReport r = jga(c.predictions, c.gold, schema);
    const auto ref = testing::reference_scores(c.predictions, c.gold, schema);
    const std::string tag = "case " + std::to_string(i);
    check.expect(r.jga == ref.jga, tag + ": jga " + fmt(r.jga) + " vs reference " + fmt(ref.jga));
    check.expect(r.cat_jga == ref.cat, tag + ": cat_jga differs from reference");
    check.expect(r.noncat_jga == ref.noncat, tag + ": noncat_jga differs from reference");
    check.expect(r.per_domain_jga == ref.per_domain, tag + ": per-domain jga differs from reference");

    auto preds = testing::gold_predictions(c.gold);
    auto& victim = preds[rng() % preds.size()];
    const auto keys = schema.slot_keys();
    const SlotKey k = keys[rng() % keys.size()];
    if (victim.state.contains(k)) {
      victim.state.erase(k);
    } else {
      victim.state.set(k, "zzz");
    }
    const double n = static_cast<double>(preds.size());
    const EvalReport perturbed = jga(preds, c.gold, schema);
    check.expect(perturbed.jga == (n - 1.0) / n, tag + ": perturbed jga " + fmt(perturbed.jga));
    check.expect(std::abs((1.0 - perturbed.jga) - 1.0 / n) < 1e-12, tag + ": drop is not 1/turns");
  }
  return check.outcome("100 cases equal the reference; single errors drop exactly 1/turns");
}

Outcome breakdown_consistency() {
  Checker check;
  const Schema schema = testing::mwoz_schema();
  const auto test = testing::mwoz_split("test", schema);

  const EvalReport r = jga(testing::planted_error_predictions(test), test, schema);
  check.expect(r.jga == 17.0 / 20.0, "jga " + fmt(r.jga));
  check.expect(r.cat_jga == 19.0 / 20.0, "cat_jga " + fmt(r.cat_jga));
  check.expect(r.noncat_jga == 18.0 / 20.0, "noncat_jga " + fmt(r.noncat_jga));
  check.expect(r.per_domain_jga.at("train") == 17.0 / 20.0, "train jga " + fmt(r.per_domain_jga.at("train")));
  for (const char* d : {"hotel", "attraction", "restaurant", "taxi", "bus"}) {
    check.expect(r.per_domain_jga.at(d) == 1.0, std::string(d) + " jga " + fmt(r.per_domain_jga.at(d)));
  }
  std::size_t wrong = 0;
  for (const auto& t : r.turns) wrong += !t.correct;
  std::size_t counted = 0;
  for (const auto& [category, n] : r.error_counts) counted += n;
  check.expect(counted == wrong, "error counts sum to " + std::to_string(counted) + ", not " + std::to_string(wrong));
  check.expect(r.error_counts.at(ErrorCategory::kMissedSlot) == 1, "missed count");
  check.expect(r.error_counts.at(ErrorCategory::kWrongValue) == 2, "wrong-value count");

  struct Case {
    const char* dialogue;
    int turn;
    std::function<void(DialogueState&)> edit;
    ErrorCategory expected;
  };
  const std::vector<Case> cases = {
      {"fx-test-table5-arriveby", 3, [](DialogueState& s) { s.erase({"train", "arriveby"}); },
       ErrorCategory::kMissedSlot},
      {"fx-test-table5-pm", 1, [](DialogueState& s) { s.set({"train", "arriveby"}, "04:45"); },
       ErrorCategory::kWrongValue},
      {"fx-test-table5-typo", 1, [](DialogueState& s) { s.set({"train", "destination"}, "london kings street"); },
       ErrorCategory::kWrongValue},
      {"fx-test-table6-annotation", 2,
       [](DialogueState& s) {
         s.set({"restaurant", "name"}, "yippee noodle bar");
         s.set({"restaurant", "pricerange"}, "moderate");
         s.set({"restaurant", "area"}, "centre");
       },
       ErrorCategory::kSpuriousSlot},
      {"fx-test-table6-sysinfo", 2,
       [](DialogueState& s) {
         s.erase({"train", "arriveby"});
         s.erase({"train", "leaveat"});
       },
       ErrorCategory::kMissedSlot},
      {"fx-test-table6-nightclub", 2, [](DialogueState& s) { s.erase({"attraction", "name"}); },
       ErrorCategory::kMissedSlot},
      {"fx-test-table6-italian", 2, [](DialogueState& s) { s.set({"restaurant", "pricerange"}, "expensive"); },
       ErrorCategory::kWrongValue},
  };
  for (const auto& c : cases) {
    auto preds = testing::gold_predictions(test);
    testing::edit_prediction(preds, c.dialogue, c.turn, c.edit);
    const EvalReport single = jga(preds, test, schema);
    std::optional<ErrorCategory> got;
    for (const auto& t : single.turns) {
      if (t.dialogue_id == c.dialogue && t.turn_index == c.turn) got = t.category;
    }
    const std::string id = std::string(c.dialogue) + "#" + std::to_string(c.turn);
    check.expect(got == c.expected, id + " classified as " + (got ? std::string(to_string(*got)) : "correct") +
                                        ", expected " + std::string(to_string(c.expected)));
  }
  return check.outcome("planted breakdown matches; " + std::to_string(cases.size()) + " worked turns classified");
}

Outcome stats_case(const char* env, Provenance dataset, const fs::path& schema, std::size_t dialogues,
                   std::size_t turns, double avg) {
  const char* dir = std::getenv(env);
  if (dir == nullptr || *dir == '\0') return {Status::kSkip, std::string(env) + " not set"};
  RunConfig c;
  c.dataset = dataset;
  c.schema_path = schema.empty() ? fs::path(dir) / "schema.json" : schema;
  c.dialogues_path = dir;
  const StatsResult s = cmd_stats(c);
  Checker check;
  check.expect(s.corpus.dialogues == dialogues, "dialogues " + std::to_string(s.corpus.dialogues));
  check.expect(s.corpus.total_turns == turns, "turns " + std::to_string(s.corpus.total_turns));
  check.expect(std::abs(s.corpus.avg_turns_per_dialogue - avg) <= 0.01 + 1e-9,
               "avg turns " + fmt(s.corpus.avg_turns_per_dialogue));
  return check.outcome(std::to_string(s.corpus.dialogues) + " dialogues, " + std::to_string(s.corpus.total_turns) +
                       " turns, avg " + fmt(s.corpus.avg_turns_per_dialogue));
}

Outcome stats_multiwoz() {
  return stats_case("DSTKIT_MULTIWOZ22_DIR", Provenance::kMultiwoz22, {}, 10438, 143004, 13.70);
}

Outcome stats_m2m() {
  return stats_case("DSTKIT_M2M_DIR", Provenance::kM2M, testing::data_dir() / "m2m" / "schema.json", 3008, 27120, 9.01);
}

Outcome determinism() {
  Checker check;
  testing::TempDir dir;
  testing::write_text(dir / "desc.tsv",
                      "train\tday\tday of the train\n"
                      "train\tday\tday of travel\n"
                      "train\tarriveby\tarrival time of the train\n"
                      "train\tarriveby\twhen the train should arrive\n"
                      "hotel\t\thotel reservations and vacation stays\n"
                      "hotel\t\tplaces to stay\n");
  for (DecodingMode mode : {DecodingMode::kIndependent, DecodingMode::kSequential}) {
    RunConfig c = fixture_config(testing::fixtures_dir() / "mwoz");
    c.mode = mode;
    c.descriptions_path = dir / "desc.tsv";
    c.desc = DescriptionConfig::all_on(7);
    const auto a = cmd_preprocess(c, dir / "a.jsonl");
    const auto b = cmd_preprocess(RunConfig(c), dir / "b.jsonl");
    check.expect(a.content_hash == b.content_hash, std::string(to_string(mode)) + " hashes differ");
    check.expect(a.content_hash == sha256_file_hex(dir / "b.jsonl"), "reported hash is not the file hash");
  }

  const DescriptionTable table = read_description_table(dir / "desc.tsv");
  const Schema base = parse_schema(testing::mwoz_schema_path(), Provenance::kMultiwoz22);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Schema first = resolve_descriptions(base, &table, DescriptionConfig::all_on(seed));
    const Schema second = resolve_descriptions(base, &table, DescriptionConfig::all_on(seed));
    check.expect(first.canonical_json() == second.canonical_json(),
                 "seed " + std::to_string(seed) + " resolved differently");
    for (const SlotKey& key : {SlotKey{"train", "day"}, SlotKey{"train", "arriveby"}, SlotKey{"hotel", ""}}) {
      check.expect(sample_index(seed, key, 2) == sample_index(seed, key, 2), "sample_index unstable");
    }
  }
  return check.outcome("identical hashes in both modes; 50 seeds resolve identically");
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"oracle-round-trip", oracle_round_trip},
      {"serialization-golden", serialization_golden},
      {"sequential-round-trip", sequential_round_trip},
      {"metric-oracle-equivalence", metric_equivalence},
      {"breakdown-consistency", breakdown_consistency},
      {"stats-multiwoz22", stats_multiwoz},
      {"stats-m2m", stats_m2m},
      {"determinism", determinism},
  };

  log::ScopedSink quiet([](std::string_view, std::string_view) {});
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    failed += o.status == Status::kFail;
    std::cout << tag << "  " << c.name << "  " << o.detail << "\n";
  }
  std::cout << (failed == 0 ? "all criteria passed or skipped" : std::to_string(failed) + " criterion(s) failed")
            << "\n";
  return failed == 0 ? 0 : 1;
}
