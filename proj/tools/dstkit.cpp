#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "dstkit/error.hpp"
#include "dstkit/run.hpp"
#include "dstkit/text.hpp"

namespace {

using dstkit::Error;
using dstkit::ErrorKind;

[[noreturn]] void usage_error(const std::string& message) { throw Error(ErrorKind::kInput, "cli", message); }

// Raw flag values; converted to a RunConfig once parsing succeeded.
struct Flags {
  std::string dataset = "multiwoz22";
  std::string schema;
  std::string dialogues;
  std::string descriptions;
  std::string mode = "independent";
  std::string desc = "none";
  std::uint64_t seed = 0;
  std::string backend = "oracle";
  std::string endpoint;
  std::string train_dialogues;
  std::string match_mode = "exact";
  double fuzzy_threshold = dstkit::kDefaultFuzzyThreshold;
  std::string aggregation = "turn";
  std::string exclude;
  int max_tokens = dstkit::kDefaultMaxOutputTokens;
  int timeout_ms = 30000;
  int max_in_flight = 8;
};

std::vector<std::string> comma_list(const std::string& value) {
  std::vector<std::string> out;
  for (const auto& part : dstkit::text::split(value, ',')) {
    auto trimmed = dstkit::text::trim(part);
    if (!trimmed.empty()) out.emplace_back(trimmed);
  }
  return out;
}

dstkit::RunConfig to_config(const Flags& f) {
  dstkit::RunConfig c;
  auto dataset = dstkit::parse_provenance(f.dataset);
  if (!dataset) usage_error("unknown dataset '" + f.dataset + "'");
  c.dataset = *dataset;
  c.schema_path = f.schema;
  c.dialogues_path = f.dialogues;
  if (!f.descriptions.empty()) c.descriptions_path = f.descriptions;
  auto mode = dstkit::parse_decoding_mode(f.mode);
  if (!mode) usage_error("unknown mode '" + f.mode + "'");
  c.mode = *mode;
  for (const auto& flag : comma_list(f.desc)) {
    if (flag == "domain") {
      c.desc.use_domain_desc = true;
    } else if (flag == "slot") {
      c.desc.use_slot_desc = true;
    } else if (flag == "values") {
      c.desc.use_value_list = true;
    } else if (flag != "none") {
      usage_error("unknown --desc flag '" + flag + "' (expected domain, slot, values or none)");
    }
  }
  c.desc.sampling_seed = f.seed;
  auto backend = dstkit::parse_backend_kind(f.backend);
  if (!backend) usage_error("unknown backend '" + f.backend + "'");
  c.backend = *backend;
  if (!f.endpoint.empty()) {
    c.endpoint = f.endpoint;
  } else if (const char* env = std::getenv("DSTKIT_ENDPOINT"); env != nullptr && *env != '\0') {
    c.endpoint = env;
  }
  if (!f.train_dialogues.empty()) c.train_dialogues_path = f.train_dialogues;
  auto match = dstkit::parse_match_mode(f.match_mode);
  if (!match) usage_error("unknown match mode '" + f.match_mode + "'");
  c.match_mode = *match;
  c.fuzzy_threshold = f.fuzzy_threshold;
  auto aggregation = dstkit::parse_aggregation(f.aggregation);
  if (!aggregation) usage_error("unknown aggregation '" + f.aggregation + "'");
  c.aggregation = *aggregation;
  if (!f.exclude.empty()) {
    std::set<std::string> excluded;
    for (const auto& d : comma_list(f.exclude)) {
      if (d != "none") excluded.insert(d);
    }
    c.excluded_domains = std::move(excluded);
  }
  c.max_output_tokens = f.max_tokens;
  c.timeout = std::chrono::milliseconds(f.timeout_ms);
  c.max_in_flight = f.max_in_flight;
  return c;
}

void add_data_options(CLI::App& cmd, Flags& f, bool dialogues_required) {
  cmd.add_option("--dataset", f.dataset, "multiwoz21, multiwoz22, m2m or custom")->capture_default_str();
  cmd.add_option("--schema", f.schema, "schema.json in SGD layout")->required();
  auto* d = cmd.add_option("--dialogues", f.dialogues, "dialogue file or directory");
  if (dialogues_required) d->required();
  cmd.add_option("--exclude", f.exclude, "comma-separated domains to drop, or none (default: dataset default)");
}

void add_prompt_options(CLI::App& cmd, Flags& f) {
  cmd.add_option("--descriptions", f.descriptions, "TSV of domain, slot, description candidates");
  cmd.add_option("--mode", f.mode, "independent or sequential")->capture_default_str();
  cmd.add_option("--desc", f.desc, "comma-separated subset of domain,slot,values, or none")->capture_default_str();
  cmd.add_option("--seed", f.seed, "seed for description sampling")->capture_default_str();
  cmd.add_option("--max-tokens", f.max_tokens, "maximum output tokens")->capture_default_str();
}

void add_eval_options(CLI::App& cmd, Flags& f) {
  cmd.add_option("--match-mode", f.match_mode, "exact or fuzzy")->capture_default_str();
  cmd.add_option("--fuzzy-threshold", f.fuzzy_threshold, "similarity threshold for fuzzy matching")
      ->capture_default_str();
  cmd.add_option("--aggregation", f.aggregation, "turn or frame")->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"dstkit: description-driven dialogue state tracking toolkit"};
  app.require_subcommand(1);
  Flags f;

  std::string out_path;
  std::string examples_path;
  std::string predictions_path;
  std::string report_path;
  std::string report_a;
  std::string report_b;
  std::string label_a = "A";
  std::string label_b = "B";
  double min_jga = -1.0;

  auto* preprocess = app.add_subcommand("preprocess", "expand dialogues into prompt/target examples");
  add_data_options(*preprocess, f, true);
  add_prompt_options(*preprocess, f);
  preprocess->add_option("--out", out_path, "examples file to write")->required();

  auto* decode = app.add_subcommand("decode", "run a decoder backend over an examples file");
  add_data_options(*decode, f, false);
  add_prompt_options(*decode, f);
  decode->add_option("--examples", examples_path, "examples file")->required();
  decode->add_option("--out", out_path, "predictions file to write")->required();
  decode->add_option("--backend", f.backend, "oracle, extractive or remote")->capture_default_str();
  decode->add_option("--endpoint", f.endpoint, "tcp://host:port, unix:///path or http://host:port");
  decode->add_option("--train-dialogues", f.train_dialogues, "training dialogues for the extractive gazetteer");
  decode->add_option("--timeout", f.timeout_ms, "per-request timeout in milliseconds")->capture_default_str();
  decode->add_option("--max-in-flight", f.max_in_flight, "concurrent remote requests")->capture_default_str();

  auto* evaluate = app.add_subcommand("evaluate", "score a predictions file");
  add_data_options(*evaluate, f, true);
  add_eval_options(*evaluate, f);
  evaluate->add_option("--predictions", predictions_path, "predictions file")->required();
  evaluate->add_option("--report", report_path, "report JSON to write");
  evaluate->add_option("--min-jga", min_jga, "fail with exit code 1 when JGA is below this value");

  auto* compare = app.add_subcommand("compare", "list turns one run gets right and the other does not");
  compare->add_option("--report-a", report_a, "first report")->required();
  compare->add_option("--report-b", report_b, "second report")->required();
  compare->add_option("--label-a", label_a, "name of the first run");
  compare->add_option("--label-b", label_b, "name of the second run");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  add_data_options(*stats, f, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dstkit::exit_code_for(ErrorKind::kInput);
  }

  if (*compare) {
    const auto diff = dstkit::compare_runs(dstkit::read_report(report_a), dstkit::read_report(report_b));
    std::cout << dstkit::format_run_diff(diff, label_a, label_b);
    return 0;
  }

  const dstkit::RunConfig config = to_config(f);
  if (*preprocess) {
    const auto result = dstkit::cmd_preprocess(config, out_path);
    std::cout << "examples " << result.examples << "\n";
    std::cout << "sha256 " << result.content_hash << "\n";
  } else if (*decode) {
    const auto result = dstkit::cmd_decode(config, examples_path, out_path);
    std::cout << "decoded " << result.examples << " example(s), " << result.resumed << " resumed, "
              << result.turns << " turn(s)\n";
  } else if (*evaluate) {
    const auto result = dstkit::cmd_evaluate(config, predictions_path);
    if (!report_path.empty()) dstkit::write_report(result, report_path);
    std::cout << result.summary;
    if (min_jga >= 0.0 && result.report.jga < min_jga) {
      std::cerr << "error: evaluate: JGA " << result.report.jga << " is below --min-jga " << min_jga << "\n";
      return dstkit::exit_code_for(ErrorKind::kEvaluation);
    }
  } else if (*stats) {
    std::cout << dstkit::format_stats(dstkit::cmd_stats(config));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dstkit::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dstkit::exit_code_for(ErrorKind::kInput);
  }
}
