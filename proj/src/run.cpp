#include "dstkit/run.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "dstkit/error.hpp"
#include "dstkit/hashing.hpp"
#include "dstkit/log.hpp"
#include "dstkit/state.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "cli";
constexpr std::size_t kDecodeChunk = 256;

[[noreturn]] void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(kModule), message);
}

std::filesystem::path temp_path(const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

void commit(const std::filesystem::path& tmp, const std::filesystem::path& path) {
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::kInput, "cannot write " + path.string() + ": " + ec.message());
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string join_set(const std::set<std::string>& items) {
  return text::join(std::vector<std::string>(items.begin(), items.end()), ",");
}

std::unordered_map<std::string, std::string> read_journal(const std::filesystem::path& path) {
  std::unordered_map<std::string, std::string> done;
  std::ifstream in(path, std::ios::binary);
  if (!in) return done;
  std::string line;
  std::size_t torn = 0;
  while (std::getline(in, line)) {
    if (text::is_blank(line)) continue;
    try {
      auto j = nlohmann::json::parse(line);
      done[j.at("id").get<std::string>()] = j.at("output").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      ++torn;
    }
  }
  if (torn > 0) log::warn(kModule, path.string() + ": ignored " + std::to_string(torn) + " unreadable journal line(s)");
  return done;
}

std::unique_ptr<Backend> make_backend(const RunConfig& config, const std::vector<PromptExample>& examples) {
  switch (config.backend) {
    case BackendKind::kOracle:
      return oracle_backend(build_gold_index(examples));
    case BackendKind::kExtractive: {
      Schema schema = load_schema(config);
      Gazetteer gazetteer;
      if (config.train_dialogues_path) {
        gazetteer = build_gazetteer(load_dialogues(*config.train_dialogues_path, schema, config));
      } else {
        log::warn(kModule, "no training dialogues given; non-categorical slots will decode to none");
      }
      return extractive_backend(std::move(schema), std::move(gazetteer), config.tokens);
    }
    case BackendKind::kRemote: {
      RemoteOptions options;
      options.endpoint = config.endpoint.value_or("");
      options.timeout = config.timeout;
      options.max_in_flight = config.max_in_flight;
      return remote_backend(std::move(options));
    }
  }
  fail(ErrorKind::kInput, "unknown backend");
}

}  // namespace

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::kOracle:
      return "oracle";
    case BackendKind::kExtractive:
      return "extractive";
    case BackendKind::kRemote:
      return "remote";
  }
  return "oracle";
}

std::optional<BackendKind> parse_backend_kind(std::string_view tag) {
  for (BackendKind k : {BackendKind::kOracle, BackendKind::kExtractive, BackendKind::kRemote}) {
    if (text::iequals(tag, to_string(k))) return k;
  }
  return std::nullopt;
}

std::set<std::string> RunConfig::effective_exclusions() const {
  return excluded_domains ? *excluded_domains : default_excluded_domains(dataset);
}

void RunConfig::validate() const {
  if (backend == BackendKind::kRemote && (!endpoint || endpoint->empty())) {
    fail(ErrorKind::kInput, "the remote backend needs an endpoint (--endpoint or DSTKIT_ENDPOINT)");
  }
  if (max_output_tokens < 1) fail(ErrorKind::kInput, "max output tokens must be positive");
  if (max_in_flight < 1) fail(ErrorKind::kInput, "max in flight must be at least 1");
  if (fuzzy_threshold <= 0.0 || fuzzy_threshold > 1.0) fail(ErrorKind::kInput, "fuzzy threshold must be in (0, 1]");
  tokens.validate();
}

Schema load_schema(const RunConfig& config) {
  if (config.schema_path.empty()) fail(ErrorKind::kInput, "no schema given");
  Schema schema = parse_schema(config.schema_path, config.dataset);
  std::optional<DescriptionTable> overrides;
  if (config.descriptions_path) overrides = read_description_table(*config.descriptions_path);
  schema = resolve_descriptions(schema, overrides ? &*overrides : nullptr, config.desc);
  return filter_domains(schema, config.effective_exclusions());
}

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path, const Schema& schema,
                                     const RunConfig& config) {
  ParseOptions options;
  options.excluded_domains = config.effective_exclusions();
  if (config.dataset == Provenance::kM2M) return import_m2m(path, schema, "", options);
  return parse_dialogues(path, schema, options);
}

PreprocessResult cmd_preprocess(const RunConfig& config, const std::filesystem::path& out) {
  config.validate();
  const Schema schema = load_schema(config);
  const auto dialogues = load_dialogues(config.dialogues_path, schema, config);

  const auto collisions = find_token_collisions(dialogues, config.tokens);
  if (!collisions.empty()) {
    fail(ErrorKind::kValidation, std::to_string(collisions.size()) +
                                     " utterance(s) contain a segment token, first: " + collisions.front());
  }
  const auto oov = find_out_of_vocabulary_targets(dialogues, schema);
  if (!oov.empty()) {
    log::warn(kModule, std::to_string(oov.size()) +
                           " categorical target(s) outside the value list, first: " + oov.front());
  }

  const auto tmp = temp_path(out);
  std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
  if (!file) fail(ErrorKind::kInput, "cannot write " + out.string());
  Sha256 hash;
  PreprocessResult result;
  std::size_t long_targets = 0;
  for_each_example(dialogues, schema, config.mode, config.tokens, config.desc, [&](PromptExample&& ex) {
    if (text::split_whitespace(ex.target_text).size() > static_cast<std::size_t>(config.max_output_tokens)) {
      ++long_targets;
    }
    std::string line = example_to_jsonl(ex);
    line.push_back('\n');
    file << line;
    hash.update(line);
    ++result.examples;
  });
  file.close();
  if (!file) fail(ErrorKind::kInput, "write failed for " + out.string());
  commit(tmp, out);
  if (long_targets > 0) {
    log::warn(kModule, std::to_string(long_targets) + " target(s) exceed " +
                           std::to_string(config.max_output_tokens) + " tokens");
  }
  result.content_hash = hash.hex_digest();
  return result;
}

std::filesystem::path journal_path(const std::filesystem::path& predictions) {
  std::filesystem::path p = predictions;
  p += ".journal";
  return p;
}

DecodeResult cmd_decode(const RunConfig& config, const std::filesystem::path& examples_path,
                        const std::filesystem::path& predictions_path) {
  config.validate();
  const auto examples = read_examples(examples_path);
  auto backend = make_backend(config, examples);
  return cmd_decode(config, examples_path, predictions_path, *backend);
}

DecodeResult cmd_decode(const RunConfig& config, const std::filesystem::path& examples_path,
                        const std::filesystem::path& predictions_path, const Backend& backend) {
  const auto examples = read_examples(examples_path);
  if (examples.empty()) fail(ErrorKind::kInput, examples_path.string() + " contains no examples");
  const DecodingMode mode = examples.front().mode;
  {
    std::unordered_set<std::string> ids;
    for (const auto& ex : examples) {
      if (ex.mode != mode) fail(ErrorKind::kValidation, examples_path.string() + " mixes decoding modes");
      if (!ids.insert(ex.id()).second) {
        fail(ErrorKind::kValidation, examples_path.string() + ": duplicate example id " + ex.id());
      }
    }
  }
  const Schema schema = load_schema(config);

  const auto journal = journal_path(predictions_path);
  auto done = read_journal(journal);
  DecodeResult result;
  result.examples = examples.size();

  std::vector<DecodeRequest> pending;
  for (const auto& ex : examples) {
    if (done.contains(ex.id())) {
      ++result.resumed;
    } else {
      pending.push_back(make_request(ex, config.max_output_tokens));
    }
  }
  if (result.resumed > 0) {
    log::warn(kModule, "resuming from " + journal.string() + " with " + std::to_string(result.resumed) +
                           " completed request(s)");
  }

  std::ofstream log_out(journal, std::ios::binary | std::ios::app);
  if (!log_out) fail(ErrorKind::kInput, "cannot write journal " + journal.string());
  for (std::size_t start = 0; start < pending.size(); start += kDecodeChunk) {
    const std::size_t end = std::min(pending.size(), start + kDecodeChunk);
    const auto responses =
        decode_batch(backend, std::span<const DecodeRequest>(pending.data() + start, end - start));
    for (const auto& r : responses) {
      nlohmann::ordered_json j;
      j["id"] = r.request_id;
      j["output"] = r.output_text;
      log_out << j.dump() << '\n';
      done[r.request_id] = r.output_text;
    }
    log_out.flush();
    if (!log_out) fail(ErrorKind::kInput, "write failed for journal " + journal.string());
  }
  log_out.close();

  std::vector<TurnPrediction> predictions;
  if (mode == DecodingMode::kIndependent) {
    std::vector<SlotResponse> responses;
    responses.reserve(examples.size());
    for (const auto& ex : examples) {
      responses.push_back({ex.dialogue_id, ex.turn_index, *ex.key(), done.at(ex.id())});
    }
    predictions = assemble_independent(responses, schema);
  } else {
    std::vector<TurnResponse> responses;
    responses.reserve(examples.size());
    for (const auto& ex : examples) responses.push_back({ex.dialogue_id, ex.turn_index, done.at(ex.id())});
    predictions = assemble_sequential(responses, schema, config.tokens);
  }
  for (const auto& p : predictions) result.malformed_segments += static_cast<std::size_t>(p.malformed_segments);
  if (result.malformed_segments > 0) {
    log::warn(kModule, std::to_string(result.malformed_segments) + " malformed output segment(s) skipped");
  }
  result.turns = predictions.size();

  const auto tmp = temp_path(predictions_path);
  write_predictions(tmp, predictions, schema);
  commit(tmp, predictions_path);
  std::filesystem::remove(journal);
  return result;
}

EvaluateResult cmd_evaluate(const RunConfig& config, const std::filesystem::path& predictions_path) {
  config.validate();
  const Schema schema = load_schema(config);
  const auto dialogues = load_dialogues(config.dialogues_path, schema, config);
  auto predictions = read_predictions(predictions_path, schema);

  EvaluateResult result;
  std::set<std::pair<std::string, int>> present;
  for (const auto& p : predictions) present.insert({p.dialogue_id, p.turn_index});
  for (const Dialogue& d : dialogues) {
    for (int t = 1; t <= d.num_user_turns(); ++t) {
      if (present.contains({d.dialogue_id, t})) continue;
      predictions.push_back({d.dialogue_id, t, {}, 0});
      ++result.filled_turns;
    }
  }
  if (result.filled_turns > 0) {
    log::warn(kModule, std::to_string(result.filled_turns) + " gold turn(s) have no prediction rows; scored as empty");
  }

  result.report = jga(predictions, dialogues, schema, config.eval_options());

  nlohmann::ordered_json metadata;
  metadata["dataset"] = std::string(to_string(config.dataset));
  metadata["schema_hash"] = sha256_hex(schema.canonical_json());
  metadata["corpus_hash"] = corpus_hash(dialogues);
  metadata["predictions_hash"] = sha256_file_hex(predictions_path);
  metadata["excluded_domains"] = join_set(config.effective_exclusions());
  metadata["match_mode"] = std::string(to_string(config.match_mode));
  metadata["fuzzy_threshold"] = config.fuzzy_threshold;
  metadata["aggregation"] = std::string(to_string(config.aggregation));
  metadata["tokenizer"] = "whitespace";
  metadata["filled_turns"] = result.filled_turns;
  metadata["timestamp"] = utc_timestamp();
  result.report_json = report_to_json(result.report, metadata);
  result.summary = summary_table(result.report, predictions_path.filename().string());
  return result;
}

void write_report(const EvaluateResult& result, const std::filesystem::path& report_path) {
  {
    std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::kInput, "cannot write " + report_path.string());
    out << result.report_json.dump(2) << '\n';
  }
  std::filesystem::path summary_path = report_path;
  summary_path += ".summary.txt";
  std::ofstream out(summary_path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kInput, "cannot write " + summary_path.string());
  out << result.summary;
}

EvalReport read_report(const std::filesystem::path& report_path) {
  std::ifstream in(report_path, std::ios::binary);
  if (!in) fail(ErrorKind::kInput, "cannot open report " + report_path.string());
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kInput, report_path.string() + ": " + e.what());
  }
}

StatsResult cmd_stats(const RunConfig& config) {
  if (config.schema_path.empty()) fail(ErrorKind::kInput, "no schema given");
  const Schema full = parse_schema(config.schema_path, config.dataset);
  const Schema filtered = filter_domains(full, config.effective_exclusions());
  std::vector<Dialogue> dialogues;
  if (config.dataset == Provenance::kM2M) {
    dialogues = import_m2m(config.dialogues_path, full);
  } else {
    dialogues = parse_dialogues(config.dialogues_path, full);
  }
  StatsResult s;
  s.corpus = corpus_stats(dialogues);
  s.domains_all = full.domains().size();
  s.slots_all = full.num_slots();
  s.categorical_all = full.num_categorical();
  s.noncategorical_all = full.num_noncategorical();
  s.domains_filtered = filtered.domains().size();
  s.slots_filtered = filtered.num_slots();
  s.categorical_filtered = filtered.num_categorical();
  s.noncategorical_filtered = filtered.num_noncategorical();
  return s;
}

std::string format_stats(const StatsResult& s) {
  std::ostringstream out;
  char buf[64];
  out << "dialogues            " << s.corpus.dialogues << "\n";
  out << "total turns          " << s.corpus.total_turns << "\n";
  out << "user turns           " << s.corpus.user_turns << "\n";
  std::snprintf(buf, sizeof(buf), "%.2f", s.corpus.avg_turns_per_dialogue);
  out << "avg turns/dialogue   " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.2f", s.corpus.avg_tokens_per_turn);
  out << "avg tokens/turn      " << buf << " (" << s.corpus.tokenizer << " tokenizer)\n";
  out << "domains              " << s.domains_all << " (" << s.domains_filtered << " after exclusions)\n";
  out << "slots                " << s.slots_all << " (" << s.slots_filtered << " after exclusions)\n";
  out << "categorical slots    " << s.categorical_all << " (" << s.categorical_filtered << " after exclusions)\n";
  out << "non-categorical      " << s.noncategorical_all << " (" << s.noncategorical_filtered
      << " after exclusions)\n";
  return out.str();
}

}  // namespace dstkit
