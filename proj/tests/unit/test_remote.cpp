#include <doctest.h>

#include <chrono>
#include <cstdlib>

#include "dstkit/decoders.hpp"
#include "dstkit/error.hpp"
#include "service_double.hpp"
#include "test_support.hpp"

using namespace dstkit;
using namespace std::chrono_literals;
using testing::ServiceDouble;

namespace {

std::vector<PromptExample> fixture_examples() {
  const Schema schema = testing::mwoz_schema();
  return expand_examples(testing::mwoz_split("test", schema), schema, DecodingMode::kIndependent, {},
                         DescriptionConfig::all_on());
}

std::vector<DecodeRequest> requests_for(const std::vector<PromptExample>& examples, std::size_t limit) {
  std::vector<DecodeRequest> out;
  for (std::size_t i = 0; i < examples.size() && i < limit; ++i) out.push_back(make_request(examples[i]));
  return out;
}

RemoteOptions options_for(const std::string& endpoint, int max_in_flight = 4) {
  RemoteOptions o;
  o.endpoint = endpoint;
  o.max_in_flight = max_in_flight;
  o.timeout = 5000ms;
  o.initial_backoff = 10ms;
  return o;
}

void check_matches_gold(const std::vector<PromptExample>& examples, const std::vector<DecodeResponse>& responses) {
  REQUIRE(responses.size() <= examples.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    CHECK(responses[i].request_id == examples[i].id());
    CHECK(responses[i].output_text == examples[i].target_text);
  }
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

TEST_CASE("remote backend over TCP, unix socket and HTTP") {
  const auto examples = fixture_examples();
  const auto requests = requests_for(examples, 300);
  testing::TempDir dir;
  std::vector<std::unique_ptr<ServiceDouble>> services;
  services.push_back(ServiceDouble::tcp(testing::oracle_responder(build_gold_index(examples)), {}));
  services.push_back(
      ServiceDouble::unix_socket(dir / "svc.sock", testing::oracle_responder(build_gold_index(examples)), {}));
  services.push_back(ServiceDouble::http(testing::oracle_responder(build_gold_index(examples)), {}));
  for (const auto& svc : services) {
    CAPTURE(svc->endpoint());
    RemoteBackend backend(options_for(svc->endpoint()));
    const auto responses = decode_batch(backend, requests);
    check_matches_gold(examples, responses);
    CHECK(svc->requests() == static_cast<int>(requests.size()));
    CHECK(svc->max_concurrent() <= 4);
  }
}

TEST_CASE("in-flight requests never exceed max_in_flight") {
  const auto examples = fixture_examples();
  const auto requests = requests_for(examples, 120);
  for (int limit : {1, 3, 8}) {
    CAPTURE(limit);
    auto svc = ServiceDouble::tcp(testing::oracle_responder(build_gold_index(examples)), {5ms, 0});
    RemoteBackend backend(options_for(svc->endpoint(), limit));
    check_matches_gold(examples, decode_batch(backend, requests));
    CHECK(svc->max_concurrent() <= limit);
    CHECK(svc->connections() <= limit);
    if (limit > 1) CHECK(svc->max_concurrent() > 1);
  }
}

TEST_CASE("transient failures are retried") {
  const auto examples = fixture_examples();
  const auto requests = requests_for(examples, 1);
  auto svc = ServiceDouble::tcp(testing::oracle_responder(build_gold_index(examples)), {0ms, 2});
  RemoteBackend backend(options_for(svc->endpoint(), 1));
  check_matches_gold(examples, decode_batch(backend, requests));
  CHECK(svc->requests() == 3);
}

TEST_CASE("persistent failures abort with a backend error naming the endpoint") {
  const auto examples = fixture_examples();
  const auto requests = requests_for(examples, 1);
  auto svc = ServiceDouble::tcp(testing::oracle_responder(build_gold_index(examples)), {0ms, 3});
  RemoteBackend backend(options_for(svc->endpoint(), 1));
  const std::string msg = error_message([&] { decode_batch(backend, requests); }, ErrorKind::kBackend);
  CHECK(msg.find(svc->endpoint()) != std::string::npos);
  CHECK(svc->requests() == 3);
}

TEST_CASE("server down: three attempts with exponential backoff") {
  const std::string endpoint = "tcp://127.0.0.1:" + std::to_string(testing::unused_tcp_port());
  RemoteOptions o = options_for(endpoint, 1);
  o.initial_backoff = 100ms;
  RemoteBackend backend(o);
  const auto requests = requests_for(fixture_examples(), 1);
  const auto start = std::chrono::steady_clock::now();
  const std::string msg = error_message([&] { backend.decode(requests); }, ErrorKind::kBackend);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(msg.find(endpoint) != std::string::npos);
  CHECK(msg.find("3 attempts") != std::string::npos);
  CHECK(elapsed >= 300ms);
}

TEST_CASE("service error responses and id mismatches are backend errors") {
  const auto requests = requests_for(fixture_examples(), 2);
  auto failing = ServiceDouble::tcp([](const wire::Request&) -> std::string { throw std::runtime_error("oom"); }, {});
  RemoteBackend a(options_for(failing->endpoint(), 1));
  CHECK(error_message([&] { a.decode(requests); }, ErrorKind::kBackend).find("oom") != std::string::npos);
}

TEST_CASE("slow responses time out") {
  const auto requests = requests_for(fixture_examples(), 1);
  auto slow = ServiceDouble::tcp([](const wire::Request&) { return std::string("x"); }, {400ms, 0});
  RemoteOptions o = options_for(slow->endpoint(), 1);
  o.timeout = 50ms;
  o.max_attempts = 1;
  RemoteBackend backend(o);
  error_message([&] { backend.decode(requests); }, ErrorKind::kBackend);
}

TEST_CASE("invalid remote configuration") {
  for (const char* bad : {"", "localhost:9000", "ftp://host:1", "tcp://host", "tcp://host:99999", "unix://",
                          "tcp://:80"}) {
    CAPTURE(bad);
    error_message([&] { RemoteBackend backend(options_for(bad)); }, ErrorKind::kInput);
  }
  error_message([] { RemoteBackend backend(options_for("tcp://127.0.0.1:1", 0)); }, ErrorKind::kInput);
  CHECK_NOTHROW(RemoteBackend(options_for("http://127.0.0.1:8080/decode")));
  CHECK_NOTHROW(RemoteBackend(options_for("unix:///tmp/x.sock")));
}

TEST_CASE("empty batch makes no connections") {
  auto svc = ServiceDouble::tcp([](const wire::Request&) { return std::string("x"); }, {});
  RemoteBackend backend(options_for(svc->endpoint()));
  CHECK(backend.decode({}).empty());
  CHECK(svc->connections() == 0);
}

// Runs against a real model service when DSTKIT_ENDPOINT is set.
TEST_CASE("protocol conformance of an external service") {
  const char* endpoint = std::getenv("DSTKIT_ENDPOINT");
  if (endpoint == nullptr || *endpoint == '\0') {
    MESSAGE("DSTKIT_ENDPOINT not set; skipping external conformance check");
    return;
  }
  const auto requests = requests_for(fixture_examples(), 16);
  RemoteOptions o = options_for(endpoint, 2);
  o.timeout = 60000ms;
  RemoteBackend backend(o);
  const auto first = decode_batch(backend, requests);
  const auto second = decode_batch(backend, requests);
  REQUIRE(first.size() == requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) CHECK(first[i].request_id == requests[i].request_id);
  CHECK(first == second);
}
