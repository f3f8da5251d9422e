#include <netdb.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "dstkit/decoders.hpp"
#include "dstkit/error.hpp"
#include "dstkit/text.hpp"

namespace dstkit {
namespace {

constexpr std::string_view kModule = "decoders";

struct Endpoint {
  enum class Kind { kTcp, kUnix, kHttp } kind = Kind::kTcp;
  std::string host;
  int port = 0;
  std::string path;  // unix socket path
};

Endpoint parse_endpoint(const std::string& spec) {
  auto fail = [&](const std::string& why) -> Endpoint {
    throw Error(ErrorKind::kInput, std::string(kModule), "invalid endpoint '" + spec + "': " + why);
  };
  const std::size_t sep = spec.find("://");
  if (sep == std::string::npos) return fail("expected tcp://, unix:// or http://");
  const std::string scheme = text::to_lower(spec.substr(0, sep));
  std::string rest = spec.substr(sep + 3);
  Endpoint ep;
  if (scheme == "unix") {
    ep.kind = Endpoint::Kind::kUnix;
    ep.path = rest;
    if (ep.path.empty()) return fail("missing socket path");
    return ep;
  }
  if (scheme == "tcp") {
    ep.kind = Endpoint::Kind::kTcp;
  } else if (scheme == "http") {
    ep.kind = Endpoint::Kind::kHttp;
    if (auto slash = rest.find('/'); slash != std::string::npos) rest = rest.substr(0, slash);
  } else {
    return fail("unsupported scheme '" + scheme + "'");
  }
  const std::size_t colon = rest.rfind(':');
  if (colon == std::string::npos) return fail("missing port");
  ep.host = rest.substr(0, colon);
  try {
    ep.port = std::stoi(rest.substr(colon + 1));
  } catch (const std::exception&) {
    return fail("bad port");
  }
  if (ep.host.empty() || ep.port <= 0 || ep.port > 65535) return fail("bad host or port");
  return ep;
}

class Connection {
 public:
  virtual ~Connection() = default;
  // Sends one request line and returns the response line (no newline).
  virtual std::string round_trip(const std::string& line) = 0;
};

class SocketConnection final : public Connection {
 public:
  SocketConnection(const Endpoint& ep, std::chrono::milliseconds timeout) {
    if (ep.kind == Endpoint::Kind::kUnix) {
      fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
      if (fd_ < 0) throw std::runtime_error("socket(): " + std::string(std::strerror(errno)));
      set_timeouts(timeout);
      sockaddr_un addr{};
      addr.sun_family = AF_UNIX;
      if (ep.path.size() >= sizeof(addr.sun_path)) throw std::runtime_error("socket path too long");
      std::memcpy(addr.sun_path, ep.path.c_str(), ep.path.size() + 1);
      if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw std::runtime_error("connect(): " + std::string(std::strerror(errno)));
      }
      return;
    }
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const std::string port = std::to_string(ep.port);
    if (int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &result); rc != 0) {
      throw std::runtime_error("getaddrinfo(): " + std::string(gai_strerror(rc)));
    }
    std::string last_error = "no addresses";
    for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      set_timeouts(timeout);
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      last_error = std::strerror(errno);
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(result);
    if (fd_ < 0) throw std::runtime_error("connect(): " + last_error);
  }

  ~SocketConnection() override {
    if (fd_ >= 0) ::close(fd_);
  }

  std::string round_trip(const std::string& line) override {
    std::string payload = line;
    payload.push_back('\n');
    std::size_t sent = 0;
    while (sent < payload.size()) {
      ssize_t n = ::send(fd_, payload.data() + sent, payload.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) throw std::runtime_error("send(): " + std::string(std::strerror(errno)));
      sent += static_cast<std::size_t>(n);
    }
    while (true) {
      if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string out = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!out.empty() && out.back() == '\r') out.pop_back();
        return out;
      }
      char chunk[4096];
      ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n == 0) throw std::runtime_error("connection closed by peer");
      if (n < 0) throw std::runtime_error("recv(): " + std::string(std::strerror(errno)));
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  void set_timeouts(std::chrono::milliseconds timeout) {
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
    tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
    ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
  }

  int fd_ = -1;
  std::string buffer_;
};

class HttpConnection final : public Connection {
 public:
  HttpConnection(const Endpoint& ep, std::chrono::milliseconds timeout) : client_(ep.host, ep.port) {
    const auto sec = static_cast<time_t>(timeout.count() / 1000);
    const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
    client_.set_connection_timeout(sec, usec);
    client_.set_read_timeout(sec, usec);
    client_.set_write_timeout(sec, usec);
    client_.set_keep_alive(true);
    client_.set_tcp_nodelay(true);
  }

  std::string round_trip(const std::string& line) override {
    auto res = client_.Post("/decode", line, "application/json");
    if (!res) throw std::runtime_error("HTTP error: " + httplib::to_string(res.error()));
    if (res->status != 200) throw std::runtime_error("HTTP status " + std::to_string(res->status));
    return std::string(text::trim(res->body));
  }

 private:
  httplib::Client client_;
};

std::unique_ptr<Connection> connect(const Endpoint& ep, std::chrono::milliseconds timeout) {
  if (ep.kind == Endpoint::Kind::kHttp) return std::make_unique<HttpConnection>(ep, timeout);
  return std::make_unique<SocketConnection>(ep, timeout);
}

}  // namespace

RemoteBackend::RemoteBackend(RemoteOptions options) : options_(std::move(options)) {
  parse_endpoint(options_.endpoint);
  if (options_.max_in_flight < 1) {
    throw Error(ErrorKind::kInput, std::string(kModule), "max_in_flight must be at least 1");
  }
  if (options_.max_attempts < 1) {
    throw Error(ErrorKind::kInput, std::string(kModule), "max_attempts must be at least 1");
  }
}

std::vector<DecodeResponse> RemoteBackend::decode(std::span<const DecodeRequest> requests) const {
  const Endpoint ep = parse_endpoint(options_.endpoint);
  std::vector<DecodeResponse> results(requests.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mu;
  std::string first_error;

  auto worker = [&] {
    std::unique_ptr<Connection> conn;
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      const DecodeRequest& req = requests[i];
      const std::string line =
          wire::encode_request({req.request_id, req.input_text, req.max_output_tokens});
      std::string last_error;
      bool done = false;
      for (int attempt = 0; attempt < options_.max_attempts && !done; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(options_.initial_backoff * (1 << (attempt - 1)));
        try {
          if (!conn) conn = connect(ep, options_.timeout);
          wire::Response resp = wire::decode_response(conn->round_trip(line));
          if (resp.id != req.request_id) {
            throw std::runtime_error("response id '" + resp.id + "' does not match request");
          }
          if (resp.error) throw std::runtime_error("service error: " + *resp.error);
          results[i] = {req.request_id, *resp.output};
          done = true;
        } catch (const std::exception& e) {
          conn.reset();
          last_error = e.what();
        }
      }
      if (!done) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) {
          first_error = "endpoint " + options_.endpoint + ": request '" + req.request_id +
                        "' failed after " + std::to_string(options_.max_attempts) +
                        " attempts: " + last_error;
        }
        return;
      }
    }
  };

  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(options_.max_in_flight), requests.size());
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failed.load()) throw Error(ErrorKind::kBackend, std::string(kModule), first_error);
  return results;
}

}  // namespace dstkit
