#pragma once

#include <memory>
#include <string>
#include <thread>

#include "readtrace/store.hpp"

namespace readtrace {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string username = "Test1";
  std::string password = "123456";
};

/// HTTP front end for a DimeApi implementation. All /api/data and search
/// routes require HTTP Basic credentials; /api/ping is open for health checks.
class DimeServer {
 public:
  DimeServer(DimeApi& store, ServerOptions options = {});
  ~DimeServer();
  DimeServer(const DimeServer&) = delete;
  DimeServer& operator=(const DimeServer&) = delete;

  /// Binds the listening socket and returns the port; throws if unavailable.
  int bind();
  /// Serves until stop(). bind() must have succeeded.
  void run();
  /// bind() + run() on a background thread; returns once accepting.
  int start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ServerOptions options_;
  int port_ = 0;
  std::thread thread_;
};

/// DimeApi over HTTP. `baseUrl` looks like "http://localhost:8080".
/// Non-2xx responses are rethrown as StoreError with the same status.
class DimeClient final : public DimeApi {
 public:
  DimeClient(const std::string& baseUrl, std::string username = "Test1", std::string password = "123456");
  ~DimeClient() override;

  bool ping();

  ScientificDocument postElement(const ScientificDocument& doc) override;
  AnyEvent postEvent(const AnyEvent& event) override;
  std::optional<AnyEvent> event(std::int64_t id) override;
  std::optional<ScientificDocument> element(std::int64_t id) override;
  std::vector<AnyEvent> events(const EventFilter& filter) override;
  std::vector<ScientificDocument> elements(const ElementFilter& filter) override;
  std::vector<AnyEvent> eventSearch(std::string_view query, const EventFilter& filter) override;
  std::vector<ScientificDocument> search(std::string_view query, const ElementFilter& filter) override;
  void deleteEvent(std::int64_t id) override;
  void deleteElement(std::int64_t id) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace readtrace
