#include "readtrace/server.hpp"

#include <httplib.h>

#include <stdexcept>

namespace readtrace {

namespace {

void sendJson(httplib::Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json");
}

void sendError(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  Json body{{"error", message}, {"status", status}};
  if (!field.empty()) body["field"] = field;
  sendJson(res, body, status);
}

QueryParams paramsOf(const httplib::Request& req) {
  QueryParams out;
  for (const auto& [k, v] : req.params) out.emplace_back(k, v);
  return out;
}

std::string queryOf(const httplib::Request& req) {
  if (!req.has_param("query") || req.get_param_value("query").empty()) {
    throw StoreError(StoreError::Code::badRequest, "query parameter is required", "query");
  }
  return req.get_param_value("query");
}

template <typename T>
Json listJson(const std::vector<T>& items) {
  Json arr = Json::array();
  for (const auto& i : items) arr.push_back(toJson(i));
  return arr;
}

std::int64_t pathId(const httplib::Request& req) {
  try {
    return std::stoll(req.matches[1].str());
  } catch (const std::exception&) {
    throw StoreError(StoreError::Code::notFound, "no such id");
  }
}

}  // namespace

struct DimeServer::Impl {
  httplib::Server server;
};

DimeServer::DimeServer(DimeApi& store, ServerOptions options)
    : impl_(std::make_unique<Impl>()), options_(std::move(options)) {
  auto& svr = impl_->server;
  // The library default adds SO_REUSEPORT, which lets a second server share a
  // busy port silently.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  const auto expected = httplib::make_basic_authentication_header(options_.username, options_.password).second;

  // Wraps a handler with the credential check and error mapping.
  auto guarded = [&store, expected](auto handler) {
    return [&store, expected, handler](const httplib::Request& req, httplib::Response& res) {
      if (req.get_header_value("Authorization") != expected) {
        res.set_header("WWW-Authenticate", "Basic realm=\"dime\"");
        sendError(res, 401, "bad credentials");
        return;
      }
      try {
        handler(store, req, res);
      } catch (const StoreError& e) {
        sendError(res, e.status(), e.what(), e.field());
      } catch (const ParseError& e) {
        sendError(res, 400, e.what(), e.field());
      } catch (const std::exception& e) {
        sendError(res, 400, e.what());
      }
    };
  };

  svr.Get("/api/ping", [](const httplib::Request&, httplib::Response& res) { sendJson(res, Json{{"ok", true}}); });

  svr.Post("/api/data/event", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
             auto e = eventFromJson(parseJson(req.body, "event"));
             sendJson(res, toJson(s.postEvent(e)));
           }));
  svr.Post("/api/data/informationelement",
           guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
             auto d = documentFromJson(parseJson(req.body, "informationelement"));
             sendJson(res, toJson(s.postElement(d)));
           }));
  svr.Get(R"(/api/data/event/(-?\d+))", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            auto e = s.event(pathId(req));
            if (!e) throw StoreError(StoreError::Code::notFound, "no such event");
            sendJson(res, toJson(*e));
          }));
  svr.Get(R"(/api/data/informationelement/(-?\d+))",
          guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            auto d = s.element(pathId(req));
            if (!d) throw StoreError(StoreError::Code::notFound, "no such information element");
            sendJson(res, toJson(*d));
          }));
  svr.Delete(R"(/api/data/event/(-?\d+))",
             guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
               s.deleteEvent(pathId(req));
               sendJson(res, Json{{"deleted", true}});
             }));
  svr.Delete(R"(/api/data/informationelement/(-?\d+))",
             guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
               s.deleteElement(pathId(req));
               sendJson(res, Json{{"deleted", true}});
             }));
  svr.Get("/api/data/events", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            sendJson(res, listJson(s.events(eventFilterFromParams(paramsOf(req)))));
          }));
  svr.Get("/api/data/informationelements", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            sendJson(res, listJson(s.elements(elementFilterFromParams(paramsOf(req)))));
          }));
  svr.Get("/api/eventsearch", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            auto filter = eventFilterFromParams(paramsOf(req), true);
            sendJson(res, listJson(s.eventSearch(queryOf(req), filter)));
          }));
  svr.Get("/api/search", guarded([](DimeApi& s, const httplib::Request& req, httplib::Response& res) {
            auto filter = elementFilterFromParams(paramsOf(req), true);
            sendJson(res, listJson(s.search(queryOf(req), filter)));
          }));
}

DimeServer::~DimeServer() { stop(); }

int DimeServer::bind() {
  auto& svr = impl_->server;
  if (options_.port == 0) {
    port_ = svr.bind_to_any_port(options_.host);
    if (port_ <= 0) throw std::runtime_error("cannot bind to " + options_.host);
  } else {
    if (!svr.bind_to_port(options_.host, options_.port)) {
      throw std::runtime_error("cannot bind to " + options_.host + ":" + std::to_string(options_.port) +
                               " (port in use?)");
    }
    port_ = options_.port;
  }
  return port_;
}

void DimeServer::run() { impl_->server.listen_after_bind(); }

int DimeServer::start() {
  const int p = bind();
  thread_ = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
  return p;
}

void DimeServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------

struct DimeClient::Impl {
  explicit Impl(const std::string& url) : client(url) {}
  httplib::Client client;
};

namespace {

[[noreturn]] void raise(const httplib::Result& r) {
  if (!r) {
    throw StoreError(StoreError::Code::unavailable, "store unreachable: " + httplib::to_string(r.error()));
  }
  std::string message = "HTTP " + std::to_string(r->status);
  std::string field;
  Json body = Json::parse(r->body, nullptr, false);
  if (body.is_object()) {
    message = body.value("error", message);
    field = body.value("field", "");
  }
  StoreError::Code code = StoreError::Code::badRequest;
  switch (r->status) {
    case 401: code = StoreError::Code::unauthorized; break;
    case 404: code = StoreError::Code::notFound; break;
    case 409: code = StoreError::Code::conflict; break;
    case 503: code = StoreError::Code::unavailable; break;
    default: break;
  }
  throw StoreError(code, message, field);
}

Json checked(const httplib::Result& r) {
  if (!r || r->status != 200) raise(r);
  return parseJson(r->body, "response");
}

httplib::Params toHttp(const QueryParams& p) {
  httplib::Params out;
  for (const auto& [k, v] : p) out.emplace(k, v);
  return out;
}

std::vector<AnyEvent> eventList(const Json& j) {
  std::vector<AnyEvent> out;
  for (const auto& e : j) out.push_back(eventFromJson(e));
  return out;
}

std::vector<ScientificDocument> documentList(const Json& j) {
  std::vector<ScientificDocument> out;
  for (const auto& d : j) out.push_back(documentFromJson(d));
  return out;
}

}  // namespace

DimeClient::DimeClient(const std::string& baseUrl, std::string username, std::string password)
    : impl_(std::make_unique<Impl>(baseUrl)) {
  if (!impl_->client.is_valid()) throw std::invalid_argument("invalid store URL '" + baseUrl + "'");
  impl_->client.set_basic_auth(username, password);
  impl_->client.set_connection_timeout(5);
  impl_->client.set_read_timeout(60);
}

DimeClient::~DimeClient() = default;

bool DimeClient::ping() {
  auto r = impl_->client.Get("/api/ping");
  return r && r->status == 200;
}

ScientificDocument DimeClient::postElement(const ScientificDocument& doc) {
  return documentFromJson(checked(impl_->client.Post("/api/data/informationelement", serializeDocument(doc),
                                                     "application/json")));
}

AnyEvent DimeClient::postEvent(const AnyEvent& event) {
  return eventFromJson(checked(impl_->client.Post("/api/data/event", serializeEvent(event), "application/json")));
}

std::optional<AnyEvent> DimeClient::event(std::int64_t id) {
  auto r = impl_->client.Get("/api/data/event/" + std::to_string(id));
  if (r && r->status == 404) return std::nullopt;
  return eventFromJson(checked(r));
}

std::optional<ScientificDocument> DimeClient::element(std::int64_t id) {
  auto r = impl_->client.Get("/api/data/informationelement/" + std::to_string(id));
  if (r && r->status == 404) return std::nullopt;
  return documentFromJson(checked(r));
}

std::vector<AnyEvent> DimeClient::events(const EventFilter& filter) {
  return eventList(checked(impl_->client.Get("/api/data/events", toHttp(toParams(filter)), {})));
}

std::vector<ScientificDocument> DimeClient::elements(const ElementFilter& filter) {
  return documentList(checked(impl_->client.Get("/api/data/informationelements", toHttp(toParams(filter)), {})));
}

std::vector<AnyEvent> DimeClient::eventSearch(std::string_view query, const EventFilter& filter) {
  auto params = toHttp(toParams(filter));
  params.emplace("query", std::string(query));
  return eventList(checked(impl_->client.Get("/api/eventsearch", params, {})));
}

std::vector<ScientificDocument> DimeClient::search(std::string_view query, const ElementFilter& filter) {
  auto params = toHttp(toParams(filter));
  params.emplace("query", std::string(query));
  return documentList(checked(impl_->client.Get("/api/search", params, {})));
}

void DimeClient::deleteEvent(std::int64_t id) {
  checked(impl_->client.Delete("/api/data/event/" + std::to_string(id)));
}

void DimeClient::deleteElement(std::int64_t id) {
  checked(impl_->client.Delete("/api/data/informationelement/" + std::to_string(id)));
}

}  // namespace readtrace
