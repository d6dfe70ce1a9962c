#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"

namespace readtrace {

/// Failure carrying the HTTP status the API reports for it.
class StoreError : public std::runtime_error {
 public:
  enum class Code { badRequest = 400, unauthorized = 401, notFound = 404, conflict = 409, unavailable = 503 };
  StoreError(Code code, const std::string& message, std::string field = {})
      : std::runtime_error(message), code_(code), field_(std::move(field)) {}
  Code code() const { return code_; }
  int status() const { return static_cast<int>(code_); }
  const std::string& field() const { return field_; }

 private:
  Code code_;
  std::string field_;
};

struct EventFilter {
  std::optional<std::string> type;
  std::optional<std::string> actor;
  std::optional<std::string> sessionId;
  std::optional<std::int64_t> elemId;
  std::optional<std::string> contentHash;
};

struct ElementFilter {
  std::optional<std::string> contentHash;
  std::optional<std::string> type;
  std::optional<std::string> tag;
};

using QueryParams = std::vector<std::pair<std::string, std::string>>;

/// Parameter parsing shared by server and client. Unknown names → badRequest.
EventFilter eventFilterFromParams(const QueryParams& params, bool allowQuery = false);
ElementFilter elementFilterFromParams(const QueryParams& params, bool allowQuery = false);
QueryParams toParams(const EventFilter& f);
QueryParams toParams(const ElementFilter& f);

/// Lowercased word tokens; bytes outside ASCII count as word characters.
std::vector<std::string> tokenize(std::string_view text);

/// A search query: all words must appear, or the exact phrase when quoted.
struct TextQuery {
  std::vector<std::string> words;
  bool exactPhrase = false;

  static TextQuery parse(std::string_view query);  // badRequest when no words
  bool matches(const std::vector<std::string>& tokens) const;
};

/// The operations both the in-process store and the HTTP client provide.
class DimeApi {
 public:
  virtual ~DimeApi() = default;

  /// Upserts by contentHash; the returned document carries its id.
  virtual ScientificDocument postElement(const ScientificDocument& doc) = 0;
  virtual AnyEvent postEvent(const AnyEvent& event) = 0;

  virtual std::optional<AnyEvent> event(std::int64_t id) = 0;
  virtual std::optional<ScientificDocument> element(std::int64_t id) = 0;
  virtual std::vector<AnyEvent> events(const EventFilter& filter) = 0;
  virtual std::vector<ScientificDocument> elements(const ElementFilter& filter) = 0;
  virtual std::vector<AnyEvent> eventSearch(std::string_view query, const EventFilter& filter) = 0;
  virtual std::vector<ScientificDocument> search(std::string_view query, const ElementFilter& filter) = 0;

  virtual void deleteEvent(std::int64_t id) = 0;
  virtual void deleteElement(std::int64_t id) = 0;
};

/// Append-only JSON-lines log under `dataDir` with in-memory indexes rebuilt
/// on open. Readers share a lock; writers are serialized through the log.
class DimeStore final : public DimeApi {
 public:
  explicit DimeStore(std::filesystem::path dataDir);
  ~DimeStore() override;

  static std::filesystem::path defaultDataDir();
  const std::filesystem::path& dataDir() const { return dataDir_; }
  std::filesystem::path logPath() const { return dataDir_ / "records.jsonl"; }

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

  std::size_t eventCount() const;
  std::size_t elementCount() const;

 private:
  struct EventRow {
    AnyEvent event;
    std::vector<std::string> tokens;
  };
  struct ElementRow {
    ScientificDocument doc;
    std::vector<std::string> tokens;
  };

  void replay();
  void append(const Json& line);
  void applyPutEvent(std::int64_t id, AnyEvent e);
  void applyPutElement(std::int64_t id, ScientificDocument d);
  void applyDeleteEvent(std::int64_t id);
  void applyDeleteElement(std::int64_t id);
  bool eventMatches(const EventRow& row, const EventFilter& f) const;
  bool elementMatches(const ElementRow& row, const ElementFilter& f) const;
  std::set<std::int64_t> candidates(const std::unordered_map<std::string, std::set<std::int64_t>>& index,
                                    const TextQuery& q) const;

  std::filesystem::path dataDir_;
  std::ofstream log_;
  mutable std::shared_mutex mutex_;

  std::map<std::int64_t, EventRow> events_;
  std::map<std::int64_t, ElementRow> elements_;
  std::int64_t nextEventId_ = 1;
  std::int64_t nextElementId_ = 1;
  std::unordered_map<std::string, std::int64_t> elementByHash_;
  std::unordered_map<std::int64_t, std::set<std::int64_t>> eventsByElement_;
  std::unordered_map<std::string, std::set<std::int64_t>> eventTokens_;
  std::unordered_map<std::string, std::set<std::int64_t>> elementTokens_;
};

}  // namespace readtrace
