#include "readtrace/store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <mutex>
#include <sstream>

namespace readtrace {

namespace {

std::int64_t parseId(const std::string& name, const std::string& value) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw StoreError(StoreError::Code::badRequest, "expected an integer for " + name, name);
  }
}

}  // namespace

EventFilter eventFilterFromParams(const QueryParams& params, bool allowQuery) {
  EventFilter f;
  for (const auto& [name, value] : params) {
    if (name == "type") f.type = value;
    else if (name == "actor") f.actor = value;
    else if (name == "sessionId") f.sessionId = value;
    else if (name == "elemId") f.elemId = parseId(name, value);
    else if (name == "contentHash") f.contentHash = value;
    else if (!(allowQuery && name == "query")) {
      throw StoreError(StoreError::Code::badRequest, "unknown parameter '" + name + "'", name);
    }
  }
  return f;
}

ElementFilter elementFilterFromParams(const QueryParams& params, bool allowQuery) {
  ElementFilter f;
  for (const auto& [name, value] : params) {
    if (name == "contentHash") f.contentHash = value;
    else if (name == "type") f.type = value;
    else if (name == "tag") f.tag = value;
    else if (!(allowQuery && name == "query")) {
      throw StoreError(StoreError::Code::badRequest, "unknown parameter '" + name + "'", name);
    }
  }
  return f;
}

QueryParams toParams(const EventFilter& f) {
  QueryParams p;
  if (f.type) p.emplace_back("type", *f.type);
  if (f.actor) p.emplace_back("actor", *f.actor);
  if (f.sessionId) p.emplace_back("sessionId", *f.sessionId);
  if (f.elemId) p.emplace_back("elemId", std::to_string(*f.elemId));
  if (f.contentHash) p.emplace_back("contentHash", *f.contentHash);
  return p;
}

QueryParams toParams(const ElementFilter& f) {
  QueryParams p;
  if (f.contentHash) p.emplace_back("contentHash", *f.contentHash);
  if (f.type) p.emplace_back("type", *f.type);
  if (f.tag) p.emplace_back("tag", *f.tag);
  return p;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TextQuery TextQuery::parse(std::string_view query) {
  TextQuery q;
  if (query.size() >= 2 && query.front() == '"' && query.back() == '"') {
    q.exactPhrase = true;
    query = query.substr(1, query.size() - 2);
  }
  q.words = tokenize(query);
  if (q.words.empty()) throw StoreError(StoreError::Code::badRequest, "query has no words", "query");
  return q;
}

bool TextQuery::matches(const std::vector<std::string>& tokens) const {
  if (exactPhrase) {
    return std::search(tokens.begin(), tokens.end(), words.begin(), words.end()) != tokens.end();
  }
  return std::all_of(words.begin(), words.end(),
                     [&](const std::string& w) { return std::find(tokens.begin(), tokens.end(), w) != tokens.end(); });
}

// ---------------------------------------------------------------------------

DimeStore::DimeStore(std::filesystem::path dataDir) : dataDir_(std::move(dataDir)) {
  std::error_code ec;
  std::filesystem::create_directories(dataDir_, ec);
  if (ec) throw std::runtime_error("cannot create data directory " + dataDir_.string() + ": " + ec.message());
  replay();
  log_.open(logPath(), std::ios::app | std::ios::binary);
  if (!log_) throw std::runtime_error("cannot open " + logPath().string() + " for writing");
}

DimeStore::~DimeStore() = default;

std::filesystem::path DimeStore::defaultDataDir() {
  const char* home = std::getenv("HOME");
  return std::filesystem::path(home ? home : ".") / ".dime";
}

void DimeStore::replay() {
  std::ifstream in(logPath(), std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t lineNo = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  for (const auto& l : lines) {
    ++lineNo;
    if (l.empty()) continue;
    Json j = Json::parse(l, nullptr, false);
    if (j.is_discarded()) {
      // A torn final write is tolerated; anything earlier is corruption.
      if (lineNo == lines.size()) break;
      throw std::runtime_error(logPath().string() + ":" + std::to_string(lineNo) + ": corrupt record");
    }
    const auto op = j.value("op", "");
    const auto kind = j.value("kind", "");
    const auto id = j.value("id", std::int64_t{0});
    if (op == "put" && kind == "event") {
      applyPutEvent(id, eventFromJson(j.at("payload")));
    } else if (op == "put" && kind == "element") {
      applyPutElement(id, documentFromJson(j.at("payload")));
    } else if (op == "delete" && kind == "event") {
      applyDeleteEvent(id);
    } else if (op == "delete" && kind == "element") {
      applyDeleteElement(id);
    } else {
      throw std::runtime_error(logPath().string() + ":" + std::to_string(lineNo) + ": unknown record");
    }
  }
}

void DimeStore::append(const Json& line) {
  log_ << line.dump(-1, ' ', false, Json::error_handler_t::replace) << '\n';
  log_.flush();
  if (!log_) throw StoreError(StoreError::Code::unavailable, "write to record log failed");
}

void DimeStore::applyPutEvent(std::int64_t id, AnyEvent e) {
  setEventId(e, id);
  EventRow row{std::move(e), {}};
  if (const auto* r = std::get_if<ReadingEvent>(&row.event)) row.tokens = tokenize(r->plainTextContent);
  for (const auto& t : row.tokens) eventTokens_[t].insert(id);
  eventsByElement_[eventTarget(row.event)].insert(id);
  events_[id] = std::move(row);
  nextEventId_ = std::max(nextEventId_, id + 1);
}

void DimeStore::applyPutElement(std::int64_t id, ScientificDocument d) {
  if (auto it = elements_.find(id); it != elements_.end()) {
    for (const auto& t : it->second.tokens) elementTokens_[t].erase(id);
  }
  d.id = id;
  ElementRow row{std::move(d), {}};
  row.tokens = tokenize(row.doc.plainTextContent);
  for (const auto& t : row.tokens) elementTokens_[t].insert(id);
  elementByHash_[row.doc.contentHash.hex()] = id;
  elements_[id] = std::move(row);
  nextElementId_ = std::max(nextElementId_, id + 1);
}

void DimeStore::applyDeleteEvent(std::int64_t id) {
  auto it = events_.find(id);
  if (it == events_.end()) return;
  for (const auto& t : it->second.tokens) eventTokens_[t].erase(id);
  eventsByElement_[eventTarget(it->second.event)].erase(id);
  events_.erase(it);
}

void DimeStore::applyDeleteElement(std::int64_t id) {
  auto it = elements_.find(id);
  if (it == elements_.end()) return;
  for (const auto& t : it->second.tokens) elementTokens_[t].erase(id);
  elementByHash_.erase(it->second.doc.contentHash.hex());
  elements_.erase(it);
}

ScientificDocument DimeStore::postElement(const ScientificDocument& doc) {
  try {
    doc.validate();
  } catch (const std::exception& e) {
    throw StoreError(StoreError::Code::badRequest, e.what());
  }
  std::unique_lock lock(mutex_);
  ScientificDocument stored = doc;
  std::int64_t id = nextElementId_;
  if (auto it = elementByHash_.find(doc.contentHash.hex()); it != elementByHash_.end()) {
    id = it->second;
    // Same content under a new name: keep identity and any tags already attached.
    for (const auto& t : elements_.at(id).doc.tags) {
      if (std::find(stored.tags.begin(), stored.tags.end(), t) == stored.tags.end()) stored.tags.push_back(t);
    }
  }
  stored.id = id;
  append(Json{{"op", "put"}, {"kind", "element"}, {"id", id}, {"payload", toJson(stored)}});
  applyPutElement(id, stored);
  return elements_.at(id).doc;
}

AnyEvent DimeStore::postEvent(const AnyEvent& event) {
  try {
    std::visit([](const auto& e) { e.validate(); }, event);
  } catch (const std::exception& e) {
    throw StoreError(StoreError::Code::badRequest, e.what());
  }
  std::unique_lock lock(mutex_);
  const auto target = eventTarget(event);
  if (!elements_.contains(target)) {
    throw StoreError(StoreError::Code::badRequest,
                     "targettedResource " + std::to_string(target) + " is not a stored information element",
                     "targettedResource");
  }
  const auto id = nextEventId_;
  AnyEvent stored = event;
  setEventId(stored, id);
  append(Json{{"op", "put"}, {"kind", "event"}, {"id", id}, {"payload", toJson(stored)}});
  applyPutEvent(id, stored);
  return stored;
}

std::optional<AnyEvent> DimeStore::event(std::int64_t id) {
  std::shared_lock lock(mutex_);
  auto it = events_.find(id);
  if (it == events_.end()) return std::nullopt;
  return it->second.event;
}

std::optional<ScientificDocument> DimeStore::element(std::int64_t id) {
  std::shared_lock lock(mutex_);
  auto it = elements_.find(id);
  if (it == elements_.end()) return std::nullopt;
  return it->second.doc;
}

bool DimeStore::eventMatches(const EventRow& row, const EventFilter& f) const {
  const auto& e = row.event;
  if (f.type && eventType(e) != *f.type) return false;
  if (f.actor && eventActor(e) != *f.actor) return false;
  if (f.sessionId && eventSessionId(e) != *f.sessionId) return false;
  if (f.elemId && eventTarget(e) != *f.elemId) return false;
  if (f.contentHash) {
    auto it = elements_.find(eventTarget(e));
    if (it == elements_.end() || it->second.doc.contentHash.hex() != *f.contentHash) return false;
  }
  return true;
}

bool DimeStore::elementMatches(const ElementRow& row, const ElementFilter& f) const {
  if (f.contentHash && row.doc.contentHash.hex() != *f.contentHash) return false;
  if (f.type && kScientificDocumentType != *f.type) return false;
  if (f.tag && std::none_of(row.doc.tags.begin(), row.doc.tags.end(),
                            [&](const Tag& t) { return t.text == *f.tag; })) {
    return false;
  }
  return true;
}

std::vector<AnyEvent> DimeStore::events(const EventFilter& filter) {
  std::shared_lock lock(mutex_);
  std::vector<AnyEvent> out;
  auto consider = [&](std::int64_t id) {
    const auto& row = events_.at(id);
    if (eventMatches(row, filter)) out.push_back(row.event);
  };
  if (filter.elemId) {
    auto it = eventsByElement_.find(*filter.elemId);
    if (it != eventsByElement_.end()) {
      for (auto id : it->second) consider(id);
    }
    return out;
  }
  for (const auto& [id, row] : events_) {
    if (eventMatches(row, filter)) out.push_back(row.event);
  }
  return out;
}

std::vector<ScientificDocument> DimeStore::elements(const ElementFilter& filter) {
  std::shared_lock lock(mutex_);
  std::vector<ScientificDocument> out;
  if (filter.contentHash) {
    auto it = elementByHash_.find(*filter.contentHash);
    if (it != elementByHash_.end() && elementMatches(elements_.at(it->second), filter)) {
      out.push_back(elements_.at(it->second).doc);
    }
    return out;
  }
  for (const auto& [id, row] : elements_) {
    if (elementMatches(row, filter)) out.push_back(row.doc);
  }
  return out;
}

std::set<std::int64_t> DimeStore::candidates(const std::unordered_map<std::string, std::set<std::int64_t>>& index,
                                             const TextQuery& q) const {
  std::set<std::int64_t> out;
  bool first = true;
  for (const auto& w : q.words) {
    auto it = index.find(w);
    if (it == index.end()) return {};
    if (first) {
      out = it->second;
      first = false;
      continue;
    }
    std::set<std::int64_t> next;
    std::set_intersection(out.begin(), out.end(), it->second.begin(), it->second.end(),
                          std::inserter(next, next.end()));
    out = std::move(next);
  }
  return out;
}

std::vector<AnyEvent> DimeStore::eventSearch(std::string_view query, const EventFilter& filter) {
  const auto q = TextQuery::parse(query);
  std::shared_lock lock(mutex_);
  std::vector<AnyEvent> out;
  for (auto id : candidates(eventTokens_, q)) {
    const auto& row = events_.at(id);
    if (q.matches(row.tokens) && eventMatches(row, filter)) out.push_back(row.event);
  }
  return out;
}

std::vector<ScientificDocument> DimeStore::search(std::string_view query, const ElementFilter& filter) {
  const auto q = TextQuery::parse(query);
  std::shared_lock lock(mutex_);
  std::vector<ScientificDocument> out;
  for (auto id : candidates(elementTokens_, q)) {
    const auto& row = elements_.at(id);
    if (q.matches(row.tokens) && elementMatches(row, filter)) out.push_back(row.doc);
  }
  return out;
}

void DimeStore::deleteEvent(std::int64_t id) {
  std::unique_lock lock(mutex_);
  if (!events_.contains(id)) throw StoreError(StoreError::Code::notFound, "no event " + std::to_string(id));
  append(Json{{"op", "delete"}, {"kind", "event"}, {"id", id}});
  applyDeleteEvent(id);
}

void DimeStore::deleteElement(std::int64_t id) {
  std::unique_lock lock(mutex_);
  if (!elements_.contains(id)) {
    throw StoreError(StoreError::Code::notFound, "no information element " + std::to_string(id));
  }
  if (auto it = eventsByElement_.find(id); it != eventsByElement_.end() && !it->second.empty()) {
    throw StoreError(StoreError::Code::conflict, "information element " + std::to_string(id) + " has " +
                                                     std::to_string(it->second.size()) + " dependent events");
  }
  append(Json{{"op", "delete"}, {"kind", "element"}, {"id", id}});
  applyDeleteElement(id);
}

std::size_t DimeStore::eventCount() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

std::size_t DimeStore::elementCount() const {
  std::shared_lock lock(mutex_);
  return elements_.size();
}

}  // namespace readtrace
