#include "readtrace/serialize.hpp"

#include <cmath>

namespace readtrace {
namespace {

const Json& member(const Json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key, "missing field");
  return *it;
}

const Json* optionalMember(const Json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return nullptr;
  return &*it;
}

std::int64_t asInt(const Json& j, const std::string& path) {
  if (j.is_number_integer() || j.is_number_unsigned()) {
    if (j.is_number_unsigned() && j.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      throw ParseError(path, "integer out of range");
    }
    return j.get<std::int64_t>();
  }
  throw ParseError(path, "expected an integer");
}

int asInt32(const Json& j, const std::string& path) {
  auto v = asInt(j, path);
  if (v < INT32_MIN || v > INT32_MAX) throw ParseError(path, "integer out of range");
  return static_cast<int>(v);
}

double asDouble(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ParseError(path, "expected a finite number");
  return v;
}

std::string asString(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

const Json& asArray(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array");
  return j;
}

std::vector<double> doubleArray(const Json& j, const std::string& path) {
  std::vector<double> out;
  const auto& arr = asArray(j, path);
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(asDouble(arr[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

void expectType(const Json& j, const std::string& expected) {
  auto type = asString(member(j, "@type", "event"), "@type");
  if (type != expected) throw ParseError("@type", "expected " + expected + ", got " + type);
}

// Converts model invariant failures raised while building a value into parse errors.
template <typename F>
auto guarded(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const InvariantError& e) {
    throw ParseError(path, e.what());
  }
}

Json targetJson(std::int64_t id) { return Json{{"@type", kScientificDocumentType}, {"id", id}}; }

std::int64_t targetFromJson(const Json& j) {
  const auto& t = member(j, "targettedResource", "event");
  if (t.is_object()) return asInt(member(t, "id", "targettedResource"), "targettedResource.id");
  return asInt(t, "targettedResource");
}

}  // namespace

Json toJson(const Rect& r) {
  return Json{{"origin", {{"x", r.origin().x}, {"y", r.origin().y}}},
              {"size", {{"width", r.size().width}, {"height", r.size().height}}},
              {"pageIndex", r.pageIndex()},
              {"readingClass", static_cast<int>(r.readingClass())},
              {"classSource", static_cast<int>(r.classSource())}};
}

Rect rectFromJson(const Json& j, const std::string& path) {
  const auto& o = member(j, "origin", path);
  const auto& s = member(j, "size", path);
  Point origin{asDouble(member(o, "x", path + ".origin"), path + ".origin.x"),
               asDouble(member(o, "y", path + ".origin"), path + ".origin.y")};
  Size size{asDouble(member(s, "width", path + ".size"), path + ".size.width"),
            asDouble(member(s, "height", path + ".size"), path + ".size.height")};
  int page = asInt32(member(j, "pageIndex", path), path + ".pageIndex");
  int rc = asInt32(member(j, "readingClass", path), path + ".readingClass");
  int cs = asInt32(member(j, "classSource", path), path + ".classSource");
  auto readingClass = guarded(path + ".readingClass", [&] { return readingClassFromCode(rc); });
  auto classSource = guarded(path + ".classSource", [&] { return classSourceFromCode(cs); });
  return guarded(path, [&] { return Rect(origin, size, page, readingClass, classSource); });
}

Json toJson(const PageEyeData& d) {
  return Json{{"pageIndex", d.pageIndex}, {"Xs", d.xs},           {"Ys", d.ys},
              {"durations", d.durations}, {"pupilSizes", d.pupilSizes}, {"startTimes", d.startTimes}};
}

PageEyeData pageEyeDataFromJson(const Json& j, const std::string& path) {
  PageEyeData d;
  d.pageIndex = asInt32(member(j, "pageIndex", path), path + ".pageIndex");
  d.xs = doubleArray(member(j, "Xs", path), path + ".Xs");
  d.ys = doubleArray(member(j, "Ys", path), path + ".Ys");
  d.durations = doubleArray(member(j, "durations", path), path + ".durations");
  d.pupilSizes = doubleArray(member(j, "pupilSizes", path), path + ".pupilSizes");
  d.startTimes = doubleArray(member(j, "startTimes", path), path + ".startTimes");
  guarded(path, [&] {
    d.validate();
    return 0;
  });
  return d;
}

Json toJson(const Tag& t) {
  Json j{{"@type", kTagType}, {"text", t.text}};
  if (t.anchor) {
    j["anchor"] = {{"pageIndex", t.anchor->pageIndex},
                   {"rect", toJson(t.anchor->rect)},
                   {"selectedText", t.anchor->selectedText}};
  }
  return j;
}

Tag tagFromJson(const Json& j, const std::string& path) {
  Tag t;
  t.text = asString(member(j, "text", path), path + ".text");
  if (const Json* a = j.is_object() ? optionalMember(j, "anchor") : nullptr) {
    TagAnchor anchor;
    anchor.pageIndex = asInt32(member(*a, "pageIndex", path + ".anchor"), path + ".anchor.pageIndex");
    anchor.rect = rectFromJson(member(*a, "rect", path + ".anchor"), path + ".anchor.rect");
    if (const Json* s = optionalMember(*a, "selectedText")) anchor.selectedText = asString(*s, path + ".anchor.selectedText");
    t.anchor = std::move(anchor);
  }
  guarded(path, [&] {
    t.validate();
    return 0;
  });
  return t;
}

Json toJson(const ReadingEvent& e) {
  Json rects = Json::array();
  for (const auto& r : e.pageRects) rects.push_back(toJson(r));
  Json eye = Json::array();
  for (const auto& d : e.pageEyeData) eye.push_back(toJson(d));
  Json j{{"@type", kReadingEventType},
         {"actor", e.actor},
         {"sessionId", e.sessionId},
         {"start", e.startTime},
         {"end", e.endTime},
         {"pageNumbers", e.pageNumbers},
         {"pageLabels", e.pageLabels},
         {"pageRects", std::move(rects)},
         {"plainTextContent", e.plainTextContent},
         {"pageEyeData", std::move(eye)},
         {"targettedResource", targetJson(e.targettedResourceId)}};
  if (e.id) j["id"] = *e.id;
  return j;
}

ReadingEvent readingEventFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("event", "expected an object");
  expectType(j, kReadingEventType);
  ReadingEvent e;
  if (const Json* id = optionalMember(j, "id")) e.id = asInt(*id, "id");
  e.actor = asString(member(j, "actor", "event"), "actor");
  e.sessionId = asString(member(j, "sessionId", "event"), "sessionId");
  e.startTime = asInt(member(j, "start", "event"), "start");
  e.endTime = asInt(member(j, "end", "event"), "end");
  const auto& pn = asArray(member(j, "pageNumbers", "event"), "pageNumbers");
  for (std::size_t i = 0; i < pn.size(); ++i) e.pageNumbers.push_back(asInt32(pn[i], "pageNumbers[" + std::to_string(i) + "]"));
  const auto& pl = asArray(member(j, "pageLabels", "event"), "pageLabels");
  for (std::size_t i = 0; i < pl.size(); ++i) e.pageLabels.push_back(asString(pl[i], "pageLabels[" + std::to_string(i) + "]"));
  if (e.pageNumbers.size() != e.pageLabels.size()) {
    throw ParseError("pageLabels", "pageNumbers and pageLabels must have the same length");
  }
  const auto& pr = asArray(member(j, "pageRects", "event"), "pageRects");
  for (std::size_t i = 0; i < pr.size(); ++i) e.pageRects.push_back(rectFromJson(pr[i], "pageRects[" + std::to_string(i) + "]"));
  e.plainTextContent = asString(member(j, "plainTextContent", "event"), "plainTextContent");
  if (const Json* eye = optionalMember(j, "pageEyeData")) {
    const auto& arr = asArray(*eye, "pageEyeData");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      e.pageEyeData.push_back(pageEyeDataFromJson(arr[i], "pageEyeData[" + std::to_string(i) + "]"));
    }
  }
  e.targettedResourceId = targetFromJson(j);
  guarded("event", [&] {
    e.validate();
    return 0;
  });
  return e;
}

Json toJson(const SummaryReadingEvent& e) {
  Json queries = Json::array();
  for (const auto& q : e.searchQueries) queries.push_back({{"query", q.query}, {"hits", q.hits}, {"pages", q.pages}});
  Json props = Json::object();
  for (const auto& [cls, v] : e.perClassProportions) props[std::string(readingClassName(cls))] = v;
  Json j{{"@type", kSummaryReadingEventType},
         {"actor", e.actor},
         {"sessionId", e.sessionId},
         {"start", e.startTime},
         {"end", e.endTime},
         {"searchQueries", std::move(queries)},
         {"perClassProportions", std::move(props)},
         {"targettedResource", targetJson(e.targettedResourceId)}};
  if (e.id) j["id"] = *e.id;
  return j;
}

SummaryReadingEvent summaryEventFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("event", "expected an object");
  expectType(j, kSummaryReadingEventType);
  SummaryReadingEvent e;
  if (const Json* id = optionalMember(j, "id")) e.id = asInt(*id, "id");
  e.actor = asString(member(j, "actor", "event"), "actor");
  e.sessionId = asString(member(j, "sessionId", "event"), "sessionId");
  e.startTime = asInt(member(j, "start", "event"), "start");
  e.endTime = asInt(member(j, "end", "event"), "end");
  const auto& qs = asArray(member(j, "searchQueries", "event"), "searchQueries");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::string p = "searchQueries[" + std::to_string(i) + "]";
    SearchQueryStats q;
    q.query = asString(member(qs[i], "query", p), p + ".query");
    q.hits = asInt32(member(qs[i], "hits", p), p + ".hits");
    const auto& pages = asArray(member(qs[i], "pages", p), p + ".pages");
    for (std::size_t k = 0; k < pages.size(); ++k) q.pages.push_back(asInt32(pages[k], p + ".pages"));
    e.searchQueries.push_back(std::move(q));
  }
  const auto& props = member(j, "perClassProportions", "event");
  if (!props.is_object()) throw ParseError("perClassProportions", "expected an object");
  for (const auto& [name, value] : props.items()) {
    auto cls = readingClassFromName(name);
    if (!cls) throw ParseError("perClassProportions." + name, "unknown reading class");
    e.perClassProportions[*cls] = asDouble(value, "perClassProportions." + name);
  }
  e.targettedResourceId = targetFromJson(j);
  guarded("event", [&] {
    e.validate();
    return 0;
  });
  return e;
}

Json toJson(const AnyEvent& e) {
  return std::visit([](const auto& ev) { return toJson(ev); }, e);
}

AnyEvent eventFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("event", "expected an object");
  auto type = asString(member(j, "@type", "event"), "@type");
  if (type == kReadingEventType) return readingEventFromJson(j);
  if (type == kSummaryReadingEventType) return summaryEventFromJson(j);
  throw ParseError("@type", "unsupported event type " + type);
}

Json toJson(const ScientificDocument& d) {
  Json tags = Json::array();
  for (const auto& t : d.tags) tags.push_back(toJson(t));
  Json j{{"@type", kScientificDocumentType},
         {"contentHash", d.contentHash.hex()},
         {"appId", d.appId().value()},
         {"uri", d.uri},
         {"title", d.title},
         {"plainTextContent", d.plainTextContent},
         {"tags", std::move(tags)}};
  if (d.id) j["id"] = *d.id;
  return j;
}

ScientificDocument documentFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("document", "expected an object");
  auto type = asString(member(j, "@type", "document"), "@type");
  if (type != kScientificDocumentType) throw ParseError("@type", "expected " + kScientificDocumentType + ", got " + type);
  ScientificDocument d;
  if (const Json* id = optionalMember(j, "id")) d.id = asInt(*id, "id");
  auto hash = asString(member(j, "contentHash", "document"), "contentHash");
  d.contentHash = guarded("contentHash", [&] { return ContentHash::fromHex(hash); });
  if (const Json* app = optionalMember(j, "appId")) {
    if (asString(*app, "appId") != d.appId().value()) throw ParseError("appId", "appId does not match contentHash");
  }
  d.uri = asString(member(j, "uri", "document"), "uri");
  if (const Json* t = optionalMember(j, "title")) d.title = asString(*t, "title");
  d.plainTextContent = asString(member(j, "plainTextContent", "document"), "plainTextContent");
  if (computeContentHash(d.plainTextContent) != d.contentHash) {
    throw ParseError("contentHash", "does not match the SHA-256 of plainTextContent");
  }
  if (const Json* tags = optionalMember(j, "tags")) {
    const auto& arr = asArray(*tags, "tags");
    for (std::size_t i = 0; i < arr.size(); ++i) d.tags.push_back(tagFromJson(arr[i], "tags[" + std::to_string(i) + "]"));
  }
  return d;
}

Json parseJson(std::string_view text, const std::string& what) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ParseError(what, "not valid JSON");
  return j;
}

std::string serializeEvent(const AnyEvent& e) { return toJson(e).dump(); }
AnyEvent deserializeEvent(std::string_view text) { return eventFromJson(parseJson(text, "event")); }
std::string serializeDocument(const ScientificDocument& d) { return toJson(d).dump(); }
ScientificDocument deserializeDocument(std::string_view text) { return documentFromJson(parseJson(text, "document")); }

const std::string& eventSessionId(const AnyEvent& e) {
  return std::visit([](const auto& ev) -> const std::string& { return ev.sessionId; }, e);
}
std::int64_t eventTarget(const AnyEvent& e) {
  return std::visit([](const auto& ev) { return ev.targettedResourceId; }, e);
}
const std::string& eventActor(const AnyEvent& e) {
  return std::visit([](const auto& ev) -> const std::string& { return ev.actor; }, e);
}
std::optional<std::int64_t> eventId(const AnyEvent& e) {
  return std::visit([](const auto& ev) { return ev.id; }, e);
}
void setEventId(AnyEvent& e, std::int64_t id) {
  std::visit([id](auto& ev) { ev.id = id; }, e);
}
const std::string& eventType(const AnyEvent& e) {
  return std::holds_alternative<ReadingEvent>(e) ? kReadingEventType : kSummaryReadingEventType;
}

}  // namespace readtrace
