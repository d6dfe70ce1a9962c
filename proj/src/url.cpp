#include "readtrace/url.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "readtrace/layout.hpp"

namespace readtrace {

namespace {

bool isUnreserved(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~';
}

int hexValue(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  return s;
}

double parseNumber(std::string_view s, const std::string& what) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw UrlError("malformed number '" + std::string(s) + "' in " + what);
  }
  return v;
}

std::vector<double> parseTuple(std::string_view s, std::size_t arity, const std::string& what) {
  s = trim(s);
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') throw UrlError(what + " must be a parenthesised tuple");
  s = s.substr(1, s.size() - 2);
  std::vector<double> out;
  while (true) {
    auto comma = s.find(',');
    out.push_back(parseNumber(s.substr(0, comma), what));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.size() != arity) {
    throw UrlError(what + " needs " + std::to_string(arity) + " values, got " + std::to_string(out.size()));
  }
  return out;
}

std::string formatNumber(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool startsAndEndsWithQuote(std::string_view s) { return s.size() >= 2 && s.front() == '"' && s.back() == '"'; }

}  // namespace

std::string_view modeName(UrlMode m) { return m == UrlMode::reader ? "reader" : "refinder"; }

std::string_view targetKindName(TargetKind k) {
  switch (k) {
    case TargetKind::path: return "path";
    case TargetKind::contentHash: return "contentHash";
    case TargetKind::appId: return "appId";
    case TargetKind::sessionId: return "sessionId";
  }
  return "path";
}

std::string percentDecode(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 2 >= s.size()) throw UrlError("truncated percent escape");
    const int hi = hexValue(s[i + 1]);
    const int lo = hexValue(s[i + 2]);
    if (hi < 0 || lo < 0) throw UrlError("invalid percent escape");
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

std::string percentEncode(std::string_view s, bool keepSlash) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (isUnreserved(c) || (keepSlash && c == '/')) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 15]);
    }
  }
  return out;
}

TargetKind syntacticTargetKind(std::string_view target) {
  if (target.find('/') != std::string_view::npos) return TargetKind::path;
  if (target.starts_with(kAppIdPrefix)) return TargetKind::appId;
  if (ContentHash::isValidHex(target)) return TargetKind::contentHash;
  return TargetKind::sessionId;
}

void PeyeRequest::validate() const {
  if (target.empty()) throw UrlError("empty target");
  if (syntacticTargetKind(target) != targetKind) throw UrlError("target does not look like a " + std::string(targetKindName(targetKind)));
  if (targetKind == TargetKind::path && target.front() != '/') throw UrlError("paths must be absolute");
  if (search) {
    if (search->query.empty()) throw UrlError("empty search query");
    if (!search->exactPhrase && startsAndEndsWithQuote(search->query)) {
      throw UrlError("a quoted query is an exact-phrase search");
    }
  }
  if (page && *page < 0) throw UrlError("page must be non-negative");
  if (focus && !page) throw UrlError("page is required when rect or point is given");
  if (focus) {
    if (const auto* r = std::get_if<FocusRect>(&*focus)) {
      if (!(std::isfinite(r->x) && std::isfinite(r->y) && std::isfinite(r->w) && std::isfinite(r->h))) {
        throw UrlError("rect values must be finite");
      }
      if (!(r->w > 0 && r->h > 0)) throw UrlError("rect width and height must be positive");
    } else {
      const auto& p = std::get<FocusPoint>(*focus);
      if (!(std::isfinite(p.x) && std::isfinite(p.y))) throw UrlError("point values must be finite");
    }
  }
}

PeyeRequest parsePeyeUrl(std::string_view url) {
  const auto sep = url.find("://");
  if (sep == std::string_view::npos) throw UrlError("missing scheme");
  std::string scheme(url.substr(0, sep));
  std::transform(scheme.begin(), scheme.end(), scheme.begin(), [](unsigned char c) { return std::tolower(c); });
  if (scheme != kUrlScheme) throw UrlError("unsupported scheme '" + scheme + "'");
  auto rest = url.substr(sep + 3);

  std::string_view query;
  bool hasQuery = false;
  if (auto q = rest.find('?'); q != std::string_view::npos) {
    query = rest.substr(q + 1);
    rest = rest.substr(0, q);
    hasQuery = true;
  }
  const auto slash = rest.find('/');
  const auto modeText = rest.substr(0, slash);
  PeyeRequest req;
  if (modeText == "reader") req.mode = UrlMode::reader;
  else if (modeText == "refinder") req.mode = UrlMode::refinder;
  else throw UrlError("unknown mode '" + std::string(modeText) + "'");
  if (slash == std::string_view::npos) throw UrlError("missing target");

  auto target = percentDecode(rest.substr(slash + 1));
  if (target.empty()) throw UrlError("missing target");
  req.targetKind = syntacticTargetKind(target);
  if (req.targetKind == TargetKind::path && target.front() != '/') target.insert(target.begin(), '/');
  req.target = std::move(target);

  std::optional<FocusRect> rect;
  std::optional<FocusPoint> point;
  bool seenSearch = false;
  while (hasQuery) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos) throw UrlError("parameter without value: '" + std::string(pair) + "'");
    const auto name = percentDecode(pair.substr(0, eq));
    const auto value = percentDecode(pair.substr(eq + 1));
    auto once = [&](bool seen) {
      if (seen) throw UrlError("duplicate parameter '" + name + "'");
    };
    if (name == "search") {
      once(seenSearch);
      seenSearch = true;
      SearchSpec s;
      if (value.size() == 1 && value == "\"") throw UrlError("empty exact phrase");
      if (startsAndEndsWithQuote(value)) {
        s.exactPhrase = true;
        s.query = value.substr(1, value.size() - 2);
        if (s.query.empty()) throw UrlError("empty exact phrase");
      } else {
        s.query = value;
        if (s.query.empty()) throw UrlError("empty search query");
      }
      req.search = std::move(s);
    } else if (name == "page") {
      once(req.page.has_value());
      int p = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), p);
      if (value.empty() || ec != std::errc{} || ptr != value.data() + value.size() || p < 0) {
        throw UrlError("malformed page '" + value + "'");
      }
      req.page = p;
    } else if (name == "rect") {
      once(rect.has_value());
      auto v = parseTuple(value, 4, "rect");
      rect = FocusRect{v[0], v[1], v[2], v[3]};
    } else if (name == "point") {
      once(point.has_value());
      auto v = parseTuple(value, 2, "point");
      point = FocusPoint{v[0], v[1]};
    } else {
      throw UrlError("unknown parameter '" + name + "'");
    }
    if (amp == std::string_view::npos) break;
    query.remove_prefix(amp + 1);
  }
  if (rect && point) throw UrlError("rect and point are mutually exclusive");
  if (rect) req.focus = *rect;
  if (point) req.focus = *point;
  req.validate();
  return req;
}

std::string renderPeyeUrl(const PeyeRequest& request) {
  request.validate();
  std::string url = "peyedf://" + std::string(modeName(request.mode)) + "/";
  std::string_view target = request.target;
  // A path loses its leading slash to the separator unless that would change how it parses back.
  if (request.targetKind == TargetKind::path && !target.starts_with("//") &&
      target.substr(1).find('/') != std::string_view::npos) {
    target.remove_prefix(1);
  }
  url += percentEncode(target, true);
  std::vector<std::string> params;
  if (request.search) {
    const auto q = request.search->exactPhrase ? "\"" + request.search->query + "\"" : request.search->query;
    params.push_back("search=" + percentEncode(q));
  }
  if (request.page) params.push_back("page=" + std::to_string(*request.page));
  if (request.focus) {
    if (const auto* r = std::get_if<FocusRect>(&*request.focus)) {
      params.push_back("rect=(" + formatNumber(r->x) + "," + formatNumber(r->y) + "," + formatNumber(r->w) + "," +
                       formatNumber(r->h) + ")");
    } else {
      const auto& p = std::get<FocusPoint>(*request.focus);
      params.push_back("point=(" + formatNumber(p.x) + "," + formatNumber(p.y) + ")");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) url += (i == 0 ? "?" : "&") + params[i];
  return url;
}

namespace {

Json focusJson(const std::optional<FocusRect>& rect, const std::optional<FocusPoint>& point) {
  if (rect) return Json{{"rect", {{"x", rect->x}, {"y", rect->y}, {"w", rect->w}, {"h", rect->h}}}};
  if (point) return Json{{"point", {{"x", point->x}, {"y", point->y}}}};
  return nullptr;
}

Json searchJson(const std::optional<SearchSpec>& s) {
  if (!s) return nullptr;
  return Json{{"query", s->query}, {"exactPhrase", s->exactPhrase}};
}

}  // namespace

Json toJson(const PeyeRequest& r) {
  std::optional<FocusRect> rect;
  std::optional<FocusPoint> point;
  if (r.focus) {
    if (const auto* fr = std::get_if<FocusRect>(&*r.focus)) rect = *fr;
    else point = std::get<FocusPoint>(*r.focus);
  }
  return Json{{"mode", modeName(r.mode)},
              {"target", r.target},
              {"targetKind", targetKindName(r.targetKind)},
              {"search", searchJson(r.search)},
              {"page", r.page ? Json(*r.page) : Json(nullptr)},
              {"focus", focusJson(rect, point)}};
}

// ---------------------------------------------------------------------------

namespace {

std::optional<ScientificDocument> documentByHash(DimeApi& store, const std::string& hex) {
  ElementFilter f;
  f.contentHash = hex;
  auto docs = store.elements(f);
  if (docs.empty()) return std::nullopt;
  return docs.front();
}

std::optional<ScientificDocument> documentByUri(DimeApi& store, const std::string& uri) {
  for (auto& d : store.elements({})) {
    if (d.uri == uri) return d;
  }
  return std::nullopt;
}

std::vector<AnyEvent> sessionEvents(DimeApi& store, const std::string& sessionId) {
  EventFilter f;
  f.sessionId = sessionId;
  return store.events(f);
}

std::string hashOf(std::string_view target, TargetKind kind) {
  if (kind == TargetKind::appId) return std::string(target.substr(kAppIdPrefix.size()));
  return std::string(target);
}

}  // namespace

TargetKind classifyTarget(std::string_view target, UrlMode mode, DimeApi& store) {
  const auto kind = syntacticTargetKind(target);
  if (kind == TargetKind::path) return kind;
  const std::string t(target);
  if (mode == UrlMode::refinder && !sessionEvents(store, t).empty()) return TargetKind::sessionId;
  if (kind == TargetKind::appId || kind == TargetKind::contentHash) {
    if (documentByHash(store, hashOf(target, kind))) return kind;
  } else if (mode == UrlMode::reader && !sessionEvents(store, t).empty()) {
    return TargetKind::sessionId;
  }
  throw NotFoundError("nothing in the store matches '" + t + "'");
}

DispatchOutcome dispatch(const PeyeRequest& request, DimeApi& store) {
  request.validate();
  DispatchOutcome out;
  out.mode = request.mode;
  out.search = request.search;
  out.resolvedAs = classifyTarget(request.target, request.mode, store);

  switch (out.resolvedAs) {
    case TargetKind::path: {
      if (request.mode == UrlMode::refinder) throw NotFoundError("refinder needs a session, not a path");
      out.document = documentByUri(store, request.target);
      if (!out.document) {
        if (!std::filesystem::is_regular_file(request.target)) {
          throw NotFoundError("no document registered or on disk at " + request.target);
        }
        out.document = store.postElement(loadLayout(request.target).toDocument(request.target));
        out.registered = true;
      }
      break;
    }
    case TargetKind::appId:
    case TargetKind::contentHash:
      out.document = documentByHash(store, hashOf(request.target, out.resolvedAs));
      break;
    case TargetKind::sessionId: {
      out.sessionId = request.target;
      out.sessionEvents = sessionEvents(store, request.target);
      out.document = store.element(eventTarget(out.sessionEvents.front()));
      break;
    }
  }

  if (request.page) {
    out.focus.page = *request.page;
    out.focus.kind = FocusInstruction::Kind::pageTop;
    if (request.focus) {
      if (const auto* r = std::get_if<FocusRect>(&*request.focus)) {
        out.focus.kind = FocusInstruction::Kind::rect;
        out.focus.rect = *r;
      } else {
        out.focus.kind = FocusInstruction::Kind::point;
        out.focus.point = std::get<FocusPoint>(*request.focus);
      }
    }
  }
  return out;
}

Json toJson(const DispatchOutcome& o) {
  Json focus = nullptr;
  if (o.focus.kind != FocusInstruction::Kind::none) {
    static constexpr const char* kKinds[] = {"none", "pageTop", "rect", "point"};
    focus = Json{{"kind", kKinds[static_cast<int>(o.focus.kind)]}, {"page", o.focus.page}};
    if (o.focus.rect) focus.update(focusJson(o.focus.rect, std::nullopt));
    if (o.focus.point) focus.update(focusJson(std::nullopt, o.focus.point));
  }
  Json doc = nullptr;
  if (o.document) {
    doc = Json{{"id", o.document->id ? Json(*o.document->id) : Json(nullptr)},
               {"uri", o.document->uri},
               {"title", o.document->title},
               {"contentHash", o.document->contentHash.hex()},
               {"appId", o.document->appId().value()}};
  }
  Json events = Json::array();
  for (const auto& e : o.sessionEvents) {
    events.push_back(Json{{"id", eventId(e) ? Json(*eventId(e)) : Json(nullptr)},
                          {"@type", eventType(e)},
                          {"start", std::visit([](const auto& v) { return v.startTime; }, e)},
                          {"end", std::visit([](const auto& v) { return v.endTime; }, e)}});
  }
  return Json{{"mode", modeName(o.mode)},
              {"resolvedAs", targetKindName(o.resolvedAs)},
              {"document", doc},
              {"sessionId", o.sessionId ? Json(*o.sessionId) : Json(nullptr)},
              {"sessionEvents", events},
              {"search", searchJson(o.search)},
              {"focus", focus},
              {"registered", o.registered}};
}

}  // namespace readtrace
