#include <doctest.h>

#include "readtrace/url.hpp"
#include "support.hpp"

using namespace readtrace;
using testing::Gen;
using testing::TempDir;

namespace {

const std::string kSession = "4c12e273e7be240f9eca1f";

std::string errorOf(std::string_view url) {
  try {
    parsePeyeUrl(url);
  } catch (const UrlError& e) {
    return e.what();
  }
  return "<accepted>";
}

std::string randomTarget(Gen& g, TargetKind kind) {
  switch (kind) {
    case TargetKind::path: {
      std::string p;
      const int parts = static_cast<int>(g.integer(1, 4));
      for (int i = 0; i < parts; ++i) p += "/" + g.word(1, 8) + (g.coin() ? " x%?&#\"" : "");
      return p + ".pdf";
    }
    case TargetKind::contentHash: return computeContentHash(g.word(0, 20)).hex();
    case TargetKind::appId: return makeAppId(computeContentHash(g.word(0, 20))).value();
    case TargetKind::sessionId: return g.coin() ? SessionIdGenerator(g.raw()).next() : g.word(1, 22);
  }
  return {};
}

double randomNumber(Gen& g) {
  switch (g.integer(0, 3)) {
    case 0: return static_cast<double>(g.integer(-1000, 1000));
    case 1: return g.real(-1e6, 1e6);
    case 2: return g.real(0, 1) * 1e-7;
    default: return g.real(0, 1e300);
  }
}

PeyeRequest randomRequest(Gen& g) {
  PeyeRequest r;
  r.mode = g.coin() ? UrlMode::reader : UrlMode::refinder;
  r.targetKind = static_cast<TargetKind>(g.integer(0, 3));
  r.target = randomTarget(g, r.targetKind);
  if (g.coin()) {
    SearchSpec s;
    s.exactPhrase = g.coin();
    std::string bytes;
    for (auto b : g.bytes(12)) bytes.push_back(static_cast<char>(b));
    s.query = g.word(1, 6) + (g.coin() ? bytes : "") + (g.coin() ? " & = ?" : "");
    r.search = s;
  }
  if (g.coin()) r.page = static_cast<int>(g.integer(0, 500));
  if (r.page && g.coin()) {
    if (g.coin()) {
      r.focus = FocusRect{randomNumber(g), randomNumber(g), std::abs(randomNumber(g)) + 1, std::abs(randomNumber(g)) + 1};
    } else {
      r.focus = FocusPoint{randomNumber(g), randomNumber(g)};
    }
  }
  return r;
}

ReadingEvent sessionEvent(std::int64_t target, const std::string& sid, TimestampMs start) {
  ReadingEvent e;
  e.sessionId = sid;
  e.startTime = start;
  e.endTime = start + 500;
  e.targettedResourceId = target;
  return e;
}

}  // namespace

TEST_CASE("golden URLs") {
  auto a = parsePeyeUrl("peyedf://reader/Users/marco/Downloads/Wyble%20et%20al%202009.pdf?search=%22attentional%20blink%22");
  CHECK(a.mode == UrlMode::reader);
  CHECK(a.targetKind == TargetKind::path);
  CHECK(a.target == "/Users/marco/Downloads/Wyble et al 2009.pdf");
  REQUIRE(a.search);
  CHECK(a.search->exactPhrase);
  CHECK(a.search->query == "attentional blink");
  CHECK_FALSE(a.page);
  CHECK_FALSE(a.focus);

  auto b = parsePeyeUrl("peyedf://reader/Users/marco/Downloads/Yan%20et%20al%202007.pdf?rect=(200,400,200,100)&page=3");
  CHECK(b.target == "/Users/marco/Downloads/Yan et al 2007.pdf");
  CHECK(b.page == 3);
  REQUIRE(b.focus);
  CHECK(std::get<FocusRect>(*b.focus) == FocusRect{200, 400, 200, 100});

  auto c = parsePeyeUrl("peyedf://refinder/4c12e273e7be240f9eca1f?point=(200,200)&page=1");
  CHECK(c.mode == UrlMode::refinder);
  CHECK(c.targetKind == TargetKind::sessionId);
  CHECK(c.target == kSession);
  CHECK(c.page == 1);
  CHECK(std::get<FocusPoint>(*c.focus) == FocusPoint{200, 200});
}

TEST_CASE("search quoting") {
  CHECK(parsePeyeUrl("peyedf://reader/a/b.pdf?search=\"two words\"").search->exactPhrase);
  auto plain = parsePeyeUrl("peyedf://reader/a/b.pdf?search=two%20words");
  CHECK_FALSE(plain.search->exactPhrase);
  CHECK(plain.search->query == "two words");
  auto inner = parsePeyeUrl("peyedf://reader/a/b.pdf?search=say%20%22hi%22%20now");
  CHECK_FALSE(inner.search->exactPhrase);
  CHECK(inner.search->query == "say \"hi\" now");
  CHECK(parsePeyeUrl("peyedf://reader/a/b.pdf?search=a+b").search->query == "a+b");
}

TEST_CASE("parse errors") {
  CHECK(errorOf("http://reader/a.pdf").find("scheme") != std::string::npos);
  CHECK(errorOf("reader/a.pdf").find("scheme") != std::string::npos);
  CHECK(errorOf("peyedf://viewer/a.pdf").find("mode") != std::string::npos);
  CHECK(errorOf("peyedf://reader").find("target") != std::string::npos);
  CHECK(errorOf("peyedf://reader/").find("target") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?rect=(1,2,3,4)&point=(1,2)&page=0").find("exclusive") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?rect=(1,2,3,4)").find("page") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?point=(1,2)").find("page") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?rect=(1,2,3)&page=0").find("rect") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?rect=1,2,3,4&page=0").find("rect") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?point=(1,x)&page=0").find("number") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?rect=(1,2,0,4)&page=0").find("positive") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?page=-1") != "<accepted>");
  CHECK(errorOf("peyedf://reader/a/b.pdf?page=1.5") != "<accepted>");
  CHECK(errorOf("peyedf://reader/a/b.pdf?page=1&page=2").find("duplicate") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?zoom=2").find("unknown") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?search").find("without value") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?search=").find("empty") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a/b.pdf?search=%22%22").find("empty") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a%2").find("escape") != std::string::npos);
  CHECK(errorOf("peyedf://reader/a%zz").find("escape") != std::string::npos);
  CHECK_THROWS_AS(percentDecode("%4"), UrlError);
  CHECK(percentDecode("%41%2f") == "A/");
}

TEST_CASE("syntactic target kinds") {
  const auto hash = computeContentHash("x").hex();
  CHECK(syntacticTargetKind("/Users/x/a.pdf") == TargetKind::path);
  CHECK(syntacticTargetKind("PeyeDF_" + hash) == TargetKind::appId);
  CHECK(syntacticTargetKind(hash) == TargetKind::contentHash);
  CHECK(syntacticTargetKind(kSession) == TargetKind::sessionId);
  CHECK(syntacticTargetKind(SessionIdGenerator(1).next()) == TargetKind::sessionId);
  CHECK(parsePeyeUrl("peyedf://reader/" + hash).targetKind == TargetKind::contentHash);
  CHECK(parsePeyeUrl("peyedf://reader/PeyeDF_" + hash).targetKind == TargetKind::appId);
}

TEST_CASE("render then parse is the identity") {
  Gen g(1234);
  int checked = 0;
  for (int i = 0; i < 5000; ++i) {
    auto r = randomRequest(g);
    try {
      r.validate();
    } catch (const UrlError&) {
      continue;
    }
    const auto url = renderPeyeUrl(r);
    INFO(url);
    REQUIRE(parsePeyeUrl(url) == r);
    ++checked;
  }
  CHECK(checked > 3000);
}

TEST_CASE("exact phrase iff the decoded query is quoted") {
  Gen g(5);
  for (int i = 0; i < 3000; ++i) {
    std::string raw = g.word(0, 4);
    if (g.coin()) raw = "\"" + raw;
    if (g.coin()) raw += "\"";
    try {
      auto r = parsePeyeUrl("peyedf://reader/a/b.pdf?search=" + percentEncode(raw));
      const bool quoted = raw.size() >= 2 && raw.front() == '"' && raw.back() == '"';
      REQUIRE(r.search->exactPhrase == quoted);
    } catch (const UrlError&) {
    }
  }
}

TEST_CASE("parser is total on arbitrary input") {
  Gen g(99);
  const std::vector<std::string> seeds = {
      "peyedf://reader/Users/marco/Downloads/Wyble%20et%20al%202009.pdf?search=%22attentional%20blink%22",
      "peyedf://refinder/4c12e273e7be240f9eca1f?point=(200,200)&page=1",
      "peyedf://reader/a/b.pdf?rect=(200,400,200,100)&page=3"};
  int accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    std::string s;
    if (i % 2 == 0) {
      for (auto b : g.bytes(80)) s.push_back(static_cast<char>(b));
    } else {
      s = seeds[static_cast<std::size_t>(g.integer(0, 2))];
      const int edits = static_cast<int>(g.integer(1, 4));
      for (int k = 0; k < edits && !s.empty(); ++k) {
        const auto pos = static_cast<std::size_t>(g.integer(0, static_cast<std::int64_t>(s.size()) - 1));
        switch (g.integer(0, 2)) {
          case 0: s[pos] = static_cast<char>(g.integer(0, 255)); break;
          case 1: s.erase(pos, 1); break;
          default: s.insert(pos, 1, "%()=&?,\"/"[g.integer(0, 8)]);
        }
      }
    }
    try {
      parsePeyeUrl(s);
      ++accepted;
    } catch (const UrlError&) {
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("classify and dispatch against a store") {
  TempDir dir;
  DimeStore store(dir.path());
  auto doc = store.postElement(ScientificDocument::fromText("/docs/a.pdf", "A", "some words"));
  for (int i = 0; i < 3; ++i) store.postEvent(sessionEvent(*doc.id, kSession, i * 1000));
  const auto other = SessionIdGenerator(3).next();
  store.postEvent(sessionEvent(*doc.id, other, 0));

  SUBCASE("classification") {
    CHECK(classifyTarget("/Users/x/a.pdf", UrlMode::reader, store) == TargetKind::path);
    CHECK(classifyTarget(doc.appId().value(), UrlMode::reader, store) == TargetKind::appId);
    CHECK(classifyTarget(doc.contentHash.hex(), UrlMode::reader, store) == TargetKind::contentHash);
    CHECK(classifyTarget(kSession, UrlMode::refinder, store) == TargetKind::sessionId);
    CHECK_THROWS_AS(classifyTarget(computeContentHash("nope").hex(), UrlMode::reader, store), NotFoundError);
    CHECK_THROWS_AS(classifyTarget("deadbeef", UrlMode::refinder, store), NotFoundError);
  }
  SUBCASE("refinder gathers the whole session") {
    auto out = dispatch(parsePeyeUrl("peyedf://refinder/4c12e273e7be240f9eca1f?point=(200,200)&page=1"), store);
    CHECK(out.resolvedAs == TargetKind::sessionId);
    CHECK(out.sessionId == kSession);
    REQUIRE(out.sessionEvents.size() == 3);
    for (const auto& e : out.sessionEvents) CHECK(eventSessionId(e) == kSession);
    REQUIRE(out.document);
    CHECK(out.document->id == doc.id);
    CHECK(out.focus.kind == FocusInstruction::Kind::point);
    CHECK(out.focus.page == 1);
    CHECK(toJson(out)["sessionEvents"].size() == 3);
  }
  SUBCASE("refinder with an unknown session") {
    CHECK_THROWS_AS(dispatch(parsePeyeUrl("peyedf://refinder/ffffffffffffffffffffff"), store), NotFoundError);
    CHECK_THROWS_AS(dispatch(parsePeyeUrl("peyedf://refinder/docs/a.pdf"), store), NotFoundError);
  }
  SUBCASE("reader with a page and no focus goes to the page top") {
    auto out = dispatch(parsePeyeUrl("peyedf://reader/" + doc.appId().value() + "?page=3"), store);
    CHECK(out.document->id == doc.id);
    CHECK(out.focus.kind == FocusInstruction::Kind::pageTop);
    CHECK(out.focus.page == 3);
    auto none = dispatch(parsePeyeUrl("peyedf://reader/" + doc.contentHash.hex()), store);
    CHECK(none.focus.kind == FocusInstruction::Kind::none);
  }
  SUBCASE("reader registers an unknown path once") {
    const auto path = testing::fixture("paper_layout.json").string();
    PeyeRequest r;
    r.target = path;
    r.search = SearchSpec{"fixations", false};
    auto first = dispatch(r, store);
    CHECK(first.registered);
    REQUIRE(first.document);
    CHECK(first.document->uri == path);
    CHECK(first.search == r.search);
    auto second = dispatch(r, store);
    CHECK_FALSE(second.registered);
    CHECK(second.document->id == first.document->id);
    CHECK(store.elementCount() == 2);
    r.target = dir.path().string() + "/missing.json";
    CHECK_THROWS_AS(dispatch(r, store), NotFoundError);
  }
}
