#include <doctest.h>

#include <set>

#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"
#include "support.hpp"

using namespace readtrace;
using testing::Gen;

namespace {

Rect randomRect(Gen& g, int page) {
  static const ReadingClass classes[] = {ReadingClass::unknown, ReadingClass::viewport, ReadingClass::read,
                                         ReadingClass::important, ReadingClass::critical};
  return Rect({g.real(-50, 600), g.real(-50, 800)}, {g.real(0, 300), g.real(0, 300)}, page,
              classes[g.integer(0, 4)], classSourceFromCode(g.integer(0, 4)));
}

ReadingEvent randomReadingEvent(Gen& g) {
  ReadingEvent e;
  if (g.coin()) e.id = g.integer(1, 1 << 30);
  e.sessionId = SessionIdGenerator(g.raw()).next();
  e.startTime = g.integer(0, 1 << 30);
  e.endTime = e.startTime + g.integer(0, 100000);
  const int pages = g.integer(0, 3);
  for (int p = 0; p < pages; ++p) {
    const int idx = p * 2 + g.integer(0, 1);
    e.pageNumbers.push_back(idx);
    e.pageLabels.push_back(g.coin() ? defaultPageLabel(idx) : g.word());
    e.pageRects.push_back(randomRect(g, idx));
    if (g.coin()) {
      PageEyeData d;
      d.pageIndex = idx;
      const int n = g.integer(0, 6);
      double t = 0;
      for (int i = 0; i < n; ++i) {
        d.xs.push_back(g.real(0, 612));
        d.ys.push_back(g.real(0, 792));
        d.durations.push_back(g.real(50, 600));
        d.pupilSizes.push_back(g.coin() ? 0.0 : g.real(2, 6));
        t += g.real(0, 500);
        d.startTimes.push_back(t);
      }
      e.pageEyeData.push_back(d);
    }
  }
  e.plainTextContent = g.word(0, 40) + " \"quoted\" \xc3\xa9t\xc3\xa9\n" + g.word();
  e.targettedResourceId = g.integer(1, 1000);
  return e;
}

SummaryReadingEvent randomSummary(Gen& g) {
  SummaryReadingEvent s;
  if (g.coin()) s.id = g.integer(1, 1000);
  s.sessionId = SessionIdGenerator(g.raw()).next();
  s.startTime = g.integer(0, 1 << 30);
  s.endTime = s.startTime + g.integer(0, 100000);
  s.targettedResourceId = g.integer(1, 1000);
  const int q = g.integer(0, 3);
  for (int i = 0; i < q; ++i) {
    SearchQueryStats st;
    st.query = g.coin() ? g.word() : "\"" + g.word() + " " + g.word() + "\"";
    st.hits = g.integer(0, 20);
    for (int k = 0; k < std::min(st.hits, 3); ++k) st.pages.push_back(k);
    s.searchQueries.push_back(st);
  }
  for (auto c : {ReadingClass::viewport, ReadingClass::read, ReadingClass::important, ReadingClass::critical}) {
    if (g.coin()) s.perClassProportions[c] = g.real(0, 1);
  }
  return s;
}

}  // namespace

TEST_CASE("content hash vectors") {
  CHECK(computeContentHash("").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(computeContentHash("hello").hex() == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
  CHECK(computeContentHash("same text") == computeContentHash("same text"));
  CHECK(computeContentHash("hello").hex().size() == ContentHash::kHexLength);
}

TEST_CASE("content hash has no collisions on random strings") {
  Gen g(11);
  std::set<std::string> inputs;
  std::set<std::string> hashes;
  for (int i = 0; i < 10000; ++i) {
    auto s = g.bytes(24);
    if (!inputs.insert(s).second) continue;
    hashes.insert(computeContentHash(s).hex());
  }
  CHECK(hashes.size() == inputs.size());
}

TEST_CASE("content hash hex validation") {
  CHECK(ContentHash::isValidHex(computeContentHash("x").hex()));
  CHECK_FALSE(ContentHash::isValidHex("abc"));
  CHECK_FALSE(ContentHash::isValidHex(std::string(64, 'G')));
  CHECK_FALSE(ContentHash::isValidHex("E3B0C44298FC1C149AFBF4C8996FB92427AE41E4649B934CA495991B7852B855"));
  CHECK_THROWS_AS(ContentHash::fromHex("nothex"), InvariantError);
}

TEST_CASE("appId is the prefixed hash and strips back") {
  auto h = computeContentHash("hello");
  auto id = makeAppId(h);
  CHECK(id.value() == "PeyeDF_" + h.hex());
  CHECK(stripAppIdPrefix(id) == h);
  CHECK(AppId::parse(id.value()) == id);
  CHECK(makeAppId(computeContentHash("a")) != makeAppId(computeContentHash("b")));
  CHECK_THROWS_AS(AppId::parse(h.hex()), InvariantError);
  CHECK_THROWS_AS(AppId::parse("PeyeDF_short"), InvariantError);
}

TEST_CASE("session ids are v4 uuids, unique, reproducible under a seed") {
  SessionIdGenerator live;
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    auto id = live.next();
    CHECK(isUuid(id));
    CHECK(id[14] == '4');
    seen.insert(id);
  }
  CHECK(seen.size() == 1000);
  SessionIdGenerator a(42), b(42), c(43);
  auto first = a.next();
  CHECK(first == b.next());
  CHECK(first != c.next());
  CHECK_FALSE(isUuid("4c12e273e7be240f9eca1f"));
}

TEST_CASE("reading class and source codes") {
  CHECK(static_cast<int>(ReadingClass::viewport) == 10);
  CHECK(static_cast<int>(ClassSource::viewport) == 1);
  CHECK(readingClassFromCode(25) == ReadingClass::important);
  CHECK_THROWS_AS(readingClassFromCode(11), InvariantError);
  CHECK_THROWS_AS(classSourceFromCode(5), InvariantError);
  CHECK(readingClassFromName("critical") == ReadingClass::critical);
  CHECK_FALSE(readingClassFromName("bogus").has_value());
}

TEST_CASE("rect invariants hold through public constructors") {
  CHECK_THROWS_AS(Rect({0, 0}, {-1, 5}, 0), InvariantError);
  CHECK_THROWS_AS(Rect({0, 0}, {1, -5}, 0), InvariantError);
  CHECK_THROWS_AS(Rect({0, 0}, {1, 1}, -1), InvariantError);
  CHECK_THROWS_AS(Rect({NAN, 0}, {1, 1}, 0), InvariantError);
  CHECK_THROWS_AS(Rect::fromEdges(10, 0, 5, 1, 0), InvariantError);
  Rect r({1, 2}, {3, 4}, 2);
  CHECK(r.maxX() == 4);
  CHECK(r.maxY() == 6);
  CHECK(r.area() == 12);
  CHECK(r.contains({1, 2}));
  CHECK_FALSE(r.contains({0.5, 2}));
  auto w = r.withClass(ReadingClass::read, ClassSource::eye);
  CHECK(w.readingClass() == ReadingClass::read);
  CHECK(w.origin() == r.origin());
  CHECK_THROWS_AS(r.withPage(-3), InvariantError);
}

TEST_CASE("reading event invariant checker") {
  ReadingEvent e;
  e.sessionId = "s";
  e.pageNumbers = {0, 1};
  e.pageLabels = {"0"};
  CHECK_THROWS_AS(e.validate(), InvariantError);
  e.pageLabels = {"0", "1"};
  e.pageRects = {Rect({0, 0}, {1, 1}, 3)};
  CHECK_THROWS_AS(e.validate(), InvariantError);
  e.pageRects = {Rect({0, 0}, {1, 1}, 1)};
  CHECK_NOTHROW(e.validate());
  e.startTime = 10;
  e.endTime = 5;
  CHECK_THROWS_AS(e.validate(), InvariantError);
  e.endTime = 10;
  PageEyeData d;
  d.xs = {1};
  CHECK_THROWS_AS(d.validate(), InvariantError);
  d.ys = {1};
  d.durations = {100};
  d.pupilSizes = {0};
  d.startTimes = {0};
  e.pageEyeData = {d, d};
  CHECK_THROWS_AS(e.validate(), InvariantError);
}

TEST_CASE("summary proportions stay in [0,1]") {
  SummaryReadingEvent s;
  s.perClassProportions[ReadingClass::read] = 1.0;
  CHECK_NOTHROW(s.validate());
  s.perClassProportions[ReadingClass::read] = 1.01;
  CHECK_THROWS_AS(s.validate(), InvariantError);
}

TEST_CASE("document hash must match its text; tags need text and an in-page anchor") {
  auto doc = ScientificDocument::fromText("/tmp/a.pdf", "A", "some text");
  CHECK(doc.contentHash == computeContentHash("some text"));
  CHECK(doc.appId().value() == "PeyeDF_" + doc.contentHash.hex());
  CHECK_NOTHROW(doc.validate());
  auto bad = doc;
  bad.plainTextContent = "other";
  CHECK_THROWS_AS(bad.validate(), InvariantError);
  doc.tags.push_back(Tag{"", std::nullopt});
  CHECK_THROWS_AS(doc.validate(), InvariantError);
  doc.tags = {Tag{"done", TagAnchor{1, Rect({0, 0}, {5, 5}, 0), "x"}}};
  CHECK_THROWS_AS(doc.validate(), InvariantError);
  doc.tags = {Tag{"done", TagAnchor{0, Rect({0, 0}, {5, 5}, 0), "x"}}};
  CHECK_NOTHROW(doc.validate());
}

TEST_CASE("minimal reading event carries the full ontology type") {
  ReadingEvent e;
  e.sessionId = "abc";
  e.targettedResourceId = 7;
  auto j = toJson(AnyEvent{e});
  CHECK(j["@type"] == "http://www.hiit.fi/ontologies/dime/#ReadingEvent");
  CHECK(j["actor"] == "PeyeDF");
  CHECK(j["targettedResource"]["id"] == 7);
  CHECK(std::get<ReadingEvent>(deserializeEvent(j.dump())) == e);
}

TEST_CASE("reading event round trip with two gaze blocks") {
  ReadingEvent e;
  e.sessionId = "abc";
  e.pageNumbers = {0, 1};
  e.pageLabels = {"i", "ii"};
  e.pageRects = {Rect({0, 400}, {612, 392}, 0, ReadingClass::viewport, ClassSource::viewport),
                 Rect({0, 0}, {612, 100.25}, 1, ReadingClass::viewport, ClassSource::viewport)};
  e.pageEyeData = {PageEyeData{0, {1.5, 2}, {3, 4}, {200, 210}, {0, 0}, {0, 250}},
                   PageEyeData{1, {7}, {8}, {199.75}, {3.3}, {600}}};
  AnyEvent any = e;
  CHECK(deserializeEvent(serializeEvent(any)) == any);
}

TEST_CASE("serialization round trip property") {
  Gen g(20);
  for (int i = 0; i < 500; ++i) {
    AnyEvent e = g.coin() ? AnyEvent{randomReadingEvent(g)} : AnyEvent{randomSummary(g)};
    REQUIRE(deserializeEvent(serializeEvent(e)) == e);
  }
  for (int i = 0; i < 200; ++i) {
    auto doc = ScientificDocument::fromText("/docs/" + g.word() + ".pdf", g.word(), g.word(0, 30) + " " + g.word());
    if (g.coin()) doc.id = g.integer(1, 99);
    if (g.coin()) doc.tags.push_back(Tag{g.word(), std::nullopt});
    if (g.coin()) doc.tags.push_back(Tag{g.word(), TagAnchor{1, randomRect(g, 1), g.word()}});
    REQUIRE(deserializeDocument(serializeDocument(doc)) == doc);
  }
}

TEST_CASE("unknown fields are ignored on input") {
  ReadingEvent e;
  e.sessionId = "abc";
  auto j = toJson(AnyEvent{e});
  j["somethingNew"] = {1, 2, 3};
  j["pageEyeData"] = Json::array();
  CHECK(std::get<ReadingEvent>(eventFromJson(j)) == e);
}

TEST_CASE("malformed events name the offending field") {
  ReadingEvent e;
  e.sessionId = "abc";
  e.pageNumbers = {0};
  e.pageLabels = {"0"};
  e.pageRects = {Rect({0, 0}, {1, 1}, 0)};
  auto good = toJson(AnyEvent{e});

  auto fieldOf = [](const Json& j) -> std::string {
    try {
      eventFromJson(j);
    } catch (const ParseError& err) {
      return err.field();
    }
    return "<accepted>";
  };

  auto j = good;
  j["pageLabels"] = Json::array();
  CHECK(fieldOf(j) == "pageLabels");
  j = good;
  j.erase("sessionId");
  CHECK(fieldOf(j) == "event.sessionId");
  j = good;
  j["pageRects"][0]["size"]["width"] = "wide";
  CHECK(fieldOf(j) == "pageRects[0].size.width");
  j = good;
  j["pageRects"][0]["readingClass"] = 11;
  CHECK(fieldOf(j).find("readingClass") != std::string::npos);
  j = good;
  j["@type"] = "http://www.hiit.fi/ontologies/dime/#Nope";
  CHECK(fieldOf(j) == "@type");
  CHECK_THROWS_AS(deserializeEvent("{not json"), ParseError);
  CHECK_THROWS_AS(deserializeEvent("[]"), ParseError);
}

TEST_CASE("event accessors") {
  ReadingEvent e;
  e.sessionId = "sid";
  e.targettedResourceId = 9;
  AnyEvent any = e;
  CHECK(eventSessionId(any) == "sid");
  CHECK(eventTarget(any) == 9);
  CHECK(eventActor(any) == "PeyeDF");
  CHECK_FALSE(eventId(any).has_value());
  setEventId(any, 5);
  CHECK(eventId(any) == 5);
  CHECK(eventType(any) == kReadingEventType);
  CHECK(eventType(AnyEvent{SummaryReadingEvent{}}) == kSummaryReadingEventType);
}
