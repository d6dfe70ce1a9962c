#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace readtrace {

/// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

inline constexpr std::string_view kOntologyPrefix = "http://www.hiit.fi/ontologies/dime/";
inline constexpr std::string_view kAppIdPrefix = "PeyeDF_";
inline constexpr std::string_view kActor = "PeyeDF";

std::string ontologyType(std::string_view name);  // "#ReadingEvent" -> full IRI

inline const std::string kReadingEventType = ontologyType("#ReadingEvent");
inline const std::string kSummaryReadingEventType = ontologyType("#SummaryReadingEvent");
inline const std::string kScientificDocumentType = ontologyType("#ScientificDocument");
inline const std::string kTagType = ontologyType("#Tag");

/// Thrown when a value would violate a model invariant.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// SHA-256 digest of a document's plain text, lowercase hex.
class ContentHash {
 public:
  static constexpr std::size_t kHexLength = 64;

  /// Validates that `hex` is 64 lowercase hex characters.
  static ContentHash fromHex(std::string hex);
  static bool isValidHex(std::string_view hex);

  const std::string& hex() const { return hex_; }
  bool operator==(const ContentHash&) const = default;
  auto operator<=>(const ContentHash&) const = default;

 private:
  explicit ContentHash(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

ContentHash computeContentHash(std::string_view text);

class AppId {
 public:
  static AppId parse(std::string value);  // throws InvariantError without the prefix
  const std::string& value() const { return value_; }
  ContentHash hash() const;
  bool operator==(const AppId&) const = default;

 private:
  explicit AppId(std::string value) : value_(std::move(value)) {}
  std::string value_;
};

AppId makeAppId(const ContentHash& hash);
ContentHash stripAppIdPrefix(const AppId& id);

/// Produces RFC 4122 version-4 UUID strings. Seeded instances are
/// reproducible, which replayed sessions rely on.
class SessionIdGenerator {
 public:
  SessionIdGenerator();
  explicit SessionIdGenerator(std::uint64_t seed);
  std::string next();

 private:
  std::mt19937_64 rng_;
};

bool isUuid(std::string_view s);

enum class ReadingClass : int {
  unknown = 0,
  viewport = 10,
  read = 20,
  important = 25,
  critical = 30,
};

enum class ClassSource : int {
  unknown = 0,
  viewport = 1,
  click = 2,
  eye = 3,
  manualSelection = 4,
};

ReadingClass readingClassFromCode(int code);  // throws InvariantError
ClassSource classSourceFromCode(int code);    // throws InvariantError
std::string_view readingClassName(ReadingClass c);
std::optional<ReadingClass> readingClassFromName(std::string_view name);

/// Minimum fixations on a paragraph for it to count as read.
inline constexpr int kReadFixationThreshold = 3;

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

struct Size {
  double width = 0;
  double height = 0;
  bool operator==(const Size&) const = default;
};

/// Axis-aligned rectangle in page space (points, origin at the page's bottom left).
class Rect {
 public:
  Rect() = default;
  Rect(Point origin, Size size, int pageIndex,
       ReadingClass readingClass = ReadingClass::unknown,
       ClassSource classSource = ClassSource::unknown);

  static Rect fromEdges(double minX, double minY, double maxX, double maxY, int pageIndex,
                        ReadingClass readingClass = ReadingClass::unknown,
                        ClassSource classSource = ClassSource::unknown);

  Point origin() const { return origin_; }
  Size size() const { return size_; }
  int pageIndex() const { return pageIndex_; }
  ReadingClass readingClass() const { return readingClass_; }
  ClassSource classSource() const { return classSource_; }

  double minX() const { return origin_.x; }
  double minY() const { return origin_.y; }
  double maxX() const { return origin_.x + size_.width; }
  double maxY() const { return origin_.y + size_.height; }
  double width() const { return size_.width; }
  double height() const { return size_.height; }
  double area() const { return size_.width * size_.height; }
  Point center() const { return {origin_.x + size_.width / 2, origin_.y + size_.height / 2}; }

  bool contains(Point p) const {
    return p.x >= minX() && p.x <= maxX() && p.y >= minY() && p.y <= maxY();
  }

  Rect withClass(ReadingClass rc, ClassSource cs) const;
  Rect withPage(int pageIndex) const;

  bool operator==(const Rect&) const = default;

 private:
  Point origin_{};
  Size size_{};
  int pageIndex_ = 0;
  ReadingClass readingClass_ = ReadingClass::unknown;
  ClassSource classSource_ = ClassSource::unknown;
};

/// Fixations that landed on one page during one event, as parallel arrays.
struct PageEyeData {
  int pageIndex = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> durations;   // ms
  std::vector<double> pupilSizes;  // 0 = unavailable
  std::vector<double> startTimes;  // ms offset from event start

  std::size_t size() const { return xs.size(); }
  void validate() const;
  bool operator==(const PageEyeData&) const = default;
};

struct TagAnchor {
  int pageIndex = 0;
  Rect rect;
  std::string selectedText;
  bool operator==(const TagAnchor&) const = default;
};

struct Tag {
  std::string text;
  std::optional<TagAnchor> anchor;

  void validate() const;
  bool operator==(const Tag&) const = default;
};

struct ReadingEvent {
  std::optional<std::int64_t> id;  // store-assigned
  std::string sessionId;
  TimestampMs startTime = 0;
  TimestampMs endTime = 0;
  std::vector<int> pageNumbers;
  std::vector<std::string> pageLabels;
  std::vector<Rect> pageRects;
  std::string plainTextContent;
  std::vector<PageEyeData> pageEyeData;
  std::int64_t targettedResourceId = 0;
  std::string actor{kActor};

  void validate() const;
  bool operator==(const ReadingEvent&) const = default;
};

struct SearchQueryStats {
  std::string query;
  int hits = 0;
  std::vector<int> pages;
  bool operator==(const SearchQueryStats&) const = default;
};

struct SummaryReadingEvent {
  std::optional<std::int64_t> id;
  std::string sessionId;
  TimestampMs startTime = 0;
  TimestampMs endTime = 0;
  std::int64_t targettedResourceId = 0;
  std::string actor{kActor};
  std::vector<SearchQueryStats> searchQueries;
  std::map<ReadingClass, double> perClassProportions;

  void validate() const;
  bool operator==(const SummaryReadingEvent&) const = default;
};

struct ScientificDocument {
  std::optional<std::int64_t> id;
  ContentHash contentHash = computeContentHash("");
  std::string uri;
  std::string title;
  std::string plainTextContent;
  std::vector<Tag> tags;

  /// Builds a document whose hash is derived from `text`.
  static ScientificDocument fromText(std::string uri, std::string title, std::string text);

  AppId appId() const { return makeAppId(contentHash); }
  void validate() const;
  bool operator==(const ScientificDocument&) const = default;
};

/// Decimal page index, used when a page has no printed label.
std::string defaultPageLabel(int pageIndex);

}  // namespace readtrace
