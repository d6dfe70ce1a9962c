#include "readtrace/model.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <set>

namespace readtrace {

std::string ontologyType(std::string_view name) {
  return std::string(kOntologyPrefix) + std::string(name);
}

bool ContentHash::isValidHex(std::string_view hex) {
  return hex.size() == kHexLength &&
         std::all_of(hex.begin(), hex.end(),
                     [](char c) { return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'); });
}

ContentHash ContentHash::fromHex(std::string hex) {
  if (!isValidHex(hex)) {
    throw InvariantError("content hash must be 64 lowercase hex characters: '" + hex + "'");
  }
  return ContentHash(std::move(hex));
}

ContentHash computeContentHash(std::string_view text) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return ContentHash::fromHex(std::move(hex));
}

AppId AppId::parse(std::string value) {
  if (!value.starts_with(kAppIdPrefix)) {
    throw InvariantError("appId must start with PeyeDF_: '" + value + "'");
  }
  ContentHash::fromHex(value.substr(kAppIdPrefix.size()));
  return AppId(std::move(value));
}

ContentHash AppId::hash() const { return ContentHash::fromHex(value_.substr(kAppIdPrefix.size())); }

AppId makeAppId(const ContentHash& hash) { return AppId::parse(std::string(kAppIdPrefix) + hash.hex()); }

ContentHash stripAppIdPrefix(const AppId& id) { return id.hash(); }

SessionIdGenerator::SessionIdGenerator() : rng_(std::random_device{}()) {}
SessionIdGenerator::SessionIdGenerator(std::uint64_t seed) : rng_(seed) {}

std::string SessionIdGenerator::next() {
  std::array<std::uint8_t, 16> bytes{};
  for (std::size_t i = 0; i < bytes.size(); i += 8) {
    std::uint64_t v = rng_();
    for (std::size_t k = 0; k < 8; ++k) bytes[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  bytes[6] = static_cast<std::uint8_t>((bytes[6] & 0x0f) | 0x40);
  bytes[8] = static_cast<std::uint8_t>((bytes[8] & 0x3f) | 0x80);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) out.push_back('-');
    out.push_back(kHex[bytes[i] >> 4]);
    out.push_back(kHex[bytes[i] & 0xf]);
  }
  return out;
}

bool isUuid(std::string_view s) {
  if (s.size() != 36) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (s[i] != '-') return false;
    } else if (!std::isxdigit(static_cast<unsigned char>(s[i]))) {
      return false;
    }
  }
  return true;
}

ReadingClass readingClassFromCode(int code) {
  switch (code) {
    case 0: return ReadingClass::unknown;
    case 10: return ReadingClass::viewport;
    case 20: return ReadingClass::read;
    case 25: return ReadingClass::important;
    case 30: return ReadingClass::critical;
    default: throw InvariantError("illegal readingClass code " + std::to_string(code));
  }
}

ClassSource classSourceFromCode(int code) {
  if (code < 0 || code > 4) throw InvariantError("illegal classSource code " + std::to_string(code));
  return static_cast<ClassSource>(code);
}

std::string_view readingClassName(ReadingClass c) {
  switch (c) {
    case ReadingClass::unknown: return "unknown";
    case ReadingClass::viewport: return "viewport";
    case ReadingClass::read: return "read";
    case ReadingClass::important: return "important";
    case ReadingClass::critical: return "critical";
  }
  return "unknown";
}

std::optional<ReadingClass> readingClassFromName(std::string_view name) {
  for (auto c : {ReadingClass::unknown, ReadingClass::viewport, ReadingClass::read,
                 ReadingClass::important, ReadingClass::critical}) {
    if (readingClassName(c) == name) return c;
  }
  return std::nullopt;
}

Rect::Rect(Point origin, Size size, int pageIndex, ReadingClass readingClass, ClassSource classSource)
    : origin_(origin), size_(size), pageIndex_(pageIndex), readingClass_(readingClass), classSource_(classSource) {
  if (!std::isfinite(origin.x) || !std::isfinite(origin.y) || !std::isfinite(size.width) ||
      !std::isfinite(size.height)) {
    throw InvariantError("rect coordinates must be finite");
  }
  if (size.width < 0 || size.height < 0) throw InvariantError("rect size must be non-negative");
  if (pageIndex < 0) throw InvariantError("rect pageIndex must be non-negative");
}

Rect Rect::fromEdges(double minX, double minY, double maxX, double maxY, int pageIndex,
                     ReadingClass readingClass, ClassSource classSource) {
  return Rect({minX, minY}, {maxX - minX, maxY - minY}, pageIndex, readingClass, classSource);
}

Rect Rect::withClass(ReadingClass rc, ClassSource cs) const { return Rect(origin_, size_, pageIndex_, rc, cs); }
Rect Rect::withPage(int pageIndex) const {
  return Rect(origin_, size_, pageIndex, readingClass_, classSource_);
}

void PageEyeData::validate() const {
  if (pageIndex < 0) throw InvariantError("pageEyeData.pageIndex must be non-negative");
  const auto n = xs.size();
  if (ys.size() != n || durations.size() != n || pupilSizes.size() != n || startTimes.size() != n) {
    throw InvariantError("pageEyeData arrays must have equal length");
  }
  if (!std::is_sorted(startTimes.begin(), startTimes.end())) {
    throw InvariantError("pageEyeData.startTimes must be chronological");
  }
}

void Tag::validate() const {
  if (text.empty()) throw InvariantError("tag text must be non-empty");
  if (anchor && anchor->rect.pageIndex() != anchor->pageIndex) {
    throw InvariantError("tag anchor rect must lie on the anchor page");
  }
}

void ReadingEvent::validate() const {
  if (pageNumbers.size() != pageLabels.size()) {
    throw InvariantError("pageNumbers and pageLabels must have the same length");
  }
  if (endTime < startTime) throw InvariantError("event endTime precedes startTime");
  std::set<int> pages(pageNumbers.begin(), pageNumbers.end());
  for (int p : pageNumbers) {
    if (p < 0) throw InvariantError("pageNumbers must be non-negative");
  }
  for (const auto& r : pageRects) {
    if (!pages.contains(r.pageIndex())) {
      throw InvariantError("pageRects references page " + std::to_string(r.pageIndex()) +
                           " not listed in pageNumbers");
    }
  }
  std::set<int> eyePages;
  for (const auto& d : pageEyeData) {
    d.validate();
    if (!eyePages.insert(d.pageIndex).second) {
      throw InvariantError("duplicate pageEyeData for page " + std::to_string(d.pageIndex));
    }
  }
}

void SummaryReadingEvent::validate() const {
  if (endTime < startTime) throw InvariantError("summary endTime precedes startTime");
  for (const auto& [cls, v] : perClassProportions) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvariantError("proportion for class " + std::string(readingClassName(cls)) + " outside [0,1]");
    }
  }
}

ScientificDocument ScientificDocument::fromText(std::string uri, std::string title, std::string text) {
  ScientificDocument doc;
  doc.contentHash = computeContentHash(text);
  doc.uri = std::move(uri);
  doc.title = std::move(title);
  doc.plainTextContent = std::move(text);
  return doc;
}

void ScientificDocument::validate() const {
  if (computeContentHash(plainTextContent) != contentHash) {
    throw InvariantError("contentHash does not match plainTextContent");
  }
  for (const auto& t : tags) t.validate();
}

std::string defaultPageLabel(int pageIndex) { return std::to_string(pageIndex); }

}  // namespace readtrace
