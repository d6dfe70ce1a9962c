#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

#include "readtrace/model.hpp"

namespace readtrace {

using Json = nlohmann::json;

/// Malformed wire document. `field()` names the offending JSON path.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

using AnyEvent = std::variant<ReadingEvent, SummaryReadingEvent>;

Json toJson(const Rect& r);
Json toJson(const PageEyeData& d);
Json toJson(const Tag& t);
Json toJson(const ReadingEvent& e);
Json toJson(const SummaryReadingEvent& e);
Json toJson(const AnyEvent& e);
Json toJson(const ScientificDocument& d);

// `path` prefixes diagnostics, e.g. "pageRects[2]".
Rect rectFromJson(const Json& j, const std::string& path = "rect");
PageEyeData pageEyeDataFromJson(const Json& j, const std::string& path = "pageEyeData");
Tag tagFromJson(const Json& j, const std::string& path = "tag");
ReadingEvent readingEventFromJson(const Json& j);
SummaryReadingEvent summaryEventFromJson(const Json& j);
AnyEvent eventFromJson(const Json& j);  // dispatches on "@type"
ScientificDocument documentFromJson(const Json& j);

std::string serializeEvent(const AnyEvent& e);
AnyEvent deserializeEvent(std::string_view text);
std::string serializeDocument(const ScientificDocument& d);
ScientificDocument deserializeDocument(std::string_view text);

Json parseJson(std::string_view text, const std::string& what = "document");

const std::string& eventSessionId(const AnyEvent& e);
std::int64_t eventTarget(const AnyEvent& e);
const std::string& eventActor(const AnyEvent& e);
std::optional<std::int64_t> eventId(const AnyEvent& e);
void setEventId(AnyEvent& e, std::int64_t id);
const std::string& eventType(const AnyEvent& e);

}  // namespace readtrace
