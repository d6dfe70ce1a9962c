#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"
#include "readtrace/store.hpp"

namespace readtrace {

inline constexpr std::string_view kUrlScheme = "peyedf";

enum class UrlMode { reader, refinder };
enum class TargetKind { path, contentHash, appId, sessionId };

std::string_view modeName(UrlMode m);
std::string_view targetKindName(TargetKind k);

struct SearchSpec {
  std::string query;  // without the surrounding quotes
  bool exactPhrase = false;
  bool operator==(const SearchSpec&) const = default;
};

/// Focus rectangle (x, y, w, h) in page space, bottom-left origin.
struct FocusRect {
  double x = 0, y = 0, w = 0, h = 0;
  bool operator==(const FocusRect&) const = default;
};
struct FocusPoint {
  double x = 0, y = 0;
  bool operator==(const FocusPoint&) const = default;
};
using Focus = std::variant<FocusRect, FocusPoint>;

struct PeyeRequest {
  UrlMode mode = UrlMode::reader;
  std::string target;  // decoded; paths keep their leading '/'
  TargetKind targetKind = TargetKind::path;
  std::optional<SearchSpec> search;
  std::optional<int> page;  // 0-based
  std::optional<Focus> focus;

  void validate() const;  // throws UrlError
  bool operator==(const PeyeRequest&) const = default;
};

class UrlError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decodes %XX escapes; '+' stays literal. Throws UrlError on bad escapes.
std::string percentDecode(std::string_view s);
/// Escapes everything outside the unreserved set (and '/' when keepSlash).
std::string percentEncode(std::string_view s, bool keepSlash = false);

/// Classification by shape alone: a target with a '/' is a path, "PeyeDF_…"
/// an appId, 64 hex digits a contentHash, anything else a sessionId.
TargetKind syntacticTargetKind(std::string_view target);

PeyeRequest parsePeyeUrl(std::string_view url);
std::string renderPeyeUrl(const PeyeRequest& request);
Json toJson(const PeyeRequest& request);

/// Resolves what `target` names, consulting the store. In refinder mode a
/// known sessionId wins over other readings. Throws NotFoundError.
TargetKind classifyTarget(std::string_view target, UrlMode mode, DimeApi& store);

struct FocusInstruction {
  enum class Kind { none, pageTop, rect, point };
  Kind kind = Kind::none;
  int page = 0;
  std::optional<FocusRect> rect;
  std::optional<FocusPoint> point;
};

struct DispatchOutcome {
  UrlMode mode = UrlMode::reader;
  TargetKind resolvedAs = TargetKind::path;
  std::optional<ScientificDocument> document;
  std::optional<std::string> sessionId;
  std::vector<AnyEvent> sessionEvents;  // refinder: every event of the session
  std::optional<SearchSpec> search;     // applied before focus
  FocusInstruction focus;
  bool registered = false;  // the document was added to the store by this call
};

/// Reader mode opens a document (registering an unknown path from its layout
/// file); refinder mode gathers a past session. Throws NotFoundError.
DispatchOutcome dispatch(const PeyeRequest& request, DimeApi& store);
Json toJson(const DispatchOutcome& outcome);

}  // namespace readtrace
