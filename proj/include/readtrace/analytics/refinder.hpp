#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "readtrace/layout.hpp"
#include "readtrace/serialize.hpp"

namespace readtrace::analytics {

struct ReadParagraph {
  int pageIndex = 0;
  std::size_t paragraphIndex = 0;
  int fixations = 0;
  Rect rect;
};

struct RefinderReport {
  std::string sessionId;
  std::map<ReadingClass, double> proportions;  // united class area / text area
  std::vector<ReadParagraph> readParagraphs;
};

/// Per-class coverage of one session: viewport from viewport rects, read from
/// unannotated paragraphs with at least three fixations, important and
/// critical from annotations. Throws AnalyticsError on mixed sessions.
RefinderReport refinderReport(std::span<const AnyEvent> sessionEvents, const DocumentLayout& layout);

Json toJson(const RefinderReport& report);
std::string formatReport(const RefinderReport& report);

}  // namespace readtrace::analytics
