#include "readtrace/analytics/refinder.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "readtrace/analytics/auc.hpp"
#include "readtrace/geometry.hpp"

namespace readtrace::analytics {

RefinderReport refinderReport(std::span<const AnyEvent> sessionEvents, const DocumentLayout& layout) {
  RefinderReport report;
  if (sessionEvents.empty()) throw AnalyticsError("no events to report on");
  report.sessionId = eventSessionId(sessionEvents.front());

  std::vector<Rect> viewport;
  std::map<ReadingClass, std::vector<Rect>> annotations;
  std::map<std::pair<int, std::size_t>, int> counts;
  for (const auto& any : sessionEvents) {
    if (eventSessionId(any) != report.sessionId) throw AnalyticsError("events belong to more than one session");
    const auto* e = std::get_if<ReadingEvent>(&any);
    if (!e) continue;
    for (const auto& r : e->pageRects) {
      if (r.pageIndex() >= layout.pageCount()) continue;
      if (r.readingClass() == ReadingClass::viewport) viewport.push_back(r);
      if (r.readingClass() == ReadingClass::important || r.readingClass() == ReadingClass::critical) {
        auto& list = annotations[r.readingClass()];
        if (std::find(list.begin(), list.end(), r) == list.end()) list.push_back(r);
      }
    }
    for (const auto& d : e->pageEyeData) {
      if (d.pageIndex >= layout.pageCount()) continue;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (auto para = paragraphAt(PagePoint{d.pageIndex, {d.xs[i], d.ys[i]}}, layout)) ++counts[{d.pageIndex, *para}];
      }
    }
  }

  std::vector<Rect> read;
  for (const auto& [key, n] : counts) {
    if (n < kReadFixationThreshold) continue;
    const auto& rect = layout.paragraphs(key.first)[key.second].rect;
    bool annotated = false;
    for (const auto& [cls, rects] : annotations) {
      annotated = annotated || std::any_of(rects.begin(), rects.end(), [&](const Rect& a) {
                    return a.pageIndex() == key.first && interiorsOverlap(a, rect);
                  });
    }
    if (annotated) continue;
    read.push_back(rect);
    report.readParagraphs.push_back({key.first, key.second, n, rect});
  }

  if (!viewport.empty()) report.proportions[ReadingClass::viewport] = textAreaProportion(viewport, layout);
  if (!read.empty()) report.proportions[ReadingClass::read] = textAreaProportion(read, layout);
  for (const auto& [cls, rects] : annotations) report.proportions[cls] = textAreaProportion(rects, layout);
  return report;
}

Json toJson(const RefinderReport& report) {
  Json proportions = Json::object();
  for (const auto& [cls, v] : report.proportions) proportions[std::string(readingClassName(cls))] = v;
  Json paragraphs = Json::array();
  for (const auto& p : report.readParagraphs) {
    paragraphs.push_back(Json{{"pageIndex", p.pageIndex},
                              {"paragraphIndex", p.paragraphIndex},
                              {"fixations", p.fixations},
                              {"rect", toJson(p.rect)}});
  }
  return Json{{"sessionId", report.sessionId}, {"proportions", proportions}, {"readParagraphs", paragraphs}};
}

std::string formatReport(const RefinderReport& report) {
  std::string out = "session " + report.sessionId + "\n";
  char line[128];
  for (const auto& [cls, v] : report.proportions) {
    std::snprintf(line, sizeof line, "  %-10s %6.1f%%\n", std::string(readingClassName(cls)).c_str(), v * 100.0);
    out += line;
  }
  out += "  read paragraphs: " + std::to_string(report.readParagraphs.size()) + "\n";
  return out;
}

}  // namespace readtrace::analytics
