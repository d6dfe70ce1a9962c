#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "readtrace/geometry.hpp"
#include "readtrace/model.hpp"
#include "readtrace/serialize.hpp"

namespace readtrace {

inline constexpr int kLayoutVersion = 1;

/// A run of text on a page. Consecutive blocks belong to the same paragraph
/// unless a break separates them.
struct TextBlock {
  Rect rect;
  std::string text;
  bool paragraphBreakAbove = true;
  bool paragraphBreakBelow = true;
};

struct PageLayout {
  Size cropBox;
  std::string label;
  std::vector<TextBlock> textBlocks;  // reading order, top to bottom
};

/// A paragraph on one page: its bounding box and the blocks it spans.
struct Paragraph {
  Rect rect;
  int pageIndex = 0;
  std::size_t firstBlock = 0;
  std::size_t lastBlock = 0;  // inclusive
};

/// Stand-in for a rendered PDF: pages laid out top to bottom in one column.
class DocumentLayout {
 public:
  DocumentLayout(std::vector<PageLayout> pages, std::string title = {}, double pageSpacing = 10.0);

  const std::vector<PageLayout>& pages() const { return pages_; }
  const PageLayout& page(int index) const;
  int pageCount() const { return static_cast<int>(pages_.size()); }
  const std::string& title() const { return title_; }
  double pageSpacing() const { return pageSpacing_; }
  const std::string& plainText() const { return plainText_; }
  const ContentHash& contentHash() const { return contentHash_; }

  /// Printed label, or the decimal index when the page has none.
  std::string pageLabel(int index) const;

  /// Distance from the top of the document to the top of page `index`.
  double pageTop(int index) const { return pageTops_.at(static_cast<std::size_t>(index)); }

  const std::vector<Paragraph>& paragraphs(int pageIndex) const;
  std::string pageText(int pageIndex) const;

  /// Builds the registered document for this layout.
  ScientificDocument toDocument(std::string uri) const;

 private:
  std::vector<PageLayout> pages_;
  std::string title_;
  double pageSpacing_;
  std::vector<double> pageTops_;
  std::vector<std::vector<Paragraph>> paragraphs_;
  std::string plainText_;
  ContentHash contentHash_ = computeContentHash("");
};

/// Layout JSON (`"layoutVersion": 1`); errors are reported as ParseError.
DocumentLayout layoutFromJson(const Json& j);
Json toJson(const DocumentLayout& layout);
DocumentLayout loadLayout(const std::filesystem::path& path);

/// What the window shows: scroll position in document points (top-left of
/// the window), window size in screen points and the zoom factor.
struct ViewportState {
  Point scrollOffset{};
  Size windowSize{};
  double zoom = 1.0;
};

struct PagePoint {
  int pageIndex = 0;
  Point point;
  bool operator==(const PagePoint&) const = default;
};

/// One viewport rect per page the window overlaps with positive area.
std::vector<Rect> computeViewport(Point scrollOffset, Size windowSize, const DocumentLayout& layout,
                                  double zoom = 1.0);
std::vector<Rect> computeViewport(const ViewportState& view, const DocumentLayout& layout);

/// Screen points have their origin at the window's top-left corner, y down.
std::optional<PagePoint> screenToPage(Point screen, const ViewportState& view, const DocumentLayout& layout);
Point pageToScreen(const PagePoint& p, const ViewportState& view, const DocumentLayout& layout);

/// Paragraph under a fixation, clipped to the 3 degree span around it.
std::optional<Rect> pointToParagraphRect(const PagePoint& fixation, const DocumentLayout& layout,
                                         const ViewGeometry& geometry);

/// Index of the paragraph on `pageIndex` containing `p`, if any.
std::optional<std::size_t> paragraphAt(const PagePoint& p, const DocumentLayout& layout);

/// Text of every block that intersects one of the viewport rects.
std::string visibleText(std::span<const Rect> viewport, const DocumentLayout& layout);

/// Fraction of the document's text area covered by the union of `rects`.
double textAreaProportion(std::span<const Rect> rects, const DocumentLayout& layout);

}  // namespace readtrace
