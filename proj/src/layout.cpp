#include "readtrace/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace readtrace {
namespace {

constexpr double kEdgeTolerance = 1e-9;

double number(const Json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ParseError(path + "." + key, "expected a number");
  double v = it->get<double>();
  if (!std::isfinite(v)) throw ParseError(path + "." + key, "expected a finite number");
  return v;
}

bool flag(const Json& j, const char* key, bool fallback, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw ParseError(path + "." + key, "expected a boolean");
  return it->get<bool>();
}

}  // namespace

DocumentLayout::DocumentLayout(std::vector<PageLayout> pages, std::string title, double pageSpacing)
    : pages_(std::move(pages)), title_(std::move(title)), pageSpacing_(pageSpacing) {
  if (pages_.empty()) throw InvariantError("layout must have at least one page");
  if (!(pageSpacing_ >= 0)) throw InvariantError("pageSpacing must be non-negative");
  double top = 0;
  std::ostringstream text;
  bool firstParagraph = true;
  for (std::size_t p = 0; p < pages_.size(); ++p) {
    auto& page = pages_[p];
    const int pageIndex = static_cast<int>(p);
    if (!(page.cropBox.width > 0 && page.cropBox.height > 0)) {
      throw InvariantError("page " + std::to_string(p) + " cropBox must be positive");
    }
    for (auto& block : page.textBlocks) {
      const auto& r = block.rect;
      if (r.minX() < -kEdgeTolerance || r.minY() < -kEdgeTolerance || r.maxX() > page.cropBox.width + kEdgeTolerance ||
          r.maxY() > page.cropBox.height + kEdgeTolerance) {
        throw InvariantError("text block on page " + std::to_string(p) + " lies outside the cropBox");
      }
      block.rect = r.withPage(pageIndex);
    }
    pageTops_.push_back(top);
    top += page.cropBox.height + pageSpacing_;

    std::vector<Paragraph> paras;
    for (std::size_t b = 0; b < page.textBlocks.size(); ++b) {
      const auto& block = page.textBlocks[b];
      const bool continues = !paras.empty() && paras.back().lastBlock + 1 == b &&
                             !page.textBlocks[b - 1].paragraphBreakBelow && !block.paragraphBreakAbove;
      if (continues) {
        paras.back().rect = boundingBox(paras.back().rect, block.rect);
        paras.back().lastBlock = b;
        text << '\n' << block.text;
      } else {
        paras.push_back(Paragraph{block.rect.withClass(ReadingClass::unknown, ClassSource::unknown), pageIndex, b, b});
        if (!firstParagraph) text << "\n\n";
        text << block.text;
        firstParagraph = false;
      }
    }
    paragraphs_.push_back(std::move(paras));
  }
  plainText_ = text.str();
  contentHash_ = computeContentHash(plainText_);
}

const PageLayout& DocumentLayout::page(int index) const {
  if (index < 0 || index >= pageCount()) throw std::out_of_range("page index " + std::to_string(index));
  return pages_[static_cast<std::size_t>(index)];
}

std::string DocumentLayout::pageLabel(int index) const {
  const auto& label = page(index).label;
  return label.empty() ? defaultPageLabel(index) : label;
}

const std::vector<Paragraph>& DocumentLayout::paragraphs(int pageIndex) const {
  page(pageIndex);
  return paragraphs_[static_cast<std::size_t>(pageIndex)];
}

std::string DocumentLayout::pageText(int pageIndex) const {
  std::string out;
  for (const auto& block : page(pageIndex).textBlocks) {
    if (!out.empty()) out += '\n';
    out += block.text;
  }
  return out;
}

ScientificDocument DocumentLayout::toDocument(std::string uri) const {
  return ScientificDocument::fromText(std::move(uri), title_, plainText_);
}

DocumentLayout layoutFromJson(const Json& j) {
  if (!j.is_object()) throw ParseError("layout", "expected an object");
  auto version = j.find("layoutVersion");
  if (version == j.end() || !version->is_number_integer()) throw ParseError("layoutVersion", "missing or not an integer");
  if (version->get<int>() != kLayoutVersion) {
    throw ParseError("layoutVersion", "unsupported version " + version->dump());
  }
  std::string title;
  if (auto t = j.find("title"); t != j.end()) {
    if (!t->is_string()) throw ParseError("title", "expected a string");
    title = t->get<std::string>();
  }
  double spacing = j.contains("pageSpacing") ? number(j, "pageSpacing", "layout") : 10.0;
  auto pagesIt = j.find("pages");
  if (pagesIt == j.end() || !pagesIt->is_array()) throw ParseError("pages", "expected an array");

  std::vector<PageLayout> pages;
  for (std::size_t p = 0; p < pagesIt->size(); ++p) {
    const auto& pj = (*pagesIt)[p];
    const std::string path = "pages[" + std::to_string(p) + "]";
    if (!pj.is_object()) throw ParseError(path, "expected an object");
    PageLayout page;
    auto crop = pj.find("cropBox");
    if (crop == pj.end() || !crop->is_object()) throw ParseError(path + ".cropBox", "expected an object");
    page.cropBox = {number(*crop, "width", path + ".cropBox"), number(*crop, "height", path + ".cropBox")};
    if (auto l = pj.find("label"); l != pj.end()) {
      if (!l->is_string()) throw ParseError(path + ".label", "expected a string");
      page.label = l->get<std::string>();
    }
    if (auto blocks = pj.find("textBlocks"); blocks != pj.end()) {
      if (!blocks->is_array()) throw ParseError(path + ".textBlocks", "expected an array");
      for (std::size_t b = 0; b < blocks->size(); ++b) {
        const auto& bj = (*blocks)[b];
        const std::string bpath = path + ".textBlocks[" + std::to_string(b) + "]";
        if (!bj.is_object()) throw ParseError(bpath, "expected an object");
        auto rj = bj.find("rect");
        if (rj == bj.end() || !rj->is_object()) throw ParseError(bpath + ".rect", "expected an object");
        TextBlock block;
        try {
          block.rect = Rect({number(*rj, "x", bpath + ".rect"), number(*rj, "y", bpath + ".rect")},
                            {number(*rj, "width", bpath + ".rect"), number(*rj, "height", bpath + ".rect")},
                            static_cast<int>(p));
        } catch (const InvariantError& e) {
          throw ParseError(bpath + ".rect", e.what());
        }
        auto tj = bj.find("text");
        if (tj == bj.end() || !tj->is_string()) throw ParseError(bpath + ".text", "expected a string");
        block.text = tj->get<std::string>();
        block.paragraphBreakAbove = flag(bj, "paragraphBreakAbove", true, bpath);
        block.paragraphBreakBelow = flag(bj, "paragraphBreakBelow", true, bpath);
        page.textBlocks.push_back(std::move(block));
      }
    }
    pages.push_back(std::move(page));
  }
  try {
    return DocumentLayout(std::move(pages), std::move(title), spacing);
  } catch (const InvariantError& e) {
    throw ParseError("layout", e.what());
  }
}

Json toJson(const DocumentLayout& layout) {
  Json pages = Json::array();
  for (const auto& page : layout.pages()) {
    Json blocks = Json::array();
    for (const auto& b : page.textBlocks) {
      blocks.push_back({{"rect", {{"x", b.rect.minX()}, {"y", b.rect.minY()}, {"width", b.rect.width()}, {"height", b.rect.height()}}},
                        {"text", b.text},
                        {"paragraphBreakAbove", b.paragraphBreakAbove},
                        {"paragraphBreakBelow", b.paragraphBreakBelow}});
    }
    pages.push_back({{"cropBox", {{"width", page.cropBox.width}, {"height", page.cropBox.height}}},
                     {"label", page.label},
                     {"textBlocks", std::move(blocks)}});
  }
  return Json{{"layoutVersion", kLayoutVersion},
              {"title", layout.title()},
              {"pageSpacing", layout.pageSpacing()},
              {"pages", std::move(pages)}};
}

DocumentLayout loadLayout(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open layout file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return layoutFromJson(parseJson(buf.str(), "layout"));
}

std::vector<Rect> computeViewport(Point scrollOffset, Size windowSize, const DocumentLayout& layout, double zoom) {
  if (!(windowSize.width > 0 && windowSize.height > 0)) throw std::invalid_argument("window size must be positive");
  if (!(zoom > 0)) throw std::invalid_argument("zoom must be positive");
  const double x0 = scrollOffset.x;
  const double x1 = scrollOffset.x + windowSize.width / zoom;
  const double y0 = scrollOffset.y;
  const double y1 = scrollOffset.y + windowSize.height / zoom;
  std::vector<Rect> out;
  for (int p = 0; p < layout.pageCount(); ++p) {
    const auto& crop = layout.page(p).cropBox;
    const double top = layout.pageTop(p);
    const double ix0 = std::max(x0, 0.0);
    const double ix1 = std::min(x1, crop.width);
    const double iy0 = std::max(y0, top);
    const double iy1 = std::min(y1, top + crop.height);
    if (ix1 <= ix0 || iy1 <= iy0) continue;
    // Document y grows downward; page y grows upward from the page bottom.
    const double bottom = top + crop.height;
    out.push_back(Rect::fromEdges(ix0, bottom - iy1, ix1, bottom - iy0, p, ReadingClass::viewport, ClassSource::viewport));
  }
  return out;
}

std::vector<Rect> computeViewport(const ViewportState& view, const DocumentLayout& layout) {
  return computeViewport(view.scrollOffset, view.windowSize, layout, view.zoom);
}

std::optional<PagePoint> screenToPage(Point screen, const ViewportState& view, const DocumentLayout& layout) {
  if (screen.x < 0 || screen.y < 0 || screen.x > view.windowSize.width || screen.y > view.windowSize.height) {
    return std::nullopt;
  }
  const double dx = view.scrollOffset.x + screen.x / view.zoom;
  const double dy = view.scrollOffset.y + screen.y / view.zoom;
  for (int p = 0; p < layout.pageCount(); ++p) {
    const auto& crop = layout.page(p).cropBox;
    const double top = layout.pageTop(p);
    if (dx >= 0 && dx <= crop.width && dy >= top && dy <= top + crop.height) {
      return PagePoint{p, {dx, top + crop.height - dy}};
    }
  }
  return std::nullopt;
}

Point pageToScreen(const PagePoint& p, const ViewportState& view, const DocumentLayout& layout) {
  const auto& crop = layout.page(p.pageIndex).cropBox;
  const double dy = layout.pageTop(p.pageIndex) + crop.height - p.point.y;
  return {(p.point.x - view.scrollOffset.x) * view.zoom, (dy - view.scrollOffset.y) * view.zoom};
}

std::optional<std::size_t> paragraphAt(const PagePoint& p, const DocumentLayout& layout) {
  if (p.pageIndex < 0 || p.pageIndex >= layout.pageCount()) return std::nullopt;
  const auto& blocks = layout.page(p.pageIndex).textBlocks;
  const auto& paras = layout.paragraphs(p.pageIndex);
  for (std::size_t i = 0; i < paras.size(); ++i) {
    for (std::size_t b = paras[i].firstBlock; b <= paras[i].lastBlock; ++b) {
      if (blocks[b].rect.contains(p.point)) return i;
    }
  }
  return std::nullopt;
}

std::optional<Rect> pointToParagraphRect(const PagePoint& fixation, const DocumentLayout& layout,
                                         const ViewGeometry& geometry) {
  auto index = paragraphAt(fixation, layout);
  if (!index) return std::nullopt;
  const Rect& para = layout.paragraphs(fixation.pageIndex)[*index].rect;
  const double span = visualSpanPoints(kParagraphAngleDegrees, geometry);
  if (para.height() <= span) return para.withClass(ReadingClass::unknown, ClassSource::eye);
  double lo = fixation.point.y - span / 2;
  double hi = fixation.point.y + span / 2;
  if (lo < para.minY()) {
    lo = para.minY();
    hi = lo + span;
  } else if (hi > para.maxY()) {
    hi = para.maxY();
    lo = hi - span;
  }
  return Rect::fromEdges(para.minX(), lo, para.maxX(), hi, fixation.pageIndex, ReadingClass::unknown, ClassSource::eye);
}

std::string visibleText(std::span<const Rect> viewport, const DocumentLayout& layout) {
  std::string out;
  for (const auto& v : viewport) {
    if (v.pageIndex() < 0 || v.pageIndex() >= layout.pageCount()) continue;
    for (const auto& block : layout.page(v.pageIndex()).textBlocks) {
      if (!interiorsOverlap(block.rect, v)) continue;
      if (!out.empty()) out += '\n';
      out += block.text;
    }
  }
  return out;
}

double textAreaProportion(std::span<const Rect> rects, const DocumentLayout& layout) {
  double covered = 0;
  double total = 0;
  for (int p = 0; p < layout.pageCount(); ++p) {
    std::vector<Rect> blocks;
    for (const auto& b : layout.page(p).textBlocks) blocks.push_back(b.rect);
    total += unionArea(blocks);
    std::vector<Rect> pieces;
    for (const auto& r : rects) {
      if (r.pageIndex() != p) continue;
      for (const auto& b : blocks) {
        if (auto i = intersection(r, b)) pieces.push_back(*i);
      }
    }
    covered += unionArea(pieces);
  }
  if (total <= 0) return 0;
  return std::clamp(covered / total, 0.0, 1.0);
}

}  // namespace readtrace
