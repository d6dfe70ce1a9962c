#include "readtrace/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace readtrace {

void ViewGeometry::validate() const {
  if (!(pointsPerCentimeter > 0) || !std::isfinite(pointsPerCentimeter)) {
    throw std::invalid_argument("pointsPerCentimeter must be strictly positive");
  }
  if (!(eyeDistanceCm > 0) || !std::isfinite(eyeDistanceCm)) {
    throw std::invalid_argument("eyeDistanceCm must be strictly positive");
  }
}

double visualSpanCm(double angleDegrees, double distanceCm) {
  if (!(angleDegrees > 0 && angleDegrees < 90)) throw std::invalid_argument("angle must lie in (0, 90) degrees");
  if (!(distanceCm > 0)) throw std::invalid_argument("distance must be strictly positive");
  const double halfAngle = angleDegrees * std::numbers::pi / 360.0;
  return 2.0 * distanceCm * std::tan(halfAngle);
}

double visualSpanPoints(double angleDegrees, const ViewGeometry& geometry) {
  geometry.validate();
  return visualSpanCm(angleDegrees, geometry.eyeDistanceCm) * geometry.pointsPerCentimeter;
}

double defaultMaxEyeRectHeight(const ViewGeometry& geometry) {
  return 2.0 * visualSpanPoints(kParagraphAngleDegrees, geometry);
}

bool interiorsOverlap(const Rect& a, const Rect& b) {
  return a.minX() < b.maxX() && b.minX() < a.maxX() && a.minY() < b.maxY() && b.minY() < a.maxY();
}

std::optional<Rect> intersection(const Rect& a, const Rect& b) {
  if (!interiorsOverlap(a, b)) return std::nullopt;
  return Rect::fromEdges(std::max(a.minX(), b.minX()), std::max(a.minY(), b.minY()), std::min(a.maxX(), b.maxX()),
                         std::min(a.maxY(), b.maxY()), a.pageIndex(), a.readingClass(), a.classSource());
}

Rect boundingBox(const Rect& a, const Rect& b) {
  return Rect::fromEdges(std::min(a.minX(), b.minX()), std::min(a.minY(), b.minY()), std::max(a.maxX(), b.maxX()),
                         std::max(a.maxY(), b.maxY()), a.pageIndex(), a.readingClass(), a.classSource());
}

double unionArea(std::span<const Rect> rects) {
  std::vector<double> xs;
  xs.reserve(2 * rects.size());
  for (const auto& r : rects) {
    if (r.area() <= 0) continue;
    xs.push_back(r.minX());
    xs.push_back(r.maxX());
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  double total = 0;
  std::vector<std::pair<double, double>> spans;
  for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
    const double x0 = xs[k];
    const double x1 = xs[k + 1];
    spans.clear();
    for (const auto& r : rects) {
      if (r.area() > 0 && r.minX() <= x0 && r.maxX() >= x1) spans.emplace_back(r.minY(), r.maxY());
    }
    if (spans.empty()) continue;
    std::sort(spans.begin(), spans.end());
    double covered = 0;
    double lo = spans.front().first;
    double hi = spans.front().second;
    for (const auto& [a, b] : spans) {
      if (a > hi) {
        covered += hi - lo;
        lo = a;
        hi = b;
      } else {
        hi = std::max(hi, b);
      }
    }
    covered += hi - lo;
    total += covered * (x1 - x0);
  }
  return total;
}

void sortTopDown(std::vector<EyeRectangle>& rects) {
  std::sort(rects.begin(), rects.end(), [](const EyeRectangle& a, const EyeRectangle& b) {
    if (a.rect.pageIndex() != b.rect.pageIndex()) return a.rect.pageIndex() < b.rect.pageIndex();
    if (a.rect.maxY() != b.rect.maxY()) return a.rect.maxY() > b.rect.maxY();
    if (a.rect.minX() != b.rect.minX()) return a.rect.minX() < b.rect.minX();
    if (a.rect.minY() != b.rect.minY()) return a.rect.minY() < b.rect.minY();
    if (a.rect.maxX() != b.rect.maxX()) return a.rect.maxX() < b.rect.maxX();
    return a.fixationIndices < b.fixationIndices;
  });
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

// One pass of overlap-connected grouping; returns the merged boxes.
std::vector<EyeRectangle> mergeOnce(const std::vector<EyeRectangle>& in) {
  std::vector<std::size_t> order(in.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return in[a].rect.minX() < in[b].rect.minX(); });
  DisjointSets sets(in.size());
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const auto& a = in[order[oi]].rect;
    for (std::size_t oj = oi + 1; oj < order.size() && in[order[oj]].rect.minX() < a.maxX(); ++oj) {
      if (interiorsOverlap(a, in[order[oj]].rect)) sets.unite(order[oi], order[oj]);
    }
  }
  std::vector<EyeRectangle> out;
  std::vector<std::ptrdiff_t> slot(in.size(), -1);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto root = sets.find(i);
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(out.size());
      out.push_back(in[i]);
      continue;
    }
    auto& acc = out[static_cast<std::size_t>(slot[root])];
    acc.rect = boundingBox(acc.rect, in[i].rect);
    acc.fixationIndices.insert(acc.fixationIndices.end(), in[i].fixationIndices.begin(), in[i].fixationIndices.end());
    acc.unitedCount += in[i].unitedCount;
  }
  return out;
}

}  // namespace

std::vector<EyeRectangle> uniteCollidingRects(std::span<const EyeRectangle> rects) {
  if (!rects.empty()) {
    const int page = rects.front().rect.pageIndex();
    for (const auto& r : rects) {
      if (r.rect.pageIndex() != page) throw std::invalid_argument("uniteCollidingRects: rects span multiple pages");
    }
  }
  std::vector<EyeRectangle> current(rects.begin(), rects.end());
  while (true) {
    auto next = mergeOnce(current);
    const bool stable = next.size() == current.size();
    current = std::move(next);
    if (stable) break;
  }
  for (auto& r : current) std::sort(r.fixationIndices.begin(), r.fixationIndices.end());
  sortTopDown(current);
  return current;
}

std::vector<EyeRectangle> splitAndCrop(std::span<const EyeRectangle> rects, double maxHeight,
                                       std::span<const double> fixationYs) {
  if (!(maxHeight > 0)) throw std::invalid_argument("splitAndCrop: maxHeight must be positive");
  std::vector<EyeRectangle> out;
  for (const auto& in : rects) {
    if (in.rect.height() <= maxHeight) {
      out.push_back(in);
      continue;
    }
    const auto pieces = static_cast<std::size_t>(std::ceil(in.rect.height() / maxHeight));
    const std::size_t first = out.size();
    for (std::size_t k = 0; k < pieces; ++k) {
      const double top = in.rect.maxY() - static_cast<double>(k) * maxHeight;
      const double bottom = k + 1 == pieces ? in.rect.minY() : top - maxHeight;
      if (top <= bottom) break;
      EyeRectangle piece;
      piece.rect = Rect::fromEdges(in.rect.minX(), bottom, in.rect.maxX(), top, in.rect.pageIndex(),
                                   in.rect.readingClass(), in.rect.classSource());
      piece.unitedCount = in.unitedCount;
      out.push_back(std::move(piece));
    }
    for (int idx : in.fixationIndices) {
      double y = idx >= 0 && static_cast<std::size_t>(idx) < fixationYs.size() ? fixationYs[static_cast<std::size_t>(idx)]
                                                                                : in.rect.maxY();
      // Band k covers (top - (k+1) h, top - k h]; a fixation on a boundary joins the upper band.
      auto k = static_cast<std::ptrdiff_t>(std::floor((in.rect.maxY() - y) / maxHeight));
      if (k > 0 && in.rect.maxY() - static_cast<double>(k) * maxHeight == y) --k;
      k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(out.size() - first) - 1);
      out[first + static_cast<std::size_t>(k)].fixationIndices.push_back(idx);
    }
  }
  return out;
}

}  // namespace readtrace
