#pragma once

#include <optional>
#include <span>
#include <vector>

#include "readtrace/model.hpp"

namespace readtrace {

/// Angle used both for paragraph capture height and the answer inclusion radius.
inline constexpr double kParagraphAngleDegrees = 3.0;
inline constexpr double kDefaultEyeDistanceCm = 60.0;
inline constexpr double kPointsPerCentimeter72dpi = 72.0 / 2.54;

/// Viewing conditions used to turn visual angles into page points.
struct ViewGeometry {
  double pointsPerCentimeter = kPointsPerCentimeter72dpi;
  double eyeDistanceCm = kDefaultEyeDistanceCm;

  void validate() const;  // throws std::invalid_argument unless both > 0
};

/// Extent on screen, in centimetres, subtended by `angleDegrees` at `distanceCm`.
double visualSpanCm(double angleDegrees, double distanceCm);

/// Same extent in page points: 2 d tan(a/2) * density.
double visualSpanPoints(double angleDegrees, const ViewGeometry& geometry);

/// Default split height for eye rectangles: twice the 3 degree span.
double defaultMaxEyeRectHeight(const ViewGeometry& geometry);

// Rect helpers. All operate on a single page unless stated otherwise.
bool interiorsOverlap(const Rect& a, const Rect& b);
std::optional<Rect> intersection(const Rect& a, const Rect& b);  // positive-area only
Rect boundingBox(const Rect& a, const Rect& b);

/// Area of the union of `rects`, ignoring page indices.
double unionArea(std::span<const Rect> rects);

/// Paragraph-level rectangle produced from gaze, with the fixations it covers.
struct EyeRectangle {
  Rect rect;
  std::vector<int> fixationIndices;
  int unitedCount = 1;

  bool operator==(const EyeRectangle&) const = default;
};

/// Merges every group of rectangles whose interiors overlap (transitively, and
/// again whenever a merged bounding box hits another) into its bounding box.
/// Output is sorted top-down then left-right; indices are sorted ascending.
/// Throws std::invalid_argument if the inputs span more than one page.
std::vector<EyeRectangle> uniteCollidingRects(std::span<const EyeRectangle> rects);

/// Splits rectangles taller than `maxHeight` into horizontal bands, top-down.
/// Each fixation index goes to the band holding `fixationYs[index]`; bands that
/// receive no fixation are still returned so total area is preserved.
std::vector<EyeRectangle> splitAndCrop(std::span<const EyeRectangle> rects, double maxHeight,
                                       std::span<const double> fixationYs);

/// Canonical ordering used by the rectangle operations.
void sortTopDown(std::vector<EyeRectangle>& rects);

}  // namespace readtrace
