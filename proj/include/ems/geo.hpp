#pragma once

#include <span>
#include <vector>

namespace ems {

inline constexpr double kEarthRadiusM = 6'371'000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees
  double lon = 0.0;  // degrees

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(GeoPoint p);

/// Great-circle distance in meters (haversine).
double haversine_m(GeoPoint p, GeoPoint q);

/// Point at fraction `f` in [0,1] along the great-circle arc from p to q.
GeoPoint interpolate_great_circle(GeoPoint p, GeoPoint q, double f);

// Planar polygon helpers. Coordinates are treated as (x = lon, y = lat).

double polygon_area(std::span<const GeoPoint> poly);
GeoPoint polygon_centroid(std::span<const GeoPoint> poly);
bool polygon_contains(std::span<const GeoPoint> poly, GeoPoint p);

/// Sutherland-Hodgman clip of a polygon against an axis-aligned box.
std::vector<GeoPoint> clip_to_box(std::span<const GeoPoint> poly, GeoPoint lo,
                                  GeoPoint hi);

}  // namespace ems
