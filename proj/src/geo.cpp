#include "ems/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ems {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct Vec3 {
  double x, y, z;
};

Vec3 to_unit(GeoPoint p) {
  const double lat = p.lat * kDegToRad;
  const double lon = p.lon * kDegToRad;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon),
          std::sin(lat)};
}

GeoPoint from_unit(Vec3 v) {
  const double n = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {std::asin(std::clamp(v.z / n, -1.0, 1.0)) * kRadToDeg,
          std::atan2(v.y, v.x) * kRadToDeg};
}

}  // namespace

bool is_valid(GeoPoint p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

double haversine_m(GeoPoint p, GeoPoint q) {
  if (p == q) return 0.0;
  const double phi1 = p.lat * kDegToRad;
  const double phi2 = q.lat * kDegToRad;
  const double dphi = (q.lat - p.lat) * kDegToRad;
  const double dlambda = (q.lon - p.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

GeoPoint interpolate_great_circle(GeoPoint p, GeoPoint q, double f) {
  if (f <= 0.0 || p == q) return p;
  if (f >= 1.0) return q;
  const Vec3 a = to_unit(p);
  const Vec3 b = to_unit(q);
  const double dot = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
  const double omega = std::acos(dot);
  if (omega < 1e-12) return p;
  const double so = std::sin(omega);
  const double wa = std::sin((1.0 - f) * omega) / so;
  const double wb = std::sin(f * omega) / so;
  return from_unit({wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z});
}

double polygon_area(std::span<const GeoPoint> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    twice += poly[j].lon * poly[i].lat - poly[i].lon * poly[j].lat;
  }
  return std::abs(twice) / 2.0;
}

GeoPoint polygon_centroid(std::span<const GeoPoint> poly) {
  double twice = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const double cross = poly[j].lon * poly[i].lat - poly[i].lon * poly[j].lat;
    twice += cross;
    cx += (poly[j].lon + poly[i].lon) * cross;
    cy += (poly[j].lat + poly[i].lat) * cross;
  }
  if (std::abs(twice) < 1e-300) {
    double sx = 0.0, sy = 0.0;
    for (const auto& p : poly) {
      sx += p.lon;
      sy += p.lat;
    }
    return {sy / static_cast<double>(poly.size()), sx / static_cast<double>(poly.size())};
  }
  return {cy / (3.0 * twice), cx / (3.0 * twice)};
}

bool polygon_contains(std::span<const GeoPoint> poly, GeoPoint p) {
  // Crossing number with half-open edges: a point on a shared edge is
  // attributed to exactly one of two adjacent polygons.
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const GeoPoint& a = poly[i];
    const GeoPoint& b = poly[j];
    if ((a.lat > p.lat) != (b.lat > p.lat)) {
      const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

std::vector<GeoPoint> clip_to_box(std::span<const GeoPoint> poly, GeoPoint lo,
                                  GeoPoint hi) {
  std::vector<GeoPoint> out(poly.begin(), poly.end());
  // Each edge of the box as (axis, bound, keep_greater).
  struct Plane {
    bool is_lat;
    double bound;
    bool keep_ge;
  };
  const Plane planes[4] = {{false, lo.lon, true},
                           {false, hi.lon, false},
                           {true, lo.lat, true},
                           {true, hi.lat, false}};
  for (const auto& pl : planes) {
    if (out.empty()) break;
    std::vector<GeoPoint> in;
    in.swap(out);
    auto coord = [&](const GeoPoint& g) { return pl.is_lat ? g.lat : g.lon; };
    auto inside = [&](const GeoPoint& g) {
      return pl.keep_ge ? coord(g) >= pl.bound : coord(g) <= pl.bound;
    };
    auto cut = [&](const GeoPoint& a, const GeoPoint& b) {
      const double t = (pl.bound - coord(a)) / (coord(b) - coord(a));
      GeoPoint r{a.lat + t * (b.lat - a.lat), a.lon + t * (b.lon - a.lon)};
      if (pl.is_lat) {
        r.lat = pl.bound;
      } else {
        r.lon = pl.bound;
      }
      return r;
    };
    for (std::size_t i = 0; i < in.size(); ++i) {
      const GeoPoint& cur = in[i];
      const GeoPoint& prev = in[(i + in.size() - 1) % in.size()];
      const bool cin = inside(cur);
      const bool pin = inside(prev);
      if (cin) {
        if (!pin) out.push_back(cut(prev, cur));
        out.push_back(cur);
      } else if (pin) {
        out.push_back(cut(prev, cur));
      }
    }
  }
  return out;
}

}  // namespace ems
