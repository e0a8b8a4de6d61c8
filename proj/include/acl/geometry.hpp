#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace acl {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline bool is_finite(Vec2 a) { return std::isfinite(a.x) && std::isfinite(a.y); }

/// Axis-aligned rectangle [lo.x, hi.x] x [lo.y, hi.y].
struct Rect {
  Vec2 lo;
  Vec2 hi;

  Vec2 center() const { return 0.5 * (lo + hi); }
  Vec2 size() const { return hi - lo; }

  Rect inflated(double margin) const {
    return {{lo.x - margin, lo.y - margin}, {hi.x + margin, hi.y + margin}};
  }

  bool contains(Vec2 p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
  }

  bool strictly_contains(Vec2 p) const {
    return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y;
  }

  Vec2 clamp(Vec2 p) const {
    return {std::clamp(p.x, lo.x, hi.x), std::clamp(p.y, lo.y, hi.y)};
  }

  friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

inline Rect square_at(Vec2 center, double side) {
  const double h = 0.5 * side;
  return {{center.x - h, center.y - h}, {center.x + h, center.y + h}};
}

inline bool rects_overlap(const Rect& a, const Rect& b) {
  return a.lo.x < b.hi.x && b.lo.x < a.hi.x && a.lo.y < b.hi.y && b.lo.y < a.hi.y;
}

struct Segment {
  Vec2 a;
  Vec2 b;

  double length() const { return distance(a, b); }
  Vec2 lerp(double t) const { return a + t * (b - a); }
};

inline double distance_to_segment(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return distance(p, s.a);
  const double t = std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0);
  return distance(p, s.lerp(t));
}

inline Vec2 closest_point(const Rect& r, Vec2 p) { return r.clamp(p); }

inline double distance_to_rect(const Rect& r, Vec2 p) { return distance(p, closest_point(r, p)); }

/// True iff the segment p0 -> p1 passes through the open interior of r.
/// Touching the boundary does not count.
inline bool segment_hits_open_rect(Vec2 p0, Vec2 p1, const Rect& r) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  const double o[2] = {p0.x, p0.y};
  const double d[2] = {p1.x - p0.x, p1.y - p0.y};
  const double lo[2] = {r.lo.x, r.lo.y};
  const double hi[2] = {r.hi.x, r.hi.y};
  for (int k = 0; k < 2; ++k) {
    if (d[k] == 0.0) {
      if (!(o[k] > lo[k] && o[k] < hi[k])) return false;
      continue;
    }
    double t0 = (lo[k] - o[k]) / d[k];
    double t1 = (hi[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  return t_enter < t_exit && t_enter < 1.0 && t_exit > 0.0;
}

/// Displacement that moves `square` out of the disc (center, radius) along the
/// minimum translation vector. Zero when they do not overlap.
inline Vec2 disc_square_push(Vec2 center, double radius, const Rect& square) {
  if (!square.strictly_contains(center)) {
    const Vec2 p = closest_point(square, center);
    const Vec2 d = p - center;
    const double dist = norm(d);
    if (dist >= radius || dist == 0.0) {
      if (dist == 0.0 && radius > 0.0) {
        // Center on the boundary: push along the outward face normal.
        const Vec2 n = (center.x == square.lo.x)   ? Vec2{1.0, 0.0}
                       : (center.x == square.hi.x) ? Vec2{-1.0, 0.0}
                       : (center.y == square.lo.y) ? Vec2{0.0, 1.0}
                                                   : Vec2{0.0, -1.0};
        return radius * n;
      }
      return {};
    }
    return (radius - dist) / dist * d;
  }
  // Center inside the square: exit through the nearest face.
  const double to_left = center.x - square.lo.x;
  const double to_right = square.hi.x - center.x;
  const double to_bottom = center.y - square.lo.y;
  const double to_top = square.hi.y - center.y;
  const double m = std::min({to_left, to_right, to_bottom, to_top});
  if (m == to_left) return {to_left + radius, 0.0};
  if (m == to_right) return {-(to_right + radius), 0.0};
  if (m == to_bottom) return {0.0, to_bottom + radius};
  return {0.0, -(to_top + radius)};
}

}  // namespace acl
