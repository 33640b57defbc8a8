#include "grasplearn/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace grasp::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

double wrap_axis_angle(double a) {
  a = std::fmod(a, kPi);
  if (a < 0) a += kPi;
  if (a >= kPi) a = 0;  // fmod rounding can land exactly on pi
  return a;
}

double axis_angle_diff(double a, double b) {
  double d = std::fmod(a - b, kPi);
  if (d <= -kPi / 2) d += kPi;
  if (d > kPi / 2) d -= kPi;
  return d;
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 <= 0) return (p - a).norm();
  double t = (p - a).dot(ab) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

double segment_segment_distance(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1) {
  const Vec2 da = a1 - a0;
  const Vec2 db = b1 - b0;
  const Vec2 r = b0 - a0;
  const double denom = da.cross(db);
  if (denom != 0) {
    const double t = r.cross(db) / denom;
    const double u = r.cross(da) / denom;
    if (t >= 0 && t <= 1 && u >= 0 && u <= 1) return 0.0;  // proper intersection
  }
  return std::min(std::min(point_segment_distance(a0, b0, b1), point_segment_distance(a1, b0, b1)),
                  std::min(point_segment_distance(b0, a0, a1), point_segment_distance(b1, a0, a1)));
}

std::array<Vec2, 4> RotatedRect::corners() const {
  const double c = std::cos(angle), s = std::sin(angle);
  const Vec2 ux{c, s}, uy{-s, c};
  const Vec2 ex = ux * (w / 2), ey = uy * (h / 2);
  return {center + ex + ey, center - ex + ey, center - ex - ey, center + ex - ey};
}

double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.cross(q);
  }
  return std::fabs(a) / 2.0;
}

std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::array<Vec2, 4>& clip) {
  // Clip edges must wind consistently; corners() returns counter-clockwise
  // order for angle 0, so inside = left of each directed edge.
  std::vector<Vec2> poly = subject;
  // Determine winding of the clip rect.
  double cw = 0;
  for (int i = 0; i < 4; ++i) cw += clip[i].cross(clip[(i + 1) % 4]);
  const double side = cw >= 0 ? 1.0 : -1.0;
  for (int e = 0; e < 4 && !poly.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % 4];
    const Vec2 dir = b - a;
    std::vector<Vec2> out;
    out.reserve(poly.size() + 4);
    for (size_t i = 0; i < poly.size(); ++i) {
      const Vec2 p = poly[i];
      const Vec2 q = poly[(i + 1) % poly.size()];
      const double dp = side * dir.cross(p - a);
      const double dq = side * dir.cross(q - a);
      const bool in_p = dp >= 0, in_q = dq >= 0;
      if (in_p) out.push_back(p);
      if (in_p != in_q) {
        const double t = dp / (dp - dq);
        out.push_back(p + (q - p) * t);
      }
    }
    poly = std::move(out);
  }
  return poly;
}

double rotated_rect_iou(const RotatedRect& a, const RotatedRect& b) {
  if (a.area() <= 0 || b.area() <= 0) return 0.0;
  const auto ca = a.corners();
  std::vector<Vec2> subject(ca.begin(), ca.end());
  const double inter = polygon_area(clip_convex(subject, b.corners()));
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Aabb rect_aabb(const RotatedRect& r) {
  const auto cs = r.corners();
  Aabb box{cs[0].x, cs[0].y, cs[0].x, cs[0].y};
  for (const Vec2& c : cs) {
    box.x0 = std::min(box.x0, c.x);
    box.y0 = std::min(box.y0, c.y);
    box.x1 = std::max(box.x1, c.x);
    box.y1 = std::max(box.y1, c.y);
  }
  return box;
}

double aabb_iou(const Aabb& a, const Aabb& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace grasp::sim
