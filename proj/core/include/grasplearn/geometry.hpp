#pragma once

#include <array>
#include <vector>

namespace grasp::sim {

struct Vec2 {
  double x = 0;
  double y = 0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const;
};

// Wraps an angle into [0, pi). Grasp axes are line directions, so angles are
// equivalent modulo pi.
double wrap_axis_angle(double a);

// Signed difference between two axis angles under pi-symmetry, in
// (-pi/2, pi/2].
double axis_angle_diff(double a, double b);

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b);
double segment_segment_distance(Vec2 a0, Vec2 a1, Vec2 b0, Vec2 b1);

// Rotated rectangle: center, full width/height, rotation angle.
struct RotatedRect {
  Vec2 center;
  double w = 0;
  double h = 0;
  double angle = 0;

  std::array<Vec2, 4> corners() const;
  double area() const { return w * h; }
};

double polygon_area(const std::vector<Vec2>& poly);
// Convex polygon intersection (Sutherland-Hodgman).
std::vector<Vec2> clip_convex(const std::vector<Vec2>& subject, const std::array<Vec2, 4>& clip);
double rotated_rect_iou(const RotatedRect& a, const RotatedRect& b);

struct Aabb {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};
Aabb rect_aabb(const RotatedRect& r);
double aabb_iou(const Aabb& a, const Aabb& b);

}  // namespace grasp::sim
