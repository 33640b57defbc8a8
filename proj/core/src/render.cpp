#include "grasplearn/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "grasplearn/errors.hpp"

namespace grasp::sim {

namespace {

void put_pixel(nn::Tensor& img, int y, int x, Color c) {
  img.at3(0, y, x) = c.r;
  img.at3(1, y, x) = c.g;
  img.at3(2, y, x) = c.b;
}

void fill(nn::Tensor& img, Color c) {
  const int h = img.shape[1], w = img.shape[2];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) put_pixel(img, y, x, c);
}

// Axis-aligned filled rectangle in pixel space, clipped to the image.
void fill_rect(nn::Tensor& img, double cx, double cy, double half_w, double half_h, Color c) {
  const int h = img.shape[1], w = img.shape[2];
  const int x0 = std::max(0, static_cast<int>(std::ceil(cx - half_w - 0.5)));
  const int x1 = std::min(w - 1, static_cast<int>(std::floor(cx + half_w - 0.5)));
  const int y0 = std::max(0, static_cast<int>(std::ceil(cy - half_h - 0.5)));
  const int y1 = std::min(h - 1, static_cast<int>(std::floor(cy + half_h - 0.5)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) put_pixel(img, y, x, c);
}

// Draws a capsule (+ optional bulge) whose geometry is given in cm in an
// arbitrary frame; to_px maps cm coordinates to pixel coordinates.
struct CapsuleBrush {
  Vec2 seg_a, seg_b;  // cm
  double radius;      // cm
  bool has_bulge = false;
  Vec2 bulge_center;
  double bulge_radius = 0;
};

void draw_capsule(nn::Tensor& img, const CapsuleBrush& brush, double px_per_cm, Vec2 origin_cm,
                  Color body, Color bulge) {
  const int h = img.shape[1], w = img.shape[2];
  // Bounding box in pixels to avoid scanning the full image.
  double x_min = std::min(brush.seg_a.x, brush.seg_b.x) - brush.radius;
  double x_max = std::max(brush.seg_a.x, brush.seg_b.x) + brush.radius;
  double y_min = std::min(brush.seg_a.y, brush.seg_b.y) - brush.radius;
  double y_max = std::max(brush.seg_a.y, brush.seg_b.y) + brush.radius;
  if (brush.has_bulge) {
    x_min = std::min(x_min, brush.bulge_center.x - brush.bulge_radius);
    x_max = std::max(x_max, brush.bulge_center.x + brush.bulge_radius);
    y_min = std::min(y_min, brush.bulge_center.y - brush.bulge_radius);
    y_max = std::max(y_max, brush.bulge_center.y + brush.bulge_radius);
  }
  const int px0 = std::max(0, static_cast<int>(std::floor((x_min - origin_cm.x) * px_per_cm)) - 1);
  const int px1 = std::min(w - 1, static_cast<int>(std::ceil((x_max - origin_cm.x) * px_per_cm)) + 1);
  const int py0 = std::max(0, static_cast<int>(std::floor((y_min - origin_cm.y) * px_per_cm)) - 1);
  const int py1 = std::min(h - 1, static_cast<int>(std::ceil((y_max - origin_cm.y) * px_per_cm)) + 1);
  for (int py = py0; py <= py1; ++py) {
    for (int px = px0; px <= px1; ++px) {
      const Vec2 p{origin_cm.x + (px + 0.5) / px_per_cm, origin_cm.y + (py + 0.5) / px_per_cm};
      const bool in_bulge =
          brush.has_bulge && (p - brush.bulge_center).norm() <= brush.bulge_radius;
      const bool in_body = point_segment_distance(p, brush.seg_a, brush.seg_b) <= brush.radius;
      if (in_bulge && !in_body) {
        put_pixel(img, py, px, bulge);
      } else if (in_body) {
        put_pixel(img, py, px, body);
      }
    }
  }
}

}  // namespace

Color background_color() { return {0.10, 0.11, 0.13}; }
Color body_color(ObjectKind kind) {
  return kind == ObjectKind::cylinder ? Color{0.82, 0.29, 0.24} : Color{0.80, 0.33, 0.22};
}
Color bulge_color() { return {0.93, 0.69, 0.25}; }
Color gripper_color() { return {0.35, 0.37, 0.95}; }

nn::Tensor render_top(const Scene& scene, const RenderConfig& cfg) {
  const int res = cfg.top_resolution;
  nn::Tensor img({3, res, res});
  fill(img, background_color());
  const double px_per_cm = res / scene.workspace;
  for (const SimObject& obj : scene.objects) {
    CapsuleBrush brush;
    brush.seg_a = obj.endpoint(-1);
    brush.seg_b = obj.endpoint(+1);
    brush.radius = obj.radius;
    if (obj.kind == ObjectKind::elongated) {
      brush.has_bulge = true;
      brush.bulge_center = obj.bulge_center();
      brush.bulge_radius = obj.bulge_radius();
    }
    draw_capsule(img, brush, px_per_cm, {0, 0}, body_color(obj.kind), bulge_color());
  }
  return img;
}

nn::Tensor render_side_errors(const SimObject& prototype, double along_error, double angle_error,
                              const RenderConfig& cfg) {
  const int res = cfg.side_resolution;
  nn::Tensor img({3, res, res});
  fill(img, background_color());
  const double px_per_cm = res / cfg.side_span;
  // View frame: origin at the top-left, gripper at the center.
  const Vec2 origin{-cfg.side_span / 2.0, -cfg.side_span / 2.0};
  const Vec2 dir{std::cos(angle_error), std::sin(angle_error)};
  const Vec2 obj_center = dir * along_error;  // positive error shifts toward +axis
  CapsuleBrush brush;
  const double seg_half = prototype.segment_half();
  brush.seg_a = obj_center - dir * seg_half;
  brush.seg_b = obj_center + dir * seg_half;
  brush.radius = prototype.radius;
  if (prototype.kind == ObjectKind::elongated) {
    brush.has_bulge = true;
    brush.bulge_center = obj_center + dir * (prototype.length / 2.0 - prototype.bulge_radius());
    brush.bulge_radius = prototype.bulge_radius();
  }
  draw_capsule(img, brush, px_per_cm, origin, body_color(prototype.kind), bulge_color());
  // Gripper fingers: two fixed bars framing the grasp point, drawn on top.
  const double cx = res / 2.0;
  const double finger_dy = (prototype.radius + 0.8) * px_per_cm;
  const double half_w = 0.7 * px_per_cm;
  const double half_h = 0.35 * px_per_cm;
  fill_rect(img, cx, res / 2.0 - finger_dy, half_w, half_h, gripper_color());
  fill_rect(img, cx, res / 2.0 + finger_dy, half_w, half_h, gripper_color());
  return img;
}

nn::Tensor render_side(const Scene& scene, const GraspOutcome& outcome, const RenderConfig& cfg) {
  if (!outcome.success || !outcome.errors || !outcome.grasped_object) {
    throw StateError("render_side requires a successful grasp outcome");
  }
  const SimObject* grasped = nullptr;
  for (const SimObject& obj : scene.objects) {
    if (obj.id == *outcome.grasped_object) {
      grasped = &obj;
      break;
    }
  }
  if (!grasped) throw StateError("render_side: grasped object not present in the given scene");
  return render_side_errors(*grasped, outcome.errors->along_axis, outcome.errors->angle, cfg);
}

nn::Tensor augment(const nn::Tensor& image, Rng& rng, const RenderConfig& cfg) {
  const int h = image.shape[1], w = image.shape[2];
  nn::Tensor out(image.shape);
  const int dx = static_cast<int>(rng.uniform_int(-cfg.jitter_px, cfg.jitter_px));
  const int dy = static_cast<int>(rng.uniform_int(-cfg.jitter_px, cfg.jitter_px));
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      const int sy = std::clamp(y + dy, 0, h - 1);
      for (int x = 0; x < w; ++x) {
        const int sx = std::clamp(x + dx, 0, w - 1);
        out.at3(c, y, x) = image.at3(c, sy, sx);
      }
    }
  }
  for (double& v : out.data) {
    v = std::clamp(v + rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude), 0.0, 1.0);
  }
  return out;
}

void write_ppm(const nn::Tensor& image, const std::string& path) {
  const int h = image.shape[1], w = image.shape[2];
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  os << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
        os.put(static_cast<char>(std::lround(v * 255.0)));
      }
    }
  }
}

void write_pgm(const nn::Tensor& image, const std::string& path) {
  const int h = image.shape[1], w = image.shape[2];
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open for writing: " + path);
  os << "P5\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v =
          std::clamp((image.at3(0, y, x) + image.at3(1, y, x) + image.at3(2, y, x)) / 3.0, 0.0, 1.0);
      os.put(static_cast<char>(std::lround(v * 255.0)));
    }
  }
}

}  // namespace grasp::sim
