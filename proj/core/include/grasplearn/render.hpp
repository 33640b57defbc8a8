#pragma once

#include <string>

#include "grasplearn/rng.hpp"
#include "grasplearn/scene.hpp"
#include "grasplearn/tensor.hpp"

namespace grasp::sim {

struct RenderConfig {
  int top_resolution = 96;    // px, square, covers the whole workspace
  int side_resolution = 96;   // px, square
  double side_span = 28.0;    // cm covered by the side view
  // Augmentation: uniform pixel noise amplitude and +-1 px jitter.
  double noise_amplitude = 0.02;
  int jitter_px = 1;
};

struct Color {
  double r = 0, g = 0, b = 0;
};

// Palette shared by both views so appearances match across cameras.
Color background_color();
Color body_color(ObjectKind kind);
Color bulge_color();
Color gripper_color();

// Orthographic top view of the whole workspace. Pixel (row, col) samples the
// shape set at its center; colors are flat per part. Returns [3,H,W] in
// [0,1]. Deterministic: no noise is applied here.
nn::Tensor render_top(const Scene& scene, const RenderConfig& cfg);

// Canonical side view of a successful grasp: the gripper is fixed at the
// image center and the grasped object is drawn displaced along its own axis
// by the along-axis error and rotated by the angle error. The image depends
// only on those two errors (plus the object's kind and dimensions), not on
// where in the workspace the grasp happened.
nn::Tensor render_side(const Scene& scene, const GraspOutcome& outcome, const RenderConfig& cfg);

// Same canonical view from raw errors; used for generating designed samples.
nn::Tensor render_side_errors(const SimObject& prototype, double along_error, double angle_error,
                              const RenderConfig& cfg);

// Training-time augmentation: +-jitter_px integer shift (edge-replicated)
// plus additive uniform noise, clamped to [0,1].
nn::Tensor augment(const nn::Tensor& image, Rng& rng, const RenderConfig& cfg);

// Inspection exports. PPM for color, PGM for channel-averaged gray.
void write_ppm(const nn::Tensor& image, const std::string& path);
void write_pgm(const nn::Tensor& image, const std::string& path);

}  // namespace grasp::sim
