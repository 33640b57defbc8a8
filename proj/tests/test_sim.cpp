#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "grasplearn/errors.hpp"
#include "grasplearn/geometry.hpp"
#include "grasplearn/render.hpp"
#include "grasplearn/scene.hpp"
#include "helpers.hpp"

using namespace grasp;
using namespace grasp::sim;

namespace {
constexpr double kPi = 3.14159265358979323846;

SceneConfig test_scene_cfg() { return SceneConfig{}; }
RenderConfig test_render_cfg() { return RenderConfig{}; }
}  // namespace

TEST_SUITE_BEGIN("sim");

TEST_CASE("axis angle helpers wrap into the gripper's symmetry group") {
  CHECK(wrap_axis_angle(0.0) == 0.0);
  CHECK(wrap_axis_angle(kPi) == doctest::Approx(0.0));
  CHECK(wrap_axis_angle(kPi + 0.3) == doctest::Approx(0.3));
  CHECK(wrap_axis_angle(-0.3) == doctest::Approx(kPi - 0.3));
  CHECK(axis_angle_diff(0.1, kPi - 0.1) == doctest::Approx(0.2));
  CHECK(std::fabs(axis_angle_diff(0.0, kPi / 2)) == doctest::Approx(kPi / 2));
}

TEST_CASE("reset_scene places five non-overlapping cylinders inside the workspace") {
  const SceneConfig cfg = test_scene_cfg();
  const Scene scene = reset_scene(5, ObjectKind::cylinder, 42, cfg);
  REQUIRE(scene.object_count() == 5);
  for (const SimObject& o : scene.objects) {
    for (int sign : {-1, 1}) {
      const Vec2 e = o.endpoint(sign);
      CHECK(e.x >= o.radius);
      CHECK(e.y >= o.radius);
      CHECK(e.x <= cfg.workspace - o.radius);
      CHECK(e.y <= cfg.workspace - o.radius);
    }
  }
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    for (size_t j = i + 1; j < scene.objects.size(); ++j) {
      const SimObject& a = scene.objects[i];
      const SimObject& b = scene.objects[j];
      const double d = segment_segment_distance(a.endpoint(-1), a.endpoint(1), b.endpoint(-1),
                                                b.endpoint(1));
      CHECK(d > a.radius + b.radius);  // strictly positive clearance
    }
  }
}

TEST_CASE("reset_scene is deterministic in the seed and trivially valid for one object") {
  const SceneConfig cfg = test_scene_cfg();
  const Scene a = reset_scene(5, ObjectKind::cylinder, 7, cfg);
  const Scene b = reset_scene(5, ObjectKind::cylinder, 7, cfg);
  REQUIRE(a.object_count() == b.object_count());
  for (int i = 0; i < a.object_count(); ++i) {
    CHECK(a.objects[i].center.x == b.objects[i].center.x);
    CHECK(a.objects[i].center.y == b.objects[i].center.y);
    CHECK(a.objects[i].axis_angle == b.objects[i].axis_angle);
  }
  CHECK(reset_scene(1, ObjectKind::cylinder, 9, cfg).object_count() == 1);
}

TEST_CASE("reset_scene errors out when the workspace cannot hold the objects") {
  SceneConfig cfg = test_scene_cfg();
  cfg.workspace = 14.0;  // barely wider than one object
  cfg.max_place_attempts = 200;
  CHECK_THROWS_AS(reset_scene(8, ObjectKind::cylinder, 1, cfg), ConfigError);
}

TEST_CASE("scene JSON round trip preserves every object") {
  const Scene scene = reset_scene(3, ObjectKind::elongated, 11, test_scene_cfg(), -3.0);
  const Scene back = scene_from_json(scene_to_json(scene));
  REQUIRE(back.object_count() == scene.object_count());
  CHECK(back.workspace == scene.workspace);
  CHECK(back.rng_seed == scene.rng_seed);
  for (int i = 0; i < scene.object_count(); ++i) {
    CHECK(back.objects[i].center.x == scene.objects[i].center.x);
    CHECK(back.objects[i].axis_angle == scene.objects[i].axis_angle);
    CHECK(back.objects[i].optimum_offset == scene.objects[i].optimum_offset);
    CHECK(back.objects[i].kind == scene.objects[i].kind);
  }
}

TEST_CASE("empty scene renders as uniform background") {
  Scene scene;
  scene.workspace = 40.0;
  const nn::Tensor img = render_top(scene, test_render_cfg());
  const Color bg = background_color();
  const double want[3] = {bg.r, bg.g, bg.b};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.shape[1]; ++y) {
      for (int x = 0; x < img.shape[2]; ++x) {
        if (img.at3(c, y, x) != want[c]) {
          FAIL("non-background pixel at ", c, ",", y, ",", x);
        }
      }
    }
  }
  CHECK(true);
}

TEST_CASE("rendered capsule mask equals the analytic point-in-capsule oracle") {
  // One axis-aligned cylinder at the workspace center.
  Scene scene;
  scene.workspace = 40.0;
  SimObject obj;
  obj.kind = ObjectKind::cylinder;
  obj.center = {20.0, 20.0};
  obj.axis_angle = 0.0;
  obj.length = 12.0;
  obj.radius = 1.0;
  scene.objects.push_back(obj);

  const RenderConfig rc = test_render_cfg();
  const nn::Tensor img = render_top(scene, rc);
  const Color bg = background_color();
  const double cm_per_px = scene.workspace / rc.top_resolution;
  const Vec2 a{20.0 - (6.0 - 1.0), 20.0};
  const Vec2 b{20.0 + (6.0 - 1.0), 20.0};
  int mismatches = 0;
  for (int y = 0; y < rc.top_resolution; ++y) {
    for (int x = 0; x < rc.top_resolution; ++x) {
      const Vec2 p{(x + 0.5) * cm_per_px, (y + 0.5) * cm_per_px};
      const bool inside = point_segment_distance(p, a, b) <= 1.0;
      const bool drawn = img.at3(0, y, x) != bg.r;
      if (inside != drawn) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
}

TEST_CASE("two renders of the same scene are identical with augmentation off") {
  const Scene scene = reset_scene(4, ObjectKind::cylinder, 3, test_scene_cfg());
  const nn::Tensor a = render_top(scene, test_render_cfg());
  const nn::Tensor b = render_top(scene, test_render_cfg());
  CHECK(a.data == b.data);
}

TEST_CASE("augmentation perturbs but stays in range") {
  const Scene scene = reset_scene(2, ObjectKind::cylinder, 5, test_scene_cfg());
  const nn::Tensor clean = render_top(scene, test_render_cfg());
  Rng rng(99);
  const nn::Tensor noisy = augment(clean, rng, test_render_cfg());
  CHECK(noisy.data != clean.data);
  for (double v : noisy.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("execute_grasp at the optimum pose succeeds with zero errors") {
  const SceneConfig cfg = test_scene_cfg();
  const Scene scene = reset_scene(3, ObjectKind::cylinder, 21, cfg);
  const GraspPose pose = optimum_pose(scene.objects[1]);
  const auto [outcome, next] = execute_grasp(scene, pose, cfg);
  REQUIRE(outcome.success);
  CHECK(*outcome.grasped_object == scene.objects[1].id);
  CHECK(outcome.errors->along_axis == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(outcome.errors->perpendicular == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(outcome.errors->angle == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(next.object_count() == 2);
}

TEST_CASE("a pose 5 cm off every axis fails") {
  SceneConfig cfg = test_scene_cfg();
  Scene scene;
  scene.workspace = 40.0;
  SimObject obj;
  obj.center = {20.0, 20.0};
  obj.axis_angle = 0.0;
  scene.objects.push_back(obj);
  const GraspPose pose{20.0, 25.0, kPi / 2};  // 5 cm perpendicular
  const auto [outcome, next] = execute_grasp(scene, pose, cfg);
  CHECK(!outcome.success);
  CHECK(!outcome.errors.has_value());
  CHECK(next.object_count() == 1);
}

TEST_CASE("grasp succeeds only inside the segment extent and angle tolerance") {
  SceneConfig cfg = test_scene_cfg();
  Scene scene;
  scene.workspace = 40.0;
  SimObject obj;
  obj.center = {20.0, 20.0};
  obj.axis_angle = 0.0;
  scene.objects.push_back(obj);
  // Beyond the segment half-length (5 cm for a 12x2 capsule).
  CHECK(!execute_grasp(scene, {25.4, 20.0, kPi / 2}, cfg).first.success);
  CHECK(execute_grasp(scene, {24.9, 20.0, kPi / 2}, cfg).first.success);
  // Angle out of tolerance (20 deg).
  CHECK(!execute_grasp(scene, {20.0, 20.0, kPi / 2 + 21.0 * kPi / 180}, cfg).first.success);
  CHECK(execute_grasp(scene, {20.0, 20.0, kPi / 2 + 19.0 * kPi / 180}, cfg).first.success);
}

TEST_CASE("object count decreases by exactly one per success and never otherwise") {
  const SceneConfig cfg = test_scene_cfg();
  Scene scene = reset_scene(5, ObjectKind::cylinder, 31, cfg);
  Rng rng(32);
  int count = scene.object_count();
  for (int i = 0; i < 300 && count > 0; ++i) {
    GraspPose pose;
    if (rng.uniform() < 0.4) {
      const SimObject& target = scene.objects[rng.index(scene.objects.size())];
      pose = optimum_pose(target);
    } else {
      pose = {rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, kPi)};
    }
    const auto [outcome, next] = execute_grasp(scene, pose, cfg);
    if (outcome.success) {
      CHECK(next.object_count() == count - 1);
      count -= 1;
    } else {
      CHECK(next.object_count() == count);
    }
    scene = next;
  }
  CHECK(count == 0);
}

TEST_CASE("oracle_eval thresholds") {
  GraspOutcome ok;
  ok.success = true;
  ok.grasped_object = 0;
  ok.errors = GraspErrors{0.4, 0.0, 2.0 * kPi / 180.0};
  CHECK(oracle_eval(ok, 1));
  CHECK(oracle_eval(ok, 2));

  GraspOutcome far = ok;
  far.errors = GraspErrors{3.0, 0.0, 0.0};
  CHECK(!oracle_eval(far, 1));
  CHECK(oracle_eval(far, 2));

  GraspOutcome fail;
  CHECK(!oracle_eval(fail, 1));
  CHECK(!oracle_eval(fail, 2));

  // Total positional error combines both components.
  GraspOutcome edge = ok;
  edge.errors = GraspErrors{0.9, 0.45, 0.0};  // sqrt(0.81+0.2025) > 1
  CHECK(!oracle_eval(edge, 1));
}

TEST_CASE("render_side: canonical at zero errors, identical across scenes") {
  const SceneConfig cfg = test_scene_cfg();
  const RenderConfig rc = test_render_cfg();
  nn::Tensor first;
  for (uint64_t seed : {100ull, 200ull}) {
    const Scene scene = reset_scene(3, ObjectKind::cylinder, seed, cfg);
    const GraspPose pose = optimum_pose(scene.objects[0]);
    const auto [outcome, next] = execute_grasp(scene, pose, cfg);
    REQUIRE(outcome.success);
    const nn::Tensor img = render_side(scene, outcome, rc);
    if (first.data.empty()) {
      first = img;
    } else {
      CHECK(first.data == img.data);
    }
  }
}

TEST_CASE("render_side shifts the object by the along-axis error") {
  const RenderConfig rc = test_render_cfg();
  SimObject proto;
  proto.kind = ObjectKind::cylinder;
  const nn::Tensor centred = render_side_errors(proto, 0.0, 0.0, rc);
  const nn::Tensor shifted = render_side_errors(proto, 3.0, 0.0, rc);
  // Compare object-pixel centroids (gripper pixels are identical in both).
  auto centroid_x = [&](const nn::Tensor& img) {
    const Color body = body_color(proto.kind);
    double sum = 0;
    int n = 0;
    for (int y = 0; y < img.shape[1]; ++y) {
      for (int x = 0; x < img.shape[2]; ++x) {
        if (img.at3(0, y, x) == body.r && img.at3(1, y, x) == body.g) {
          sum += x;
          ++n;
        }
      }
    }
    REQUIRE(n > 0);
    return sum / n;
  };
  const double px_per_cm = rc.side_resolution / rc.side_span;
  const double shift = centroid_x(shifted) - centroid_x(centred);
  CHECK(shift == doctest::Approx(3.0 * px_per_cm).epsilon(0.08));
  CHECK(shift > 0);  // positive error moves the object toward +x
}

TEST_CASE("render_side mirror symmetry for opposite along-axis errors") {
  const RenderConfig rc = test_render_cfg();
  SimObject proto;
  proto.kind = ObjectKind::cylinder;
  const nn::Tensor plus = render_side_errors(proto, 2.5, 0.0, rc);
  const nn::Tensor minus = render_side_errors(proto, -2.5, 0.0, rc);
  const int w = rc.side_resolution;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < rc.side_resolution; ++y) {
      for (int x = 0; x < w; ++x) {
        if (plus.at3(c, y, x) != minus.at3(c, y, w - 1 - x)) {
          FAIL("mirror mismatch at ", c, ",", y, ",", x);
        }
      }
    }
  }
  CHECK(true);
}

TEST_CASE("render_side requires a successful outcome") {
  const Scene scene = reset_scene(1, ObjectKind::cylinder, 77, test_scene_cfg());
  GraspOutcome fail;
  CHECK_THROWS_AS(render_side(scene, fail, test_render_cfg()), StateError);
}

TEST_CASE("elongated objects render an asymmetric bulge that follows the +axis end") {
  const RenderConfig rc = test_render_cfg();
  SimObject proto;
  proto.kind = ObjectKind::elongated;
  const nn::Tensor img = render_side_errors(proto, 0.0, 0.0, rc);
  const Color bc = bulge_color();
  double left = 0, right = 0;
  for (int y = 0; y < rc.side_resolution; ++y) {
    for (int x = 0; x < rc.side_resolution; ++x) {
      if (img.at3(0, y, x) == bc.r && img.at3(1, y, x) == bc.g) {
        (x < rc.side_resolution / 2 ? left : right) += 1;
      }
    }
  }
  CHECK(right > 0);
  CHECK(left == 0);
}

TEST_CASE("grasp geometry agrees with a pixel-sampling oracle on >=99% of random poses") {
  const SceneConfig cfg = test_scene_cfg();
  const RenderConfig rc = test_render_cfg();
  Rng rng(2024);
  int agree = 0, total = 0;
  for (int s = 0; s < 40; ++s) {
    const Scene scene = reset_scene(5, ObjectKind::cylinder, 5000 + s, cfg);
    const nn::Tensor img = render_top(scene, rc);
    const Color bg = background_color();
    const double cm_per_px = scene.workspace / rc.top_resolution;
    auto object_at = [&](Vec2 p) {
      const int x = static_cast<int>(p.x / cm_per_px);
      const int y = static_cast<int>(p.y / cm_per_px);
      if (x < 0 || y < 0 || x >= rc.top_resolution || y >= rc.top_resolution) return false;
      return img.at3(0, y, x) != bg.r || img.at3(1, y, x) != bg.g || img.at3(2, y, x) != bg.b;
    };
    for (int t = 0; t < 50; ++t) {
      const GraspPose pose{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(0, kPi)};
      const bool analytic = execute_grasp(scene, pose, cfg).first.success;

      // Pixel test: walk the jaw line through the grasp point; require a
      // crossing whose midpoint sits within p_tol of the grasp point and is
      // oriented within tolerance of some object's axis.
      const Vec2 dir{std::cos(pose.theta), std::sin(pose.theta)};
      const double span = 2.0;
      const double step = 0.02;
      double lo = 1e9, hi = -1e9;
      for (double t2 = -span; t2 <= span; t2 += step) {
        const Vec2 p{pose.x + t2 * dir.x, pose.y + t2 * dir.y};
        if (object_at(p)) {
          lo = std::min(lo, t2);
          hi = std::max(hi, t2);
        }
      }
      bool pixel = false;
      if (hi >= lo) {
        const double mid = (lo + hi) / 2.0;
        const double chord = hi - lo;
        bool angle_ok = false;
        bool extent_ok = false;
        for (const SimObject& o : scene.objects) {
          if (std::fabs(axis_angle_diff(pose.theta, o.axis_angle + kPi / 2)) <= cfg.a_tol) {
            angle_ok = true;
          }
          const Vec2 rel = Vec2{pose.x, pose.y} - o.center;
          if (std::fabs(rel.dot(o.axis_dir())) <= o.segment_half() &&
              std::fabs(rel.cross(o.axis_dir())) <= 3.0) {
            extent_ok = true;
          }
        }
        pixel = std::fabs(mid) <= cfg.p_tol && chord >= 2.0 * 0.6 && angle_ok && extent_ok;
      }
      agree += (pixel == analytic) ? 1 : 0;
      ++total;
    }
  }
  CHECK(total == 2000);
  CHECK(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("image export writes parseable PPM/PGM headers") {
  namespace fs = std::filesystem;
  const Scene scene = reset_scene(2, ObjectKind::cylinder, 8, test_scene_cfg());
  const nn::Tensor img = render_top(scene, test_render_cfg());
  const fs::path dir = fs::temp_directory_path() / "grasplearn_img_test";
  fs::create_directories(dir);
  write_ppm(img, (dir / "a.ppm").string());
  write_pgm(img, (dir / "a.pgm").string());
  std::ifstream ppm(dir / "a.ppm", std::ios::binary);
  std::string magic;
  ppm >> magic;
  CHECK(magic == "P6");
  std::ifstream pgm(dir / "a.pgm", std::ios::binary);
  pgm >> magic;
  CHECK(magic == "P5");
}

TEST_SUITE_END();
