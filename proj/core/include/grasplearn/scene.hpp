#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grasplearn/geometry.hpp"

namespace grasp::sim {

enum class ObjectKind { cylinder, elongated };

std::string object_kind_name(ObjectKind k);
ObjectKind object_kind_from_name(const std::string& name);

// One graspable object: a capsule lying in the plane. `length` is the overall
// tip-to-tip extent (caps included), so the straight segment spans
// length - 2*radius. Elongated objects additionally carry an off-center bulge
// near the +axis end, which breaks the end-to-end visual symmetry; the bulge
// is cosmetic and does not change the grasp geometry.
struct SimObject {
  int id = 0;
  ObjectKind kind = ObjectKind::cylinder;
  Vec2 center;
  double axis_angle = 0;  // [0, pi)
  double length = 12.0;   // cm
  double radius = 1.0;    // cm
  double bulge = 1.7;     // cm, bulge radius (elongated kind only)
  double optimum_offset = 0.0;  // cm along the +axis direction

  Vec2 axis_dir() const;
  double segment_half() const { return length / 2.0 - radius; }
  Vec2 endpoint(int sign) const;  // sign = +1 / -1
  // Radius of the widest cross-section (bulge included), used for placement.
  double bound_radius() const;
  Vec2 bulge_center() const;
  double bulge_radius() const { return bulge; }
  // True if the point (cm) is inside the drawn silhouette.
  bool contains(Vec2 p) const;
};

struct GraspPose {
  double x = 0;      // cm
  double y = 0;      // cm
  double theta = 0;  // gripper axis angle, [0, pi)
};

struct GraspErrors {
  double along_axis = 0;      // signed cm, relative to the optimum offset
  double perpendicular = 0;   // cm, >= 0
  double angle = 0;           // signed radians
};

struct GraspOutcome {
  bool success = false;
  std::optional<int> grasped_object;  // object id
  std::optional<GraspErrors> errors;  // present iff success
};

struct SceneConfig {
  double workspace = 40.0;       // square side, cm
  double object_length = 12.0;   // cm
  double object_radius = 1.0;    // cm
  double bulge_radius = 1.7;     // cm (elongated kind)
  double clearance = 0.5;        // extra cm required between objects
  int max_place_attempts = 5000;
  double p_tol = 0.5;                  // cm, perpendicular grasp tolerance
  double a_tol = 20.0 * 3.14159265358979323846 / 180.0;  // rad
};

struct Scene {
  double workspace = 40.0;
  std::vector<SimObject> objects;
  uint64_t rng_seed = 0;

  int object_count() const { return static_cast<int>(objects.size()); }
  bool inside_workspace(Vec2 p) const {
    return p.x >= 0 && p.y >= 0 && p.x <= workspace && p.y <= workspace;
  }
};

// Object count handed to training as the potential-grasp estimate source
// ("outside processing" in the workflow: a scene-level count, not vision).
struct SceneInfo {
  int object_count = 0;
};

// Places `n_objects` non-overlapping objects uniformly at random.
// Deterministic in `seed`. Throws ConfigError if placement keeps failing
// (workspace too crowded for the configured shapes).
Scene reset_scene(int n_objects, ObjectKind kind, uint64_t seed, const SceneConfig& cfg,
                  double optimum_offset = 0.0);

// Attempts a grasp. Success requires, for some object: the pose projects
// onto the object's axis segment, sits within p_tol of it, and the gripper
// angle is within a_tol of perpendicular to the axis. On success the object
// is removed from the returned scene and errors are measured against that
// object's optimum grasp (optimum_offset along the axis, perpendicular
// angle).
std::pair<GraspOutcome, Scene> execute_grasp(const Scene& scene, const GraspPose& pose,
                                             const SceneConfig& cfg);

// Evaluation conditions: 1 = success within 5 deg and 1.0 cm of the optimum;
// 2 = any success.
bool oracle_eval(const GraspOutcome& outcome, int condition);

// The optimum grasp pose for one object.
GraspPose optimum_pose(const SimObject& obj);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& json_text);

}  // namespace grasp::sim
