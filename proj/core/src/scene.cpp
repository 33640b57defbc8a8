#include "grasplearn/scene.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "grasplearn/errors.hpp"
#include "grasplearn/rng.hpp"

namespace grasp::sim {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

std::string object_kind_name(ObjectKind k) {
  return k == ObjectKind::cylinder ? "cylinder" : "elongated";
}

ObjectKind object_kind_from_name(const std::string& name) {
  if (name == "cylinder") return ObjectKind::cylinder;
  if (name == "elongated") return ObjectKind::elongated;
  throw ConfigError("unknown object kind '" + name + "' (expected cylinder or elongated)");
}

Vec2 SimObject::axis_dir() const { return {std::cos(axis_angle), std::sin(axis_angle)}; }

Vec2 SimObject::endpoint(int sign) const { return center + axis_dir() * (sign * segment_half()); }

double SimObject::bound_radius() const {
  return kind == ObjectKind::elongated ? std::max(radius, bulge_radius()) : radius;
}

Vec2 SimObject::bulge_center() const {
  // Near the +axis tip, pulled in so the bulge stays within `length`.
  return center + axis_dir() * (length / 2.0 - bulge_radius());
}

bool SimObject::contains(Vec2 p) const {
  if (point_segment_distance(p, endpoint(-1), endpoint(+1)) <= radius) return true;
  if (kind == ObjectKind::elongated && (p - bulge_center()).norm() <= bulge_radius()) return true;
  return false;
}

namespace {

bool fully_inside(const SimObject& obj, double workspace) {
  const double r = obj.bound_radius();
  for (int sign : {-1, +1}) {
    const Vec2 e = obj.endpoint(sign);
    if (e.x - r < 0 || e.y - r < 0 || e.x + r > workspace || e.y + r > workspace) return false;
  }
  if (obj.kind == ObjectKind::elongated) {
    const Vec2 b = obj.bulge_center();
    const double br = obj.bulge_radius();
    if (b.x - br < 0 || b.y - br < 0 || b.x + br > workspace || b.y + br > workspace) return false;
  }
  return true;
}

bool overlaps(const SimObject& a, const SimObject& b, double clearance) {
  const double d = segment_segment_distance(a.endpoint(-1), a.endpoint(+1), b.endpoint(-1), b.endpoint(+1));
  return d <= a.bound_radius() + b.bound_radius() + clearance;
}

}  // namespace

Scene reset_scene(int n_objects, ObjectKind kind, uint64_t seed, const SceneConfig& cfg,
                  double optimum_offset) {
  if (n_objects < 1) throw ConfigError("reset_scene: n_objects must be >= 1");
  Scene scene;
  scene.workspace = cfg.workspace;
  scene.rng_seed = seed;
  Rng rng(seed);
  int attempts = 0;
  while (scene.object_count() < n_objects) {
    if (++attempts > cfg.max_place_attempts) {
      throw ConfigError("reset_scene: could not place " + std::to_string(n_objects) +
                        " objects after " + std::to_string(cfg.max_place_attempts) +
                        " attempts; workspace too crowded");
    }
    SimObject obj;
    obj.id = scene.object_count();
    obj.kind = kind;
    obj.length = cfg.object_length;
    obj.radius = cfg.object_radius;
    obj.bulge = cfg.bulge_radius;
    obj.optimum_offset = optimum_offset;
    obj.center = {rng.uniform(0, cfg.workspace), rng.uniform(0, cfg.workspace)};
    obj.axis_angle = rng.uniform(0, kPi);
    if (!fully_inside(obj, cfg.workspace)) continue;
    bool clash = false;
    for (const SimObject& other : scene.objects) {
      if (overlaps(obj, other, cfg.clearance)) {
        clash = true;
        break;
      }
    }
    if (clash) continue;
    scene.objects.push_back(obj);
  }
  return scene;
}

GraspPose optimum_pose(const SimObject& obj) {
  const Vec2 p = obj.center + obj.axis_dir() * obj.optimum_offset;
  return {p.x, p.y, wrap_axis_angle(obj.axis_angle + kPi / 2)};
}

std::pair<GraspOutcome, Scene> execute_grasp(const Scene& scene, const GraspPose& pose,
                                             const SceneConfig& cfg) {
  if (!scene.inside_workspace({pose.x, pose.y})) {
    throw ConfigError("execute_grasp: pose outside workspace");
  }
  GraspOutcome outcome;
  int best_index = -1;
  GraspErrors best{};
  for (size_t i = 0; i < scene.objects.size(); ++i) {
    const SimObject& obj = scene.objects[i];
    const Vec2 u = obj.axis_dir();
    const Vec2 rel = Vec2{pose.x, pose.y} - obj.center;
    const double along = rel.dot(u);
    if (std::fabs(along) > obj.segment_half()) continue;  // projection outside extent
    const double perp = std::fabs(rel.cross(u));
    if (perp > cfg.p_tol) continue;
    const double angle_err = axis_angle_diff(pose.theta, obj.axis_angle + kPi / 2);
    if (std::fabs(angle_err) > cfg.a_tol) continue;
    if (best_index < 0 || perp < best.perpendicular) {
      best_index = static_cast<int>(i);
      best = {along - obj.optimum_offset, perp, angle_err};
    }
  }
  Scene next = scene;
  if (best_index >= 0) {
    outcome.success = true;
    outcome.grasped_object = scene.objects[best_index].id;
    outcome.errors = best;
    next.objects.erase(next.objects.begin() + best_index);
  }
  return {outcome, next};
}

bool oracle_eval(const GraspOutcome& outcome, int condition) {
  if (condition != 1 && condition != 2) throw ConfigError("oracle_eval: condition must be 1 or 2");
  if (!outcome.success) return false;
  if (condition == 2) return true;
  const GraspErrors& e = *outcome.errors;
  const double pos = std::sqrt(e.along_axis * e.along_axis + e.perpendicular * e.perpendicular);
  return std::fabs(e.angle) <= 5.0 * kPi / 180.0 && pos <= 1.0;
}

std::string scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["workspace"] = scene.workspace;
  j["seed"] = scene.rng_seed;
  j["objects"] = nlohmann::json::array();
  for (const SimObject& o : scene.objects) {
    j["objects"].push_back({{"id", o.id},
                            {"kind", object_kind_name(o.kind)},
                            {"x", o.center.x},
                            {"y", o.center.y},
                            {"axis_angle", o.axis_angle},
                            {"length", o.length},
                            {"radius", o.radius},
                            {"bulge", o.bulge},
                            {"optimum_offset", o.optimum_offset}});
  }
  return j.dump(2);
}

Scene scene_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("scene_from_json: malformed JSON");
  Scene scene;
  scene.workspace = j.at("workspace").get<double>();
  scene.rng_seed = j.at("seed").get<uint64_t>();
  for (const auto& jo : j.at("objects")) {
    SimObject o;
    o.id = jo.at("id").get<int>();
    o.kind = object_kind_from_name(jo.at("kind").get<std::string>());
    o.center = {jo.at("x").get<double>(), jo.at("y").get<double>()};
    o.axis_angle = jo.at("axis_angle").get<double>();
    o.length = jo.at("length").get<double>();
    o.radius = jo.at("radius").get<double>();
    o.bulge = jo.at("bulge").get<double>();
    o.optimum_offset = jo.at("optimum_offset").get<double>();
    scene.objects.push_back(o);
  }
  return scene;
}

}  // namespace grasp::sim
