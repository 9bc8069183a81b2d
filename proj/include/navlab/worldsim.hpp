#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navlab/geometry.hpp"

namespace navlab::worldsim {

// Discrete action set. Wire protocol and dataset files use these integer values.
enum class NavAction : int {
    MoveForward = 0,
    TurnLeft = 1,
    TurnRight = 2,
    Stop = 3,
};

constexpr double kTurnStep = kPi / 12.0;   // 15 degrees
constexpr double kForwardStep = 0.25;      // meters
constexpr double kCollisionMargin = 0.02;  // meters kept clear of walls

const char* action_name(NavAction a);
NavAction action_from_int(int v);  // throws InputError if out of range

struct Landmark {
    std::string id;
    int category = 0;  // index into the controlled vocabulary
    Vec2 center;
    double radius = 0.3;
};

struct FloorPlan {
    std::string id;
    Rect bounds;
    std::vector<Rect> walls;
    std::vector<Landmark> landmarks;
};

// Inside the bounds and strictly outside every wall.
bool valid_position(const FloorPlan& plan, const Vec2& p);

struct AgentPose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;  // radians in [0, 2*pi), 0 = +x, counterclockwise

    Vec2 position() const { return {x, y}; }
};

struct RayHit {
    double depth = 0.0;
    int category = -1;  // -1 = wall/bounds/nothing
};

struct Observation {
    std::vector<RayHit> rays;

    bool operator==(const Observation& o) const;
    bool contains_category(int category) const;
};

struct SensorConfig {
    int num_rays = 24;
    double fov = kPi / 2.0;  // 90 degrees, centered on heading
    double max_range = 5.0;
};

// Kinematic step. Turns rotate by exactly 15 degrees; MOVE_FORWARD translates
// 0.25 m along the heading, truncated at the first wall/bounds contact minus
// the 0.02 m margin. STOP is the identity. Throws InputError for poses inside
// a wall or outside bounds.
AgentPose step(const FloorPlan& plan, const AgentPose& pose, NavAction action);

// Ray-cast sensor: num_rays rays uniformly spanning the field of view,
// ordered left to right, each reporting the nearest intersection among walls,
// landmark disks and the arena bounds, clamped to max_range. Pure function of
// (plan, pose, config).
Observation observe(const FloorPlan& plan, const AgentPose& pose, const SensorConfig& config);

// Obstacle-aware shortest paths on a 0.1 m grid (8-connected A*, diagonal
// cost sqrt(2), no corner cutting) followed by greedy line-of-sight
// smoothing. A solver instance caches the occupancy grid for one plan.
class GeodesicSolver {
public:
    explicit GeodesicSolver(const FloorPlan& plan, double resolution = 0.1,
                            double inflation = 0.0);

    // Length in meters of the smoothed path. Throws NoPathError when b is
    // unreachable from a, InputError when either point is invalid.
    double geodesic(const Vec2& a, const Vec2& b) const;

    // The smoothed polyline itself, endpoints exactly a and b.
    std::vector<Vec2> shortest_path(const Vec2& a, const Vec2& b) const;

    double resolution() const { return resolution_; }

private:
    bool cell_free(int cx, int cy) const;
    bool segment_free(const Vec2& a, const Vec2& b) const;
    std::optional<std::pair<int, int>> snap_to_free_cell(const Vec2& p) const;
    std::vector<Vec2> raw_grid_path(const Vec2& a, const Vec2& b) const;

    const FloorPlan& plan_;
    double resolution_;
    double inflation_;
    int nx_ = 0;
    int ny_ = 0;
    std::vector<std::uint8_t> blocked_;
};

double geodesic(const FloorPlan& plan, const Vec2& a, const Vec2& b);
std::vector<Vec2> shortest_path(const FloorPlan& plan, const Vec2& a, const Vec2& b);

// Pure-pursuit shortest-path expert. STOP within success_radius of the goal;
// otherwise turn toward a lookahead point on the path when the heading error
// exceeds 7.5 degrees (half a turn action), else move forward.
constexpr double kExpertHeadingTolerance = kPi / 24.0;  // 7.5 degrees
constexpr double kExpertLookahead = 0.5;                // meters

NavAction expert_action(const FloorPlan& plan, const AgentPose& pose,
                        const std::vector<Vec2>& path, const Vec2& goal, double success_radius);

}  // namespace navlab::worldsim
