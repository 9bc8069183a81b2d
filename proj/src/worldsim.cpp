#include "navlab/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>

#include "navlab/errors.hpp"

namespace navlab::worldsim {

const char* action_name(NavAction a) {
    switch (a) {
        case NavAction::MoveForward: return "MOVE_FORWARD";
        case NavAction::TurnLeft: return "TURN_LEFT";
        case NavAction::TurnRight: return "TURN_RIGHT";
        case NavAction::Stop: return "STOP";
    }
    return "?";
}

NavAction action_from_int(int v) {
    if (v < 0 || v > 3) throw InputError("action index out of range: " + std::to_string(v));
    return static_cast<NavAction>(v);
}

bool valid_position(const FloorPlan& plan, const Vec2& p) {
    if (!plan.bounds.contains(p)) return false;
    for (const auto& w : plan.walls) {
        if (w.contains_strict(p)) return false;
    }
    return true;
}

bool Observation::operator==(const Observation& o) const {
    if (rays.size() != o.rays.size()) return false;
    for (std::size_t i = 0; i < rays.size(); ++i) {
        if (rays[i].depth != o.rays[i].depth || rays[i].category != o.rays[i].category)
            return false;
    }
    return true;
}

bool Observation::contains_category(int category) const {
    for (const auto& r : rays) {
        if (r.category == category) return true;
    }
    return false;
}

AgentPose step(const FloorPlan& plan, const AgentPose& pose, NavAction action) {
    if (!valid_position(plan, pose.position()))
        throw InputError("agent pose is inside a wall or outside bounds");
    switch (action) {
        case NavAction::Stop:
            return pose;
        case NavAction::TurnLeft:
            return {pose.x, pose.y, normalize_heading(pose.heading + kTurnStep)};
        case NavAction::TurnRight:
            return {pose.x, pose.y, normalize_heading(pose.heading - kTurnStep)};
        case NavAction::MoveForward: {
            const Vec2 dir = heading_vec(pose.heading);
            double t_hit = ray_rect_exit(pose.position(), dir, plan.bounds)
                               .value_or(std::numeric_limits<double>::infinity());
            for (const auto& w : plan.walls) {
                const auto t = ray_rect_entry(pose.position(), dir, w);
                if (t && *t < t_hit) t_hit = *t;
            }
            const double move = std::clamp(t_hit - kCollisionMargin, 0.0, kForwardStep);
            const Vec2 np = pose.position() + dir * move;
            return {np.x, np.y, pose.heading};
        }
    }
    throw InputError("unknown action");
}

Observation observe(const FloorPlan& plan, const AgentPose& pose, const SensorConfig& config) {
    if (!valid_position(plan, pose.position()))
        throw InputError("agent pose is inside a wall or outside bounds");
    Observation obs;
    obs.rays.resize(static_cast<std::size_t>(config.num_rays));
    for (int i = 0; i < config.num_rays; ++i) {
        // Rays ordered left to right; each sits at the center of its angular slot.
        const double ang = pose.heading + config.fov / 2.0 -
                           (static_cast<double>(i) + 0.5) * config.fov / config.num_rays;
        const Vec2 dir = heading_vec(ang);
        double best_t = ray_rect_exit(pose.position(), dir, plan.bounds)
                            .value_or(std::numeric_limits<double>::infinity());
        int best_cat = -1;
        for (const auto& w : plan.walls) {
            const auto t = ray_rect_entry(pose.position(), dir, w);
            if (t && *t < best_t) {
                best_t = *t;
                best_cat = -1;
            }
        }
        for (const auto& lm : plan.landmarks) {
            const auto t = ray_circle(pose.position(), dir, lm.center, lm.radius);
            if (t && *t < best_t) {
                best_t = *t;
                best_cat = lm.category;
            }
        }
        if (best_t > config.max_range) {
            obs.rays[static_cast<std::size_t>(i)] = {config.max_range, -1};
        } else {
            obs.rays[static_cast<std::size_t>(i)] = {std::max(best_t, 1e-4), best_cat};
        }
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Grid shortest paths

GeodesicSolver::GeodesicSolver(const FloorPlan& plan, double resolution, double inflation)
    : plan_(plan), resolution_(resolution), inflation_(inflation) {
    nx_ = std::max(1, static_cast<int>(std::ceil(plan.bounds.w / resolution_)));
    ny_ = std::max(1, static_cast<int>(std::ceil(plan.bounds.h / resolution_)));
    blocked_.assign(static_cast<std::size_t>(nx_) * ny_, 0);
    for (int cy = 0; cy < ny_; ++cy) {
        for (int cx = 0; cx < nx_; ++cx) {
            const Vec2 c{plan.bounds.x + (cx + 0.5) * resolution_,
                         plan.bounds.y + (cy + 0.5) * resolution_};
            bool b = !plan.bounds.contains(c);
            if (!b) {
                for (const auto& w : plan_.walls) {
                    if (w.expanded(inflation_).contains(c)) {
                        b = true;
                        break;
                    }
                }
            }
            blocked_[static_cast<std::size_t>(cy) * nx_ + cx] = b ? 1 : 0;
        }
    }
}

bool GeodesicSolver::cell_free(int cx, int cy) const {
    if (cx < 0 || cy < 0 || cx >= nx_ || cy >= ny_) return false;
    return blocked_[static_cast<std::size_t>(cy) * nx_ + cx] == 0;
}

bool GeodesicSolver::segment_free(const Vec2& a, const Vec2& b) const {
    const Rect inner = plan_.bounds.expanded(-inflation_);
    if (!inner.contains(a) || !inner.contains(b)) return false;
    for (const auto& w : plan_.walls) {
        if (segment_intersects_rect(a, b, w.expanded(inflation_))) return false;
    }
    return true;
}

std::optional<std::pair<int, int>> GeodesicSolver::snap_to_free_cell(const Vec2& p) const {
    const int cx = std::clamp(static_cast<int>((p.x - plan_.bounds.x) / resolution_), 0, nx_ - 1);
    const int cy = std::clamp(static_cast<int>((p.y - plan_.bounds.y) / resolution_), 0, ny_ - 1);
    if (cell_free(cx, cy)) return std::make_pair(cx, cy);
    // The point itself may be valid while its cell center is covered by an
    // (inflated) wall; search outward over a small neighborhood.
    const int max_r = std::max(2, static_cast<int>(std::ceil(0.3 / resolution_)));
    for (int r = 1; r <= max_r; ++r) {
        std::optional<std::pair<int, int>> best;
        double best_d = std::numeric_limits<double>::infinity();
        for (int dy = -r; dy <= r; ++dy) {
            for (int dx = -r; dx <= r; ++dx) {
                if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
                if (!cell_free(cx + dx, cy + dy)) continue;
                const Vec2 c{plan_.bounds.x + (cx + dx + 0.5) * resolution_,
                             plan_.bounds.y + (cy + dy + 0.5) * resolution_};
                const double d = distance(c, p);
                if (d < best_d) {
                    best_d = d;
                    best = std::make_pair(cx + dx, cy + dy);
                }
            }
        }
        if (best) return best;
    }
    return std::nullopt;
}

std::vector<Vec2> GeodesicSolver::raw_grid_path(const Vec2& a, const Vec2& b) const {
    if (!valid_position(plan_, a) || !valid_position(plan_, b))
        throw InputError("geodesic endpoints must be valid free-space points");

    const auto sa = snap_to_free_cell(a);
    const auto sb = snap_to_free_cell(b);
    if (!sa || !sb) throw NoPathError("endpoint is not reachable on the grid");

    const int start = sa->second * nx_ + sa->first;
    const int goal = sb->second * nx_ + sb->first;
    const std::size_t n = blocked_.size();

    std::vector<double> g(n, std::numeric_limits<double>::infinity());
    std::vector<int> parent(n, -1);
    std::vector<std::uint8_t> closed(n, 0);

    const auto heuristic = [&](int idx) {
        const int cx = idx % nx_;
        const int cy = idx / nx_;
        const double dx = std::abs(cx - goal % nx_);
        const double dy = std::abs(cy - goal / nx_);
        return (std::max(dx, dy) + (std::numbers::sqrt2 - 1.0) * std::min(dx, dy)) * resolution_;
    };

    using QItem = std::tuple<double, double, int>;  // f, g, idx
    std::priority_queue<QItem, std::vector<QItem>, std::greater<QItem>> open;
    g[static_cast<std::size_t>(start)] = 0.0;
    open.emplace(heuristic(start), 0.0, start);

    static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    bool found = false;
    while (!open.empty()) {
        const auto [f, gc, idx] = open.top();
        open.pop();
        if (closed[static_cast<std::size_t>(idx)]) continue;
        closed[static_cast<std::size_t>(idx)] = 1;
        if (idx == goal) {
            found = true;
            break;
        }
        const int cx = idx % nx_;
        const int cy = idx / nx_;
        for (int k = 0; k < 8; ++k) {
            const int nxc = cx + kDx[k];
            const int nyc = cy + kDy[k];
            if (!cell_free(nxc, nyc)) continue;
            if (k >= 4 && (!cell_free(cx + kDx[k], cy) || !cell_free(cx, cy + kDy[k])))
                continue;  // no corner cutting
            const double cost = (k >= 4 ? std::numbers::sqrt2 : 1.0) * resolution_;
            const int nidx = nyc * nx_ + nxc;
            const double ng = gc + cost;
            if (ng < g[static_cast<std::size_t>(nidx)] - 1e-12) {
                g[static_cast<std::size_t>(nidx)] = ng;
                parent[static_cast<std::size_t>(nidx)] = idx;
                open.emplace(ng + heuristic(nidx), ng, nidx);
            }
        }
    }
    if (!found) throw NoPathError("no path between the given points");

    std::vector<Vec2> cells;
    for (int idx = goal; idx != -1; idx = parent[static_cast<std::size_t>(idx)]) {
        cells.push_back({plan_.bounds.x + (idx % nx_ + 0.5) * resolution_,
                         plan_.bounds.y + (idx / nx_ + 0.5) * resolution_});
    }
    std::reverse(cells.begin(), cells.end());

    std::vector<Vec2> path;
    path.reserve(cells.size() + 2);
    path.push_back(a);
    for (const auto& c : cells) path.push_back(c);
    path.push_back(b);
    return path;
}

std::vector<Vec2> GeodesicSolver::shortest_path(const Vec2& a, const Vec2& b) const {
    if (distance(a, b) < 1e-12) return {a, b};
    const auto raw = raw_grid_path(a, b);
    // Greedy line-of-sight shortcutting.
    std::vector<Vec2> out;
    out.push_back(raw.front());
    std::size_t i = 0;
    while (i + 1 < raw.size()) {
        std::size_t j = raw.size() - 1;
        while (j > i + 1 && !segment_free(raw[i], raw[j])) --j;
        out.push_back(raw[j]);
        i = j;
    }
    return out;
}

double GeodesicSolver::geodesic(const Vec2& a, const Vec2& b) const {
    if (distance(a, b) < 1e-12) return 0.0;
    return polyline_length(shortest_path(a, b));
}

double geodesic(const FloorPlan& plan, const Vec2& a, const Vec2& b) {
    return GeodesicSolver(plan).geodesic(a, b);
}

std::vector<Vec2> shortest_path(const FloorPlan& plan, const Vec2& a, const Vec2& b) {
    return GeodesicSolver(plan).shortest_path(a, b);
}

namespace {

double free_depth(const FloorPlan& plan, const Vec2& origin, double heading) {
    const Vec2 dir = heading_vec(heading);
    double t = ray_rect_exit(origin, dir, plan.bounds)
                   .value_or(std::numeric_limits<double>::infinity());
    for (const auto& w : plan.walls) {
        const auto hit = ray_rect_entry(origin, dir, w);
        if (hit && *hit < t) t = *hit;
    }
    return t;
}

bool line_of_sight(const FloorPlan& plan, const Vec2& a, const Vec2& b, double margin) {
    for (const auto& w : plan.walls) {
        if (segment_intersects_rect(a, b, w.expanded(margin))) return false;
    }
    return true;
}

}  // namespace

NavAction expert_action(const FloorPlan& plan, const AgentPose& pose,
                        const std::vector<Vec2>& path, const Vec2& goal, double success_radius) {
    if (distance(pose.position(), goal) <= success_radius) return NavAction::Stop;
    const auto proj = project_to_polyline(path, pose.position());

    // Pure pursuit toward the farthest visible lookahead sample, so a wall
    // corner between the agent and the path is steered around, not into.
    Vec2 target = proj.point;
    for (int i = 0; i < 6; ++i) {
        const double arc = proj.arc + kExpertLookahead * (1.0 - i / 6.0);
        const Vec2 candidate = polyline_point_at(path, arc);
        if (line_of_sight(plan, pose.position(), candidate, 0.04)) {
            target = candidate;
            break;
        }
    }

    const double bearing = std::atan2(target.y - pose.y, target.x - pose.x);
    const double err = wrap_angle(bearing - pose.heading);
    if (err > kExpertHeadingTolerance) return NavAction::TurnLeft;
    if (err < -kExpertHeadingTolerance) return NavAction::TurnRight;
    // Aligned but hard-blocked (grazing a face the lookahead samples cannot
    // see): rotate toward the side with more clearance.
    if (free_depth(plan, pose.position(), pose.heading) <= 2 * kCollisionMargin) {
        const double left = free_depth(plan, pose.position(), pose.heading + kPi / 4);
        const double right = free_depth(plan, pose.position(), pose.heading - kPi / 4);
        return left >= right ? NavAction::TurnLeft : NavAction::TurnRight;
    }
    return NavAction::MoveForward;
}

}  // namespace navlab::worldsim
