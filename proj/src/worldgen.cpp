#include "navlab/worldgen.hpp"

#include <algorithm>
#include <cmath>

#include "navlab/datagen.hpp"
#include "navlab/errors.hpp"
#include "navlab/grammar.hpp"
#include "navlab/rng.hpp"

namespace navlab::worldgen {

using worldsim::FloorPlan;

namespace {

double point_rect_distance(const Vec2& p, const Rect& r) {
    const double dx = std::max({r.x - p.x, 0.0, p.x - r.x1()});
    const double dy = std::max({r.y - p.y, 0.0, p.y - r.y1()});
    return std::hypot(dx, dy);
}

double min_wall_distance(const FloorPlan& plan, const Vec2& p) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& w : plan.walls) d = std::min(d, point_rect_distance(p, w));
    return d;
}

}  // namespace

FloorPlan generate_world(const WorldGenParams& params, std::uint64_t seed, const std::string& id) {
    Rng rng(seed);
    FloorPlan plan;
    plan.id = id;
    plan.bounds = {0.0, 0.0, params.width, params.height};

    const int num_walls = rng.range(params.min_walls, params.max_walls);
    for (int i = 0; i < num_walls; ++i) {
        const bool horizontal = rng.bernoulli(0.5);
        const double thickness = rng.uniform(0.2, 0.35);
        const double length = rng.uniform(3.0, 0.45 * std::min(params.width, params.height));
        Rect w;
        if (horizontal) {
            w.w = length;
            w.h = thickness;
        } else {
            w.w = thickness;
            w.h = length;
        }
        w.x = rng.uniform(1.0, params.width - 1.0 - w.w);
        w.y = rng.uniform(1.0, params.height - 1.0 - w.h);
        plan.walls.push_back(w);
    }

    // Landmarks grow as a loosely connected web: each new one sits a hop away
    // from an existing one, so multi-landmark routes with visible hops exist.
    const int num_landmarks =
        std::min(rng.range(params.min_landmarks, params.max_landmarks), 16);
    std::vector<int> categories(16);
    for (int i = 0; i < 16; ++i) categories[static_cast<std::size_t>(i)] = i;
    rng.shuffle(categories);

    for (int i = 0; i < num_landmarks; ++i) {
        for (int attempt = 0; attempt < 400; ++attempt) {
            Vec2 c;
            if (plan.landmarks.empty()) {
                c = {rng.uniform(3.0, params.width - 3.0), rng.uniform(3.0, params.height - 3.0)};
            } else {
                const auto& anchor =
                    plan.landmarks[static_cast<std::size_t>(rng.below(plan.landmarks.size()))];
                const double ang = rng.uniform(0, 2 * kPi);
                c = anchor.center + heading_vec(ang) * rng.uniform(2.6, 4.2);
            }
            if (!plan.bounds.expanded(-1.2).contains(c)) continue;
            if (min_wall_distance(plan, c) < params.wall_clearance) continue;
            bool ok = true;
            for (const auto& lm : plan.landmarks) {
                if (distance(lm.center, c) < params.landmark_separation) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            worldsim::Landmark lm;
            lm.id = "lm" + std::to_string(i);
            lm.category = categories[static_cast<std::size_t>(i)];
            lm.center = c;
            lm.radius = rng.uniform(params.min_landmark_radius, params.max_landmark_radius);
            plan.landmarks.push_back(std::move(lm));
            break;
        }
    }
    return plan;
}

namespace {

// A pose near `center`, offset toward `from`, that is valid and clear of walls.
std::optional<Vec2> offset_point(const FloorPlan& plan, const Vec2& center, const Vec2& from,
                                 double offset, double clearance) {
    Vec2 dir = from - center;
    const double n = dir.norm();
    if (n < 1e-9) dir = {1.0, 0.0};
    else dir = dir * (1.0 / n);
    // Try the approach direction first, then seven rotations around the center.
    for (int k = 0; k < 8; ++k) {
        const double ang = std::atan2(dir.y, dir.x) + k * (kPi / 4.0);
        const Vec2 p = center + heading_vec(ang) * offset;
        if (!plan.bounds.expanded(-0.3).contains(p)) continue;
        if (!worldsim::valid_position(plan, p)) continue;
        if (min_wall_distance(plan, p) < clearance) continue;
        return p;
    }
    return std::nullopt;
}

}  // namespace

std::vector<dataset::EpisodeSpec> generate_episodes(const FloorPlan& plan,
                                                    const EpisodeGenParams& params,
                                                    const worldsim::SensorConfig& sensor,
                                                    std::uint64_t seed, int count,
                                                    const std::string& id_prefix) {
    Rng rng(seed);
    const worldsim::GeodesicSolver metric(plan);
    const worldsim::GeodesicSolver planner(plan, 0.1, params.planning_inflation);
    std::vector<dataset::EpisodeSpec> out;
    if (plan.landmarks.size() < 2) return out;

    for (int ei = 0; ei < count; ++ei) {
        // Rotate through the bucket ranges so all trajectory lengths appear.
        const double lo[3] = {params.min_geodesic, 7.6, 10.0};
        const double hi[3] = {7.5, 9.8, params.max_geodesic};
        const int band = ei % 3;

        bool emitted = false;
        for (int attempt = 0; attempt < params.attempts_per_episode && !emitted; ++attempt) {
            // Start pose.
            const Vec2 start_pos{rng.uniform(0.8, plan.bounds.w - 0.8),
                                 rng.uniform(0.8, plan.bounds.h - 0.8)};
            if (!worldsim::valid_position(plan, start_pos)) continue;
            if (min_wall_distance(plan, start_pos) < 0.3) continue;

            // Route landmarks: a chain of short, line-of-sight hops. Hop
            // counts track the band so geodesic lengths cover all buckets,
            // and the per-hop radial gain keeps the chain unfolded enough to
            // hit the band's geodesic range.
            const int hops = band == 0 ? 2 : (band == 1 ? 3 : rng.range(4, 6));
            const double radial_gain =
                std::max(params.min_radial_gain, 0.9 * lo[band] / hops);
            std::vector<int> route;
            std::vector<bool> used(plan.landmarks.size(), false);
            Vec2 cur = start_pos;
            double cur_radial = 0.0;
            bool chain_ok = true;
            for (int h = 0; h < hops; ++h) {
                std::vector<int> candidates;
                for (std::size_t i = 0; i < plan.landmarks.size(); ++i) {
                    if (used[i]) continue;
                    const auto& lm = plan.landmarks[i];
                    const double hop = distance(cur, lm.center);
                    if (hop < params.hop_min || hop > params.hop_max) continue;
                    const double radial = distance(start_pos, lm.center);
                    if (radial < cur_radial + radial_gain) continue;
                    bool visible = true;
                    for (const auto& w : plan.walls) {
                        if (segment_intersects_rect(cur, lm.center,
                                                    w.expanded(params.hop_visibility_margin))) {
                            visible = false;
                            break;
                        }
                    }
                    if (visible) candidates.push_back(static_cast<int>(i));
                }
                if (candidates.empty()) {
                    chain_ok = false;
                    break;
                }
                const int pick = candidates[rng.below(candidates.size())];
                used[static_cast<std::size_t>(pick)] = true;
                route.push_back(pick);
                cur = plan.landmarks[static_cast<std::size_t>(pick)].center;
                cur_radial = distance(start_pos, cur);
            }
            if (!chain_ok || route.size() < 2) continue;
            if (distance(start_pos, plan.landmarks[static_cast<std::size_t>(route[0])].center) <
                params.min_start_landmark_distance)
                continue;

            // Waypoints through landmark vicinities, then the goal just past
            // the final landmark.
            std::vector<Vec2> waypoints;
            Vec2 prev = start_pos;
            bool ok = true;
            for (const int li : route) {
                const auto& lm = plan.landmarks[static_cast<std::size_t>(li)];
                const auto wp = offset_point(plan, lm.center, prev, params.waypoint_offset, 0.15);
                if (!wp) {
                    ok = false;
                    break;
                }
                waypoints.push_back(*wp);
                prev = *wp;
            }
            if (!ok) continue;
            const auto& last_lm = plan.landmarks[static_cast<std::size_t>(route.back())];
            const Vec2 away = last_lm.center * 2.0 - prev;  // far side of the landmark
            const auto goal = offset_point(plan, last_lm.center, away,
                                           params.goal_landmark_distance, 0.2);
            if (!goal) continue;

            // Plan the reference path leg by leg.
            std::vector<Vec2> reference{start_pos};
            Vec2 leg_from = start_pos;
            ok = true;
            for (std::size_t wi = 0; wi <= waypoints.size(); ++wi) {
                const Vec2 leg_to = wi < waypoints.size() ? waypoints[wi] : *goal;
                try {
                    const auto leg = planner.shortest_path(leg_from, leg_to);
                    reference.insert(reference.end(), leg.begin() + 1, leg.end());
                } catch (const NavError&) {
                    ok = false;
                    break;
                }
                leg_from = leg_to;
            }
            if (!ok) continue;

            double geo = 0.0;
            try {
                geo = metric.geodesic(start_pos, *goal);
            } catch (const NavError&) {
                continue;
            }
            if (geo < lo[band] || geo > hi[band]) continue;
            // Keep the expert route a bounded detour over the direct geodesic.
            if (polyline_length(reference) > 1.7 * geo + 3.0) continue;

            dataset::EpisodeSpec ep;
            ep.episode_id = id_prefix + std::to_string(ei);
            ep.world_id = plan.id;
            const Vec2 first_dir = reference.size() > 1 ? reference[1] - reference[0] : Vec2{1, 0};
            ep.start = {start_pos.x, start_pos.y,
                        normalize_heading(std::atan2(first_dir.y, first_dir.x))};
            ep.goal = *goal;
            ep.reference_path = reference;
            ep.geodesic_length = geo;
            try {
                ep.instruction = grammar::generate(plan, reference, seed * 7919 + ei * 131 + attempt);
            } catch (const GenerationFailure&) {
                continue;
            }

            // First landmark sub-goal must not already be satisfied at t = 0.
            const auto& sgs = ep.instruction.subgoals;
            if (!sgs.empty() && sgs[0].category) {
                double dmin = std::numeric_limits<double>::infinity();
                for (const auto& lm : plan.landmarks)
                    if (lm.category == *sgs[0].category)
                        dmin = std::min(dmin, distance(start_pos, lm.center));
                if (dmin <= grammar::kCompletionRadius + 0.1) continue;
            }

            // Validation: the expert must reach the goal, complete every
            // sub-goal, and survive the mining filter.
            const auto traj = datagen::expert_rollout(plan, ep, params.expert_stop_radius,
                                                      params.max_expert_steps);
            if (!traj.terminal || traj.steps.size() < 8) continue;
            const double stop_gap = distance(traj.steps.back().pose.position(), ep.goal);
            if (stop_gap > params.expert_stop_radius + 1e-9) continue;
            const auto boundaries = datagen::progress_boundaries(traj, ep, plan);
            if (boundaries.empty() || boundaries.back() != ep.instruction.num_subgoals()) continue;
            if (!datagen::mine_landmarks(traj, plan, sgs, sensor).accepted) continue;

            out.push_back(std::move(ep));
            emitted = true;
        }
    }
    return out;
}

}  // namespace navlab::worldgen
