#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navlab/dataset.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::worldgen {

struct WorldGenParams {
    double width = 25.0;
    double height = 25.0;
    int min_walls = 5;
    int max_walls = 9;
    int min_landmarks = 12;
    int max_landmarks = 16;
    double min_landmark_radius = 0.25;
    double max_landmark_radius = 0.45;
    double landmark_separation = 2.5;  // min distance between landmark centers
    double wall_clearance = 0.8;       // min landmark distance to any wall
};

worldsim::FloorPlan generate_world(const WorldGenParams& params, std::uint64_t seed,
                                   const std::string& id);

struct EpisodeGenParams {
    double min_geodesic = 4.0;
    double max_geodesic = 20.0;
    // Routes are chains of landmark hops short enough that the next landmark
    // is inside sensor range and line-of-sight visible, so expert behavior
    // stays inferable from observations.
    double hop_min = 2.0;
    double hop_max = 4.3;
    double hop_visibility_margin = 0.3;  // wall clearance of the hop segment
    double min_radial_gain = 0.8;        // every hop moves this much farther from start
    double waypoint_offset = 0.5;        // reference passes this close to landmark centers
    double goal_landmark_distance = 0.7;  // goal placed this far past the final landmark
    double min_start_landmark_distance = 1.2;
    double expert_stop_radius = 0.3;
    int max_expert_steps = 400;
    double planning_inflation = 0.12;
    int attempts_per_episode = 150;
};

// Generates validated episodes: the reference path is routed through landmark
// vicinities, the instruction is produced by the grammar, and an expert
// rollout is required to succeed, complete all sub-goals, and pass the
// landmark-mining filter before an episode is emitted.
std::vector<dataset::EpisodeSpec> generate_episodes(const worldsim::FloorPlan& plan,
                                                    const EpisodeGenParams& params,
                                                    const worldsim::SensorConfig& sensor,
                                                    std::uint64_t seed, int count,
                                                    const std::string& id_prefix);

}  // namespace navlab::worldgen
