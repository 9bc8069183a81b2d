#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/grammar.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::dataset {

// A navigation episode: start pose, goal, the (possibly detouring) reference
// path the expert follows, and the instruction describing it.
struct EpisodeSpec {
    std::string episode_id;
    std::string world_id;
    worldsim::AgentPose start;
    Vec2 goal;
    std::vector<Vec2> reference_path;
    double geodesic_length = 0.0;  // start-to-goal geodesic, not the reference length
    grammar::Instruction instruction;
};

struct TrajStep {
    int t = 0;
    worldsim::AgentPose pose;               // pose the action was taken from
    worldsim::NavAction action = worldsim::NavAction::Stop;
};

struct Trajectory {
    std::string episode_id;
    std::vector<TrajStep> steps;
    bool terminal = false;  // ended with an executed STOP
};

// One training-ready step: executed pose, (relabeled) action, progress
// boundary k and the retrospective landmark frame t*.
struct StepRecord {
    int t = 0;
    worldsim::AgentPose pose;
    worldsim::NavAction action = worldsim::NavAction::Stop;
    int k = 0;
    int t_star = 0;
};

struct Provenance {
    bool intervened = false;
    double pl = 0.0;
    double final_distance = 0.0;
};

struct AnnotatedEpisode {
    std::string episode_id;
    std::string world_id;
    grammar::Instruction instruction;
    std::vector<StepRecord> steps;
    std::vector<std::optional<int>> landmark_index;  // t_lm per sub-goal
    std::optional<Provenance> provenance;            // present for DAgger shards
};

// --- JSON serialization -----------------------------------------------------

nlohmann::json plan_to_json(const worldsim::FloorPlan& plan);
worldsim::FloorPlan plan_from_json(const nlohmann::json& j);
void save_worlds(const std::string& path, const std::vector<worldsim::FloorPlan>& worlds);
std::vector<worldsim::FloorPlan> load_worlds(const std::string& path);

nlohmann::json instruction_to_json(const grammar::Instruction& instr);
grammar::Instruction instruction_from_json(const nlohmann::json& j);

nlohmann::json episode_to_json(const EpisodeSpec& ep);
EpisodeSpec episode_from_json(const nlohmann::json& j);
void save_episodes(const std::string& path, const std::vector<EpisodeSpec>& eps);
std::vector<EpisodeSpec> load_episodes(const std::string& path);

nlohmann::json annotated_to_json(const AnnotatedEpisode& ep);
AnnotatedEpisode annotated_from_json(const nlohmann::json& j);
void save_dataset(const std::string& path, const std::vector<AnnotatedEpisode>& eps);
void append_dataset(const std::string& path, const std::vector<AnnotatedEpisode>& eps);
std::vector<AnnotatedEpisode> load_dataset(const std::string& path);

}  // namespace navlab::dataset
