#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "navlab/datagen.hpp"
#include "navlab/dataset.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/policy.hpp"

namespace navlab::dagger {

struct InterventionRule {
    double premature_stop_distance = 3.0;  // STOP this far (geodesic) from goal is premature
    double deviation_distance = 1.5;       // meters off the reference path
    int deviation_patience = 8;            // consecutive off-path steps before takeover
    int max_steps = 200;
};

struct FilterRule {
    double success_distance = 0.5;
    double pl_corrected = 0.93;   // PL bound when the expert intervened
    double pl_autonomous = 0.85;  // stricter bound for fully autonomous runs
};

enum class InterventionReason : int { EmptyOutput = 0, PrematureStop = 1, Deviation = 2 };
const char* reason_name(InterventionReason r);

struct InterventionState {
    std::optional<worldsim::NavAction> proposed;  // empty = the model produced no action
    double goal_geodesic = 0.0;
    int off_path_streak = 0;
};

std::optional<InterventionReason> should_intervene(const InterventionState& state,
                                                   const InterventionRule& rule);

struct InterventionEvent {
    int t = 0;
    InterventionReason reason = InterventionReason::EmptyOutput;
};

struct RolloutRecord {
    std::vector<InterventionEvent> events;
    bool stopped = false;       // the student issued an accepted STOP
    bool reached_goal = false;  // terminated by arriving at the goal
    int steps = 0;

    bool intervened() const { return !events.empty(); }
};

// The student may return no action at all; that is the empty-output case.
using StudentPolicy =
    std::function<std::optional<worldsim::NavAction>(const worldsim::Observation&, int t)>;

StudentPolicy policy_student(const diff::ParamStore& params, const policy::ModelDims& dims,
                             const grammar::Instruction& instr);

// Student rollout with dynamic expert intervention: on a trigger the expert
// drives the agent back to the next reference waypoint, then control returns
// to the student. Terminates on an accepted STOP, on reaching the goal, or at
// max_steps.
std::pair<dataset::Trajectory, RolloutRecord> rollout(const StudentPolicy& student,
                                                      const dataset::EpisodeSpec& episode,
                                                      const worldsim::FloorPlan& plan,
                                                      const InterventionRule& rule,
                                                      const worldsim::SensorConfig& sensor);

struct FilterDecision {
    bool accepted = false;
    double pl = 0.0;
    double final_distance = 0.0;
    bool intervened = false;
    std::string reason;  // why it was rejected, empty when accepted
};

FilterDecision filter(const dataset::Trajectory& traj, const dataset::EpisodeSpec& episode,
                      const RolloutRecord& record, const FilterRule& rule,
                      const worldsim::FloorPlan& plan);

struct CollectedRollout {
    dataset::Trajectory traj;
    const dataset::EpisodeSpec* episode = nullptr;
    FilterDecision decision;
};

struct AggregateResult {
    std::vector<dataset::AnnotatedEpisode> shard;
    int rejected_mining = 0;
};

// Relabels every accepted step with the expert action at that pose, re-runs
// progress annotation and landmark mining, and emits dataset rows with
// provenance. Episodes failing the mining filter are dropped and counted.
AggregateResult aggregate(const std::vector<CollectedRollout>& accepted,
                          const std::map<std::string, worldsim::FloorPlan>& plans,
                          const worldsim::SensorConfig& sensor, double expert_stop_radius);

}  // namespace navlab::dagger
