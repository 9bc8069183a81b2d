#include "navlab/dagger.hpp"

#include <cmath>

#include "navlab/errors.hpp"

namespace navlab::dagger {

using dataset::EpisodeSpec;
using dataset::Trajectory;
using worldsim::FloorPlan;
using worldsim::NavAction;

const char* reason_name(InterventionReason r) {
    switch (r) {
        case InterventionReason::EmptyOutput: return "empty-output";
        case InterventionReason::PrematureStop: return "premature-stop";
        case InterventionReason::Deviation: return "deviation";
    }
    return "?";
}

std::optional<InterventionReason> should_intervene(const InterventionState& state,
                                                   const InterventionRule& rule) {
    if (!state.proposed) return InterventionReason::EmptyOutput;
    if (*state.proposed == NavAction::Stop &&
        state.goal_geodesic >= rule.premature_stop_distance)
        return InterventionReason::PrematureStop;
    if (state.off_path_streak >= rule.deviation_patience) return InterventionReason::Deviation;
    return std::nullopt;
}

StudentPolicy policy_student(const diff::ParamStore& params, const policy::ModelDims& dims,
                             const grammar::Instruction& instr) {
    auto runner = std::make_shared<policy::PolicyRunner>(params, dims, instr);
    return [runner](const worldsim::Observation& obs, int t) {
        return std::optional<NavAction>(runner->step(obs, t).action);
    };
}

namespace {

// Drives the agent to `target` with the shortest-path expert. Steps are
// appended to the trajectory with the expert's executed actions.
bool expert_drive_to(const FloorPlan& plan, const worldsim::GeodesicSolver& planner,
                     worldsim::AgentPose& pose, const Vec2& target, Trajectory& traj, int& t,
                     int max_steps, int step_budget) {
    std::vector<Vec2> path;
    try {
        path = planner.shortest_path(pose.position(), target);
    } catch (const NavError&) {
        return false;
    }
    // Arrive well inside the rollout's goal-reach radius so a takeover ending
    // at the final reference vertex actually terminates the episode.
    for (int i = 0; i < step_budget && t < max_steps; ++i) {
        if (distance(pose.position(), target) <= 0.2) return true;
        const NavAction a = worldsim::expert_action(plan, pose, path, target, 0.15);
        if (a == NavAction::Stop) return true;
        traj.steps.push_back({t++, pose, a});
        const auto next = worldsim::step(plan, pose, a);
        if (a == NavAction::MoveForward && distance(next.position(), pose.position()) < 1e-6)
            return false;  // stalled
        pose = next;
    }
    return distance(pose.position(), target) <= 0.35;
}

// First reference vertex ahead of the agent's projection that the agent has
// not already reached (otherwise a takeover ending beside a vertex would be
// asked to drive there again, forever).
Vec2 next_reference_waypoint(const std::vector<Vec2>& reference, const Vec2& p) {
    const auto proj = project_to_polyline(reference, p);
    double arc = 0.0;
    for (std::size_t i = 1; i < reference.size(); ++i) {
        arc += distance(reference[i - 1], reference[i]);
        if (arc > proj.arc + 0.1 && distance(reference[i], p) > 0.3) return reference[i];
    }
    return reference.back();
}

}  // namespace

std::pair<Trajectory, RolloutRecord> rollout(const StudentPolicy& student,
                                             const EpisodeSpec& episode, const FloorPlan& plan,
                                             const InterventionRule& rule,
                                             const worldsim::SensorConfig& sensor) {
    const worldsim::GeodesicSolver metric(plan);
    const worldsim::GeodesicSolver planner(plan, 0.1, 0.12);

    Trajectory traj;
    traj.episode_id = episode.episode_id;
    RolloutRecord record;

    worldsim::AgentPose pose = episode.start;
    int t = 0;
    int off_path_streak = 0;
    int stagnation = 0;
    while (t < rule.max_steps) {
        const int t_before = t;
        if (distance(pose.position(), episode.goal) <= 0.3) {
            record.reached_goal = true;
            traj.steps.push_back({t++, pose, NavAction::Stop});
            traj.terminal = true;
            break;
        }
        const auto obs = worldsim::observe(plan, pose, sensor);
        const auto proposed = student(obs, t);

        InterventionState state;
        state.proposed = proposed;
        state.off_path_streak = off_path_streak;
        state.goal_geodesic = 0.0;
        if (proposed && *proposed == NavAction::Stop) {
            try {
                state.goal_geodesic = metric.geodesic(pose.position(), episode.goal);
            } catch (const NoPathError&) {
                state.goal_geodesic = std::numeric_limits<double>::infinity();
            }
        }

        const auto reason = should_intervene(state, rule);
        if (reason) {
            record.events.push_back({t, *reason});
            const Vec2 wp = next_reference_waypoint(episode.reference_path, pose.position());
            if (!expert_drive_to(plan, planner, pose, wp, traj, t, rule.max_steps, 120)) break;
            off_path_streak = 0;
            stagnation = t == t_before ? stagnation + 1 : 0;
            if (stagnation > 8) break;  // expert has nowhere further to lead
            continue;
        }

        if (*proposed == NavAction::Stop) {
            traj.steps.push_back({t++, pose, NavAction::Stop});
            traj.terminal = true;
            record.stopped = true;
            break;
        }

        traj.steps.push_back({t++, pose, *proposed});
        pose = worldsim::step(plan, pose, *proposed);
        const double off = project_to_polyline(episode.reference_path, pose.position()).distance;
        off_path_streak = off > rule.deviation_distance ? off_path_streak + 1 : 0;
    }

    if (traj.steps.empty()) traj.steps.push_back({0, episode.start, NavAction::Stop});
    record.steps = static_cast<int>(traj.steps.size());
    return {std::move(traj), std::move(record)};
}

FilterDecision filter(const Trajectory& traj, const EpisodeSpec& episode,
                      const RolloutRecord& record, const FilterRule& rule,
                      const FloorPlan& plan) {
    FilterDecision d;
    d.intervened = record.intervened();
    const auto& final_pose = traj.steps.back().pose;
    try {
        d.final_distance = worldsim::geodesic(plan, final_pose.position(), episode.goal);
    } catch (const NoPathError&) {
        d.final_distance = std::numeric_limits<double>::infinity();
    }

    double agent_len = 0.0;
    for (std::size_t i = 1; i < traj.steps.size(); ++i)
        agent_len += distance(traj.steps[i - 1].pose.position(), traj.steps[i].pose.position());
    const double ref_len = polyline_length(episode.reference_path);
    d.pl = ref_len > 0 ? agent_len / ref_len : std::numeric_limits<double>::infinity();

    if (d.final_distance >= rule.success_distance) {
        d.reason = "final distance " + std::to_string(d.final_distance) + " >= " +
                   std::to_string(rule.success_distance);
        return d;
    }
    const double pl_bound = d.intervened ? rule.pl_corrected : rule.pl_autonomous;
    if (d.pl >= pl_bound) {
        d.reason = "PL " + std::to_string(d.pl) + " >= " + std::to_string(pl_bound) +
                   (d.intervened ? " (corrected)" : " (autonomous)");
        return d;
    }
    d.accepted = true;
    return d;
}

AggregateResult aggregate(const std::vector<CollectedRollout>& accepted,
                          const std::map<std::string, worldsim::FloorPlan>& plans,
                          const worldsim::SensorConfig& sensor, double expert_stop_radius) {
    AggregateResult out;
    for (const auto& c : accepted) {
        if (!c.decision.accepted) continue;
        const auto pit = plans.find(c.episode->world_id);
        if (pit == plans.end())
            throw InputError("rollout references unknown world " + c.episode->world_id);
        const auto& plan = pit->second;

        auto annotated = datagen::annotate_episode(plan, *c.episode, c.traj, sensor);
        if (!annotated) {
            ++out.rejected_mining;
            continue;
        }
        // The training label is the expert's action at the recorded pose,
        // never the student's.
        for (auto& step : annotated->steps) {
            step.action = worldsim::expert_action(plan, step.pose, c.episode->reference_path,
                                                  c.episode->goal, expert_stop_radius);
        }
        annotated->provenance = dataset::Provenance{c.decision.intervened, c.decision.pl,
                                                    c.decision.final_distance};
        out.shard.push_back(std::move(*annotated));
    }
    return out;
}

}  // namespace navlab::dagger
