#include "navlab/evalrun.hpp"

#include "navlab/errors.hpp"

namespace navlab::evalrun {

using worldsim::NavAction;

dataset::Trajectory policy_rollout(const diff::ParamStore& params, const policy::ModelDims& dims,
                                   const worldsim::FloorPlan& plan,
                                   const dataset::EpisodeSpec& episode,
                                   const worldsim::SensorConfig& sensor, int max_steps) {
    dataset::Trajectory traj;
    traj.episode_id = episode.episode_id;
    policy::PolicyRunner runner(params, dims, episode.instruction);
    worldsim::AgentPose pose = episode.start;
    for (int t = 0; t < max_steps; ++t) {
        const auto obs = worldsim::observe(plan, pose, sensor);
        const auto out = runner.step(obs, t);
        traj.steps.push_back({t, pose, out.action});
        if (out.action == NavAction::Stop) {
            traj.terminal = true;
            break;
        }
        pose = worldsim::step(plan, pose, out.action);
    }
    return traj;
}

std::vector<metrics::EpisodeResult> evaluate_policy(
    const diff::ParamStore& params, const policy::ModelDims& dims,
    const std::map<std::string, worldsim::FloorPlan>& plans,
    const std::vector<dataset::EpisodeSpec>& episodes, const worldsim::SensorConfig& sensor,
    double success_radius, int max_steps, const metrics::BucketBounds& bounds) {
    std::vector<metrics::EpisodeResult> results;
    results.reserve(episodes.size());
    for (const auto& ep : episodes) {
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end())
            throw InputError("episode " + ep.episode_id + " references unknown world " +
                             ep.world_id);
        const auto traj = policy_rollout(params, dims, pit->second, ep, sensor, max_steps);
        results.push_back(
            metrics::evaluate_episode(traj, ep, pit->second, success_radius, bounds));
    }
    return results;
}

std::map<std::string, worldsim::FloorPlan> plans_by_id(
    const std::vector<worldsim::FloorPlan>& worlds) {
    std::map<std::string, worldsim::FloorPlan> out;
    for (const auto& w : worlds) out.emplace(w.id, w);
    return out;
}

}  // namespace navlab::evalrun
