#pragma once

#include <map>
#include <string>
#include <vector>

#include "navlab/dataset.hpp"
#include "navlab/metrics.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/policy.hpp"

namespace navlab::evalrun {

// Plain greedy closed-loop rollout of a checkpoint (no interventions).
// Terminates on STOP or after max_steps.
dataset::Trajectory policy_rollout(const diff::ParamStore& params, const policy::ModelDims& dims,
                                   const worldsim::FloorPlan& plan,
                                   const dataset::EpisodeSpec& episode,
                                   const worldsim::SensorConfig& sensor, int max_steps);

std::vector<metrics::EpisodeResult> evaluate_policy(
    const diff::ParamStore& params, const policy::ModelDims& dims,
    const std::map<std::string, worldsim::FloorPlan>& plans,
    const std::vector<dataset::EpisodeSpec>& episodes, const worldsim::SensorConfig& sensor,
    double success_radius, int max_steps, const metrics::BucketBounds& bounds = {});

std::map<std::string, worldsim::FloorPlan> plans_by_id(
    const std::vector<worldsim::FloorPlan>& worlds);

}  // namespace navlab::evalrun
