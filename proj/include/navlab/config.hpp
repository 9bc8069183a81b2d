#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "navlab/dagger.hpp"
#include "navlab/metrics.hpp"
#include "navlab/policy.hpp"
#include "navlab/trainer.hpp"
#include "navlab/worldgen.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::config {

struct RunConfig {
    std::uint64_t seed = 1;

    policy::ModelDims model;  // vocab filled from the grammar on load
    double sensor_fov_deg = 90.0;

    worldgen::WorldGenParams world_gen;
    int num_worlds = 8;

    worldgen::EpisodeGenParams episode_gen;
    int episodes_per_world = 10;

    trainer::TrainingConfig training;

    dagger::InterventionRule intervention;
    dagger::FilterRule filter;

    double eval_success_radius = 3.0;
    int eval_max_steps = 220;
    metrics::BucketBounds buckets;

    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    int serve_latency_ms = 0;

    worldsim::SensorConfig sensor() const;
};

// Strict parse: unknown keys anywhere are rejected, every present value is
// type- and range-checked. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::string& path);

// Canonical JSON image of a config (also serves as the documented default).
nlohmann::json config_to_json(const RunConfig& cfg);

// FNV-1a hash of the canonical config dump, for run manifests.
std::string config_hash(const RunConfig& cfg);

// Machine-readable run manifest written beside every output.
void write_manifest(const std::string& out_path, const RunConfig& cfg,
                    const std::string& command, const std::vector<std::string>& outputs);

}  // namespace navlab::config
