#pragma once

#include <map>
#include <string>
#include <vector>

#include "navlab/dataset.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::metrics {

enum class Bucket : int { Short = 0, Medium = 1, Long = 2, Unbucketed = 3 };

const char* bucket_name(Bucket b);

struct BucketBounds {
    double short_min = 3.85;
    double short_max = 7.55;   // half-open upper end of Short
    double medium_max = 9.81;  // half-open upper end of Medium
    double long_max = 21.04;   // closed upper end of Long
};

Bucket bucketize_length(double geodesic_length, const BucketBounds& bounds = {});

struct EpisodeResult {
    std::string episode_id;
    bool success = false;
    double ne = 0.0;
    bool oracle_success = false;
    double spl_term = 0.0;
    double geodesic_length = 0.0;
    double path_length = 0.0;
    Bucket bucket = Bucket::Unbucketed;
};

// Success iff the agent issued STOP within success_radius (geodesic) of the
// goal; NE is the final geodesic distance; oracle success looks at every
// visited pose; spl_term = success * l / max(p, l).
EpisodeResult evaluate_episode(const dataset::Trajectory& traj,
                               const dataset::EpisodeSpec& episode,
                               const worldsim::FloorPlan& plan, double success_radius,
                               const BucketBounds& bounds = {});

struct Aggregate {
    int count = 0;
    double sr = 0.0;   // percent
    double spl = 0.0;  // percent
    double osr = 0.0;  // percent
    double ne = 0.0;   // meters
};

struct Report {
    Aggregate overall;
    std::map<Bucket, Aggregate> per_bucket;
};

Report aggregate(const std::vector<EpisodeResult>& results);

// Writes results.csv (one row per episode) and summary.json (overall and
// per-bucket SR/SPL/OSR/NE) into out_dir with deterministic ordering.
void write_report(const Report& report, const std::vector<EpisodeResult>& results,
                  const std::string& out_dir);

}  // namespace navlab::metrics
