#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "navlab/dataset.hpp"
#include "navlab/feature_oracle.hpp"
#include "navlab/grammar.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::datagen {

// Closed-loop expert rollout along the episode's reference path. Terminates
// on STOP, on a stalled forward step, or after max_steps.
dataset::Trajectory expert_rollout(const worldsim::FloorPlan& plan,
                                   const dataset::EpisodeSpec& episode, double stop_radius,
                                   int max_steps);

// Progress boundary k at every step of the trajectory: sub-goals complete in
// order; landmark verbs on first approach within 1.0 m of the category's
// nearest instance to the reference path, turns when the matching run of turn
// actions finishes, STOP_AT at the terminal STOP. Monotone by construction.
std::vector<int> progress_boundaries(const dataset::Trajectory& traj,
                                     const dataset::EpisodeSpec& episode,
                                     const worldsim::FloorPlan& plan);

struct ProgressSample {
    int t = 0;
    int k = 0;
    std::string label;  // verbatim prefix of the instruction
};

// Interval sampling at the given stride; the terminal step is always
// included so STOP supervision survives subsampling.
std::vector<ProgressSample> annotate_progress(const dataset::Trajectory& traj,
                                              const dataset::EpisodeSpec& episode,
                                              const worldsim::FloorPlan& plan, int stride);

struct MiningResult {
    bool accepted = false;
    std::vector<std::optional<int>> t_lm;  // per sub-goal; empty for rejected episodes
    std::string reject_reason;
};

// First-appearance frame per sub-goal category; episodes whose defined frames
// are not strictly increasing are rejected outright.
MiningResult mine_landmarks(const dataset::Trajectory& traj, const worldsim::FloorPlan& plan,
                            const std::vector<grammar::SubGoal>& subgoals,
                            const worldsim::SensorConfig& sensor);

// Most recent landmark frame at time t; falls back to frame 0 before the
// first landmark so the retrospective target is always defined.
int last_landmark(int t, const std::vector<std::optional<int>>& t_lm);

// Full per-episode annotation: per-step k and t*, mined landmark index.
// Returns nullopt when the mining filter rejects the episode.
std::optional<dataset::AnnotatedEpisode> annotate_episode(const worldsim::FloorPlan& plan,
                                                          const dataset::EpisodeSpec& episode,
                                                          const dataset::Trajectory& traj,
                                                          const worldsim::SensorConfig& sensor);

// --- data-quality metrics ---------------------------------------------------

struct LabelRecord {
    const grammar::Instruction* instruction = nullptr;
    std::string label;
    int oracle_k = 0;
};

// Fraction of labels containing a content token (vocabulary nouns/verbs)
// absent from their instruction.
double hallucination_rate(const std::vector<LabelRecord>& labels);

// Deterministic 1-5 consistency rubric: 5 exact prefix at the oracle
// boundary, 4 off by one sub-goal, 3 contiguous prefix with a boundary error
// above one, 2 non-contiguous sub-goal subset, 1 order-contradicting.
int lcs_score(const LabelRecord& rec);
double mean_lcs(const std::vector<LabelRecord>& labels);

struct QualityReport {
    double hr = 0.0;          // percent
    double lcs = 0.0;         // mean 1-5
    double lpr_mined = 0.0;   // fraction
    double lpr_random = 0.0;  // fraction
    int num_labels = 0;
    int num_mined_frames = 0;
};

// HR/LCS over the shard's progress labels plus landmark presence rate for the
// mined frames versus uniformly random frames (seeded).
QualityReport quality_metrics(const std::vector<dataset::AnnotatedEpisode>& shard,
                              const std::map<std::string, worldsim::FloorPlan>& plans,
                              const worldsim::SensorConfig& sensor, int stride,
                              std::uint64_t seed);

}  // namespace navlab::datagen
