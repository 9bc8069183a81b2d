#include "navlab/datagen.hpp"

#include <algorithm>
#include <set>

#include "navlab/errors.hpp"
#include "navlab/rng.hpp"

namespace navlab::datagen {

using dataset::AnnotatedEpisode;
using dataset::EpisodeSpec;
using dataset::Trajectory;
using worldsim::FloorPlan;
using worldsim::NavAction;

dataset::Trajectory expert_rollout(const FloorPlan& plan, const EpisodeSpec& episode,
                                   double stop_radius, int max_steps) {
    Trajectory traj;
    traj.episode_id = episode.episode_id;
    worldsim::AgentPose pose = episode.start;
    for (int t = 0; t < max_steps; ++t) {
        const NavAction a =
            worldsim::expert_action(plan, pose, episode.reference_path, episode.goal, stop_radius);
        traj.steps.push_back({t, pose, a});
        if (a == NavAction::Stop) {
            traj.terminal = true;
            break;
        }
        const worldsim::AgentPose next = worldsim::step(plan, pose, a);
        if (a == NavAction::MoveForward && distance(next.position(), pose.position()) < 1e-6)
            break;  // stalled against a wall
        pose = next;
    }
    return traj;
}

namespace {

// Landmark instance of the sub-goal's category closest to the reference path.
const worldsim::Landmark* nearest_instance(const FloorPlan& plan,
                                           const std::vector<Vec2>& reference_path, int category) {
    const worldsim::Landmark* best = nullptr;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& lm : plan.landmarks) {
        if (lm.category != category) continue;
        const double d = project_to_polyline(reference_path, lm.center).distance;
        if (d < best_d) {
            best_d = d;
            best = &lm;
        }
    }
    return best;
}

struct TurnRun {
    NavAction action;
    int start = 0;
    int end = 0;  // inclusive index of the run's last turn action
};

std::vector<TurnRun> turn_runs(const Trajectory& traj) {
    std::vector<TurnRun> runs;
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
        const NavAction a = traj.steps[i].action;
        if (a != NavAction::TurnLeft && a != NavAction::TurnRight) continue;
        if (!runs.empty() && runs.back().action == a &&
            runs.back().end == traj.steps[i].t - 1) {
            runs.back().end = traj.steps[i].t;
        } else {
            runs.push_back({a, traj.steps[i].t, traj.steps[i].t});
        }
    }
    return runs;
}

}  // namespace

std::vector<int> progress_boundaries(const Trajectory& traj, const EpisodeSpec& episode,
                                     const FloorPlan& plan) {
    if (traj.episode_id != episode.episode_id)
        throw InputError("trajectory is not aligned with the episode");
    const auto& subgoals = episode.instruction.subgoals;
    const int K = static_cast<int>(subgoals.size());

    // Resolve landmark instances once.
    std::vector<const worldsim::Landmark*> instances(subgoals.size(), nullptr);
    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        if (subgoals[i].category)
            instances[i] = nearest_instance(plan, episode.reference_path, *subgoals[i].category);
    }
    const auto runs = turn_runs(traj);
    const int terminal_t =
        traj.terminal && !traj.steps.empty() ? traj.steps.back().t : -1;

    std::vector<int> out(traj.steps.size(), 0);
    int k = 0;
    int last_completion_t = 0;
    int last_consumed_run = -1;
    for (std::size_t si = 0; si < traj.steps.size(); ++si) {
        const auto& st = traj.steps[si];
        bool progressed = true;
        while (progressed && k < K) {
            progressed = false;
            const auto& sg = subgoals[static_cast<std::size_t>(k)];
            switch (sg.completion) {
                case grammar::CompletionKind::ReachLandmark: {
                    const auto* lm = instances[static_cast<std::size_t>(k)];
                    if (lm && distance(st.pose.position(), lm->center) <= grammar::kCompletionRadius) {
                        ++k;
                        last_completion_t = st.t;
                        progressed = true;
                    }
                    break;
                }
                case grammar::CompletionKind::ExecuteTurn: {
                    const NavAction want = sg.verb == grammar::Verb::TurnLeft
                                               ? NavAction::TurnLeft
                                               : NavAction::TurnRight;
                    for (std::size_t ri = 0; ri < runs.size(); ++ri) {
                        if (static_cast<int>(ri) <= last_consumed_run) continue;
                        if (runs[ri].action != want) continue;
                        if (runs[ri].end < last_completion_t) continue;
                        if (runs[ri].end > st.t) break;  // not finished yet
                        ++k;
                        last_completion_t = runs[ri].end;
                        last_consumed_run = static_cast<int>(ri);
                        progressed = true;
                        break;
                    }
                    break;
                }
                case grammar::CompletionKind::Stop: {
                    if (st.t == terminal_t && st.action == NavAction::Stop) {
                        ++k;
                        last_completion_t = st.t;
                        progressed = true;
                    }
                    break;
                }
            }
        }
        out[si] = k;
    }
    return out;
}

std::vector<ProgressSample> annotate_progress(const Trajectory& traj, const EpisodeSpec& episode,
                                              const FloorPlan& plan, int stride) {
    if (stride <= 0) throw InputError("stride must be positive");
    const auto boundaries = progress_boundaries(traj, episode, plan);
    std::vector<ProgressSample> out;
    for (std::size_t si = 0; si < traj.steps.size(); ++si) {
        const bool last = si + 1 == traj.steps.size();
        if (static_cast<int>(si) % stride != 0 && !last) continue;
        ProgressSample s;
        s.t = traj.steps[si].t;
        s.k = boundaries[si];
        s.label = grammar::prefix_text(episode.instruction, s.k);
        out.push_back(std::move(s));
    }
    return out;
}

MiningResult mine_landmarks(const Trajectory& traj, const FloorPlan& plan,
                            const std::vector<grammar::SubGoal>& subgoals,
                            const worldsim::SensorConfig& sensor) {
    MiningResult res;
    res.t_lm.assign(subgoals.size(), std::nullopt);
    std::vector<worldsim::Observation> observations;
    observations.reserve(traj.steps.size());
    for (const auto& st : traj.steps)
        observations.push_back(worldsim::observe(plan, st.pose, sensor));

    for (std::size_t i = 0; i < subgoals.size(); ++i) {
        if (!subgoals[i].category) continue;
        for (std::size_t si = 0; si < observations.size(); ++si) {
            if (observations[si].contains_category(*subgoals[i].category)) {
                res.t_lm[i] = traj.steps[si].t;
                break;
            }
        }
    }

    // Hallucination filter: defined first-appearance frames must be strictly
    // increasing across sub-goals.
    int prev = -1;
    for (std::size_t i = 0; i < res.t_lm.size(); ++i) {
        if (!res.t_lm[i]) continue;
        if (*res.t_lm[i] <= prev) {
            res.accepted = false;
            res.reject_reason = "landmark frames not strictly increasing at sub-goal " +
                                std::to_string(i);
            res.t_lm.clear();
            return res;
        }
        prev = *res.t_lm[i];
    }
    res.accepted = true;
    return res;
}

int last_landmark(int t, const std::vector<std::optional<int>>& t_lm) {
    int best = -1;
    for (const auto& v : t_lm) {
        if (v && *v <= t) best = std::max(best, *v);
    }
    return best < 0 ? 0 : best;
}

std::optional<AnnotatedEpisode> annotate_episode(const FloorPlan& plan,
                                                 const EpisodeSpec& episode,
                                                 const Trajectory& traj,
                                                 const worldsim::SensorConfig& sensor) {
    const auto mining = mine_landmarks(traj, plan, episode.instruction.subgoals, sensor);
    if (!mining.accepted) return std::nullopt;
    const auto boundaries = progress_boundaries(traj, episode, plan);

    AnnotatedEpisode out;
    out.episode_id = episode.episode_id;
    out.world_id = episode.world_id;
    out.instruction = episode.instruction;
    out.landmark_index = mining.t_lm;
    out.steps.reserve(traj.steps.size());
    for (std::size_t si = 0; si < traj.steps.size(); ++si) {
        dataset::StepRecord r;
        r.t = traj.steps[si].t;
        r.pose = traj.steps[si].pose;
        r.action = traj.steps[si].action;
        r.k = boundaries[si];
        r.t_star = last_landmark(r.t, mining.t_lm);
        out.steps.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Quality metrics

namespace {

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ' ' || c == ',' || c == '.') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

// Vocabulary nouns and verbs; function words never count as hallucinations.
const std::set<std::string>& content_tokens() {
    static const std::set<std::string> toks = [] {
        std::set<std::string> s;
        const auto& voc = grammar::Vocabulary::instance();
        for (const auto& cat : voc.categories())
            for (const auto& w : words_of(cat)) s.insert(w);
        for (const char* w : {"exit", "enter", "walk", "go", "head", "pass", "turn", "stop",
                              "left", "right", "straight"})
            s.insert(w);
        return s;
    }();
    return toks;
}

// The clause with connectors/separators stripped, for substring matching.
std::string clause_core(const std::string& clause) {
    std::string core = clause;
    while (!core.empty() && (core.back() == ',' || core.back() == '.' || core.back() == ' '))
        core.pop_back();
    std::size_t i = 0;
    while (i < core.size() && core[i] == ' ') ++i;
    for (const auto& conn : grammar::Vocabulary::instance().connectors()) {
        if (core.compare(i, conn.size() + 1, conn + " ") == 0) {
            i += conn.size() + 1;
            break;
        }
    }
    return core.substr(i);
}

}  // namespace

double hallucination_rate(const std::vector<LabelRecord>& labels) {
    if (labels.empty()) return 0.0;
    int hallucinated = 0;
    for (const auto& rec : labels) {
        std::set<std::string> instr_words;
        for (const auto& w : words_of(rec.instruction->text)) instr_words.insert(w);
        bool bad = false;
        for (const auto& w : words_of(rec.label)) {
            if (content_tokens().count(w) && !instr_words.count(w)) {
                bad = true;
                break;
            }
        }
        if (bad) ++hallucinated;
    }
    return 100.0 * hallucinated / static_cast<double>(labels.size());
}

int lcs_score(const LabelRecord& rec) {
    const auto& instr = *rec.instruction;
    const int K = instr.num_subgoals();
    std::vector<std::string> cores;
    for (int i = 0; i < K; ++i)
        cores.push_back(clause_core(instr.subgoals[static_cast<std::size_t>(i)].clause));

    // Parse the label into a clause-index sequence. Identical cores (repeated
    // turn clauses) are disambiguated by preferring the smallest unused index
    // that keeps the sequence increasing.
    std::vector<int> seq;
    std::vector<bool> used(static_cast<std::size_t>(K), false);
    std::size_t cursor = 0;
    int last = -1;
    const auto& label = rec.label;
    while (cursor < label.size()) {
        while (cursor < label.size() &&
               (label[cursor] == ' ' || label[cursor] == ',' || label[cursor] == '.'))
            ++cursor;
        for (const auto& conn : grammar::Vocabulary::instance().connectors()) {
            if (label.compare(cursor, conn.size() + 1, conn + " ") == 0) {
                cursor += conn.size() + 1;
                break;
            }
        }
        if (cursor >= label.size()) break;
        int match = -1;
        for (int pass = 0; pass < 2 && match < 0; ++pass) {
            for (int i = 0; i < K; ++i) {
                if (used[static_cast<std::size_t>(i)]) continue;
                if (pass == 0 && i <= last) continue;  // prefer keeping order
                if (label.compare(cursor, cores[static_cast<std::size_t>(i)].size(),
                                  cores[static_cast<std::size_t>(i)]) == 0) {
                    match = i;
                    break;
                }
            }
        }
        if (match < 0) {
            // Unknown content; skip to the next separator.
            const std::size_t sep = label.find_first_of(",.", cursor);
            if (sep == std::string::npos) break;
            cursor = sep + 1;
            continue;
        }
        used[static_cast<std::size_t>(match)] = true;
        seq.push_back(match);
        cursor += cores[static_cast<std::size_t>(match)].size();
        last = match;
    }

    for (std::size_t i = 1; i < seq.size(); ++i) {
        if (seq[i] <= seq[i - 1]) return 1;  // order contradiction
    }
    for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i] != static_cast<int>(i)) return 2;  // skips sub-goals
    }
    const int boundary = static_cast<int>(seq.size());
    const int err = std::abs(boundary - rec.oracle_k);
    if (err == 0) return 5;
    if (err == 1) return 4;
    return 3;
}

double mean_lcs(const std::vector<LabelRecord>& labels) {
    if (labels.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& rec : labels) acc += lcs_score(rec);
    return acc / static_cast<double>(labels.size());
}

QualityReport quality_metrics(const std::vector<AnnotatedEpisode>& shard,
                              const std::map<std::string, FloorPlan>& plans,
                              const worldsim::SensorConfig& sensor, int stride,
                              std::uint64_t seed) {
    QualityReport rep;
    std::vector<LabelRecord> labels;
    Rng rng(seed);
    int mined_present = 0, mined_total = 0;
    int random_present = 0, random_total = 0;

    for (const auto& ep : shard) {
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end()) throw InputError("shard references unknown world " + ep.world_id);
        const auto& plan = pit->second;

        for (std::size_t si = 0; si < ep.steps.size(); ++si) {
            const bool last = si + 1 == ep.steps.size();
            if (static_cast<int>(si) % stride != 0 && !last) continue;
            LabelRecord rec;
            rec.instruction = &ep.instruction;
            rec.oracle_k = ep.steps[si].k;
            rec.label = grammar::prefix_text(ep.instruction, ep.steps[si].k);
            labels.push_back(std::move(rec));
        }

        for (std::size_t gi = 0; gi < ep.landmark_index.size(); ++gi) {
            if (!ep.landmark_index[gi]) continue;
            const int cat = *ep.instruction.subgoals[gi].category;
            // Mined frame.
            const int t_mined = *ep.landmark_index[gi];
            if (t_mined >= 0 && t_mined < static_cast<int>(ep.steps.size())) {
                const auto obs = worldsim::observe(
                    plan, ep.steps[static_cast<std::size_t>(t_mined)].pose, sensor);
                if (obs.contains_category(cat)) ++mined_present;
                ++mined_total;
            }
            // Uniformly random frame for the same sub-goal.
            const int t_rand =
                static_cast<int>(rng.below(static_cast<std::uint64_t>(ep.steps.size())));
            const auto obs =
                worldsim::observe(plan, ep.steps[static_cast<std::size_t>(t_rand)].pose, sensor);
            if (obs.contains_category(cat)) ++random_present;
            ++random_total;
        }
    }

    rep.num_labels = static_cast<int>(labels.size());
    rep.num_mined_frames = mined_total;
    rep.hr = hallucination_rate(labels);
    rep.lcs = mean_lcs(labels);
    rep.lpr_mined = mined_total ? static_cast<double>(mined_present) / mined_total : 0.0;
    rep.lpr_random = random_total ? static_cast<double>(random_present) / random_total : 0.0;
    return rep;
}

}  // namespace navlab::datagen
