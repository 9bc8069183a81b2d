#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "navlab/datagen.hpp"
#include "navlab/errors.hpp"
#include "navlab/rng.hpp"
#include "navlab/worldgen.hpp"

using namespace navlab;
using namespace navlab::datagen;
using dataset::EpisodeSpec;
using dataset::Trajectory;
using worldsim::FloorPlan;
using worldsim::NavAction;

namespace {

struct Generated {
    std::vector<FloorPlan> worlds;
    std::vector<EpisodeSpec> episodes;
    std::map<std::string, FloorPlan> plans;
};

const Generated& fixture() {
    static const Generated g = [] {
        Generated out;
        worldgen::WorldGenParams wp;
        worldgen::EpisodeGenParams ep;
        const worldsim::SensorConfig sensor;
        for (int w = 0; w < 8; ++w) {
            auto plan = worldgen::generate_world(wp, 4000 + w, "w" + std::to_string(w));
            const auto eps =
                worldgen::generate_episodes(plan, ep, sensor, 900 + w, 8, plan.id + "-e");
            out.episodes.insert(out.episodes.end(), eps.begin(), eps.end());
            out.plans.emplace(plan.id, plan);
            out.worlds.push_back(std::move(plan));
        }
        return out;
    }();
    return g;
}

// Brute-force per-frame event scanner, written independently of the
// incremental tracker: for each sampled t it replays the whole completion
// logic from scratch over steps 0..t.
int oracle_boundary(const Trajectory& traj, const EpisodeSpec& ep, const FloorPlan& plan,
                    int upto) {
    const auto& sgs = ep.instruction.subgoals;
    int k = 0;
    int completion_time = 0;
    std::set<std::pair<int, int>> consumed_runs;
    const int terminal_t = traj.terminal ? traj.steps.back().t : -1;
    while (k < static_cast<int>(sgs.size())) {
        const auto& sg = sgs[static_cast<std::size_t>(k)];
        bool done = false;
        if (sg.completion == grammar::CompletionKind::ReachLandmark) {
            // Nearest instance of the category to the reference path.
            const worldsim::Landmark* inst = nullptr;
            double best = 1e18;
            for (const auto& lm : plan.landmarks) {
                if (lm.category != *sg.category) continue;
                const double d = project_to_polyline(ep.reference_path, lm.center).distance;
                if (d < best) {
                    best = d;
                    inst = &lm;
                }
            }
            if (inst) {
                for (int t = 0; t <= upto; ++t) {
                    if (distance(traj.steps[static_cast<std::size_t>(t)].pose.position(),
                                 inst->center) <= 1.0) {
                        done = true;
                        completion_time = t;
                        break;
                    }
                }
            }
        } else if (sg.completion == grammar::CompletionKind::ExecuteTurn) {
            const NavAction want =
                sg.verb == grammar::Verb::TurnLeft ? NavAction::TurnLeft : NavAction::TurnRight;
            // Enumerate maximal runs of `want`, reimplemented from scratch.
            int run_start = -1;
            for (int t = 0; t <= upto && !done; ++t) {
                const bool is_want = traj.steps[static_cast<std::size_t>(t)].action == want;
                const bool next_same =
                    t + 1 < static_cast<int>(traj.steps.size()) &&
                    traj.steps[static_cast<std::size_t>(t + 1)].action == want;
                if (is_want && run_start < 0) run_start = t;
                if (is_want && !next_same) {
                    // Run [run_start, t] complete.
                    if (t >= completion_time && !consumed_runs.count({run_start, t})) {
                        done = true;
                        completion_time = t;
                        consumed_runs.insert({run_start, t});
                    }
                    run_start = -1;
                }
                if (!is_want) run_start = -1;
            }
        } else {
            if (terminal_t >= 0 && terminal_t <= upto) {
                done = true;
                completion_time = terminal_t;
            }
        }
        if (!done) break;
        ++k;
    }
    return k;
}

}  // namespace

TEST_CASE("expert closed-loop rollouts succeed on every generated episode") {
    const auto& fx = fixture();
    REQUIRE(fx.episodes.size() >= 50);
    for (const auto& ep : fx.episodes) {
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        REQUIRE(traj.terminal);
        CHECK(distance(traj.steps.back().pose.position(), ep.goal) <= 0.3);
        // Poses replay through worldsim.step.
        for (std::size_t i = 0; i + 1 < traj.steps.size(); ++i) {
            const auto next =
                worldsim::step(plan, traj.steps[i].pose, traj.steps[i].action);
            CHECK(distance(next.position(), traj.steps[i + 1].pose.position()) < 1e-9);
        }
    }
}

TEST_CASE("progress boundaries start at zero, end at K, and are monotone") {
    const auto& fx = fixture();
    for (const auto& ep : fx.episodes) {
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        const auto bounds = progress_boundaries(traj, ep, plan);
        REQUIRE(!bounds.empty());
        CHECK(bounds.front() == 0);
        CHECK(bounds.back() == ep.instruction.num_subgoals());
        for (std::size_t i = 1; i < bounds.size(); ++i) CHECK(bounds[i] >= bounds[i - 1]);
    }
}

TEST_CASE("boundaries match the brute-force event scanner") {
    const auto& fx = fixture();
    int sampled = 0;
    for (std::size_t e = 0; e < fx.episodes.size(); ++e) {
        const auto& ep = fx.episodes[e];
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        const auto bounds = progress_boundaries(traj, ep, plan);
        for (std::size_t t = 0; t < traj.steps.size(); t += 3) {
            CHECK(bounds[t] == oracle_boundary(traj, ep, plan, static_cast<int>(t)));
            ++sampled;
        }
    }
    CHECK(sampled > 500);
}

TEST_CASE("annotate_progress samples the stride plus the terminal step") {
    const auto& fx = fixture();
    const auto& ep = fx.episodes.front();
    const auto& plan = fx.plans.at(ep.world_id);
    const auto traj = expert_rollout(plan, ep, 0.3, 400);
    const auto samples = annotate_progress(traj, ep, plan, 4);
    REQUIRE(!samples.empty());
    CHECK(samples.front().t == 0);
    CHECK(samples.front().k == 0);
    CHECK(samples.front().label == "");
    CHECK(samples.back().t == traj.steps.back().t);
    CHECK(samples.back().k == ep.instruction.num_subgoals());
    CHECK(samples.back().label == ep.instruction.text);
    for (const auto& s : samples) {
        CHECK(ep.instruction.text.compare(0, s.label.size(), s.label) == 0);
        if (s.t != traj.steps.back().t) CHECK(s.t % 4 == 0);
    }
    CHECK_THROWS_AS(annotate_progress(traj, ep, plan, 0), InputError);
}

TEST_CASE("mining matches a full visibility scan and respects ordering") {
    const auto& fx = fixture();
    const worldsim::SensorConfig sensor;
    int episodes_checked = 0;
    for (const auto& ep : fx.episodes) {
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        const auto mined = mine_landmarks(traj, plan, ep.instruction.subgoals, sensor);
        REQUIRE(mined.accepted);  // generator pre-validated these
        // Full-scan oracle.
        for (std::size_t gi = 0; gi < ep.instruction.subgoals.size(); ++gi) {
            const auto& sg = ep.instruction.subgoals[gi];
            if (!sg.category) {
                CHECK(!mined.t_lm[gi].has_value());
                continue;
            }
            std::optional<int> first;
            for (std::size_t t = 0; t < traj.steps.size(); ++t) {
                const auto obs = worldsim::observe(plan, traj.steps[t].pose, sensor);
                if (obs.contains_category(*sg.category)) {
                    first = static_cast<int>(t);
                    break;
                }
            }
            CHECK(mined.t_lm[gi] == first);
        }
        // Defined frames strictly increase.
        int prev = -1;
        for (const auto& v : mined.t_lm) {
            if (!v) continue;
            CHECK(*v > prev);
            prev = *v;
        }
        ++episodes_checked;
    }
    CHECK(episodes_checked >= 50);
}

TEST_CASE("landmark visible at frame 0 mines to frame 0") {
    FloorPlan plan;
    plan.id = "p";
    plan.bounds = {0, 0, 20, 20};
    plan.landmarks.push_back({"lm", 3, {12, 10}, 0.4});
    Trajectory traj;
    traj.episode_id = "e";
    traj.steps.push_back({0, {10, 10, 0}, NavAction::MoveForward});
    traj.steps.push_back({1, {10.25, 10, 0}, NavAction::Stop});
    traj.terminal = true;
    grammar::SubGoal sg;
    sg.verb = grammar::Verb::WalkTo;
    sg.category = 3;
    sg.clause = "walk to the couch.";
    sg.completion = grammar::CompletionKind::ReachLandmark;
    const auto mined = mine_landmarks(traj, plan, {sg}, worldsim::SensorConfig{});
    REQUIRE(mined.accepted);
    CHECK(mined.t_lm[0] == 0);
}

TEST_CASE("injected ordering violation rejects the episode") {
    // Two landmarks where the second sub-goal's category is visible first.
    FloorPlan plan;
    plan.id = "p";
    plan.bounds = {0, 0, 40, 20};
    plan.landmarks.push_back({"far", 4, {24.0, 10.0}, 0.4});   // sub-goal 1, far ahead
    plan.landmarks.push_back({"near", 7, {12.0, 10.0}, 0.4});  // sub-goal 2, visible first
    Trajectory traj;
    traj.episode_id = "e";
    for (int t = 0; t < 40; ++t)
        traj.steps.push_back({t, {10.0 + 0.25 * t, 10.0, 0.0}, NavAction::MoveForward});
    auto mk = [](int cat) {
        grammar::SubGoal sg;
        sg.verb = grammar::Verb::Pass;
        sg.category = cat;
        sg.clause = "pass.";
        sg.completion = grammar::CompletionKind::ReachLandmark;
        return sg;
    };
    const auto mined = mine_landmarks(traj, plan, {mk(4), mk(7)}, worldsim::SensorConfig{});
    CHECK(!mined.accepted);
    CHECK(mined.reject_reason.find("strictly increasing") != std::string::npos);
    CHECK(mined.t_lm.empty());
}

TEST_CASE("last_landmark picks the max defined frame at or before t") {
    const std::vector<std::optional<int>> idx{std::nullopt, 5, 12};
    CHECK(last_landmark(3, idx) == 0);   // fallback before the first landmark
    CHECK(last_landmark(5, idx) == 5);
    CHECK(last_landmark(9, idx) == 5);
    CHECK(last_landmark(12, idx) == 12);
    CHECK(last_landmark(90, idx) == 12);
}

TEST_CASE("annotated episodes carry consistent k and t_star per step") {
    const auto& fx = fixture();
    const worldsim::SensorConfig sensor;
    const auto& ep = fx.episodes.front();
    const auto& plan = fx.plans.at(ep.world_id);
    const auto traj = expert_rollout(plan, ep, 0.3, 400);
    const auto annotated = annotate_episode(plan, ep, traj, sensor);
    REQUIRE(annotated.has_value());
    CHECK(annotated->steps.size() == traj.steps.size());
    for (const auto& s : annotated->steps) {
        CHECK(s.t_star <= s.t);
        CHECK(s.k >= 0);
        CHECK(s.k <= ep.instruction.num_subgoals());
    }
}

TEST_CASE("pipeline labels have zero hallucination rate and perfect consistency") {
    const auto& fx = fixture();
    const worldsim::SensorConfig sensor;
    std::vector<dataset::AnnotatedEpisode> shard;
    for (const auto& ep : fx.episodes) {
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        auto annotated = annotate_episode(plan, ep, traj, sensor);
        REQUIRE(annotated.has_value());
        shard.push_back(std::move(*annotated));
    }
    const auto rep = quality_metrics(shard, fx.plans, sensor, 4, 99);
    CHECK(rep.hr == 0.0);
    CHECK(rep.lcs == 5.0);
    CHECK(rep.lpr_mined == 1.0);
    CHECK(rep.lpr_random < rep.lpr_mined);
    CHECK(rep.num_labels > 200);
}

TEST_CASE("hallucinated tokens are counted") {
    grammar::Instruction instr;
    instr.text = "pass the couch, and stop at the wall.";
    instr.subgoals = grammar::decompose(instr.text);
    int off = 0;
    for (const auto& sg : instr.subgoals) {
        instr.clause_spans.emplace_back(off, off + static_cast<int>(sg.clause.size()));
        off += static_cast<int>(sg.clause.size());
    }
    std::vector<LabelRecord> labels;
    for (int i = 0; i < 3; ++i) labels.push_back({&instr, "pass the couch,", 1});
    labels.push_back({&instr, "pass the sofa,", 1});  // "sofa" is not even in the vocabulary
    // "sofa" is not a vocabulary content token, so craft one that is:
    labels.back().label = "pass the table,";  // "table" absent from this instruction
    CHECK(hallucination_rate(labels) == doctest::Approx(25.0));
}

TEST_CASE("LCS rubric distinguishes the five levels") {
    grammar::Instruction instr;
    instr.text = "exit the bathroom, enter the kitchen, pass the couch, and stop at the wall.";
    instr.subgoals = grammar::decompose(instr.text);
    int off = 0;
    for (const auto& sg : instr.subgoals) {
        instr.clause_spans.emplace_back(off, off + static_cast<int>(sg.clause.size()));
        off += static_cast<int>(sg.clause.size());
    }
    // Exact prefix at the oracle boundary.
    CHECK(lcs_score({&instr, grammar::prefix_text(instr, 2), 2}) == 5);
    CHECK(lcs_score({&instr, "", 0}) == 5);
    // Boundary off by one.
    CHECK(lcs_score({&instr, grammar::prefix_text(instr, 1), 2}) == 4);
    CHECK(lcs_score({&instr, grammar::prefix_text(instr, 3), 2}) == 4);
    // Contiguous prefix, boundary off by more than one.
    CHECK(lcs_score({&instr, grammar::prefix_text(instr, 3), 0}) == 3);
    // Non-contiguous subset: clauses 1 and 3 without 2.
    CHECK(lcs_score({&instr, "exit the bathroom, pass the couch,", 2}) == 2);
    // Order contradiction.
    CHECK(lcs_score({&instr, "pass the couch, exit the bathroom,", 2}) == 1);
}

TEST_CASE("LPR for random frames is clearly below mined frames at scale") {
    const auto& fx = fixture();
    const worldsim::SensorConfig sensor;
    std::vector<dataset::AnnotatedEpisode> shard;
    for (const auto& ep : fx.episodes) {
        const auto& plan = fx.plans.at(ep.world_id);
        const auto traj = expert_rollout(plan, ep, 0.3, 400);
        auto annotated = annotate_episode(plan, ep, traj, sensor);
        if (annotated) shard.push_back(std::move(*annotated));
    }
    const auto rep = quality_metrics(shard, fx.plans, sensor, 4, 7);
    CHECK(rep.lpr_mined == 1.0);
    CHECK(rep.lpr_random < 0.75);
    CHECK(rep.num_mined_frames > 100);
}
