#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "navlab/datagen.hpp"
#include "navlab/errors.hpp"
#include "navlab/metrics.hpp"
#include "navlab/rng.hpp"
#include "navlab/worldgen.hpp"

using namespace navlab;
using namespace navlab::metrics;
using dataset::EpisodeSpec;
using dataset::Trajectory;
using worldsim::FloorPlan;
using worldsim::NavAction;

namespace {

FloorPlan open_plan() {
    FloorPlan plan;
    plan.id = "open";
    plan.bounds = {0, 0, 30, 30};
    return plan;
}

EpisodeSpec straight_episode(const FloorPlan& plan, double length) {
    EpisodeSpec ep;
    ep.episode_id = "ep-" + std::to_string(length);
    ep.world_id = plan.id;
    ep.start = {4, 15, 0};
    ep.goal = {4 + length, 15};
    ep.reference_path = {{4, 15}, ep.goal};
    ep.geodesic_length = worldsim::geodesic(plan, ep.start.position(), ep.goal);
    return ep;
}

Trajectory walk_straight(const FloorPlan& plan, const EpisodeSpec& ep, int forward_steps,
                         bool stop_at_end) {
    Trajectory traj;
    traj.episode_id = ep.episode_id;
    worldsim::AgentPose pose = ep.start;
    int t = 0;
    for (int i = 0; i < forward_steps; ++i) {
        traj.steps.push_back({t++, pose, NavAction::MoveForward});
        pose = worldsim::step(plan, pose, NavAction::MoveForward);
    }
    traj.steps.push_back({t, pose, stop_at_end ? NavAction::Stop : NavAction::MoveForward});
    traj.terminal = stop_at_end;
    return traj;
}

}  // namespace

TEST_CASE("bucket bounds follow the half-open/closed convention") {
    CHECK(bucketize_length(7.0) == Bucket::Short);
    CHECK(bucketize_length(7.55) == Bucket::Medium);
    CHECK(bucketize_length(9.81) == Bucket::Long);
    CHECK(bucketize_length(21.04) == Bucket::Long);
    CHECK(bucketize_length(3.85) == Bucket::Short);
    CHECK(bucketize_length(3.84) == Bucket::Unbucketed);
    CHECK(bucketize_length(21.05) == Bucket::Unbucketed);
}

TEST_CASE("an agent stopping on the goal scores a perfect SPL") {
    const auto plan = open_plan();
    const auto ep = straight_episode(plan, 5.0);
    const auto traj = walk_straight(plan, ep, 20, true);  // exactly 5 m
    const auto r = evaluate_episode(traj, ep, plan, 3.0);
    CHECK(r.success);
    CHECK(r.oracle_success);
    CHECK(r.ne == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(r.spl_term == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("failure zeroes the SPL term regardless of path length") {
    const auto plan = open_plan();
    const auto ep = straight_episode(plan, 10.0);
    const auto traj = walk_straight(plan, ep, 8, false);  // wanders then never stops
    const auto r = evaluate_episode(traj, ep, plan, 3.0);
    CHECK(!r.success);
    CHECK(r.spl_term == 0.0);
    CHECK(r.spl_term <= (r.success ? 1.0 : 0.0));
}

TEST_CASE("spl term is l over max(p, l)") {
    // l = 4, p = 5: walk 4 m to the goal the long way (extra 1 m detour).
    const auto plan = open_plan();
    auto ep = straight_episode(plan, 4.0);
    Trajectory traj;
    traj.episode_id = ep.episode_id;
    worldsim::AgentPose pose = ep.start;
    int t = 0;
    // 0.5 m up, across 4 m, 0.5 m down: p = 5.
    auto push = [&](NavAction a) {
        traj.steps.push_back({t++, pose, a});
        pose = worldsim::step(plan, pose, a);
    };
    for (int i = 0; i < 6; ++i) push(NavAction::TurnLeft);  // face +y
    for (int i = 0; i < 2; ++i) push(NavAction::MoveForward);
    for (int i = 0; i < 6; ++i) push(NavAction::TurnRight);  // face +x
    for (int i = 0; i < 16; ++i) push(NavAction::MoveForward);
    for (int i = 0; i < 6; ++i) push(NavAction::TurnRight);  // face -y
    for (int i = 0; i < 2; ++i) push(NavAction::MoveForward);
    traj.steps.push_back({t, pose, NavAction::Stop});
    traj.terminal = true;

    const auto r = evaluate_episode(traj, ep, plan, 3.0);
    REQUIRE(r.success);
    CHECK(r.path_length == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(r.spl_term == doctest::Approx(4.0 / 5.0).epsilon(0.02));
}

TEST_CASE("NE of an agent that never moves equals the episode geodesic length") {
    const auto plan = open_plan();
    const auto ep = straight_episode(plan, 8.0);
    Trajectory traj;
    traj.episode_id = ep.episode_id;
    traj.steps.push_back({0, ep.start, NavAction::Stop});
    traj.terminal = true;
    const auto r = evaluate_episode(traj, ep, plan, 3.0);
    CHECK(r.ne == doctest::Approx(ep.geodesic_length).epsilon(0.02));
    CHECK(!r.success);
    CHECK(!r.oracle_success);
}

TEST_CASE("oracle success fires when any visited pose is close enough") {
    const auto plan = open_plan();
    const auto ep = straight_episode(plan, 6.0);
    // Walk past the goal and keep going without stopping.
    const auto traj = walk_straight(plan, ep, 30, false);
    const auto r = evaluate_episode(traj, ep, plan, 3.0);
    CHECK(!r.success);
    CHECK(r.oracle_success);
    // success implies oracle success everywhere (checked vacuously here).
    CHECK((!r.success || r.oracle_success));
}

TEST_CASE("aggregate means match the two-episode hand computation") {
    std::vector<EpisodeResult> rs(2);
    rs[0].success = true;
    rs[0].oracle_success = true;
    rs[0].spl_term = 1.0;
    rs[0].ne = 0.5;
    rs[0].bucket = Bucket::Short;
    rs[1].success = false;
    rs[1].oracle_success = false;
    rs[1].spl_term = 0.0;
    rs[1].ne = 4.5;
    rs[1].bucket = Bucket::Short;
    const auto rep = aggregate(rs);
    CHECK(rep.overall.sr == doctest::Approx(50.0));
    CHECK(rep.overall.spl == doctest::Approx(50.0));
    CHECK(rep.overall.osr == doctest::Approx(50.0));
    CHECK(rep.overall.ne == doctest::Approx(2.5));
    CHECK(rep.overall.count == 2);
}

TEST_CASE("aggregate of an empty result set is all zeros") {
    const auto rep = aggregate({});
    CHECK(rep.overall.count == 0);
    CHECK(rep.overall.sr == 0.0);
}

TEST_CASE("aggregates match an independent accumulator over random results") {
    Rng rng(33);
    std::vector<EpisodeResult> rs;
    for (int i = 0; i < 200; ++i) {
        EpisodeResult r;
        r.episode_id = "e" + std::to_string(i);
        r.success = rng.bernoulli(0.6);
        r.oracle_success = r.success || rng.bernoulli(0.3);
        r.geodesic_length = rng.uniform(4.0, 21.0);
        r.path_length = r.geodesic_length * rng.uniform(1.0, 1.6);
        r.spl_term = r.success ? r.geodesic_length / std::max(r.path_length, r.geodesic_length)
                               : 0.0;
        r.ne = r.success ? rng.uniform(0.0, 3.0) : rng.uniform(3.0, 12.0);
        r.bucket = bucketize_length(r.geodesic_length);
        rs.push_back(r);
    }
    const auto rep = aggregate(rs);
    double sr = 0, spl = 0, osr = 0, ne = 0;
    for (const auto& r : rs) {
        sr += r.success;
        spl += r.spl_term;
        osr += r.oracle_success;
        ne += r.ne;
    }
    CHECK(rep.overall.sr == doctest::Approx(100.0 * sr / rs.size()).epsilon(1e-9));
    CHECK(rep.overall.spl == doctest::Approx(100.0 * spl / rs.size()).epsilon(1e-9));
    CHECK(rep.overall.osr == doctest::Approx(100.0 * osr / rs.size()).epsilon(1e-9));
    CHECK(rep.overall.ne == doctest::Approx(ne / rs.size()).epsilon(1e-9));
    // SPL can never exceed SR.
    CHECK(rep.overall.spl <= rep.overall.sr + 1e-9);
    int bucket_total = 0;
    for (const auto& [b, agg] : rep.per_bucket) bucket_total += agg.count;
    CHECK(bucket_total == static_cast<int>(rs.size()));
}

TEST_CASE("write_report emits results.csv and summary.json") {
    std::vector<EpisodeResult> rs(1);
    rs[0].episode_id = "e0";
    rs[0].success = true;
    rs[0].oracle_success = true;
    rs[0].spl_term = 0.9;
    rs[0].ne = 0.4;
    rs[0].geodesic_length = 6.0;
    rs[0].path_length = 6.7;
    rs[0].bucket = Bucket::Short;
    const auto dir = (std::filesystem::temp_directory_path() / "navlab_report_test").string();
    write_report(aggregate(rs), rs, dir);
    std::ifstream csv(dir + "/results.csv");
    REQUIRE(csv.good());
    std::string header;
    std::getline(csv, header);
    CHECK(header == "episode_id,bucket,success,oracle_success,ne,spl_term,l,p");
    std::ifstream json_file(dir + "/summary.json");
    REQUIRE(json_file.good());
    std::filesystem::remove_all(dir);
}
