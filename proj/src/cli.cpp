#include "navlab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "navlab/bridge.hpp"
#include "navlab/config.hpp"
#include "navlab/dagger.hpp"
#include "navlab/datagen.hpp"
#include "navlab/errors.hpp"
#include "navlab/evalrun.hpp"
#include "navlab/trainer.hpp"
#include "navlab/worldgen.hpp"

namespace navlab::cli {

namespace {

using config::RunConfig;

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
};

RunConfig load(const CommonArgs& args) {
    RunConfig cfg = config::load_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    return cfg;
}

int cmd_gen_worlds(const CommonArgs& common, const std::string& out) {
    const RunConfig cfg = load(common);
    std::vector<worldsim::FloorPlan> worlds;
    for (int i = 0; i < cfg.num_worlds; ++i) {
        const std::uint64_t world_seed = cfg.seed * 1000003ULL + static_cast<std::uint64_t>(i);
        worlds.push_back(worldgen::generate_world(cfg.world_gen, world_seed,
                                                  "world" + std::to_string(i)));
    }
    dataset::save_worlds(out, worlds);
    config::write_manifest(out + ".manifest.json", cfg, "gen-worlds", {out});
    std::cout << "wrote " << worlds.size() << " worlds to " << out << "\n";
    return 0;
}

int cmd_gen_episodes(const CommonArgs& common, const std::string& worlds_path,
                     const std::string& out) {
    const RunConfig cfg = load(common);
    const auto worlds = dataset::load_worlds(worlds_path);
    std::vector<dataset::EpisodeSpec> episodes;
    for (std::size_t wi = 0; wi < worlds.size(); ++wi) {
        const auto eps = worldgen::generate_episodes(
            worlds[wi], cfg.episode_gen, cfg.sensor(), cfg.seed + 7919ULL * (wi + 1),
            cfg.episodes_per_world, worlds[wi].id + "-ep");
        episodes.insert(episodes.end(), eps.begin(), eps.end());
    }
    dataset::save_episodes(out, episodes);
    config::write_manifest(out + ".manifest.json", cfg, "gen-episodes", {out});
    std::cout << "wrote " << episodes.size() << " episodes to " << out << "\n";
    return 0;
}

int cmd_annotate(const CommonArgs& common, const std::string& worlds_path,
                 const std::string& episodes_path, const std::string& out) {
    const RunConfig cfg = load(common);
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto episodes = dataset::load_episodes(episodes_path);
    std::vector<dataset::AnnotatedEpisode> shard;
    int rejected = 0;
    for (const auto& ep : episodes) {
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end())
            throw InputError("episode " + ep.episode_id + " references unknown world");
        const auto traj = datagen::expert_rollout(pit->second, ep,
                                                  cfg.episode_gen.expert_stop_radius,
                                                  cfg.episode_gen.max_expert_steps);
        auto annotated = datagen::annotate_episode(pit->second, ep, traj, cfg.sensor());
        if (!annotated) {
            ++rejected;
            std::cerr << "rejected (landmark ordering): " << ep.episode_id << "\n";
            continue;
        }
        shard.push_back(std::move(*annotated));
    }
    dataset::save_dataset(out, shard);
    config::write_manifest(out + ".manifest.json", cfg, "annotate", {out});

    const auto quality =
        datagen::quality_metrics(shard, plans, cfg.sensor(), cfg.training.stride, cfg.seed);
    std::cout << "annotated " << shard.size() << " episodes (" << rejected << " rejected)\n";
    std::cout << "quality: HR=" << quality.hr << "% LCS=" << quality.lcs
              << " LPR_mined=" << quality.lpr_mined << " LPR_random=" << quality.lpr_random
              << "\n";
    return 0;
}

int cmd_mine(const CommonArgs& common, const std::string& worlds_path, const std::string& in,
             const std::string& out) {
    const RunConfig cfg = load(common);
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto shard = dataset::load_dataset(in);
    std::vector<dataset::AnnotatedEpisode> accepted;
    int rejected = 0;
    for (const auto& ep : shard) {
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end())
            throw InputError("shard references unknown world " + ep.world_id);
        dataset::Trajectory traj;
        traj.episode_id = ep.episode_id;
        for (const auto& s : ep.steps) traj.steps.push_back({s.t, s.pose, s.action});
        traj.terminal = !ep.steps.empty() &&
                        ep.steps.back().action == worldsim::NavAction::Stop;
        const auto mining =
            datagen::mine_landmarks(traj, pit->second, ep.instruction.subgoals, cfg.sensor());
        if (!mining.accepted) {
            ++rejected;
            std::cerr << "rejected: " << ep.episode_id << " (" << mining.reject_reason << ")\n";
            continue;
        }
        auto updated = ep;
        updated.landmark_index = mining.t_lm;
        for (auto& s : updated.steps) s.t_star = datagen::last_landmark(s.t, mining.t_lm);
        accepted.push_back(std::move(updated));
    }
    if (!out.empty()) {
        dataset::save_dataset(out, accepted);
        config::write_manifest(out + ".manifest.json", cfg, "mine", {out});
    }
    std::cerr << "mining summary: " << accepted.size() << " accepted, " << rejected
              << " rejected\n";
    return 0;
}

int cmd_train_stage1(const CommonArgs& common, const std::string& worlds_path,
                     const std::string& data_path, const std::string& out,
                     const std::string& log_path) {
    RunConfig cfg = load(common);
    cfg.training.seed = cfg.seed;
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto data = dataset::load_dataset(data_path);
    const auto result = trainer::train_stage1(cfg.training, cfg.model, cfg.sensor(), data, plans,
                                              out + ".lastgood");
    result.params.save(out);
    if (!log_path.empty()) trainer::write_train_log(log_path, result.log);
    config::write_manifest(out + ".manifest.json", cfg, "train-stage1", {out, log_path});
    std::cout << "trained " << result.log.size() << " steps; final total="
              << (result.log.empty() ? 0.0f : result.log.back().total) << "\n";
    return 0;
}

int cmd_dagger(const CommonArgs& common, const std::string& worlds_path,
               const std::string& episodes_path, const std::string& checkpoint,
               const std::string& out) {
    const RunConfig cfg = load(common);
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto episodes = dataset::load_episodes(episodes_path);
    const auto params = diff::ParamStore::load(checkpoint);

    std::vector<dagger::CollectedRollout> collected;
    int interventions = 0;
    for (const auto& ep : episodes) {
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end())
            throw InputError("episode " + ep.episode_id + " references unknown world");
        const auto student = dagger::policy_student(params, cfg.model, ep.instruction);
        auto [traj, record] = dagger::rollout(student, ep, pit->second, cfg.intervention,
                                              cfg.sensor());
        interventions += static_cast<int>(record.events.size());
        dagger::CollectedRollout c;
        c.traj = std::move(traj);
        c.episode = &ep;
        c.decision = dagger::filter(c.traj, ep, record, cfg.filter, pit->second);
        collected.push_back(std::move(c));
    }
    const auto agg = dagger::aggregate(collected, plans, cfg.sensor(),
                                       cfg.episode_gen.expert_stop_radius);
    dataset::save_dataset(out, agg.shard);
    config::write_manifest(out + ".manifest.json", cfg, "dagger", {out});
    int accepted = 0;
    for (const auto& c : collected) accepted += c.decision.accepted ? 1 : 0;
    std::cout << "dagger: " << episodes.size() << " rollouts, " << accepted << " accepted, "
              << agg.shard.size() << " aggregated (" << agg.rejected_mining
              << " mining rejects), " << interventions << " interventions\n";
    return 0;
}

int cmd_train_stage2(const CommonArgs& common, const std::string& worlds_path,
                     const std::string& data_path, const std::string& dagger_path,
                     const std::string& checkpoint, const std::string& out,
                     const std::string& log_path) {
    RunConfig cfg = load(common);
    cfg.training.seed = cfg.seed;
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto base = dataset::load_dataset(data_path);
    const auto shard = dagger_path.empty() ? std::vector<dataset::AnnotatedEpisode>{}
                                           : dataset::load_dataset(dagger_path);
    const auto init = diff::ParamStore::load(checkpoint);
    const auto result = trainer::train_stage2(cfg.training, cfg.model, cfg.sensor(), base, shard,
                                              plans, init, out + ".lastgood");
    result.params.save(out);
    if (!log_path.empty()) trainer::write_train_log(log_path, result.log);
    config::write_manifest(out + ".manifest.json", cfg, "train-stage2", {out, log_path});
    std::cout << "trained " << result.log.size() << " steps\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& worlds_path,
             const std::string& episodes_path, const std::string& checkpoint,
             const std::string& out_dir) {
    const RunConfig cfg = load(common);
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto episodes = dataset::load_episodes(episodes_path);
    const auto params = diff::ParamStore::load(checkpoint);
    const auto results =
        evalrun::evaluate_policy(params, cfg.model, plans, episodes, cfg.sensor(),
                                 cfg.eval_success_radius, cfg.eval_max_steps, cfg.buckets);
    const auto report = metrics::aggregate(results);
    metrics::write_report(report, results, out_dir);
    config::write_manifest(out_dir + "/run_manifest.json", cfg, "eval",
                           {out_dir + "/results.csv", out_dir + "/summary.json"});
    std::cout << "evaluated " << results.size() << " episodes: SR=" << report.overall.sr
              << " SPL=" << report.overall.spl << " OSR=" << report.overall.osr
              << " NE=" << report.overall.ne << "\n";
    return 0;
}

int cmd_report(const CommonArgs& common, const std::string& results_csv,
               const std::string& out_dir) {
    const RunConfig cfg = load(common);
    std::ifstream f(results_csv);
    if (!f) throw InputError("cannot open results: " + results_csv);
    std::string line;
    std::getline(f, line);  // header
    std::vector<metrics::EpisodeResult> results;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        metrics::EpisodeResult r;
        std::getline(ss, r.episode_id, ',');
        std::getline(ss, field, ',');
        for (const auto b : {metrics::Bucket::Short, metrics::Bucket::Medium,
                             metrics::Bucket::Long, metrics::Bucket::Unbucketed})
            if (field == metrics::bucket_name(b)) r.bucket = b;
        std::getline(ss, field, ',');
        r.success = field == "1";
        std::getline(ss, field, ',');
        r.oracle_success = field == "1";
        std::getline(ss, field, ',');
        r.ne = std::stod(field);
        std::getline(ss, field, ',');
        r.spl_term = std::stod(field);
        std::getline(ss, field, ',');
        r.geodesic_length = std::stod(field);
        std::getline(ss, field, ',');
        r.path_length = std::stod(field);
        results.push_back(std::move(r));
    }
    const auto report = metrics::aggregate(results);
    metrics::write_report(report, results, out_dir);
    config::write_manifest(out_dir + "/run_manifest.json", cfg, "report",
                           {out_dir + "/results.csv", out_dir + "/summary.json"});
    std::cout << "report over " << results.size() << " episodes written to " << out_dir << "\n";
    return 0;
}

int cmd_serve(const CommonArgs& common, const std::string& checkpoint, std::string host,
              int port) {
    const RunConfig cfg = load(common);
    const auto params = diff::ParamStore::load(checkpoint);
    if (host.empty()) host = cfg.serve_host;
    if (port == 0) port = cfg.serve_port;
    bridge::BridgeConfig bcfg;
    bcfg.latency_ms = cfg.serve_latency_ms;
    bridge::BridgeCore core(params, cfg.model, bcfg);
    std::cout << "serving /eval_vln on " << host << ":" << port << "\n";
    bridge::serve(core, host, port);
    return 0;
}

int cmd_sim_robot(const CommonArgs& common, const std::string& worlds_path,
                  const std::string& episodes_path, const std::string& checkpoint,
                  const std::string& episode_id, const std::string& log_path, int max_actions) {
    const RunConfig cfg = load(common);
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto episodes = dataset::load_episodes(episodes_path);
    const auto params = diff::ParamStore::load(checkpoint);

    const dataset::EpisodeSpec* chosen = nullptr;
    for (const auto& ep : episodes) {
        if (episode_id.empty() || ep.episode_id == episode_id) {
            chosen = &ep;
            break;
        }
    }
    if (!chosen) throw InputError("episode not found: " + episode_id);
    const auto pit = plans.find(chosen->world_id);
    if (pit == plans.end()) throw InputError("episode references unknown world");

    bridge::BridgeCore core(params, cfg.model);
    bridge::SessionLogger logger(log_path);
    const auto result = bridge::run_robot_loop(pit->second, *chosen, core, cfg.sensor(), &logger,
                                               max_actions);
    config::write_manifest(log_path + ".manifest.json", cfg, "sim-robot", {log_path});
    std::cout << "robot loop: " << result.actions_executed << " actions, stopped="
              << (result.stopped ? "yes" : "no")
              << ", final distance=" << result.final_distance << " m\n";
    return 0;
}

int cmd_ablate(const CommonArgs& common, const std::string& worlds_path,
               const std::string& data_path, const std::string& eval_episodes_path,
               const std::string& out_dir) {
    RunConfig cfg = load(common);
    cfg.training.seed = cfg.seed;
    const auto plans = evalrun::plans_by_id(dataset::load_worlds(worlds_path));
    const auto data = dataset::load_dataset(data_path);
    const auto eval_eps = dataset::load_episodes(eval_episodes_path);

    struct Variant {
        const char* name;
        bool ipa;
        bool mla;
    };
    const Variant variants[] = {{"baseline", false, false},
                                {"ipa", true, false},
                                {"mla", false, true},
                                {"dual", true, true}};

    std::filesystem::create_directories(out_dir);
    std::ofstream csv(out_dir + "/ablation.csv");
    csv << "variant,SR,SPL,OSR,NE,SR_short,SR_medium,SR_long\n";
    for (const auto& v : variants) {
        trainer::TrainingConfig tc = cfg.training;
        tc.lambda_prog = v.ipa ? cfg.training.lambda_prog : 0.0f;
        tc.lambda_wm = v.mla ? cfg.training.lambda_wm : 0.0f;
        const auto result = trainer::train_stage1(tc, cfg.model, cfg.sensor(), data, plans);
        const auto results =
            evalrun::evaluate_policy(result.params, cfg.model, plans, eval_eps, cfg.sensor(),
                                     cfg.eval_success_radius, cfg.eval_max_steps, cfg.buckets);
        const auto report = metrics::aggregate(results);
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.2f,%.2f,%.2f,%.3f,%.2f,%.2f,%.2f\n", v.name,
                      report.overall.sr, report.overall.spl, report.overall.osr,
                      report.overall.ne, report.per_bucket.at(metrics::Bucket::Short).sr,
                      report.per_bucket.at(metrics::Bucket::Medium).sr,
                      report.per_bucket.at(metrics::Bucket::Long).sr);
        csv << line;
        std::cout << "ablate " << v.name << ": SR=" << report.overall.sr
                  << " SPL=" << report.overall.spl << "\n";
    }
    config::write_manifest(out_dir + "/run_manifest.json", cfg, "ablate",
                           {out_dir + "/ablation.csv"});
    return 0;
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"Dual-anchoring navigation laboratory"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string worlds_path, episodes_path, data_path, dagger_path, checkpoint, out, log_path;
    std::string results_csv, episode_id, eval_episodes_path, host;
    int port = 0;
    int max_actions = 300;

    auto add_common = [&](CLI::App* sub, bool seed_required) {
        sub->add_option("--config", common.config_path, "run config JSON")->required();
        auto* seed_opt = sub->add_option_function<std::uint64_t>(
            "--seed",
            [&common](const std::uint64_t v) {
                common.seed = v;
                common.seed_set = true;
            },
            "seed override");
        if (seed_required) seed_opt->required();
    };

    auto* gen_worlds = app.add_subcommand("gen-worlds", "generate floor plans");
    add_common(gen_worlds, true);
    gen_worlds->add_option("--out", out, "worlds JSON output")->required();

    auto* gen_episodes = app.add_subcommand("gen-episodes", "generate validated episodes");
    add_common(gen_episodes, true);
    gen_episodes->add_option("--worlds", worlds_path)->required();
    gen_episodes->add_option("--out", out, "episodes JSONL output")->required();

    auto* annotate = app.add_subcommand("annotate", "expert rollouts + progress/landmark labels");
    add_common(annotate, false);
    annotate->add_option("--worlds", worlds_path)->required();
    annotate->add_option("--episodes", episodes_path)->required();
    annotate->add_option("--out", out, "dataset JSONL output")->required();

    auto* mine = app.add_subcommand("mine", "re-run landmark mining over a shard");
    add_common(mine, false);
    mine->add_option("--worlds", worlds_path)->required();
    mine->add_option("--in", data_path, "input dataset JSONL")->required();
    mine->add_option("--out", out, "accepted episodes JSONL");

    auto* train1 = app.add_subcommand("train-stage1", "stage-1 training");
    add_common(train1, true);
    train1->add_option("--worlds", worlds_path)->required();
    train1->add_option("--data", data_path)->required();
    train1->add_option("--out", out, "checkpoint output")->required();
    train1->add_option("--log", log_path, "training log CSV");

    auto* dagger_cmd = app.add_subcommand("dagger", "student rollouts with expert intervention");
    add_common(dagger_cmd, true);
    dagger_cmd->add_option("--worlds", worlds_path)->required();
    dagger_cmd->add_option("--episodes", episodes_path)->required();
    dagger_cmd->add_option("--checkpoint", checkpoint)->required();
    dagger_cmd->add_option("--out", out, "DAgger shard JSONL")->required();

    auto* train2 = app.add_subcommand("train-stage2", "stage-2 training (base + DAgger)");
    add_common(train2, true);
    train2->add_option("--worlds", worlds_path)->required();
    train2->add_option("--data", data_path)->required();
    train2->add_option("--dagger", dagger_path, "DAgger shard JSONL");
    train2->add_option("--checkpoint", checkpoint, "stage-1 checkpoint")->required();
    train2->add_option("--out", out)->required();
    train2->add_option("--log", log_path);

    auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation");
    add_common(eval_cmd, false);
    eval_cmd->add_option("--worlds", worlds_path)->required();
    eval_cmd->add_option("--episodes", episodes_path)->required();
    eval_cmd->add_option("--checkpoint", checkpoint)->required();
    eval_cmd->add_option("--out", out, "report directory")->required();

    auto* report_cmd = app.add_subcommand("report", "re-aggregate a results.csv");
    add_common(report_cmd, false);
    report_cmd->add_option("--results", results_csv)->required();
    report_cmd->add_option("--out", out, "report directory")->required();

    auto* serve_cmd = app.add_subcommand("serve", "run the /eval_vln service");
    add_common(serve_cmd, false);
    serve_cmd->add_option("--checkpoint", checkpoint)->required();
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--port", port);

    auto* sim_robot = app.add_subcommand("sim-robot", "PD-controlled robot loop over the wire");
    add_common(sim_robot, false);
    sim_robot->add_option("--worlds", worlds_path)->required();
    sim_robot->add_option("--episodes", episodes_path)->required();
    sim_robot->add_option("--checkpoint", checkpoint)->required();
    sim_robot->add_option("--episode", episode_id, "episode id (default: first)");
    sim_robot->add_option("--log", log_path, "session log JSONL")->required();
    sim_robot->add_option("--max-actions", max_actions);

    auto* ablate = app.add_subcommand("ablate", "train and evaluate the four anchoring variants");
    add_common(ablate, true);
    ablate->add_option("--worlds", worlds_path)->required();
    ablate->add_option("--data", data_path)->required();
    ablate->add_option("--eval-episodes", eval_episodes_path)->required();
    ablate->add_option("--out", out, "report directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen_worlds->parsed()) return cmd_gen_worlds(common, out);
        if (gen_episodes->parsed()) return cmd_gen_episodes(common, worlds_path, out);
        if (annotate->parsed()) return cmd_annotate(common, worlds_path, episodes_path, out);
        if (mine->parsed()) return cmd_mine(common, worlds_path, data_path, out);
        if (train1->parsed())
            return cmd_train_stage1(common, worlds_path, data_path, out, log_path);
        if (dagger_cmd->parsed())
            return cmd_dagger(common, worlds_path, episodes_path, checkpoint, out);
        if (train2->parsed())
            return cmd_train_stage2(common, worlds_path, data_path, dagger_path, checkpoint, out,
                                    log_path);
        if (eval_cmd->parsed())
            return cmd_eval(common, worlds_path, episodes_path, checkpoint, out);
        if (report_cmd->parsed()) return cmd_report(common, results_csv, out);
        if (serve_cmd->parsed()) return cmd_serve(common, checkpoint, host, port);
        if (sim_robot->parsed())
            return cmd_sim_robot(common, worlds_path, episodes_path, checkpoint, episode_id,
                                 log_path, max_actions);
        if (ablate->parsed())
            return cmd_ablate(common, worlds_path, data_path, eval_episodes_path, out);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fault: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace navlab::cli
