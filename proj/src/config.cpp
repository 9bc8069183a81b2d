#include "navlab/config.hpp"

#include <fstream>
#include <set>

#include "navlab/errors.hpp"
#include "navlab/grammar.hpp"

namespace navlab::config {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw InputError("config section '" + where + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key))
            throw InputError("unknown config key '" + key + "' in " + where);
    }
}

template <class T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void positive(double v, const std::string& what) {
    if (!(v > 0)) throw InputError(what + " must be positive");
}

}  // namespace

worldsim::SensorConfig RunConfig::sensor() const {
    worldsim::SensorConfig s;
    s.num_rays = model.num_rays;
    s.fov = sensor_fov_deg * kPi / 180.0;
    s.max_range = model.max_range;
    return s;
}

RunConfig config_from_json(const json& j) {
    RunConfig cfg;
    reject_unknown(j, {"seed", "model", "world_gen", "episode_gen", "training", "dagger", "eval",
                       "serve", "buckets"},
                   "top level");
    get_if(j, "seed", cfg.seed);

    if (j.contains("model")) {
        const auto& m = j.at("model");
        reject_unknown(m,
                       {"d_llm", "d_attn", "heads", "layers", "d_ff", "history", "k_max",
                        "num_rays", "fov_deg", "max_range", "d_sam", "feat_h", "feat_w",
                        "max_seq"},
                       "model");
        get_if(m, "d_llm", cfg.model.d_llm);
        get_if(m, "d_attn", cfg.model.d_attn);
        get_if(m, "heads", cfg.model.heads);
        get_if(m, "layers", cfg.model.layers);
        get_if(m, "d_ff", cfg.model.d_ff);
        get_if(m, "history", cfg.model.history);
        get_if(m, "k_max", cfg.model.k_max);
        get_if(m, "num_rays", cfg.model.num_rays);
        get_if(m, "fov_deg", cfg.sensor_fov_deg);
        get_if(m, "max_range", cfg.model.max_range);
        get_if(m, "d_sam", cfg.model.d_sam);
        get_if(m, "feat_h", cfg.model.feat_h);
        get_if(m, "feat_w", cfg.model.feat_w);
        get_if(m, "max_seq", cfg.model.max_seq);
    }

    if (j.contains("world_gen")) {
        const auto& w = j.at("world_gen");
        reject_unknown(w,
                       {"num_worlds", "width", "height", "min_walls", "max_walls",
                        "min_landmarks", "max_landmarks", "min_landmark_radius",
                        "max_landmark_radius", "landmark_separation", "wall_clearance"},
                       "world_gen");
        get_if(w, "num_worlds", cfg.num_worlds);
        get_if(w, "width", cfg.world_gen.width);
        get_if(w, "height", cfg.world_gen.height);
        get_if(w, "min_walls", cfg.world_gen.min_walls);
        get_if(w, "max_walls", cfg.world_gen.max_walls);
        get_if(w, "min_landmarks", cfg.world_gen.min_landmarks);
        get_if(w, "max_landmarks", cfg.world_gen.max_landmarks);
        get_if(w, "min_landmark_radius", cfg.world_gen.min_landmark_radius);
        get_if(w, "max_landmark_radius", cfg.world_gen.max_landmark_radius);
        get_if(w, "landmark_separation", cfg.world_gen.landmark_separation);
        get_if(w, "wall_clearance", cfg.world_gen.wall_clearance);
    }

    if (j.contains("episode_gen")) {
        const auto& e = j.at("episode_gen");
        reject_unknown(e,
                       {"per_world", "min_geodesic", "max_geodesic", "hop_min", "hop_max",
                        "hop_visibility_margin", "min_radial_gain", "waypoint_offset",
                        "goal_landmark_distance", "min_start_landmark_distance",
                        "expert_stop_radius", "max_expert_steps", "planning_inflation",
                        "attempts_per_episode"},
                       "episode_gen");
        get_if(e, "per_world", cfg.episodes_per_world);
        get_if(e, "min_geodesic", cfg.episode_gen.min_geodesic);
        get_if(e, "max_geodesic", cfg.episode_gen.max_geodesic);
        get_if(e, "hop_min", cfg.episode_gen.hop_min);
        get_if(e, "hop_max", cfg.episode_gen.hop_max);
        get_if(e, "hop_visibility_margin", cfg.episode_gen.hop_visibility_margin);
        get_if(e, "min_radial_gain", cfg.episode_gen.min_radial_gain);
        get_if(e, "waypoint_offset", cfg.episode_gen.waypoint_offset);
        get_if(e, "goal_landmark_distance", cfg.episode_gen.goal_landmark_distance);
        get_if(e, "min_start_landmark_distance", cfg.episode_gen.min_start_landmark_distance);
        get_if(e, "expert_stop_radius", cfg.episode_gen.expert_stop_radius);
        get_if(e, "max_expert_steps", cfg.episode_gen.max_expert_steps);
        get_if(e, "planning_inflation", cfg.episode_gen.planning_inflation);
        get_if(e, "attempts_per_episode", cfg.episode_gen.attempts_per_episode);
    }

    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown(t,
                       {"lambda_prog", "lambda_wm", "anchoring_probability", "base_lr", "epochs",
                        "batch", "stride", "feature_seed"},
                       "training");
        get_if(t, "lambda_prog", cfg.training.lambda_prog);
        get_if(t, "lambda_wm", cfg.training.lambda_wm);
        get_if(t, "anchoring_probability", cfg.training.anchoring_probability);
        get_if(t, "base_lr", cfg.training.base_lr);
        get_if(t, "epochs", cfg.training.epochs);
        get_if(t, "batch", cfg.training.batch);
        get_if(t, "stride", cfg.training.stride);
        get_if(t, "feature_seed", cfg.training.feature_seed);
        if (cfg.training.lambda_prog < 0 || cfg.training.lambda_wm < 0)
            throw InputError("loss weights must be non-negative");
        if (cfg.training.anchoring_probability < 0 || cfg.training.anchoring_probability > 1)
            throw InputError("anchoring_probability must lie in [0, 1]");
    }

    if (j.contains("dagger")) {
        const auto& d = j.at("dagger");
        reject_unknown(d,
                       {"premature_stop_distance", "deviation_distance", "deviation_patience",
                        "max_steps", "success_distance", "pl_corrected", "pl_autonomous"},
                       "dagger");
        get_if(d, "premature_stop_distance", cfg.intervention.premature_stop_distance);
        get_if(d, "deviation_distance", cfg.intervention.deviation_distance);
        get_if(d, "deviation_patience", cfg.intervention.deviation_patience);
        get_if(d, "max_steps", cfg.intervention.max_steps);
        get_if(d, "success_distance", cfg.filter.success_distance);
        get_if(d, "pl_corrected", cfg.filter.pl_corrected);
        get_if(d, "pl_autonomous", cfg.filter.pl_autonomous);
        positive(cfg.intervention.premature_stop_distance, "premature_stop_distance");
        positive(cfg.intervention.deviation_distance, "deviation_distance");
        if (cfg.filter.pl_autonomous >= cfg.filter.pl_corrected)
            throw InputError("pl_autonomous must be below pl_corrected");
    }

    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        reject_unknown(e, {"success_radius", "max_steps"}, "eval");
        get_if(e, "success_radius", cfg.eval_success_radius);
        get_if(e, "max_steps", cfg.eval_max_steps);
        positive(cfg.eval_success_radius, "eval success_radius");
    }

    if (j.contains("serve")) {
        const auto& s = j.at("serve");
        reject_unknown(s, {"host", "port", "latency_ms"}, "serve");
        get_if(s, "host", cfg.serve_host);
        get_if(s, "port", cfg.serve_port);
        get_if(s, "latency_ms", cfg.serve_latency_ms);
    }

    if (j.contains("buckets")) {
        const auto& b = j.at("buckets");
        reject_unknown(b, {"short_min", "short_max", "medium_max", "long_max"}, "buckets");
        get_if(b, "short_min", cfg.buckets.short_min);
        get_if(b, "short_max", cfg.buckets.short_max);
        get_if(b, "medium_max", cfg.buckets.medium_max);
        get_if(b, "long_max", cfg.buckets.long_max);
    }

    cfg.model.vocab = static_cast<int>(grammar::Vocabulary::instance().tokens().size());
    cfg.model.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open config: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw InputError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["model"] = {{"d_llm", cfg.model.d_llm},     {"d_attn", cfg.model.d_attn},
                  {"heads", cfg.model.heads},     {"layers", cfg.model.layers},
                  {"d_ff", cfg.model.d_ff},       {"history", cfg.model.history},
                  {"k_max", cfg.model.k_max},     {"num_rays", cfg.model.num_rays},
                  {"fov_deg", cfg.sensor_fov_deg}, {"max_range", cfg.model.max_range},
                  {"d_sam", cfg.model.d_sam},     {"feat_h", cfg.model.feat_h},
                  {"feat_w", cfg.model.feat_w},   {"max_seq", cfg.model.max_seq}};
    j["world_gen"] = {{"num_worlds", cfg.num_worlds},
                      {"width", cfg.world_gen.width},
                      {"height", cfg.world_gen.height},
                      {"min_walls", cfg.world_gen.min_walls},
                      {"max_walls", cfg.world_gen.max_walls},
                      {"min_landmarks", cfg.world_gen.min_landmarks},
                      {"max_landmarks", cfg.world_gen.max_landmarks},
                      {"min_landmark_radius", cfg.world_gen.min_landmark_radius},
                      {"max_landmark_radius", cfg.world_gen.max_landmark_radius},
                      {"landmark_separation", cfg.world_gen.landmark_separation},
                      {"wall_clearance", cfg.world_gen.wall_clearance}};
    j["episode_gen"] = {{"per_world", cfg.episodes_per_world},
                        {"min_geodesic", cfg.episode_gen.min_geodesic},
                        {"max_geodesic", cfg.episode_gen.max_geodesic},
                        {"hop_min", cfg.episode_gen.hop_min},
                        {"hop_max", cfg.episode_gen.hop_max},
                        {"hop_visibility_margin", cfg.episode_gen.hop_visibility_margin},
                        {"min_radial_gain", cfg.episode_gen.min_radial_gain},
                        {"waypoint_offset", cfg.episode_gen.waypoint_offset},
                        {"goal_landmark_distance", cfg.episode_gen.goal_landmark_distance},
                        {"min_start_landmark_distance",
                         cfg.episode_gen.min_start_landmark_distance},
                        {"expert_stop_radius", cfg.episode_gen.expert_stop_radius},
                        {"max_expert_steps", cfg.episode_gen.max_expert_steps},
                        {"planning_inflation", cfg.episode_gen.planning_inflation},
                        {"attempts_per_episode", cfg.episode_gen.attempts_per_episode}};
    j["training"] = {{"lambda_prog", cfg.training.lambda_prog},
                     {"lambda_wm", cfg.training.lambda_wm},
                     {"anchoring_probability", cfg.training.anchoring_probability},
                     {"base_lr", cfg.training.base_lr},
                     {"epochs", cfg.training.epochs},
                     {"batch", cfg.training.batch},
                     {"stride", cfg.training.stride},
                     {"feature_seed", cfg.training.feature_seed}};
    j["dagger"] = {{"premature_stop_distance", cfg.intervention.premature_stop_distance},
                   {"deviation_distance", cfg.intervention.deviation_distance},
                   {"deviation_patience", cfg.intervention.deviation_patience},
                   {"max_steps", cfg.intervention.max_steps},
                   {"success_distance", cfg.filter.success_distance},
                   {"pl_corrected", cfg.filter.pl_corrected},
                   {"pl_autonomous", cfg.filter.pl_autonomous}};
    j["eval"] = {{"success_radius", cfg.eval_success_radius}, {"max_steps", cfg.eval_max_steps}};
    j["serve"] = {{"host", cfg.serve_host},
                  {"port", cfg.serve_port},
                  {"latency_ms", cfg.serve_latency_ms}};
    j["buckets"] = {{"short_min", cfg.buckets.short_min},
                    {"short_max", cfg.buckets.short_max},
                    {"medium_max", cfg.buckets.medium_max},
                    {"long_max", cfg.buckets.long_max}};
    return j;
}

std::string config_hash(const RunConfig& cfg) {
    const std::string text = config_to_json(cfg).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_manifest(const std::string& out_path, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["format_version"] = 1;
    j["outputs"] = outputs;
    std::ofstream f(out_path);
    if (!f) throw NavError("cannot write manifest: " + out_path);
    f << j.dump(2) << "\n";
}

}  // namespace navlab::config
