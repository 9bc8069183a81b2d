#include "navlab/dataset.hpp"

#include <fstream>
#include <sstream>

#include "navlab/errors.hpp"

namespace navlab::dataset {

using nlohmann::json;

namespace {

json rect_to_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

Rect rect_from_json(const json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(),
            j.at("h").get<double>()};
}

json pose_to_json(const worldsim::AgentPose& p) {
    return {{"x", p.x}, {"y", p.y}, {"heading", p.heading}};
}

worldsim::AgentPose pose_from_json(const json& j) {
    return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("heading").get<double>()};
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

json plan_to_json(const worldsim::FloorPlan& plan) {
    json j;
    j["id"] = plan.id;
    j["bounds"] = rect_to_json(plan.bounds);
    j["walls"] = json::array();
    for (const auto& w : plan.walls) j["walls"].push_back(rect_to_json(w));
    j["landmarks"] = json::array();
    for (const auto& lm : plan.landmarks) {
        j["landmarks"].push_back({{"id", lm.id},
                                  {"category", lm.category},
                                  {"cx", lm.center.x},
                                  {"cy", lm.center.y},
                                  {"r", lm.radius}});
    }
    return j;
}

worldsim::FloorPlan plan_from_json(const json& j) {
    worldsim::FloorPlan plan;
    plan.id = j.at("id").get<std::string>();
    plan.bounds = rect_from_json(j.at("bounds"));
    for (const auto& w : j.at("walls")) plan.walls.push_back(rect_from_json(w));
    for (const auto& l : j.at("landmarks")) {
        worldsim::Landmark lm;
        lm.id = l.at("id").get<std::string>();
        lm.category = l.at("category").get<int>();
        lm.center = {l.at("cx").get<double>(), l.at("cy").get<double>()};
        lm.radius = l.at("r").get<double>();
        plan.landmarks.push_back(std::move(lm));
    }
    return plan;
}

void save_worlds(const std::string& path, const std::vector<worldsim::FloorPlan>& worlds) {
    json j = json::array();
    for (const auto& w : worlds) j.push_back(plan_to_json(w));
    std::ofstream f(path);
    if (!f) throw NavError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

std::vector<worldsim::FloorPlan> load_worlds(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open: " + path);
    json j;
    f >> j;
    std::vector<worldsim::FloorPlan> out;
    for (const auto& w : j) out.push_back(plan_from_json(w));
    return out;
}

json instruction_to_json(const grammar::Instruction& instr) {
    json j;
    j["text"] = instr.text;
    j["subgoals"] = json::array();
    for (const auto& sg : instr.subgoals) {
        json s;
        s["verb"] = grammar::verb_name(sg.verb);
        if (sg.category)
            s["category"] = *sg.category;
        else
            s["category"] = nullptr;
        s["clause"] = sg.clause;
        j["subgoals"].push_back(std::move(s));
    }
    j["clause_spans"] = json::array();
    for (const auto& [a, b] : instr.clause_spans) j["clause_spans"].push_back({a, b});
    return j;
}

grammar::Instruction instruction_from_json(const json& j) {
    grammar::Instruction instr;
    instr.text = j.at("text").get<std::string>();
    for (const auto& s : j.at("subgoals")) {
        grammar::SubGoal sg;
        const auto verb = s.at("verb").get<std::string>();
        bool found = false;
        for (int v = 0; v < 7; ++v) {
            if (verb == grammar::verb_name(static_cast<grammar::Verb>(v))) {
                sg.verb = static_cast<grammar::Verb>(v);
                found = true;
                break;
            }
        }
        if (!found) throw InputError("unknown verb in dataset: " + verb);
        if (!s.at("category").is_null()) sg.category = s.at("category").get<int>();
        sg.clause = s.at("clause").get<std::string>();
        sg.completion = grammar::completion_for(sg.verb);
        instr.subgoals.push_back(std::move(sg));
    }
    for (const auto& span : j.at("clause_spans"))
        instr.clause_spans.emplace_back(span.at(0).get<int>(), span.at(1).get<int>());
    if (instr.clause_spans.size() != instr.subgoals.size())
        throw InputError("instruction spans and subgoals differ in length");
    return instr;
}

json episode_to_json(const EpisodeSpec& ep) {
    json j;
    j["episode_id"] = ep.episode_id;
    j["world_id"] = ep.world_id;
    j["start"] = pose_to_json(ep.start);
    j["goal"] = {{"x", ep.goal.x}, {"y", ep.goal.y}};
    j["reference_path"] = json::array();
    for (const auto& p : ep.reference_path) j["reference_path"].push_back({p.x, p.y});
    j["geodesic_length"] = ep.geodesic_length;
    j["instruction"] = instruction_to_json(ep.instruction);
    return j;
}

EpisodeSpec episode_from_json(const json& j) {
    EpisodeSpec ep;
    ep.episode_id = j.at("episode_id").get<std::string>();
    ep.world_id = j.at("world_id").get<std::string>();
    ep.start = pose_from_json(j.at("start"));
    ep.goal = {j.at("goal").at("x").get<double>(), j.at("goal").at("y").get<double>()};
    for (const auto& p : j.at("reference_path"))
        ep.reference_path.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    ep.geodesic_length = j.at("geodesic_length").get<double>();
    ep.instruction = instruction_from_json(j.at("instruction"));
    return ep;
}

void save_episodes(const std::string& path, const std::vector<EpisodeSpec>& eps) {
    std::ofstream f(path);
    if (!f) throw NavError("cannot open for writing: " + path);
    for (const auto& ep : eps) f << episode_to_json(ep).dump() << "\n";
}

std::vector<EpisodeSpec> load_episodes(const std::string& path) {
    std::vector<EpisodeSpec> out;
    for (const auto& line : read_lines(path)) out.push_back(episode_from_json(json::parse(line)));
    return out;
}

json annotated_to_json(const AnnotatedEpisode& ep) {
    json j;
    j["episode_id"] = ep.episode_id;
    j["world_id"] = ep.world_id;
    const json instr = instruction_to_json(ep.instruction);
    j["instruction"] = instr.at("text");
    j["subgoals"] = instr.at("subgoals");
    j["clause_spans"] = instr.at("clause_spans");
    j["steps"] = json::array();
    for (const auto& s : ep.steps) {
        j["steps"].push_back({{"t", s.t},
                              {"pose", pose_to_json(s.pose)},
                              {"action", static_cast<int>(s.action)},
                              {"k", s.k},
                              {"t_star", s.t_star}});
    }
    j["landmark_index"] = json::array();
    for (const auto& t : ep.landmark_index) {
        if (t)
            j["landmark_index"].push_back(*t);
        else
            j["landmark_index"].push_back(nullptr);
    }
    if (ep.provenance) {
        j["provenance"] = {{"intervened", ep.provenance->intervened},
                           {"pl", ep.provenance->pl},
                           {"final_distance", ep.provenance->final_distance}};
    }
    return j;
}

AnnotatedEpisode annotated_from_json(const json& j) {
    AnnotatedEpisode ep;
    ep.episode_id = j.at("episode_id").get<std::string>();
    ep.world_id = j.at("world_id").get<std::string>();
    json instr;
    instr["text"] = j.at("instruction");
    instr["subgoals"] = j.at("subgoals");
    instr["clause_spans"] = j.at("clause_spans");
    ep.instruction = instruction_from_json(instr);
    for (const auto& s : j.at("steps")) {
        StepRecord r;
        r.t = s.at("t").get<int>();
        r.pose = pose_from_json(s.at("pose"));
        r.action = worldsim::action_from_int(s.at("action").get<int>());
        r.k = s.at("k").get<int>();
        r.t_star = s.at("t_star").get<int>();
        ep.steps.push_back(r);
    }
    for (const auto& t : j.at("landmark_index")) {
        if (t.is_null())
            ep.landmark_index.push_back(std::nullopt);
        else
            ep.landmark_index.push_back(t.get<int>());
    }
    if (j.contains("provenance")) {
        Provenance p;
        p.intervened = j.at("provenance").at("intervened").get<bool>();
        p.pl = j.at("provenance").at("pl").get<double>();
        p.final_distance = j.at("provenance").at("final_distance").get<double>();
        ep.provenance = p;
    }
    return ep;
}

void save_dataset(const std::string& path, const std::vector<AnnotatedEpisode>& eps) {
    std::ofstream f(path);
    if (!f) throw NavError("cannot open for writing: " + path);
    for (const auto& ep : eps) f << annotated_to_json(ep).dump() << "\n";
}

void append_dataset(const std::string& path, const std::vector<AnnotatedEpisode>& eps) {
    std::ofstream f(path, std::ios::app);
    if (!f) throw NavError("cannot open for appending: " + path);
    for (const auto& ep : eps) f << annotated_to_json(ep).dump() << "\n";
}

std::vector<AnnotatedEpisode> load_dataset(const std::string& path) {
    std::vector<AnnotatedEpisode> out;
    for (const auto& line : read_lines(path)) out.push_back(annotated_from_json(json::parse(line)));
    return out;
}

}  // namespace navlab::dataset
