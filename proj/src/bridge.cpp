#include "navlab/bridge.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "navlab/errors.hpp"

namespace navlab::bridge {

using nlohmann::json;
using worldsim::NavAction;

BridgeCore::BridgeCore(const diff::ParamStore& params, policy::ModelDims dims, BridgeConfig cfg)
    : params_(params), dims_(dims), cfg_(cfg) {
    dims_.validate();
}

namespace {

json error_body(const std::string& msg) { return json{{"error", msg}}; }

worldsim::Observation observation_from_json(const json& j, const policy::ModelDims& dims) {
    if (!j.is_object() || !j.contains("rays"))
        throw InputError("observation must be an object with a 'rays' array");
    const auto& rays = j.at("rays");
    if (!rays.is_array() || static_cast<int>(rays.size()) != dims.num_rays)
        throw InputError("observation.rays must contain exactly " +
                         std::to_string(dims.num_rays) + " entries");
    worldsim::Observation obs;
    obs.rays.reserve(rays.size());
    for (const auto& r : rays) {
        if (!r.is_array() || r.size() != 2) throw InputError("each ray must be [depth, category]");
        worldsim::RayHit hit;
        hit.depth = r.at(0).get<double>();
        if (!(hit.depth > 0.0) || !std::isfinite(hit.depth))
            throw InputError("ray depth must be positive and finite");
        if (r.at(1).is_null()) {
            hit.category = -1;
        } else {
            hit.category = r.at(1).get<int>();
            if (hit.category < 0 || hit.category >= dims.num_categories)
                throw InputError("ray category out of range");
        }
        obs.rays.push_back(hit);
    }
    return obs;
}

}  // namespace

BridgeCore::Reply BridgeCore::handle_eval_vln(const std::string& request_body) {
    if (cfg_.latency_ms > 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.latency_ms));
    json req;
    try {
        req = json::parse(request_body);
    } catch (const json::exception& e) {
        return {400, error_body(std::string("malformed JSON: ") + e.what()).dump()};
    }
    try {
        if (!req.is_object() || !req.contains("session_id") || !req.at("session_id").is_string())
            return {400, error_body("request must carry a string session_id").dump()};
        const auto session_id = req.at("session_id").get<std::string>();
        const bool reset = req.value("reset", false);
        if (!req.contains("observation"))
            return {400, error_body("request must carry an observation").dump()};
        const auto obs = observation_from_json(req.at("observation"), dims_);

        Session* session = nullptr;
        {
            std::lock_guard<std::mutex> lock(sessions_mu_);
            auto it = sessions_.find(session_id);
            if (reset) {
                if (!req.contains("instruction") || !req.at("instruction").is_string())
                    return {400, error_body("reset requires an instruction string").dump()};
                const auto text = req.at("instruction").get<std::string>();
                grammar::Instruction instr;
                instr.text = text;
                instr.subgoals = grammar::decompose(text);
                int off = 0;
                for (const auto& sg : instr.subgoals) {
                    instr.clause_spans.emplace_back(off, off + static_cast<int>(sg.clause.size()));
                    off += static_cast<int>(sg.clause.size());
                }
                if (instr.num_subgoals() > dims_.k_max)
                    return {400, error_body("instruction has more sub-goals than k_max").dump()};
                Session s;
                s.runner = std::make_unique<policy::PolicyRunner>(params_, dims_, instr);
                s.next_t = 0;
                if (it == sessions_.end())
                    it = sessions_.emplace(session_id, std::move(s)).first;
                else
                    it->second = std::move(s);
            } else if (it == sessions_.end()) {
                return {404, error_body("unknown session '" + session_id +
                                        "'; send reset=true with an instruction")
                                 .dump()};
            }
            session = &it->second;
        }

        std::lock_guard<std::mutex> lock(*session->mu);
        const auto out = session->runner->step(obs, session->next_t++);
        json resp;
        resp["v"] = cfg_.protocol_version;
        resp["action"] = static_cast<int>(out.action);
        resp["action_name"] = worldsim::action_name(out.action);
        resp["progress"] = out.progress_text;
        return {200, resp.dump()};
    } catch (const ParseError& e) {
        return {400, error_body(std::string("instruction parse error: ") + e.what()).dump()};
    } catch (const InputError& e) {
        return {400, error_body(e.what()).dump()};
    }
}

BridgeCore::Reply BridgeCore::handle_healthz() const {
    return {200, json{{"status", "ok"}}.dump()};
}

int BridgeCore::num_sessions() const {
    std::lock_guard<std::mutex> lock(sessions_mu_);
    return static_cast<int>(sessions_.size());
}

namespace {

void wire_routes(httplib::Server& server, BridgeCore& core) {
    server.Post("/eval_vln", [&core](const httplib::Request& req, httplib::Response& res) {
        const auto reply = core.handle_eval_vln(req.body);
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
    server.Get("/healthz", [&core](const httplib::Request&, httplib::Response& res) {
        const auto reply = core.handle_healthz();
        res.status = reply.status;
        res.set_content(reply.body, "application/json");
    });
}

}  // namespace

void serve(BridgeCore& core, const std::string& host, int port) {
    httplib::Server server;
    wire_routes(server, core);
    if (!server.listen(host, port))
        throw NavError("failed to bind " + host + ":" + std::to_string(port));
}

struct ServerHandle::Impl {
    httplib::Server server;
    std::thread thread;
};

ServerHandle::ServerHandle(BridgeCore& core, const std::string& host)
    : impl_(std::make_unique<Impl>()) {
    wire_routes(impl_->server, core);
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ <= 0) throw NavError("failed to bind an ephemeral port on " + host);
    impl_->thread = std::thread([this]() { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

ServerHandle::~ServerHandle() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

// ---------------------------------------------------------------------------
// PD control

VelocityCommand pd_step(const RobotState& state, const worldsim::AgentPose& target, double dt,
                        const PdGains& gains) {
    (void)dt;  // derivative gains are zero
    const Vec2 hv = heading_vec(state.heading);
    const Vec2 err{target.x - state.x, target.y - state.y};
    const double along = err.dot(hv);
    const double yaw_err = wrap_angle(target.heading - state.heading);
    VelocityCommand cmd;
    cmd.linear = std::clamp(gains.kp_lin * along, -gains.max_linear, gains.max_linear);
    cmd.angular = std::clamp(gains.kp_yaw * yaw_err, -gains.max_angular, gains.max_angular);
    return cmd;
}

worldsim::AgentPose action_target(const RobotState& state, NavAction action) {
    switch (action) {
        case NavAction::MoveForward: {
            const Vec2 p = state.position() + heading_vec(state.heading) * worldsim::kForwardStep;
            return {p.x, p.y, state.heading};
        }
        case NavAction::TurnLeft:
            return {state.x, state.y, normalize_heading(state.heading + worldsim::kTurnStep)};
        case NavAction::TurnRight:
            return {state.x, state.y, normalize_heading(state.heading - worldsim::kTurnStep)};
        case NavAction::Stop:
            return {state.x, state.y, state.heading};
    }
    throw InputError("unknown action");
}

worldsim::AgentPose ActionMapper::next_target(NavAction action, const RobotState& current,
                                              double forward_distance) {
    // Drop the lateral offset between the command chain and the robot; the
    // yaw/linear PD pair cannot remove it and it stays a bounded random walk.
    const Vec2 u = heading_vec(command_.heading);
    const Vec2 delta{command_.x - current.x, command_.y - current.y};
    const double along = delta.dot(u);
    command_.x = current.x + along * u.x;
    command_.y = current.y + along * u.y;

    switch (action) {
        case NavAction::MoveForward: {
            command_.x += u.x * forward_distance;
            command_.y += u.y * forward_distance;
            break;
        }
        case NavAction::TurnLeft:
            command_.heading = normalize_heading(command_.heading + worldsim::kTurnStep);
            break;
        case NavAction::TurnRight:
            command_.heading = normalize_heading(command_.heading - worldsim::kTurnStep);
            break;
        case NavAction::Stop:
            break;
    }
    return command_;
}

std::vector<RobotState> execute_to_target(RobotState& state, const worldsim::AgentPose& target,
                                          const ExecuteOptions& opts) {
    std::vector<RobotState> states;
    const int max_ticks = static_cast<int>(std::ceil(opts.timeout / opts.dt));
    bool converged = false;
    for (int i = 0; i < max_ticks; ++i) {
        const double pos_err = distance(state.position(), {target.x, target.y});
        const double yaw_err = std::abs(wrap_angle(target.heading - state.heading));
        if (pos_err < opts.pos_converged && yaw_err < opts.yaw_converged) {
            converged = true;
            break;
        }
        const auto cmd = pd_step(state, target, opts.dt, opts.gains);
        const Vec2 hv = heading_vec(state.heading);
        state.x += cmd.linear * hv.x * opts.dt;
        state.y += cmd.linear * hv.y * opts.dt;
        state.heading = normalize_heading(state.heading + cmd.angular * opts.dt);
        state.timestamp += opts.dt;
        states.push_back(state);
    }
    const double pos_err = distance(state.position(), {target.x, target.y});
    const double yaw_err = std::abs(wrap_angle(target.heading - state.heading));
    if (!converged && !(pos_err < opts.pos_converged && yaw_err < opts.yaw_converged))
        throw ControlFault("action did not converge within the timeout");
    if (pos_err >= opts.pos_assert || yaw_err >= opts.yaw_assert)
        throw ControlFault("converged outside the asserted tolerance");
    return states;
}

std::vector<RobotState> execute_action(RobotState& state, NavAction action,
                                       const ExecuteOptions& opts) {
    if (action == NavAction::Stop) return {};
    return execute_to_target(state, action_target(state, action), opts);
}

// ---------------------------------------------------------------------------
// Logging and the robot loop

SessionLogger::SessionLogger(const std::string& path)
    : path_(path), last_timestamp_(-std::numeric_limits<double>::infinity()) {
    std::ofstream f(path_, std::ios::trunc);
    if (!f) throw NavError("cannot open session log: " + path_);
}

void SessionLogger::log(double timestamp, const RobotState& state,
                        const worldsim::Observation& obs, int action,
                        const std::string& progress) {
    if (timestamp <= last_timestamp_)
        throw InputError("session log timestamps must be strictly increasing");
    last_timestamp_ = timestamp;
    json j;
    j["timestamp"] = timestamp;
    j["pose"] = {{"x", state.x}, {"y", state.y}, {"heading", state.heading}};
    j["observation"] = json::array();
    for (const auto& r : obs.rays) {
        if (r.category < 0)
            j["observation"].push_back({r.depth, nullptr});
        else
            j["observation"].push_back({r.depth, r.category});
    }
    j["action"] = action;
    j["progress"] = progress;
    std::ofstream f(path_, std::ios::app);
    if (!f) throw NavError("cannot append to session log: " + path_);
    f << j.dump() << "\n";
}

namespace {

json observation_to_wire(const worldsim::Observation& obs) {
    json rays = json::array();
    for (const auto& r : obs.rays) {
        if (r.category < 0)
            rays.push_back({r.depth, nullptr});
        else
            rays.push_back({r.depth, r.category});
    }
    return json{{"rays", rays}};
}

}  // namespace

RobotSimResult run_robot_loop(const worldsim::FloorPlan& plan,
                              const dataset::EpisodeSpec& episode, BridgeCore& core,
                              const worldsim::SensorConfig& sensor, SessionLogger* logger,
                              int max_actions) {
    RobotState state{episode.start.x, episode.start.y, episode.start.heading, 0.0};
    ActionMapper mapper(state);
    RobotSimResult result;

    for (int i = 0; i < max_actions; ++i) {
        const worldsim::AgentPose pose{state.x, state.y, state.heading};
        const auto obs = worldsim::observe(plan, pose, sensor);

        json req;
        req["session_id"] = episode.episode_id;
        req["reset"] = i == 0;
        if (i == 0) req["instruction"] = episode.instruction.text;
        req["observation"] = observation_to_wire(obs);
        const auto reply = core.handle_eval_vln(req.dump());
        if (reply.status != 200)
            throw NavError("robot loop protocol error: " + reply.body);
        const auto resp = json::parse(reply.body);
        const int action_idx = resp.at("action").get<int>();
        const NavAction action = worldsim::action_from_int(action_idx);
        if (logger)
            logger->log(state.timestamp, state, obs, action_idx,
                        resp.at("progress").get<std::string>());

        ++result.actions_executed;
        if (action == NavAction::Stop) {
            result.stopped = true;
            break;
        }

        if (action == NavAction::MoveForward) {
            // Truncate the commanded step before walls, with extra margin for
            // the controller's settling error.
            const Vec2 dir = heading_vec(state.heading);
            double t_hit = ray_rect_exit(state.position(), dir, plan.bounds)
                               .value_or(std::numeric_limits<double>::infinity());
            for (const auto& w : plan.walls) {
                const auto t = ray_rect_entry(state.position(), dir, w);
                if (t && *t < t_hit) t_hit = *t;
            }
            const double move = std::clamp(t_hit - 0.12, 0.0, worldsim::kForwardStep);
            if (move > 1e-6) {
                execute_to_target(state, mapper.next_target(action, state, move));
            } else {
                state.timestamp += 0.1;  // blocked; burn one control tick
            }
        } else {
            execute_to_target(state, mapper.next_target(action, state));
        }
    }

    result.final_state = state;
    result.final_distance = distance(state.position(), episode.goal);
    return result;
}

}  // namespace navlab::bridge
