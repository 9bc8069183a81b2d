#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "navlab/dataset.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/policy.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::bridge {

// --- /eval_vln protocol ------------------------------------------------------

struct BridgeConfig {
    int protocol_version = 1;
    int latency_ms = 0;  // optional artificial service latency
};

// Protocol logic behind POST /eval_vln, independent of the HTTP transport so
// transcripts replay byte-identically in tests. Sessions are isolated: each
// owns its instruction tokens and observation history; the checkpoint is
// shared read-only.
class BridgeCore {
public:
    BridgeCore(const diff::ParamStore& params, policy::ModelDims dims, BridgeConfig cfg = {});

    struct Reply {
        int status = 200;
        std::string body;  // JSON text
    };

    Reply handle_eval_vln(const std::string& request_body);
    Reply handle_healthz() const;

    int num_sessions() const;

private:
    struct Session {
        std::unique_ptr<policy::PolicyRunner> runner;
        int next_t = 0;
        std::unique_ptr<std::mutex> mu = std::make_unique<std::mutex>();
    };

    const diff::ParamStore& params_;
    policy::ModelDims dims_;
    BridgeConfig cfg_;
    mutable std::mutex sessions_mu_;
    std::map<std::string, Session> sessions_;
};

// Blocking HTTP server exposing POST /eval_vln and GET /healthz.
void serve(BridgeCore& core, const std::string& host, int port);

// Background server for tests and the in-process robot loop.
class ServerHandle {
public:
    ServerHandle(BridgeCore& core, const std::string& host);  // binds an ephemeral port
    ~ServerHandle();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

// --- PD control --------------------------------------------------------------

struct RobotState {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    double timestamp = 0.0;  // seconds

    Vec2 position() const { return {x, y}; }
};

struct VelocityCommand {
    double linear = 0.0;   // m/s, |v| <= 0.6
    double angular = 0.0;  // rad/s, |w| <= 0.5
};

struct PdGains {
    double kp_lin = 2.0;
    double kd_lin = 0.0;
    double kp_yaw = 1.5;
    double kd_yaw = 0.0;
    double max_linear = 0.6;
    double max_angular = 0.5;
};

// One 10 Hz control tick: linear velocity from the along-heading position
// error, angular velocity from the wrapped yaw error, both capped.
VelocityCommand pd_step(const RobotState& state, const worldsim::AgentPose& target,
                        double dt = 0.1, const PdGains& gains = {});

// Target pose for a discrete action: 25 cm ahead or +/-15 degrees.
worldsim::AgentPose action_target(const RobotState& state, worldsim::NavAction action);

// Target-pose generator for action sequences. Longitudinal progress chains
// along the commanded kinematics (settling undershoot does not compound),
// while the lateral component re-anchors on the robot because the unicycle
// cannot strafe it away under the published control law.
class ActionMapper {
public:
    explicit ActionMapper(const RobotState& initial)
        : command_{initial.x, initial.y, initial.heading} {}

    const worldsim::AgentPose& command_pose() const { return command_; }
    worldsim::AgentPose next_target(worldsim::NavAction action, const RobotState& current,
                                    double forward_distance = worldsim::kForwardStep);

private:
    worldsim::AgentPose command_;
};

struct ExecuteOptions {
    double dt = 0.1;
    double timeout = 5.0;
    double pos_converged = 0.02;
    double yaw_converged = 0.02;
    double pos_assert = 0.1;
    double yaw_assert = 0.1;
    PdGains gains;
};

// Integrates unicycle dynamics under pd_step at 10 Hz until convergence on
// the given target pose. Throws ControlFault on timeout or when the final
// errors exceed the asserted tolerances.
std::vector<RobotState> execute_to_target(RobotState& state, const worldsim::AgentPose& target,
                                          const ExecuteOptions& opts = {});

// Single-action form: the target derives from the current state (empty
// command list for STOP).
std::vector<RobotState> execute_action(RobotState& state, worldsim::NavAction action,
                                       const ExecuteOptions& opts = {});

// --- session logging ----------------------------------------------------------

// JSONL log of {timestamp, pose, observation, action, progress} records with
// strictly increasing timestamps.
class SessionLogger {
public:
    explicit SessionLogger(const std::string& path);
    void log(double timestamp, const RobotState& state, const worldsim::Observation& obs,
             int action, const std::string& progress);

private:
    std::string path_;
    double last_timestamp_;
};

struct RobotSimResult {
    RobotState final_state;
    int actions_executed = 0;
    bool stopped = false;
    double final_distance = 0.0;  // Euclidean to the episode goal
};

// Desk-scale deployment loop: observe from the continuous robot pose, query
// the policy through the wire protocol, execute the returned action with the
// PD controller, and log each step. Forward targets are truncated before
// walls so the plant stays in free space.
RobotSimResult run_robot_loop(const worldsim::FloorPlan& plan,
                              const dataset::EpisodeSpec& episode, BridgeCore& core,
                              const worldsim::SensorConfig& sensor, SessionLogger* logger,
                              int max_actions);

}  // namespace navlab::bridge
