#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "navlab/datagen.hpp"
#include "navlab/dataset.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/policy.hpp"

namespace navlab::trainer {

struct TrainingConfig {
    float lambda_prog = 1.0f;
    float lambda_wm = 0.1f;
    float anchoring_probability = 0.5f;
    double base_lr = 1e-3;
    int epochs = 1;
    int batch = 8;
    int stride = 4;  // interval sampling of trajectory steps
    std::uint64_t seed = 1;
    std::uint64_t feature_seed = 7;  // category embedding table seed
};

struct TrainStepLog {
    int step = 0;
    float l_nav = 0.0f;
    float l_prog = 0.0f;
    float l_wm = 0.0f;
    float total = 0.0f;
    double lr = 0.0;
    bool gated = false;
    int n_base = 0;    // batch items drawn from the stage-1 shard
    int n_dagger = 0;  // batch items drawn from the DAgger shard
};

// CSV with columns step,L_nav,L_prog,L_WM,total,lr,gated. Floats are written
// with enough digits to round-trip f32 exactly.
void write_train_log(const std::string& path, const std::vector<TrainStepLog>& log);
std::vector<TrainStepLog> read_train_log(const std::string& path);

// Training items plus lazily cached observations and retrospective feature
// targets, all recomputable from poses because the sensor is deterministic.
class TrainData {
public:
    struct Item {
        int episode = 0;
        int step_index = 0;
        int source = 0;  // 0 = base shard, 1 = DAgger shard
    };

    TrainData(std::vector<dataset::AnnotatedEpisode> base,
              std::vector<dataset::AnnotatedEpisode> dagger,
              const std::map<std::string, worldsim::FloorPlan>& plans,
              const policy::ModelDims& dims, const worldsim::SensorConfig& sensor, int stride,
              std::uint64_t feature_seed);

    const std::vector<Item>& items() const { return items_; }
    const dataset::AnnotatedEpisode& episode(int ep) const {
        return episodes_[static_cast<std::size_t>(ep)];
    }
    const std::vector<int>& tokens(int ep) const { return tokens_[static_cast<std::size_t>(ep)]; }
    const worldsim::Observation& observation(int ep, int t);
    const diff::TensorF& feature_target(int ep, int t_star);
    policy::HistoryContext window(int ep, int t);
    bool has_dagger() const { return has_dagger_; }

private:
    std::vector<dataset::AnnotatedEpisode> episodes_;
    std::vector<const worldsim::FloorPlan*> plans_;
    std::vector<std::vector<int>> tokens_;
    std::vector<Item> items_;
    policy::ModelDims dims_;
    worldsim::SensorConfig sensor_;
    featmap::CategoryEmbeddingTable table_;
    std::vector<std::vector<std::optional<worldsim::Observation>>> obs_cache_;
    std::map<std::pair<int, int>, diff::TensorF> target_cache_;
    bool has_dagger_ = false;
};

// Per-step loss assembly, exposed for tests: total = L_nav + g * (lambda_prog
// * L_prog + lambda_wm * L_WM), with L_prog/L_WM built only when the gate and
// weights require them.
struct BatchLossNodes {
    int total = -1;
    float l_nav = 0.0f;
    float l_prog = 0.0f;
    float l_wm = 0.0f;
    float total_value = 0.0f;
};

BatchLossNodes build_batch_loss(diff::GraphF& g, const diff::ParamStore& params,
                                const policy::ModelDims& dims, TrainData& data,
                                const std::vector<TrainData::Item>& batch, bool gate,
                                const TrainingConfig& cfg,
                                std::map<std::string, int>& param_cache);

struct TrainOutput {
    diff::ParamStore params;
    std::vector<TrainStepLog> log;
};

// Shared training loop. Starts from `init` when given (stage 2), otherwise
// from a fresh seed initialization (stage 1). On a non-finite loss the
// last-good parameters are saved to abort_checkpoint (when set) and a
// TrainingFault is thrown.
TrainOutput run_training(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         std::vector<dataset::AnnotatedEpisode> base,
                         std::vector<dataset::AnnotatedEpisode> dagger,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const diff::ParamStore* init, const std::string& abort_checkpoint = "");

TrainOutput train_stage1(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         const std::vector<dataset::AnnotatedEpisode>& data,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const std::string& abort_checkpoint = "");

TrainOutput train_stage2(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         const std::vector<dataset::AnnotatedEpisode>& stage1_data,
                         const std::vector<dataset::AnnotatedEpisode>& dagger_shard,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const diff::ParamStore& checkpoint,
                         const std::string& abort_checkpoint = "");

}  // namespace navlab::trainer
