#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navlab/diffcore.hpp"
#include "navlab/feature_oracle.hpp"
#include "navlab/grammar.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/worldsim.hpp"

namespace navlab::policy {

struct ModelDims {
    int d_llm = 64;
    int d_attn = 32;
    int heads = 4;
    int layers = 2;
    int d_ff = 128;
    int history = 8;  // observation slots in the ring buffer
    int k_max = 8;
    int num_rays = 24;
    int num_categories = 16;
    double max_range = 5.0;
    int d_sam = 16;
    int feat_h = 8;
    int feat_w = 8;
    int max_seq = 96;
    int vocab = 0;  // token vocabulary size; fill from the grammar

    int obs_dim() const { return num_rays * (1 + num_categories); }
    int head_dim() const { return d_llm / heads; }
    int feat_cells() const { return feat_h * feat_w; }

    void validate() const;  // throws InputError on inconsistent dims
};

// All learnable tensors, freshly initialized from a seed.
diff::ParamStore init_params(const ModelDims& dims, std::uint64_t seed);

// Ring buffer of the most recent `capacity` observations with their time
// indices (strictly increasing).
struct HistoryContext {
    explicit HistoryContext(int capacity = 8) : capacity_(capacity) {}

    void push(const worldsim::Observation& obs, int t);
    int size() const { return static_cast<int>(frames_.size()); }
    const std::vector<worldsim::Observation>& frames() const { return frames_; }
    const std::vector<int>& times() const { return times_; }

private:
    int capacity_;
    std::vector<worldsim::Observation> frames_;
    std::vector<int> times_;
};

// Flattened per-frame features: depth/max_range followed by a one-hot
// category, per ray.
std::vector<float> observation_features(const worldsim::Observation& obs, int num_categories,
                                        double max_range);

struct ForwardFlags {
    bool progress_head = true;
    bool world_model = false;
};

// Node handles into a freshly built forward graph.
template <class S>
struct ForwardNodes {
    int x = -1;              // N x d_llm encoder outputs
    int action_logits = -1;  // 1 x 4
    int prog_logits = -1;    // 1 x (k_max+1), indices > K masked
    int feat_pred = -1;      // d_sam x (H*W), flattened channel-first map
    std::map<std::string, int> param_nodes;
};

// Builds the causal encoder over [instruction tokens || history observation
// tokens] plus the requested heads. Templated on the scalar type so the same
// construction runs in f64 for gradient verification. When param_cache is
// given, parameter leaves are shared across calls on the same graph (one leaf
// per name), which is how batches accumulate gradients. `values` overrides
// the stored f32 parameters (used to perturb in f64 during checks).
template <class S>
ForwardNodes<S> build_forward(diff::Graph<S>& g, const diff::ParamStore& params,
                              const ModelDims& dims, const std::vector<int>& instr_tokens,
                              const HistoryContext& history, int num_subgoals,
                              const ForwardFlags& flags = {},
                              std::map<std::string, int>* param_cache = nullptr,
                              const std::map<std::string, diff::Tensor<S>>* values = nullptr);

extern template ForwardNodes<float> build_forward<float>(
    diff::Graph<float>&, const diff::ParamStore&, const ModelDims&, const std::vector<int>&,
    const HistoryContext&, int, const ForwardFlags&, std::map<std::string, int>*,
    const std::map<std::string, diff::Tensor<float>>*);
extern template ForwardNodes<double> build_forward<double>(
    diff::Graph<double>&, const diff::ParamStore&, const ModelDims&, const std::vector<int>&,
    const HistoryContext&, int, const ForwardFlags&, std::map<std::string, int>*,
    const std::map<std::string, diff::Tensor<double>>*);

struct PolicyOutput {
    diff::TensorF x;
    std::array<float, 4> action_logits{};
    std::vector<float> progress_logits;
    worldsim::NavAction action = worldsim::NavAction::Stop;  // greedy
    int progress_k = 0;                                      // greedy boundary index
    std::string progress_text;
    featmap::FeatureMap predicted;  // filled when requested
};

// Stateful per-episode (or per-session) runner: owns the tokenized
// instruction and the observation history; parameters are shared read-only.
class PolicyRunner {
public:
    PolicyRunner(const diff::ParamStore& params, ModelDims dims, grammar::Instruction instr);

    // Appends the observation to the history, runs the encoder and heads.
    PolicyOutput step(const worldsim::Observation& obs, int t, bool want_feature = false);

    const grammar::Instruction& instruction() const { return instr_; }
    const HistoryContext& history() const { return hist_; }
    const std::vector<int>& instruction_tokens() const { return tokens_; }

private:
    const diff::ParamStore& params_;
    ModelDims dims_;
    grammar::Instruction instr_;
    std::vector<int> tokens_;
    HistoryContext hist_;
};

// Mean over all elements of the squared difference. Throws InputError when
// the dims differ.
float wm_loss(const featmap::FeatureMap& predicted, const featmap::FeatureMap& target);

struct RetroProbeResult {
    std::vector<double> similarity;  // one entry per history frame
    int argmax = 0;                  // first maximal index
};

// Cosine similarity of the prediction against each history feature map.
RetroProbeResult retro_probe(const featmap::FeatureMap& predicted,
                             const std::vector<featmap::FeatureMap>& history_features);

}  // namespace navlab::policy
