#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navlab/diffcore.hpp"

namespace navlab::diff {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double base_lr = 1e-3;
    int total_steps = 1;
    double warmup_frac = 0.03;
};

// Linear warmup over the first warmup fraction of total steps (lr = base at
// the end of warmup), then cosine decay to zero. step_index is 1-based.
double schedule_lr(const AdamConfig& cfg, int step_index);

// Named f32 parameter tensors with Adam moment state. Iteration order is the
// lexicographic name order of std::map, which also fixes the checkpoint
// layout.
class ParamStore {
public:
    void add(const std::string& name, TensorF init);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    TensorF& value(const std::string& name);
    const TensorF& value(const std::string& name) const;

    std::vector<std::string> names() const;

    // One Adam update. `grads` maps parameter name to a gradient buffer of
    // matching length; missing names are treated as zero gradient (moments
    // still decay). Throws TrainingFault on a non-finite gradient, naming the
    // parameter.
    void adam_step(const std::map<std::string, std::vector<float>>& grads, int step_index,
                   const AdamConfig& cfg);

    // Checkpoint file: magic "DACK", u32 format version, u32 manifest length,
    // a JSON manifest listing (name, rows, cols) in payload order, then the
    // f32 little-endian payloads.
    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

    std::size_t total_elements() const;

private:
    struct Entry {
        TensorF value;
        std::vector<float> m;
        std::vector<float> v;
    };
    std::map<std::string, Entry> entries_;
};

}  // namespace navlab::diff
