#include "navlab/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "navlab/errors.hpp"
#include "navlab/rng.hpp"

namespace navlab::trainer {

using dataset::AnnotatedEpisode;

void write_train_log(const std::string& path, const std::vector<TrainStepLog>& log) {
    std::ofstream f(path);
    if (!f) throw NavError("cannot open train log for writing: " + path);
    f << "step,L_nav,L_prog,L_WM,total,lr,gated\n";
    char line[256];
    for (const auto& s : log) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.12g,%d\n", s.step,
                      static_cast<double>(s.l_nav), static_cast<double>(s.l_prog),
                      static_cast<double>(s.l_wm), static_cast<double>(s.total), s.lr,
                      s.gated ? 1 : 0);
        f << line;
    }
}

std::vector<TrainStepLog> read_train_log(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open train log: " + path);
    std::vector<TrainStepLog> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        TrainStepLog s;
        int gated = 0;
        if (std::sscanf(line.c_str(), "%d,%f,%f,%f,%f,%lf,%d", &s.step, &s.l_nav, &s.l_prog,
                        &s.l_wm, &s.total, &s.lr, &gated) != 7)
            throw InputError("malformed train log line: " + line);
        s.gated = gated != 0;
        out.push_back(s);
    }
    return out;
}

TrainData::TrainData(std::vector<AnnotatedEpisode> base, std::vector<AnnotatedEpisode> dagger,
                     const std::map<std::string, worldsim::FloorPlan>& plans,
                     const policy::ModelDims& dims, const worldsim::SensorConfig& sensor,
                     int stride, std::uint64_t feature_seed)
    : dims_(dims),
      sensor_(sensor),
      table_(featmap::CategoryEmbeddingTable::make(dims.d_sam, dims.num_categories,
                                                   feature_seed)) {
    if (stride <= 0) throw InputError("stride must be positive");
    has_dagger_ = !dagger.empty();
    episodes_ = std::move(base);
    const std::size_t base_count = episodes_.size();
    for (auto& ep : dagger) episodes_.push_back(std::move(ep));

    for (std::size_t e = 0; e < episodes_.size(); ++e) {
        const auto& ep = episodes_[e];
        const auto pit = plans.find(ep.world_id);
        if (pit == plans.end())
            throw InputError("dataset references unknown world " + ep.world_id);
        plans_.push_back(&pit->second);
        if (ep.steps.empty()) throw InputError("episode " + ep.episode_id + " has no steps");
        if (ep.instruction.num_subgoals() > dims.k_max)
            throw InputError("episode " + ep.episode_id + " exceeds k_max sub-goals");
        tokens_.push_back(grammar::Vocabulary::instance().tokenize(ep.instruction.text));
        obs_cache_.emplace_back(ep.steps.size());
        const int source = e < base_count ? 0 : 1;
        for (std::size_t si = 0; si < ep.steps.size(); ++si) {
            const bool last = si + 1 == ep.steps.size();
            if (static_cast<int>(si) % stride != 0 && !last) continue;
            items_.push_back({static_cast<int>(e), static_cast<int>(si), source});
        }
    }
}

const worldsim::Observation& TrainData::observation(int ep, int t) {
    auto& slot = obs_cache_[static_cast<std::size_t>(ep)][static_cast<std::size_t>(t)];
    if (!slot) {
        const auto& step = episodes_[static_cast<std::size_t>(ep)].steps[static_cast<std::size_t>(t)];
        slot = worldsim::observe(*plans_[static_cast<std::size_t>(ep)], step.pose, sensor_);
    }
    return *slot;
}

const diff::TensorF& TrainData::feature_target(int ep, int t_star) {
    const auto key = std::make_pair(ep, t_star);
    auto it = target_cache_.find(key);
    if (it == target_cache_.end()) {
        const auto fm = featmap::extract(observation(ep, t_star), table_, dims_.feat_h,
                                         dims_.feat_w, dims_.max_range);
        diff::TensorF t(dims_.d_sam, dims_.feat_cells(), fm.data);
        it = target_cache_.emplace(key, std::move(t)).first;
    }
    return it->second;
}

policy::HistoryContext TrainData::window(int ep, int t) {
    policy::HistoryContext hist(dims_.history);
    const int first = std::max(0, t - dims_.history + 1);
    for (int i = first; i <= t; ++i) hist.push(observation(ep, i), i);
    return hist;
}

BatchLossNodes build_batch_loss(diff::GraphF& g, const diff::ParamStore& params,
                                const policy::ModelDims& dims, TrainData& data,
                                const std::vector<TrainData::Item>& batch, bool gate,
                                const TrainingConfig& cfg,
                                std::map<std::string, int>& param_cache) {
    if (batch.empty()) throw InputError("empty batch");
    const bool want_prog = gate && cfg.lambda_prog != 0.0f;
    const bool want_wm = gate && cfg.lambda_wm != 0.0f;

    policy::ForwardFlags flags;
    flags.progress_head = want_prog;
    flags.world_model = want_wm;

    int nav_sum = -1, prog_sum = -1, wm_sum = -1;
    auto chain = [&g](int acc, int term) { return acc < 0 ? term : g.add(acc, term); };

    for (const auto& item : batch) {
        const auto& ep = data.episode(item.episode);
        const auto& step = ep.steps[static_cast<std::size_t>(item.step_index)];
        const auto hist = data.window(item.episode, step.t);
        const auto nodes = policy::build_forward(g, params, dims, data.tokens(item.episode), hist,
                                                 ep.instruction.num_subgoals(), flags,
                                                 &param_cache);
        nav_sum = chain(nav_sum, g.cross_entropy(nodes.action_logits,
                                                 static_cast<int>(step.action)));
        if (want_prog)
            prog_sum = chain(prog_sum, g.cross_entropy(nodes.prog_logits, step.k));
        if (want_wm) {
            const int target = g.constant(data.feature_target(item.episode, step.t_star));
            wm_sum = chain(wm_sum, g.mse(nodes.feat_pred, target));
        }
    }

    const float inv_b = 1.0f / static_cast<float>(batch.size());
    const int l_nav = g.mul_const(nav_sum, inv_b);

    BatchLossNodes out;
    out.l_nav = g.val(l_nav).data[0];
    int total = l_nav;
    if (want_prog || want_wm) {
        // total = L_nav + g*(lambda_prog*L_prog + lambda_wm*L_WM), assembled in
        // this exact f32 order so the logged identity is bit-reproducible.
        int weighted = -1;
        if (want_prog) {
            const int l_prog = g.mul_const(prog_sum, inv_b);
            out.l_prog = g.val(l_prog).data[0];
            weighted = g.mul_const(l_prog, cfg.lambda_prog);
        }
        if (want_wm) {
            const int l_wm = g.mul_const(wm_sum, inv_b);
            out.l_wm = g.val(l_wm).data[0];
            const int scaled = g.mul_const(l_wm, cfg.lambda_wm);
            weighted = weighted < 0 ? scaled : g.add(weighted, scaled);
        }
        total = g.add(l_nav, weighted);
    }
    out.total = total;
    out.total_value = g.val(total).data[0];
    return out;
}

TrainOutput run_training(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         std::vector<AnnotatedEpisode> base, std::vector<AnnotatedEpisode> dagger,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const diff::ParamStore* init, const std::string& abort_checkpoint) {
    if (cfg.batch <= 0 || cfg.epochs <= 0) throw InputError("batch and epochs must be positive");
    TrainData data(std::move(base), std::move(dagger), plans, dims, sensor, cfg.stride,
                   cfg.feature_seed);
    if (data.items().empty()) throw InputError("no training items in the dataset");

    TrainOutput out;
    out.params = init ? *init : policy::init_params(dims, cfg.seed);

    const int per_epoch =
        (static_cast<int>(data.items().size()) + cfg.batch - 1) / cfg.batch;
    diff::AdamConfig adam;
    adam.base_lr = cfg.base_lr;
    adam.total_steps = per_epoch * cfg.epochs;

    // Separate streams so the gate draw does not perturb the data order.
    Rng shuffle_rng(cfg.seed);
    Rng gate_rng(cfg.seed ^ 0x6A09E667F3BCC909ULL);

    std::vector<int> order(data.items().size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    int step_index = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.batch)) {
            ++step_index;
            std::vector<TrainData::Item> batch;
            const std::size_t end = std::min(order.size(), off + static_cast<std::size_t>(cfg.batch));
            for (std::size_t i = off; i < end; ++i)
                batch.push_back(data.items()[static_cast<std::size_t>(order[i])]);

            const bool gate = gate_rng.bernoulli(cfg.anchoring_probability);
            diff::GraphF g;
            std::map<std::string, int> param_cache;
            const auto loss =
                build_batch_loss(g, out.params, dims, data, batch, gate, cfg, param_cache);

            if (!std::isfinite(loss.total_value)) {
                if (!abort_checkpoint.empty()) out.params.save(abort_checkpoint);
                throw TrainingFault("non-finite loss at step " + std::to_string(step_index) +
                                    "; last-good checkpoint " +
                                    (abort_checkpoint.empty() ? "not written" : abort_checkpoint));
            }

            g.backward(loss.total);
            std::map<std::string, std::vector<float>> grads;
            for (const auto& [name, node] : param_cache)
                grads.emplace(name, g.grad(node).data);
            try {
                out.params.adam_step(grads, step_index, adam);
            } catch (const TrainingFault&) {
                if (!abort_checkpoint.empty()) out.params.save(abort_checkpoint);
                throw;
            }

            TrainStepLog log;
            log.step = step_index;
            log.l_nav = loss.l_nav;
            log.l_prog = loss.l_prog;
            log.l_wm = loss.l_wm;
            log.total = loss.total_value;
            log.lr = diff::schedule_lr(adam, step_index);
            log.gated = gate;
            for (const auto& item : batch)
                (item.source == 0 ? log.n_base : log.n_dagger) += 1;
            out.log.push_back(log);
        }
    }
    return out;
}

TrainOutput train_stage1(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         const std::vector<AnnotatedEpisode>& data,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const std::string& abort_checkpoint) {
    return run_training(cfg, dims, sensor, data, {}, plans, nullptr, abort_checkpoint);
}

TrainOutput train_stage2(const TrainingConfig& cfg, const policy::ModelDims& dims,
                         const worldsim::SensorConfig& sensor,
                         const std::vector<AnnotatedEpisode>& stage1_data,
                         const std::vector<AnnotatedEpisode>& dagger_shard,
                         const std::map<std::string, worldsim::FloorPlan>& plans,
                         const diff::ParamStore& checkpoint, const std::string& abort_checkpoint) {
    return run_training(cfg, dims, sensor, stage1_data, dagger_shard, plans, &checkpoint,
                        abort_checkpoint);
}

}  // namespace navlab::trainer
