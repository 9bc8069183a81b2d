#include "navlab/policy.hpp"

#include <algorithm>
#include <cmath>

#include "navlab/errors.hpp"
#include "navlab/rng.hpp"

namespace navlab::policy {

void ModelDims::validate() const {
    if (d_llm <= 0 || d_attn <= 0 || heads <= 0 || layers <= 0 || d_ff <= 0)
        throw InputError("model dims must be positive");
    if (d_llm % heads != 0) throw InputError("d_llm must be divisible by heads");
    if (history <= 0 || k_max <= 0 || num_rays <= 0 || num_categories <= 0)
        throw InputError("model dims must be positive");
    if (d_sam <= 0 || feat_h <= 0 || feat_w <= 0) throw InputError("feature dims must be positive");
    if (vocab <= 0) throw InputError("token vocabulary size not set");
    if (max_seq <= history) throw InputError("max_seq must exceed the history length");
}

diff::ParamStore init_params(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    Rng rng(seed);
    diff::ParamStore store;
    auto mat = [&](const std::string& name, int rows, int cols, double sigma) {
        diff::TensorF t(rows, cols);
        for (auto& v : t.data) v = static_cast<float>(rng.gauss() * sigma);
        store.add(name, std::move(t));
    };
    auto fill = [&](const std::string& name, int rows, int cols, float value) {
        diff::TensorF t(rows, cols);
        std::fill(t.data.begin(), t.data.end(), value);
        store.add(name, std::move(t));
    };

    const int d = dims.d_llm;
    const int dh = dims.head_dim();
    const double res_scale = 1.0 / std::sqrt(2.0 * dims.layers);
    mat("tok_emb", dims.vocab, d, 0.08);
    mat("pos_emb", dims.max_seq, d, 0.08);
    mat("obs_proj", dims.obs_dim(), d, 1.0 / std::sqrt(dims.obs_dim()));
    for (int l = 0; l < dims.layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        fill(p + "ln1.g", 1, d, 1.0f);
        fill(p + "ln1.b", 1, d, 0.0f);
        for (int h = 0; h < dims.heads; ++h) {
            const std::string hp = p + "attn.h" + std::to_string(h) + ".";
            mat(hp + "wq", d, dh, 1.0 / std::sqrt(d));
            mat(hp + "wk", d, dh, 1.0 / std::sqrt(d));
            mat(hp + "wv", d, dh, 1.0 / std::sqrt(d));
            mat(hp + "wo", dh, d, res_scale / std::sqrt(dh));
        }
        fill(p + "ln2.g", 1, d, 1.0f);
        fill(p + "ln2.b", 1, d, 0.0f);
        mat(p + "ffn.w1", d, dims.d_ff, 1.0 / std::sqrt(d));
        mat(p + "ffn.w2", dims.d_ff, d, res_scale / std::sqrt(dims.d_ff));
    }
    fill("lnf.g", 1, d, 1.0f);
    fill("lnf.b", 1, d, 0.0f);
    mat("head.action.w", d, 4, 0.02);
    mat("head.prog.w", d, dims.k_max + 1, 0.02);
    mat("wm.w_in", d, dims.d_attn, 1.0 / std::sqrt(d));
    fill("wm.ln.g", 1, dims.d_attn, 1.0f);
    fill("wm.ln.b", 1, dims.d_attn, 0.0f);
    mat("wm.q_spa", dims.feat_cells(), dims.d_attn, 0.08);
    mat("wm.w_out", dims.d_attn, dims.d_sam, 1.0 / std::sqrt(dims.d_attn));
    return store;
}

void HistoryContext::push(const worldsim::Observation& obs, int t) {
    if (!times_.empty() && t <= times_.back())
        throw InputError("history time indices must be strictly increasing");
    frames_.push_back(obs);
    times_.push_back(t);
    if (static_cast<int>(frames_.size()) > capacity_) {
        frames_.erase(frames_.begin());
        times_.erase(times_.begin());
    }
}

std::vector<float> observation_features(const worldsim::Observation& obs, int num_categories,
                                        double max_range) {
    std::vector<float> out;
    out.reserve(obs.rays.size() * (1 + static_cast<std::size_t>(num_categories)));
    for (const auto& ray : obs.rays) {
        out.push_back(static_cast<float>(ray.depth / max_range));
        for (int c = 0; c < num_categories; ++c)
            out.push_back(ray.category == c ? 1.0f : 0.0f);
    }
    return out;
}

namespace {

constexpr float kMaskValue = -1e9f;

}  // namespace

template <class S>
ForwardNodes<S> build_forward(diff::Graph<S>& g, const diff::ParamStore& params,
                              const ModelDims& dims, const std::vector<int>& instr_tokens,
                              const HistoryContext& history, int num_subgoals,
                              const ForwardFlags& flags, std::map<std::string, int>* param_cache,
                              const std::map<std::string, diff::Tensor<S>>* values) {
    if (history.size() == 0) throw InputError("history must contain at least one observation");
    const int L = static_cast<int>(instr_tokens.size());
    const int M = history.size();
    const int N = L + M;
    if (N > dims.max_seq)
        throw InputError("sequence length " + std::to_string(N) + " exceeds configured max " +
                         std::to_string(dims.max_seq));

    ForwardNodes<S> out;
    std::map<std::string, int>& cache = param_cache ? *param_cache : out.param_nodes;
    auto param = [&](const std::string& name) {
        const auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        const int id = values ? g.leaf(values->at(name))
                              : g.leaf(params.value(name).template cast<S>());
        cache.emplace(name, id);
        return id;
    };

    // Token sequence: instruction tokens, then one token per history frame.
    const int tok_emb = param("tok_emb");
    const int pos_emb = param("pos_emb");
    std::vector<int> positions(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) positions[static_cast<std::size_t>(i)] = i;

    std::vector<int> parts;
    if (L > 0) parts.push_back(g.gather_rows(tok_emb, instr_tokens));
    const int obs_proj = param("obs_proj");
    for (int j = 0; j < M; ++j) {
        const auto feats = observation_features(history.frames()[static_cast<std::size_t>(j)],
                                                dims.num_categories, dims.max_range);
        diff::Tensor<S> fv(1, dims.obs_dim());
        for (std::size_t i = 0; i < feats.size(); ++i) fv.data[i] = static_cast<S>(feats[i]);
        parts.push_back(g.matmul(g.constant(std::move(fv)), obs_proj));
    }
    int x = g.add(g.concat_rows(parts), g.gather_rows(pos_emb, positions));

    // Causal mask shared by every layer.
    diff::Tensor<S> mask(N, N);
    for (int r = 0; r < N; ++r)
        for (int c = r + 1; c < N; ++c) mask.at(r, c) = static_cast<S>(kMaskValue);
    const int mask_node = g.constant(std::move(mask));

    const S inv_sqrt_dh = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dims.head_dim())));
    for (int l = 0; l < dims.layers; ++l) {
        const std::string p = "enc." + std::to_string(l) + ".";
        const int ln1 = g.layer_norm(x, param(p + "ln1.g"), param(p + "ln1.b"));
        int att_sum = -1;
        for (int h = 0; h < dims.heads; ++h) {
            const std::string hp = p + "attn.h" + std::to_string(h) + ".";
            const int q = g.matmul(ln1, param(hp + "wq"));
            const int k = g.matmul(ln1, param(hp + "wk"));
            const int v = g.matmul(ln1, param(hp + "wv"));
            const int scores = g.add(g.mul_const(g.matmul_nt(q, k), inv_sqrt_dh), mask_node);
            const int att = g.softmax(scores);
            const int head_out = g.matmul(g.matmul(att, v), param(hp + "wo"));
            att_sum = att_sum < 0 ? head_out : g.add(att_sum, head_out);
        }
        x = g.add(x, att_sum);
        const int ln2 = g.layer_norm(x, param(p + "ln2.g"), param(p + "ln2.b"));
        const int ffn = g.matmul(g.gelu(g.matmul(ln2, param(p + "ffn.w1"))), param(p + "ffn.w2"));
        x = g.add(x, ffn);
    }
    x = g.layer_norm(x, param("lnf.g"), param("lnf.b"));
    out.x = x;

    const int last = g.slice_rows(x, N - 1, N);
    out.action_logits = g.matmul(last, param("head.action.w"));

    if (flags.progress_head) {
        if (num_subgoals < 0 || num_subgoals > dims.k_max)
            throw InputError("instruction sub-goal count exceeds k_max");
        diff::Tensor<S> pmask(1, dims.k_max + 1);
        for (int j = num_subgoals + 1; j <= dims.k_max; ++j)
            pmask.data[static_cast<std::size_t>(j)] = static_cast<S>(kMaskValue);
        out.prog_logits =
            g.add(g.matmul(last, param("head.prog.w")), g.constant(std::move(pmask)));
    }

    if (flags.world_model) {
        const S inv_sqrt_da = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dims.d_attn)));
        const int xhat =
            g.layer_norm(g.matmul(x, param("wm.w_in")), param("wm.ln.g"), param("wm.ln.b"));
        const int scores = g.mul_const(g.matmul_nt(param("wm.q_spa"), xhat), inv_sqrt_da);
        const int attn = g.softmax(scores);
        const int z = g.matmul(attn, xhat);
        const int fmat = g.matmul(z, param("wm.w_out"));  // (H*W) x d_sam
        out.feat_pred = g.reshape(g.transpose(fmat), dims.d_sam, dims.feat_cells());
    }
    return out;
}

template ForwardNodes<float> build_forward<float>(
    diff::Graph<float>&, const diff::ParamStore&, const ModelDims&, const std::vector<int>&,
    const HistoryContext&, int, const ForwardFlags&, std::map<std::string, int>*,
    const std::map<std::string, diff::Tensor<float>>*);
template ForwardNodes<double> build_forward<double>(
    diff::Graph<double>&, const diff::ParamStore&, const ModelDims&, const std::vector<int>&,
    const HistoryContext&, int, const ForwardFlags&, std::map<std::string, int>*,
    const std::map<std::string, diff::Tensor<double>>*);

PolicyRunner::PolicyRunner(const diff::ParamStore& params, ModelDims dims,
                           grammar::Instruction instr)
    : params_(params),
      dims_(dims),
      instr_(std::move(instr)),
      tokens_(grammar::Vocabulary::instance().tokenize(instr_.text)),
      hist_(dims.history) {}

PolicyOutput PolicyRunner::step(const worldsim::Observation& obs, int t, bool want_feature) {
    hist_.push(obs, t);
    diff::GraphF g;
    ForwardFlags flags;
    flags.world_model = want_feature;
    const auto nodes =
        build_forward(g, params_, dims_, tokens_, hist_, instr_.num_subgoals(), flags);

    PolicyOutput out;
    out.x = g.val(nodes.x);
    const auto& al = g.val(nodes.action_logits);
    int best = 0;
    for (int i = 0; i < 4; ++i) {
        out.action_logits[static_cast<std::size_t>(i)] = al.data[static_cast<std::size_t>(i)];
        if (al.data[static_cast<std::size_t>(i)] > al.data[static_cast<std::size_t>(best)])
            best = i;
    }
    out.action = static_cast<worldsim::NavAction>(best);

    const auto& pl = g.val(nodes.prog_logits);
    out.progress_logits.assign(pl.data.begin(), pl.data.end());
    int pk = 0;
    for (int i = 1; i < pl.cols; ++i)
        if (pl.data[static_cast<std::size_t>(i)] > pl.data[static_cast<std::size_t>(pk)]) pk = i;
    out.progress_k = pk;
    out.progress_text = grammar::prefix_text(instr_, pk);

    if (want_feature) {
        const auto& f = g.val(nodes.feat_pred);
        out.predicted = featmap::FeatureMap::zeros(dims_.d_sam, dims_.feat_h, dims_.feat_w);
        std::copy(f.data.begin(), f.data.end(), out.predicted.data.begin());
    }
    return out;
}

float wm_loss(const featmap::FeatureMap& predicted, const featmap::FeatureMap& target) {
    if (predicted.d_sam != target.d_sam || predicted.height != target.height ||
        predicted.width != target.width)
        throw InputError("wm_loss: feature map dims differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.data.size(); ++i) {
        const double d = static_cast<double>(predicted.data[i]) - target.data[i];
        acc += d * d;
    }
    return static_cast<float>(acc / static_cast<double>(predicted.data.size()));
}

RetroProbeResult retro_probe(const featmap::FeatureMap& predicted,
                             const std::vector<featmap::FeatureMap>& history_features) {
    RetroProbeResult out;
    out.similarity.reserve(history_features.size());
    for (const auto& f : history_features)
        out.similarity.push_back(featmap::cosine_similarity(predicted, f));
    out.argmax = 0;
    for (std::size_t i = 1; i < out.similarity.size(); ++i)
        if (out.similarity[i] > out.similarity[static_cast<std::size_t>(out.argmax)])
            out.argmax = static_cast<int>(i);
    return out;
}

}  // namespace navlab::policy
