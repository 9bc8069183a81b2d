#include "navlab/paramstore.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "navlab/errors.hpp"

namespace navlab::diff {

double schedule_lr(const AdamConfig& cfg, int step_index) {
    const int warmup = std::max(1, static_cast<int>(std::lround(cfg.warmup_frac * cfg.total_steps)));
    if (step_index <= warmup)
        return cfg.base_lr * static_cast<double>(step_index) / warmup;
    const double denom = std::max(1, cfg.total_steps - warmup);
    const double progress = static_cast<double>(step_index - warmup) / denom;
    return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

void ParamStore::add(const std::string& name, TensorF init) {
    if (entries_.count(name)) throw InputError("duplicate parameter name: " + name);
    Entry e;
    e.m.assign(init.numel(), 0.0f);
    e.v.assign(init.numel(), 0.0f);
    e.value = std::move(init);
    entries_.emplace(name, std::move(e));
}

TensorF& ParamStore::value(const std::string& name) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw InputError("unknown parameter: " + name);
    return it->second.value;
}

const TensorF& ParamStore::value(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw InputError("unknown parameter: " + name);
    return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, entry] : entries_) out.push_back(name);
    return out;
}

void ParamStore::adam_step(const std::map<std::string, std::vector<float>>& grads, int step_index,
                           const AdamConfig& cfg) {
    // Validate before touching any state so a fault leaves the store intact.
    for (const auto& [name, g] : grads) {
        const auto it = entries_.find(name);
        if (it == entries_.end()) throw InputError("gradient for unknown parameter " + name);
        if (g.size() != it->second.value.numel())
            throw InputError("gradient size mismatch for parameter " + name);
        for (const float v : g) {
            if (!std::isfinite(v)) throw TrainingFault("non-finite gradient in parameter " + name);
        }
    }
    const double lr = schedule_lr(cfg, step_index);
    const double bc1 = 1.0 - std::pow(cfg.beta1, step_index);
    const double bc2 = 1.0 - std::pow(cfg.beta2, step_index);
    for (auto& [name, e] : entries_) {
        const auto git = grads.find(name);
        const std::vector<float>* g = git == grads.end() ? nullptr : &git->second;
        for (std::size_t i = 0; i < e.value.numel(); ++i) {
            const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
            const double m = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi;
            const double v = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi;
            e.m[i] = static_cast<float>(m);
            e.v[i] = static_cast<float>(v);
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            double upd = lr * mhat / (std::sqrt(vhat) + cfg.eps);
            if (cfg.weight_decay != 0.0) upd += lr * cfg.weight_decay * e.value.data[i];
            e.value.data[i] = static_cast<float>(e.value.data[i] - upd);
        }
    }
}

void ParamStore::save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["format"] = "navlab-checkpoint";
    manifest["tensors"] = nlohmann::json::array();
    for (const auto& [name, e] : entries_) {
        manifest["tensors"].push_back(
            {{"name", name}, {"rows", e.value.rows}, {"cols", e.value.cols}});
    }
    const std::string mtext = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NavError("cannot open checkpoint for writing: " + path);
    f.write("DACK", 4);
    const std::uint32_t version = 1;
    const std::uint32_t mlen = static_cast<std::uint32_t>(mtext.size());
    f.write(reinterpret_cast<const char*>(&version), 4);
    f.write(reinterpret_cast<const char*>(&mlen), 4);
    f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
    for (const auto& [name, e] : entries_) {
        f.write(reinterpret_cast<const char*>(e.value.data.data()),
                static_cast<std::streamsize>(e.value.numel() * sizeof(float)));
    }
    if (!f) throw NavError("checkpoint write failed: " + path);
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::string(magic, 4) != "DACK") throw InputError("not a checkpoint file: " + path);
    std::uint32_t version = 0, mlen = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&mlen), 4);
    if (!f || version != 1) throw InputError("unsupported checkpoint version");
    std::string mtext(mlen, '\0');
    f.read(mtext.data(), mlen);
    if (!f) throw InputError("truncated checkpoint manifest");
    const auto manifest = nlohmann::json::parse(mtext);
    ParamStore store;
    for (const auto& t : manifest.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        TensorF value(t.at("rows").get<int>(), t.at("cols").get<int>());
        f.read(reinterpret_cast<char*>(value.data.data()),
               static_cast<std::streamsize>(value.numel() * sizeof(float)));
        if (!f) throw InputError("truncated checkpoint payload at " + name);
        store.add(name, std::move(value));
    }
    return store;
}

std::size_t ParamStore::total_elements() const {
    std::size_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.numel();
    return n;
}

}  // namespace navlab::diff
