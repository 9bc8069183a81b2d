#include "navlab/feature_oracle.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "navlab/errors.hpp"
#include "navlab/rng.hpp"

namespace navlab::featmap {

CategoryEmbeddingTable CategoryEmbeddingTable::make(int d_sam, int num_categories,
                                                    std::uint64_t seed) {
    if (d_sam <= 0 || num_categories <= 0)
        throw InputError("embedding table dims must be positive");
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng rng(seed + attempt);
        std::vector<float> data(static_cast<std::size_t>(d_sam) * num_categories);
        for (int c = 0; c < num_categories; ++c) {
            double norm2 = 0.0;
            for (int k = 0; k < d_sam; ++k) {
                const double v = rng.gauss();
                data[static_cast<std::size_t>(c) * d_sam + k] = static_cast<float>(v);
                norm2 += v * v;
            }
            const float inv = static_cast<float>(1.0 / std::sqrt(std::max(norm2, 1e-30)));
            for (int k = 0; k < d_sam; ++k)
                data[static_cast<std::size_t>(c) * d_sam + k] *= inv;
        }
        bool ok = true;
        for (int a = 0; a < num_categories && ok; ++a) {
            for (int b = a + 1; b < num_categories && ok; ++b) {
                double d2 = 0.0;
                for (int k = 0; k < d_sam; ++k) {
                    const double d = static_cast<double>(data[static_cast<std::size_t>(a) * d_sam + k]) -
                                     data[static_cast<std::size_t>(b) * d_sam + k];
                    d2 += d * d;
                }
                if (d2 <= 0.1 * 0.1) ok = false;
            }
        }
        if (ok) {
            CategoryEmbeddingTable t;
            t.d_sam_ = d_sam;
            t.num_categories_ = num_categories;
            t.data_ = std::move(data);
            return t;
        }
    }
}

FeatureMap extract(const worldsim::Observation& obs, const CategoryEmbeddingTable& table,
                   int height, int width, double max_range) {
    FeatureMap out = FeatureMap::zeros(table.d_sam(), height, width);
    const int num_rays = static_cast<int>(obs.rays.size());
    for (int i = 0; i < num_rays; ++i) {
        const auto& ray = obs.rays[static_cast<std::size_t>(i)];
        if (ray.category < 0) continue;
        if (ray.category >= table.num_categories())
            throw InputError("observation category outside embedding table");
        const double rel = ray.depth / max_range;
        const int row = std::min(static_cast<int>(rel * height), height - 1);
        const int col = std::min(static_cast<int>(static_cast<double>(i) / num_rays * width),
                                 width - 1);
        const float scale = static_cast<float>(1.0 - rel);
        const float* emb = table.row(ray.category);
        for (int c = 0; c < out.d_sam; ++c) out.at(c, row, col) += scale * emb[c];
    }
    return out;
}

void save_dafm(const std::string& path, const FeatureMap& map) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw NavError("cannot open for writing: " + path);
    f.write("DAFM", 4);
    const std::uint32_t dims[3] = {static_cast<std::uint32_t>(map.d_sam),
                                   static_cast<std::uint32_t>(map.height),
                                   static_cast<std::uint32_t>(map.width)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(map.data.data()),
            static_cast<std::streamsize>(map.data.size() * sizeof(float)));
    if (!f) throw NavError("write failed: " + path);
}

FeatureMap load_dafm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw NavError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "DAFM", 4) != 0)
        throw InputError("not a DAFM file: " + path);
    std::uint32_t dims[3];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw InputError("truncated DAFM header: " + path);
    FeatureMap map = FeatureMap::zeros(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                                       static_cast<int>(dims[2]));
    f.read(reinterpret_cast<char*>(map.data.data()),
           static_cast<std::streamsize>(map.data.size() * sizeof(float)));
    if (!f) throw InputError("truncated DAFM payload: " + path);
    return map;
}

double cosine_similarity(const FeatureMap& a, const FeatureMap& b) {
    if (a.size() != b.size()) throw InputError("feature map dims differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        dot += static_cast<double>(a.data[i]) * b.data[i];
        na += static_cast<double>(a.data[i]) * a.data[i];
        nb += static_cast<double>(b.data[i]) * b.data[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace navlab::featmap
