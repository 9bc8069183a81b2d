#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "navlab/worldsim.hpp"

namespace navlab::featmap {

// Dense spatial feature map, channel-first (d_sam x H x W), row-major.
struct FeatureMap {
    int d_sam = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float& at(int c, int row, int col) {
        return data[(static_cast<std::size_t>(c) * height + row) * width + col];
    }
    float at(int c, int row, int col) const {
        return data[(static_cast<std::size_t>(c) * height + row) * width + col];
    }
    std::size_t size() const { return data.size(); }

    static FeatureMap zeros(int d_sam, int height, int width) {
        FeatureMap f;
        f.d_sam = d_sam;
        f.height = height;
        f.width = width;
        f.data.assign(static_cast<std::size_t>(d_sam) * height * width, 0.0f);
        return f;
    }
};

// One L2-normalized embedding vector per landmark category, generated from a
// seeded pseudo-random draw. Seeds are bumped until all pairwise distances
// exceed 0.1 so the table is usable as a set of distinguishable targets.
class CategoryEmbeddingTable {
public:
    static CategoryEmbeddingTable make(int d_sam, int num_categories, std::uint64_t seed);

    int d_sam() const { return d_sam_; }
    int num_categories() const { return num_categories_; }
    const float* row(int category) const {
        return data_.data() + static_cast<std::size_t>(category) * d_sam_;
    }

private:
    int d_sam_ = 0;
    int num_categories_ = 0;
    std::vector<float> data_;
};

// Deterministic stand-in for a frozen feature extractor: each ray carrying a
// landmark category splats that category's embedding, scaled by
// (1 - depth/max_range), into the cell indexed by (depth row, ray column).
FeatureMap extract(const worldsim::Observation& obs, const CategoryEmbeddingTable& table,
                   int height, int width, double max_range);

// Binary file format: magic "DAFM", three little-endian u32 dims
// (d_sam, H, W), then d_sam*H*W little-endian f32 values.
void save_dafm(const std::string& path, const FeatureMap& map);
FeatureMap load_dafm(const std::string& path);

// Spatial-averaged cosine similarity between flattened maps; 0 when either
// norm is zero.
double cosine_similarity(const FeatureMap& a, const FeatureMap& b);

}  // namespace navlab::featmap
