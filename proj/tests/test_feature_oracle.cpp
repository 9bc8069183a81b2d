#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "navlab/errors.hpp"
#include "navlab/feature_oracle.hpp"

using namespace navlab;
using namespace navlab::featmap;
using worldsim::Observation;

namespace {

Observation empty_obs(int rays = 24, double max_range = 5.0) {
    Observation obs;
    obs.rays.assign(static_cast<std::size_t>(rays), {max_range, -1});
    return obs;
}

}  // namespace

TEST_CASE("category embeddings are unit norm and well separated") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    for (int c = 0; c < 16; ++c) {
        double n2 = 0;
        for (int k = 0; k < 16; ++k) n2 += static_cast<double>(table.row(c)[k]) * table.row(c)[k];
        CHECK(n2 == doctest::Approx(1.0).epsilon(1e-5));
    }
    for (int a = 0; a < 16; ++a) {
        for (int b = a + 1; b < 16; ++b) {
            double d2 = 0;
            for (int k = 0; k < 16; ++k) {
                const double d = static_cast<double>(table.row(a)[k]) - table.row(b)[k];
                d2 += d * d;
            }
            CHECK(d2 > 0.1 * 0.1);
        }
    }
}

TEST_CASE("extract of an empty observation is all zeros") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    const auto fm = extract(empty_obs(), table, 8, 8, 5.0);
    for (const float v : fm.data) CHECK(v == 0.0f);
}

TEST_CASE("extract splats a single landmark into the hand-computed cell") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    auto obs = empty_obs(24);
    // Center-ish ray index 12, category 5 at depth 2.5 of max range 5.
    obs.rays[12] = {2.5, 5};
    const auto fm = extract(obs, table, 8, 8, 5.0);
    // row = floor(2.5/5*8) = 4, col = floor(12/24*8) = 4, scale = 0.5.
    int nonzero_cells = 0;
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
            bool any = false;
            for (int ch = 0; ch < 16; ++ch) any = any || fm.at(ch, r, c) != 0.0f;
            if (any) {
                ++nonzero_cells;
                CHECK(r == 4);
                CHECK(c == 4);
            }
        }
    }
    CHECK(nonzero_cells == 1);
    for (int ch = 0; ch < 16; ++ch)
        CHECK(fm.at(ch, 4, 4) == doctest::Approx(0.5f * table.row(5)[ch]).epsilon(1e-6));
}

TEST_CASE("closer landmarks produce larger magnitude") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    auto near = empty_obs();
    near.rays[0] = {1.0, 2};
    auto far = empty_obs();
    far.rays[0] = {4.0, 2};
    const auto fm_near = extract(near, table, 8, 8, 5.0);
    const auto fm_far = extract(far, table, 8, 8, 5.0);
    double n_near = 0, n_far = 0;
    for (const float v : fm_near.data) n_near += static_cast<double>(v) * v;
    for (const float v : fm_far.data) n_far += static_cast<double>(v) * v;
    CHECK(n_near > n_far);
}

TEST_CASE("maps differing in one ray's category differ somewhere") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    auto a = empty_obs();
    a.rays[5] = {2.0, 3};
    auto b = a;
    b.rays[5].category = 4;
    const auto fa = extract(a, table, 8, 8, 5.0);
    const auto fb = extract(b, table, 8, 8, 5.0);
    bool differ = false;
    for (std::size_t i = 0; i < fa.data.size(); ++i) differ = differ || fa.data[i] != fb.data[i];
    CHECK(differ);
}

TEST_CASE("paper-scale dims are accepted") {
    const auto table = CategoryEmbeddingTable::make(256, 16, 7);
    auto obs = empty_obs();
    obs.rays[3] = {1.25, 1};
    const auto fm = extract(obs, table, 64, 64, 5.0);
    CHECK(fm.d_sam == 256);
    CHECK(fm.height == 64);
    CHECK(fm.width == 64);
    CHECK(fm.data.size() == 256u * 64u * 64u);
}

TEST_CASE("DAFM round trip is bit exact") {
    const auto table = CategoryEmbeddingTable::make(16, 16, 7);
    auto obs = empty_obs();
    obs.rays[2] = {0.8, 9};
    obs.rays[17] = {3.3, 12};
    const auto fm = extract(obs, table, 8, 8, 5.0);
    const auto path = std::filesystem::temp_directory_path() / "navlab_test.dafm";
    save_dafm(path.string(), fm);
    const auto back = load_dafm(path.string());
    CHECK(back.d_sam == fm.d_sam);
    CHECK(back.height == fm.height);
    CHECK(back.width == fm.width);
    CHECK(back.data == fm.data);
    // Magic bytes.
    FILE* f = std::fopen(path.string().c_str(), "rb");
    char magic[4];
    REQUIRE(std::fread(magic, 1, 4, f) == 4);
    std::fclose(f);
    CHECK(std::string(magic, 4) == "DAFM");
    std::filesystem::remove(path);
}

TEST_CASE("cosine similarity basics") {
    auto a = FeatureMap::zeros(2, 2, 2);
    auto b = FeatureMap::zeros(2, 2, 2);
    CHECK(cosine_similarity(a, b) == 0.0);  // zero norms
    a.data[0] = 1.0f;
    b.data[1] = 1.0f;
    CHECK(cosine_similarity(a, b) == 0.0);  // orthogonal
    b = a;
    CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
}
