#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "navlab/diffcore.hpp"
#include "navlab/errors.hpp"
#include "navlab/paramstore.hpp"
#include "navlab/rng.hpp"

using namespace navlab;
using namespace navlab::diff;

namespace {

TensorD random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
    TensorD t(r, c);
    for (auto& v : t.data) v = rng.gauss() * scale;
    return t;
}

// Central finite differences against the analytic gradient for a scalar loss
// built from a set of leaf tensors.
void gradcheck(const std::vector<TensorD>& leaves,
               const std::function<int(GraphD&, const std::vector<int>&)>& build,
               double h = 1e-5, double tol = 1e-4) {
    GraphD g;
    std::vector<int> ids;
    for (const auto& t : leaves) ids.push_back(g.leaf(t));
    const int loss = build(g, ids);
    g.backward(loss);

    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const auto analytic = g.grad(ids[li]);
        for (std::size_t i = 0; i < leaves[li].data.size(); ++i) {
            auto eval = [&](double delta) {
                GraphD g2;
                std::vector<int> ids2;
                for (std::size_t k = 0; k < leaves.size(); ++k) {
                    TensorD t = leaves[k];
                    if (k == li) t.data[i] += delta;
                    ids2.push_back(g2.leaf(t));
                }
                return g2.val(build(g2, ids2)).data[0];
            };
            const double fd = (eval(h) - eval(-h)) / (2 * h);
            const double a = analytic.data[i];
            const double denom = std::max({std::abs(a), std::abs(fd), 1e-6});
            CHECK(std::abs(a - fd) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
    GraphF g;
    const int x = g.constant(TensorF(1, 2, {0.0f, 0.0f}));
    const auto& y = g.val(g.softmax(x));
    CHECK(y.data[0] == doctest::Approx(0.5));
    CHECK(y.data[1] == doctest::Approx(0.5));

    Rng rng(3);
    TensorF r(5, 7);
    for (auto& v : r.data) v = static_cast<float>(rng.gauss() * 3);
    GraphF g2;
    const auto& s = g2.val(g2.softmax(g2.constant(r)));
    for (int row = 0; row < 5; ++row) {
        float sum = 0;
        for (int c = 0; c < 7; ++c) {
            const float v = s.at(row, c);
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0f).epsilon(1e-6));
    }
}

TEST_CASE("layer_norm of a constant row is zero with unit gamma, zero beta") {
    GraphF g;
    const int x = g.constant(TensorF(1, 4, {2.5f, 2.5f, 2.5f, 2.5f}));
    const int gamma = g.constant(TensorF(1, 4, {1, 1, 1, 1}));
    const int beta = g.constant(TensorF(1, 4, {0, 0, 0, 0}));
    const auto& y = g.val(g.layer_norm(x, gamma, beta));
    for (const float v : y.data) CHECK(v == doctest::Approx(0.0f));
}

TEST_CASE("matmul matches a naive triple loop") {
    Rng rng(11);
    TensorF a(3, 4), b(4, 2);
    for (auto& v : a.data) v = static_cast<float>(rng.gauss());
    for (auto& v : b.data) v = static_cast<float>(rng.gauss());
    GraphF g;
    const auto& c = g.val(g.matmul(g.constant(a), g.constant(b)));
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 2; ++j) {
            float acc = 0;
            for (int k = 0; k < 4; ++k) acc += a.at(i, k) * b.at(k, j);
            CHECK(c.at(i, j) == doctest::Approx(acc).epsilon(1e-6));
        }
    }
}

TEST_CASE("cross entropy of uniform logits over 4 classes is ln 4") {
    GraphF g;
    const int logits = g.constant(TensorF(1, 4, {0.3f, 0.3f, 0.3f, 0.3f}));
    CHECK(g.val(g.cross_entropy(logits, 2)).data[0] ==
          doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("mse basics") {
    GraphF g;
    const int a = g.constant(TensorF(2, 2, {1, 1, 1, 1}));
    const int b = g.constant(TensorF(2, 2, {0, 0, 0, 0}));
    CHECK(g.val(g.mse(a, b)).data[0] == doctest::Approx(1.0f));
    CHECK(g.val(g.mse(a, a)).data[0] == 0.0f);
    CHECK_THROWS_AS(g.mse(a, g.constant(TensorF(1, 2, {0, 0}))), InputError);
}

TEST_CASE("gradient of mse(x, x) w.r.t. x is zero") {
    GraphD g;
    const int x = g.leaf(TensorD(2, 3, {1, 2, 3, 4, 5, 6}));
    g.backward(g.mse(x, x));
    for (const double v : g.grad(x).data) CHECK(v == 0.0);
}

TEST_CASE("gradient of sum is all ones") {
    GraphD g;
    const int x = g.leaf(TensorD(2, 2, {1, 2, 3, 4}));
    g.backward(g.sum(x));
    for (const double v : g.grad(x).data) CHECK(v == 1.0);
}

TEST_CASE("repeated backward calls reproduce identical gradients") {
    Rng rng(5);
    GraphF g;
    const int x = g.leaf(TensorF(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
    const int w = g.leaf(TensorF(3, 3, {.1f, .2f, .3f, .4f, .5f, .6f, .7f, .8f, .9f}));
    const int loss = g.sum(g.gelu(g.matmul(x, w)));
    g.backward(loss);
    const auto g1 = g.grad(w);
    g.backward(loss);
    const auto g2 = g.grad(w);
    CHECK(g1.data == g2.data);
}

TEST_CASE("per-primitive gradients match central finite differences") {
    Rng rng(123);

    SUBCASE("matmul") {
        gradcheck({random_tensor(3, 4, rng), random_tensor(4, 2, rng)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      return g.sum(g.matmul(ids[0], ids[1]));
                  });
    }
    SUBCASE("matmul_nt") {
        gradcheck({random_tensor(3, 4, rng), random_tensor(5, 4, rng)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      return g.sum(g.gelu(g.matmul_nt(ids[0], ids[1])));
                  });
    }
    SUBCASE("add and mul_const") {
        gradcheck({random_tensor(2, 5, rng), random_tensor(2, 5, rng)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      return g.sum(g.mul_const(g.add(ids[0], ids[1]), 0.37));
                  });
    }
    SUBCASE("layer_norm") {
        gradcheck({random_tensor(3, 6, rng), random_tensor(1, 6, rng, 0.5),
                   random_tensor(1, 6, rng, 0.5)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      return g.sum(g.layer_norm(ids[0], ids[1], ids[2]));
                  },
                  1e-5, 2e-4);
    }
    SUBCASE("softmax") {
        gradcheck({random_tensor(3, 5, rng)}, [](GraphD& g, const std::vector<int>& ids) {
            // Weighted sum so the gradient is not identically zero.
            GraphD::NodeId sm = g.softmax(ids[0]);
            TensorD w(3, 5);
            for (std::size_t i = 0; i < w.data.size(); ++i)
                w.data[i] = 0.1 * static_cast<double>(i + 1);
            return g.sum(g.mul_const(g.add(sm, g.mul_const(g.add(sm, g.constant(w)), 1.0)), 0.5));
        });
    }
    SUBCASE("gelu") {
        gradcheck({random_tensor(2, 6, rng)}, [](GraphD& g, const std::vector<int>& ids) {
            return g.sum(g.gelu(ids[0]));
        });
    }
    SUBCASE("transpose, reshape, slice, concat, gather") {
        gradcheck({random_tensor(3, 4, rng), random_tensor(2, 4, rng)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      const int cat = g.concat_rows({ids[0], ids[1]});  // 5x4
                      const int gat = g.gather_rows(cat, {4, 0, 2, 2});
                      const int tr = g.transpose(gat);                  // 4x4
                      const int rs = g.reshape(tr, 2, 8);
                      return g.sum(g.gelu(g.slice_rows(rs, 0, 1)));
                  });
    }
    SUBCASE("cross_entropy") {
        gradcheck({random_tensor(1, 6, rng)}, [](GraphD& g, const std::vector<int>& ids) {
            return g.cross_entropy(ids[0], 3);
        });
    }
    SUBCASE("mse") {
        gradcheck({random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
                  [](GraphD& g, const std::vector<int>& ids) {
                      return g.mse(ids[0], ids[1]);
                  });
    }
}

TEST_CASE("softmax of a weighted mixture matches a hand computation") {
    // Two-token attention: q row attends over two keys.
    GraphF g;
    const int q = g.constant(TensorF(1, 2, {1.0f, 0.0f}));
    const int k = g.constant(TensorF(2, 2, {1.0f, 0.0f, 0.0f, 1.0f}));
    const int v = g.constant(TensorF(2, 2, {2.0f, 0.0f, 0.0f, 4.0f}));
    const float scale = 1.0f / std::sqrt(2.0f);
    const int att = g.softmax(g.mul_const(g.matmul_nt(q, k), scale));
    const auto& z = g.val(g.matmul(att, v));
    const double s = 1.0 / std::sqrt(2.0);
    const double e0 = std::exp(s), e1 = std::exp(0.0);
    const double a0 = e0 / (e0 + e1), a1 = e1 / (e0 + e1);
    CHECK(z.data[0] == doctest::Approx(2.0 * a0).epsilon(1e-6));
    CHECK(z.data[1] == doctest::Approx(4.0 * a1).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters unchanged with zero gradient from rest") {
    ParamStore store;
    store.add("w", TensorF(1, 3, {1.0f, -2.0f, 3.0f}));
    AdamConfig cfg;
    cfg.base_lr = 1e-2;
    cfg.total_steps = 100;
    std::map<std::string, std::vector<float>> grads{{"w", {0.0f, 0.0f, 0.0f}}};
    store.adam_step(grads, 1, cfg);
    CHECK(store.value("w").data == std::vector<float>{1.0f, -2.0f, 3.0f});
}

TEST_CASE("learning rate hits base exactly at the end of warmup") {
    AdamConfig cfg;
    cfg.base_lr = 3e-3;
    cfg.total_steps = 100;
    cfg.warmup_frac = 0.03;
    CHECK(schedule_lr(cfg, 3) == doctest::Approx(cfg.base_lr));
    CHECK(schedule_lr(cfg, 1) == doctest::Approx(cfg.base_lr / 3));
    CHECK(schedule_lr(cfg, 100) == doctest::Approx(0.0).epsilon(1e-9));
    // Monotone decay after warmup.
    for (int s = 4; s < 100; ++s) CHECK(schedule_lr(cfg, s) <= schedule_lr(cfg, s - 1) + 1e-12);
}

TEST_CASE("adam converges on a quadratic") {
    ParamStore store;
    store.add("w", TensorF(1, 1, {0.0f}));
    AdamConfig cfg;
    cfg.base_lr = 0.1;
    cfg.total_steps = 200;
    for (int step = 1; step <= 200; ++step) {
        const float w = store.value("w").data[0];
        std::map<std::string, std::vector<float>> grads{{"w", {2.0f * (w - 3.0f)}}};
        store.adam_step(grads, step, cfg);
    }
    CHECK(std::abs(store.value("w").data[0] - 3.0f) < 0.05f);
}

TEST_CASE("adam faults on non-finite gradients naming the parameter") {
    ParamStore store;
    store.add("w", TensorF(1, 1, {0.0f}));
    AdamConfig cfg;
    std::map<std::string, std::vector<float>> grads{
        {"w", {std::numeric_limits<float>::quiet_NaN()}}};
    try {
        store.adam_step(grads, 1, cfg);
        FAIL("expected TrainingFault");
    } catch (const TrainingFault& e) {
        CHECK(std::string(e.what()).find("w") != std::string::npos);
    }
}

TEST_CASE("checkpoint save/load round trip") {
    ParamStore store;
    Rng rng(17);
    TensorF a(4, 6), b(1, 3);
    for (auto& v : a.data) v = static_cast<float>(rng.gauss());
    for (auto& v : b.data) v = static_cast<float>(rng.gauss());
    store.add("layer.w", a);
    store.add("bias", b);
    const auto path = (std::filesystem::temp_directory_path() / "navlab_test.ckpt").string();
    store.save(path);
    const auto back = ParamStore::load(path);
    CHECK(back.value("layer.w").data == a.data);
    CHECK(back.value("bias").data == b.data);
    CHECK(back.names() == store.names());
    std::filesystem::remove(path);
}

TEST_CASE("backward requires a scalar loss") {
    GraphF g;
    const int x = g.leaf(TensorF(2, 2, {1, 2, 3, 4}));
    CHECK_THROWS_AS(g.backward(x), InputError);
}
