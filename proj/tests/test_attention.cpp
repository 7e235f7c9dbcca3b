#include <cmath>
#include <filesystem>
#include <fstream>

#include "ccnn/attention.hpp"
#include "ccnn/errors.hpp"
#include "ccnn/grad_check.hpp"
#include "ccnn/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ccnn;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

PredictionParams random_prediction(int d_h, int d_c, int d_e, int vocab, Rng& rng,
                                   double scale = 0.5, bool requires_grad = false) {
    PredictionParams p;
    p.w_attn = random_tensor({d_h, d_c}, rng, scale, requires_grad);
    p.w_concept = random_tensor({d_h, d_e}, rng, scale, requires_grad);
    p.bias = random_tensor({d_h}, rng, scale, requires_grad);
    p.w_out = random_tensor({vocab, d_h}, rng, scale, requires_grad);
    return p;
}

}  // namespace

TEST_CASE("attend with U=0 averages the grid uniformly") {
    Rng rng(301);
    const int n = 6, d_c = 4, d_e = 3, length = 5;
    Tensor concepts = random_tensor({length, d_e}, rng);
    Tensor grid = random_tensor({n, d_c}, rng);
    AttendResult result = attend(concepts, grid, Tensor::zeros({d_e, d_c}));
    for (int j = 0; j < length; ++j) {
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(result.weights.at(j, i) - 1.0 / n) < 1e-15);
        }
        for (int c = 0; c < d_c; ++c) {
            double mean = 0.0;
            for (int i = 0; i < n; ++i) mean += grid.at(i, c);
            mean /= n;
            CHECK(std::abs(result.features.at(j, c) - mean) < 1e-12);
        }
    }
}

TEST_CASE("attend with a single grid position returns that vector") {
    Rng rng(302);
    Tensor concepts = random_tensor({3, 4}, rng);
    Tensor grid = random_tensor({1, 5}, rng);
    Tensor u = random_tensor({4, 5}, rng);
    AttendResult result = attend(concepts, grid, u);
    for (int j = 0; j < 3; ++j) {
        CHECK(result.weights.at(j, 0) == 1.0);
        for (int c = 0; c < 5; ++c) CHECK(result.features.at(j, c) == grid.at(0, c));
    }
}

TEST_CASE("attend reproduces the analytically forced two-cell case") {
    Tensor concepts = Tensor::from({1, 1}, {1.0});
    Tensor grid = Tensor::from({2, 1}, {std::log(2.0), 0.0});
    Tensor u = Tensor::from({1, 1}, {1.0});
    AttendResult result = attend(concepts, grid, u);
    CHECK(result.weights.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(result.weights.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(result.features.at(0, 0) == doctest::Approx(2.0 / 3.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("attend rejects mismatched shapes") {
    CHECK_THROWS_AS(attend(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}), Tensor::zeros({3, 4})),
                    DimensionError);
}

TEST_CASE("attention columns are stochastic for random inputs") {
    Rng rng(303);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(9));
        const int length = 1 + static_cast<int>(rng.below(6));
        const int d_c = 1 + static_cast<int>(rng.below(5));
        const int d_e = 1 + static_cast<int>(rng.below(5));
        AttendResult result = attend(random_tensor({length, d_e}, rng, 2.0),
                                     random_tensor({n, d_c}, rng, 2.0),
                                     random_tensor({d_e, d_c}, rng, 2.0));
        for (int j = 0; j < length; ++j) {
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                const double w = result.weights.at(j, i);
                CHECK(w >= 0.0);
                sum += w;
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("permuting grid positions permutes weights and keeps features") {
    Rng rng(304);
    const int n = 7, d_c = 4, d_e = 5, length = 3;
    Tensor concepts = random_tensor({length, d_e}, rng);
    Tensor grid = random_tensor({n, d_c}, rng);
    Tensor u = random_tensor({d_e, d_c}, rng);
    AttendResult base = attend(concepts, grid, u);

    std::vector<int> perm = {3, 0, 6, 1, 5, 2, 4};
    Tensor shuffled = Tensor::zeros({n, d_c});
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < d_c; ++c) shuffled.at(i, c) = grid.at(perm[static_cast<std::size_t>(i)], c);
    }
    AttendResult moved = attend(concepts, shuffled, u);
    for (int j = 0; j < length; ++j) {
        for (int i = 0; i < n; ++i) {
            CHECK(moved.weights.at(j, i) ==
                  doctest::Approx(base.weights.at(j, perm[static_cast<std::size_t>(i)])).epsilon(1e-12));
        }
        for (int c = 0; c < d_c; ++c) {
            CHECK(moved.features.at(j, c) == doctest::Approx(base.features.at(j, c)).epsilon(1e-9));
        }
    }
}

TEST_CASE("scaling U preserves each column argmax") {
    Rng rng(305);
    const int n = 8, d_c = 3, d_e = 4, length = 6;
    Tensor concepts = random_tensor({length, d_e}, rng);
    Tensor grid = random_tensor({n, d_c}, rng);
    Tensor u = random_tensor({d_e, d_c}, rng);
    Tensor u_scaled = Tensor::from(u.shape(), u.values());
    for (double& v : u_scaled.values()) v *= 4.5;
    AttendResult base = attend(concepts, grid, u);
    AttendResult scaled = attend(concepts, grid, u_scaled);
    for (int j = 0; j < length; ++j) {
        auto argmax = [&](const Tensor& w) {
            int best = 0;
            for (int i = 1; i < n; ++i) {
                if (w.at(j, i) > w.at(j, best)) best = i;
            }
            return best;
        };
        CHECK(argmax(base.weights) == argmax(scaled.weights));
    }
}

TEST_CASE("predict with zero weights is uniform") {
    const int vocab = 7;
    PredictionParams p;
    p.w_attn = Tensor::zeros({4, 3});
    p.w_concept = Tensor::zeros({4, 2});
    p.bias = Tensor::zeros({4});
    p.w_out = Tensor::zeros({vocab, 4});
    Tensor logits = predict_logits(p, Tensor::full({2, 3}, 0.7), Tensor::full({2, 2}, -0.3));
    Tensor probs = softmax_lastdim(logits);
    for (int j = 0; j < 2; ++j) {
        for (int v = 0; v < vocab; ++v) {
            CHECK(probs.at(j, v) == doctest::Approx(1.0 / vocab).epsilon(1e-12));
        }
    }
}

TEST_CASE("predict reproduces forced logits") {
    // V=2; arrange U^p so logits are [ln 3, 0].
    PredictionParams p;
    p.w_attn = Tensor::zeros({1, 1});
    p.w_concept = Tensor::from({1, 1}, {1.0});
    p.bias = Tensor::zeros({1});
    p.w_out = Tensor::from({2, 1}, {std::log(3.0), 0.0});
    Tensor logits = predict_logits(p, Tensor::zeros({1, 1}), Tensor::from({1, 1}, {1.0}));
    Tensor probs = softmax_lastdim(logits);
    CHECK(probs.at(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(probs.at(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("predict output is a strictly positive distribution") {
    Rng rng(306);
    PredictionParams p = random_prediction(6, 4, 5, 9, rng, 1.5);
    Tensor probs = softmax_lastdim(
        predict_logits(p, random_tensor({4, 4}, rng, 2.0), random_tensor({4, 5}, rng, 2.0)));
    for (int j = 0; j < 4; ++j) {
        double sum = 0.0;
        for (int v = 0; v < 9; ++v) {
            CHECK(probs.at(j, v) > 0.0);
            sum += probs.at(j, v);
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("predict composed with cross-entropy passes grad check") {
    Rng rng(307);
    const int vocab = 6, d_h = 5, d_c = 3, d_e = 4, length = 3;
    PredictionParams p = random_prediction(d_h, d_c, d_e, vocab, rng, 0.6, true);
    Tensor a = random_tensor({length, d_c}, rng, 1.0, true);
    Tensor c = random_tensor({length, d_e}, rng, 1.0, true);
    const std::vector<int> targets = {2, 0, 5};
    auto f = [&]() {
        Tensor probs = softmax_lastdim(predict_logits(p, a, c));
        Tensor picked = take_per_row(probs, targets);
        return scale(sum_all(log_elem(clamp_min(picked, 1e-12))), -1.0);
    };
    auto report = grad_check(f,
                             {{"w_attn", p.w_attn},
                              {"w_concept", p.w_concept},
                              {"bias", p.bias},
                              {"w_out", p.w_out},
                              {"a", a},
                              {"c", c}},
                             1e-5, 1e-4);
    CHECK_MESSAGE(report.pass, report.summary());
}

TEST_CASE("attention export writes six-decimal blocks and round trips") {
    fs::path dir = fs::temp_directory_path() / "ccnn_test_attn";
    fs::remove_all(dir);
    fs::create_directories(dir);

    AttentionMaps maps;
    maps.side = 4;
    maps.labels = {"red"};
    maps.weights = {std::vector<double>(16, 1.0 / 16.0)};
    export_attention(maps, dir / "uniform.txt");

    std::ifstream in(dir / "uniform.txt");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t hits = 0;
    std::size_t pos = 0;
    while ((pos = content.find("0.062500", pos)) != std::string::npos) {
        ++hits;
        pos += 8;
    }
    CHECK(hits == 16);

    Rng rng(308);
    AttentionMaps random_maps;
    random_maps.side = 3;
    for (int j = 0; j < 4; ++j) {
        random_maps.labels.push_back("w" + std::to_string(j));
        std::vector<double> w(9);
        double sum = 0.0;
        for (double& v : w) {
            v = rng.uniform(0.0, 1.0);
            sum += v;
        }
        for (double& v : w) v /= sum;
        random_maps.weights.push_back(std::move(w));
    }
    export_attention(random_maps, dir / "random.txt");
    AttentionMaps parsed = parse_attention_file(dir / "random.txt");
    REQUIRE(parsed.weights.size() == 4);
    CHECK(parsed.side == 3);
    CHECK(parsed.labels == random_maps.labels);
    for (std::size_t j = 0; j < 4; ++j) {
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(std::abs(parsed.weights[j][i] - random_maps.weights[j][i]) < 1e-6);
        }
    }
}

TEST_CASE("attention export rejects unwritable paths") {
    AttentionMaps maps;
    maps.side = 1;
    maps.labels = {"x"};
    maps.weights = {{1.0}};
    CHECK_THROWS_AS(export_attention(maps, "/nonexistent_dir_ccnn/file.txt"), IoError);
}
