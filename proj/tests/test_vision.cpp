#include <filesystem>
#include <fstream>

#include "ccnn/errors.hpp"
#include "ccnn/grad_check.hpp"
#include "ccnn/ops.hpp"
#include "ccnn/synthetic.hpp"
#include "ccnn/vision.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ccnn;
using testutil::random_tensor;
namespace fs = std::filesystem;

namespace {

VisionParams random_vision_params(int c1, int c2, int out, Rng& rng, double scale = 0.3,
                                  bool requires_grad = false) {
    VisionParams params;
    const int plan[4] = {3, c1, c2, out};
    for (int layer = 0; layer < 3; ++layer) {
        params.weights.push_back(random_tensor({3, 3, plan[layer], plan[layer + 1]}, rng, scale,
                                               requires_grad));
        params.biases.push_back(random_tensor({plan[layer + 1]}, rng, scale, requires_grad));
    }
    return params;
}

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("ccnn_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("encode produces the expected grid geometry") {
    Rng rng(101);
    VisionParams params = random_vision_params(6, 8, 5, rng);
    Tensor image = random_tensor({32, 32, 3}, rng, 0.5);
    FeatureGrid grid = encode(image, params);
    CHECK(grid.side == 4);
    CHECK(grid.channels == 5);
    CHECK(grid.vectors.dim(0) == 16);
    CHECK(grid.vectors.dim(1) == 5);

    FeatureGrid again = encode(image, params);
    CHECK(testutil::values_equal(grid.vectors, again.vectors));
}

TEST_CASE("encode rejects sides not divisible by 8") {
    Rng rng(102);
    VisionParams params = random_vision_params(4, 4, 4, rng);
    std::vector<double> values(20 * 20 * 3, 0.0);
    CHECK_THROWS_AS(encode(Tensor::from({20, 20, 3}, values), params), ConfigError);
}

TEST_CASE("all-zero image maps to identical vectors at every position") {
    Rng rng(103);
    VisionParams params = random_vision_params(5, 6, 4, rng, 0.4);
    FeatureGrid grid = encode(Tensor::zeros({16, 16, 3}), params);
    for (int i = 1; i < grid.vectors.dim(0); ++i) {
        for (int c = 0; c < grid.channels; ++c) {
            CHECK(grid.vectors.at(i, c) == grid.vectors.at(0, c));
        }
    }
    // Nonzero biases must show through: the grid is not all zeros.
    bool any_nonzero = false;
    for (double v : grid.vectors.values()) any_nonzero |= v != 0.0;
    CHECK(any_nonzero);
}

TEST_CASE("gradients flow through the encoder") {
    Rng rng(104);
    VisionParams params = random_vision_params(3, 3, 3, rng, 0.4, true);
    Tensor image = random_tensor({8, 8, 3}, rng, 0.5, true);
    auto f = [&]() {
        FeatureGrid grid = encode(image, params);
        Tensor squared = elementwise_mul(grid.vectors, grid.vectors);
        return sum_all(squared);
    };
    std::vector<std::pair<std::string, Tensor>> checked = {{"image", image}};
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        checked.emplace_back("w" + std::to_string(l), params.weights[l]);
        checked.emplace_back("b" + std::to_string(l), params.biases[l]);
    }
    auto report = grad_check(f, checked, 1e-5, 1e-4);
    CHECK_MESSAGE(report.pass, report.summary());
}

TEST_CASE("feature-grid files round trip bit-exactly") {
    auto dir = temp_dir("fgrd");
    Rng rng(105);
    FeatureGrid grid;
    grid.side = 3;
    grid.channels = 7;
    grid.vectors = random_tensor({9, 7}, rng);
    // Values must be f32-representable for a bit-exact round trip.
    for (double& v : grid.vectors.values()) v = static_cast<double>(static_cast<float>(v));
    save_feature_grid(dir / "grid.fgrd", grid);
    FeatureGrid back = load_feature_grid(dir / "grid.fgrd");
    CHECK(back.side == 3);
    CHECK(back.channels == 7);
    CHECK(testutil::values_equal(back.vectors, grid.vectors));
}

TEST_CASE("feature-grid loader accepts a d=14 Dc=512 file") {
    auto dir = temp_dir("fgrd_paper");
    FeatureGrid grid;
    grid.side = 14;
    grid.channels = 512;
    grid.vectors = Tensor::full({196, 512}, 0.25);
    save_feature_grid(dir / "paper.fgrd", grid);
    FeatureGrid back = load_feature_grid(dir / "paper.fgrd");
    CHECK(back.vectors.dim(0) == 196);
    CHECK(back.vectors.dim(1) == 512);
}

TEST_CASE("feature-grid loader reports corrupt files with offsets") {
    auto dir = temp_dir("fgrd_bad");
    {
        std::ofstream out(dir / "magic.fgrd", std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_WITH_AS(load_feature_grid(dir / "magic.fgrd"),
                         doctest::Contains("bad magic at offset 0"), FormatError);
    {
        FeatureGrid grid;
        grid.side = 4;
        grid.channels = 2;
        grid.vectors = Tensor::full({16, 2}, 1.0);
        save_feature_grid(dir / "short.fgrd", grid);
        fs::resize_file(dir / "short.fgrd", 40);  // header + partial payload
    }
    CHECK_THROWS_AS(load_feature_grid(dir / "short.fgrd"), FormatError);
}

TEST_CASE("zeroing the top-left quadrant only disturbs cells whose field intersects it") {
    Rng rng(106);
    VisionParams params = random_vision_params(4, 5, 4, rng, 0.5);
    auto scenes = generate_synthetic({.seed = 21, .n = 1, .image_size = 32, .grid = 4});
    Tensor image = image_to_tensor(scenes[0].image);
    FeatureGrid base = encode(image, params);

    Tensor masked = Tensor::from(image.shape(), image.values());
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            for (int c = 0; c < 3; ++c) masked.at(y, x, c) = 0.0;
        }
    }
    FeatureGrid moved = encode(masked, params);

    bool any_changed = false;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const PixelRect rect = encoder_receptive_rect(r, c, 32);
            const bool intersects = rect.x0 <= 15 && rect.y0 <= 15;
            bool changed = false;
            for (int ch = 0; ch < 4; ++ch) {
                if (base.vectors.at(r * 4 + c, ch) != moved.vectors.at(r * 4 + c, ch)) changed = true;
            }
            if (!intersects) CHECK_FALSE(changed);
            any_changed |= changed;
        }
    }
    CHECK(any_changed);
}
