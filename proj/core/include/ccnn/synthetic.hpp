#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ccnn/data.hpp"

namespace ccnn {

// Deterministic two-object scene generator. Each scene holds two objects
// with distinct (color, shape) pairs placed at distinct grid cells; the
// caption is a pure function of the scene (objects are ordered by shape
// then color, and the relation is derived from the cell coordinates with
// the vertical direction taking precedence).
struct SyntheticConfig {
    std::uint64_t seed = 0;
    int n = 1;
    int image_size = 32;
    int grid = 4;
};

struct SyntheticExample {
    DataRecord record;
    Image image;
};

extern const std::vector<std::string> kShapeNames;  // circle, square, triangle
extern const std::vector<std::string> kColorNames;  // red, green, blue

// Relation word(s) between the first and second object.
std::string relation_between(const SceneObject& first, const SceneObject& second);

// Full caption for an ordered object pair.
std::string caption_for(const SceneObject& first, const SceneObject& second);

std::vector<SyntheticExample> generate_synthetic(const SyntheticConfig& config);

// Renders one object pair into an image (exposed for tests).
Image render_scene(const SceneObject& first, const SceneObject& second, int image_size, int grid);

// Writes <out>/captions.jsonl and <out>/images/<id>.imgr.
void write_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& out_dir);

}  // namespace ccnn
