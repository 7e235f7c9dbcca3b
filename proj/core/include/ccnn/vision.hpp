#pragma once

#include <filesystem>
#include <vector>

#include "ccnn/data.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

// d x d grid of channel vectors, stored as an [N x D_c] tensor with N = d*d,
// row-major by grid position.
struct FeatureGrid {
    int side = 0;
    int channels = 0;
    Tensor vectors;
};

// File format: magic "FGRD", d u32 LE, D_c u32 LE, then d*d*D_c f32 LE
// values ordered by grid position then channel.
FeatureGrid load_feature_grid(const std::filesystem::path& path);
void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid);

// [H x W x 3] tensor with pixel values scaled to [0, 1].
Tensor image_to_tensor(const Image& image);

// Fixed stack of three stride-2 3x3 convolutions with leaky-ReLU
// activations; spatial side shrinks by 8.
struct VisionParams {
    std::vector<Tensor> weights;  // [3 x 3 x C_in x C_out] each
    std::vector<Tensor> biases;   // [C_out] each
};

FeatureGrid encode(const Tensor& image_hwc, const VisionParams& params);

// Inclusive input pixel ranges feeding one grid cell, given the encoder's
// stride/kernel plan (replicate padding clamps at the borders).
struct PixelRect {
    int y0 = 0, y1 = 0, x0 = 0, x1 = 0;
};
PixelRect encoder_receptive_rect(int grid_row, int grid_col, int image_size);

}  // namespace ccnn
