#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccnn/tensor.hpp"

namespace ccnn {

// Dot-product visual attention. scores[j][i] = concepts[j]^T U grid[i];
// weights are the softmax over grid positions; features[j] is the weighted
// sum of grid vectors.
struct AttendResult {
    Tensor features;  // [L x D_c]
    Tensor weights;   // [L x N], rows sum to 1
};

AttendResult attend(const Tensor& concepts, const Tensor& grid_vectors, const Tensor& u);

// One-hidden-layer prediction head: leaky_relu(W_a a + W_c c + b) followed
// by a bias-free softmax projection.
struct PredictionParams {
    Tensor w_attn;  // [D_h x D_c]
    Tensor w_concept;  // [D_h x D_e]
    Tensor bias;  // [D_h]
    Tensor w_out;  // [V x D_h]
};

Tensor predict_logits(const PredictionParams& params, const Tensor& attn_features,
                      const Tensor& concepts);

// Attention weights for a decoded caption: one d x d map per emitted word
// (per level when hierarchical).
struct AttentionMaps {
    int side = 0;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> weights;  // one row of N = side*side values per position
};

// Plain-text export: one block per position, the position's label on its
// own line followed by side rows of side weights at 6 decimal places.
void export_attention(const AttentionMaps& maps, const std::filesystem::path& path);

AttentionMaps parse_attention_file(const std::filesystem::path& path);

}  // namespace ccnn
