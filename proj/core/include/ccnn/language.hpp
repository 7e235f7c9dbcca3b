#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ccnn/attention.hpp"
#include "ccnn/tensor.hpp"

namespace ccnn {

// One gated convolution layer: two causal convolutions of width k over the
// previous activations, optionally fed per-position attention features via
// the width-1 projections, gated as linear * sigmoid(gate).
struct GluLayerParams {
    Tensor kernel_a;  // [k x D_e x D_e]
    Tensor bias_a;    // [D_e]
    Tensor kernel_b;
    Tensor bias_b;
    Tensor proj_a;  // [D_c x D_e], hierarchical mode only
    Tensor proj_b;
    Tensor attn_u;  // [D_e x D_c] over the previous level's concepts, hierarchical mode only
    bool hierarchical() const { return proj_a.defined(); }
};

struct LanguageParams {
    Tensor embedding;  // [V x D_e]
    std::vector<GluLayerParams> layers;
    int kernel_width = 0;
    int skip_every = 0;  // 0 = off; otherwise identity residual after every s-th layer
    bool hierarchical = false;
};

Tensor embed_tokens(const Tensor& table, std::span<const int> tokens);

Tensor glu_layer(const Tensor& h_prev, const GluLayerParams& layer,
                 const std::optional<Tensor>& attn_inject);

struct LanguageTrace {
    Tensor concepts;                   // [L x D_e] top-level output
    std::vector<Tensor> activations;   // h^0..h^depth when retained
    std::vector<Tensor> level_weights; // attention weights injected into layer l (hierarchical)
};

// Embeds the tokens and stacks the GLU layers. `grid_vectors` is required
// in hierarchical mode (attention features are computed from each level's
// concepts and fed into the next layer). Activations are retained only on
// request to bound memory.
LanguageTrace forward_language(const LanguageParams& params, std::span<const int> tokens,
                               const Tensor* grid_vectors, bool keep_activations = false);

// (k - 1) * depth + 1 consecutive positions.
long long receptive_field(int depth, int kernel_width);

}  // namespace ccnn
