#include "ccnn/language.hpp"

#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"

namespace ccnn {

Tensor embed_tokens(const Tensor& table, std::span<const int> tokens) {
    return gather_rows(table, tokens);
}

Tensor glu_layer(const Tensor& h_prev, const GluLayerParams& layer,
                 const std::optional<Tensor>& attn_inject) {
    if (attn_inject && !layer.hierarchical()) {
        throw ConfigError("glu_layer: attention injection given but projections are absent");
    }
    Tensor linear = causal_conv1d(h_prev, layer.kernel_a, layer.bias_a);
    Tensor gate = causal_conv1d(h_prev, layer.kernel_b, layer.bias_b);
    if (attn_inject) {
        linear = add(linear, matmul(*attn_inject, layer.proj_a));
        gate = add(gate, matmul(*attn_inject, layer.proj_b));
    }
    return elementwise_mul(linear, sigmoid(gate));
}

LanguageTrace forward_language(const LanguageParams& params, std::span<const int> tokens,
                               const Tensor* grid_vectors, bool keep_activations) {
    if (params.layers.empty()) throw ConfigError("forward_language: depth 0");
    if (params.hierarchical && grid_vectors == nullptr) {
        throw ConfigError("forward_language: hierarchical attention requires a feature grid");
    }

    LanguageTrace trace;
    Tensor h = embed_tokens(params.embedding, tokens);
    const bool retain = keep_activations || params.skip_every > 0;
    std::vector<Tensor> history;
    if (retain) history.push_back(h);

    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        const auto& layer = params.layers[l];
        std::optional<Tensor> inject;
        if (params.hierarchical) {
            AttendResult level = attend(h, *grid_vectors, layer.attn_u);
            inject = level.features;
            trace.level_weights.push_back(level.weights);
        }
        h = glu_layer(h, layer, inject);
        const int layer_number = static_cast<int>(l) + 1;
        if (params.skip_every > 0 && layer_number % params.skip_every == 0 &&
            layer_number - params.skip_every >= 0) {
            h = add(h, history[static_cast<std::size_t>(layer_number - params.skip_every)]);
        }
        if (retain) history.push_back(h);
    }

    trace.concepts = h;
    if (keep_activations) trace.activations = std::move(history);
    return trace;
}

long long receptive_field(int depth, int kernel_width) {
    if (depth < 1 || kernel_width < 1) {
        throw ConfigError("receptive_field: depth and kernel width must be >= 1");
    }
    return static_cast<long long>(kernel_width - 1) * depth + 1;
}

}  // namespace ccnn
