#include "ccnn/model.hpp"

#include <sstream>

#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"
#include "ccnn/rng.hpp"

namespace ccnn {

void ModelConfig::validate() const {
    if (vocab_size <= Vocabulary::kNumReserved) {
        throw ConfigError("model: vocab_size " + std::to_string(vocab_size) + " is too small");
    }
    if (depth < 1) throw ConfigError("model: depth must be >= 1, got " + std::to_string(depth));
    if (kernel < 2) {
        throw ConfigError("model: kernel width must be >= 2 for a finite stack, got " +
                          std::to_string(kernel));
    }
    if (embed_dim < 1 || grid_channels < 1 || hidden_dim < 1) {
        throw ConfigError("model: dimensions must be positive");
    }
    if (skip_every < 0) throw ConfigError("model: skip_every must be >= 0");
    if (has_encoder) {
        if (image_size < 8 || image_size % 8 != 0) {
            throw ConfigError("model: image_size " + std::to_string(image_size) +
                              " must be a positive multiple of 8");
        }
        if (enc_c1 < 1 || enc_c2 < 1) throw ConfigError("model: encoder channels must be positive");
    }
}

Tensor& ModelParams::add(const std::string& name, Shape shape, ParamKind kind, bool vision) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    ParamEntry entry;
    entry.name = name;
    entry.tensor = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    entry.kind = kind;
    entry.vision = vision;
    entries_.push_back(std::move(entry));
    return entries_.back().tensor;
}

Tensor* ModelParams::find(const std::string& name) {
    for (auto& e : entries_) {
        if (e.name == name) return &e.tensor;
    }
    return nullptr;
}

const Tensor* ModelParams::find(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e.tensor;
    }
    return nullptr;
}

long long ModelParams::total_size() const {
    long long total = 0;
    for (const auto& e : entries_) total += static_cast<long long>(e.tensor.size());
    return total;
}

namespace {

// Single source of truth for the parameter set; build_model and
// describe_model both walk this enumeration.
void enumerate_params(const ModelConfig& c,
                      const std::function<void(const std::string&, Shape, ParamKind, bool)>& emit) {
    emit("embed.table", {c.vocab_size, c.embed_dim}, ParamKind::Embedding, false);
    for (int l = 1; l <= c.depth; ++l) {
        const std::string prefix = "lang.l" + std::to_string(l) + ".";
        emit(prefix + "conv_a.w", {c.kernel, c.embed_dim, c.embed_dim}, ParamKind::Weight, false);
        emit(prefix + "conv_a.b", {c.embed_dim}, ParamKind::Bias, false);
        emit(prefix + "conv_b.w", {c.kernel, c.embed_dim, c.embed_dim}, ParamKind::Weight, false);
        emit(prefix + "conv_b.b", {c.embed_dim}, ParamKind::Bias, false);
        if (c.hierarchical) {
            emit(prefix + "proj_a.w", {c.grid_channels, c.embed_dim}, ParamKind::Weight, false);
            emit(prefix + "proj_b.w", {c.grid_channels, c.embed_dim}, ParamKind::Weight, false);
            emit("attn.l" + std::to_string(l) + ".u", {c.embed_dim, c.grid_channels},
                 ParamKind::Weight, false);
        }
    }
    emit("attn.top.u", {c.embed_dim, c.grid_channels}, ParamKind::Weight, false);
    emit("pred.w_attn", {c.hidden_dim, c.grid_channels}, ParamKind::Weight, false);
    emit("pred.w_concept", {c.hidden_dim, c.embed_dim}, ParamKind::Weight, false);
    emit("pred.bias", {c.hidden_dim}, ParamKind::Bias, false);
    emit("pred.w_out", {c.vocab_size, c.hidden_dim}, ParamKind::Weight, false);
    if (c.has_encoder) {
        const int plan[4] = {3, c.enc_c1, c.enc_c2, c.grid_channels};
        for (int l = 1; l <= 3; ++l) {
            const std::string prefix = "vision.l" + std::to_string(l) + ".";
            emit(prefix + "w", {3, 3, plan[l - 1], plan[l]}, ParamKind::Weight, true);
            emit(prefix + "b", {plan[l]}, ParamKind::Bias, true);
        }
    }
}

}  // namespace

CaptionerModel build_model(const ModelConfig& config) {
    config.validate();
    CaptionerModel model;
    model.config = config;
    enumerate_params(config, [&](const std::string& name, Shape shape, ParamKind kind, bool vision) {
        model.params.add(name, std::move(shape), kind, vision);
    });

    model.language.embedding = *model.params.find("embed.table");
    model.language.kernel_width = config.kernel;
    model.language.skip_every = config.skip_every;
    model.language.hierarchical = config.hierarchical;
    for (int l = 1; l <= config.depth; ++l) {
        const std::string prefix = "lang.l" + std::to_string(l) + ".";
        GluLayerParams layer;
        layer.kernel_a = *model.params.find(prefix + "conv_a.w");
        layer.bias_a = *model.params.find(prefix + "conv_a.b");
        layer.kernel_b = *model.params.find(prefix + "conv_b.w");
        layer.bias_b = *model.params.find(prefix + "conv_b.b");
        if (config.hierarchical) {
            layer.proj_a = *model.params.find(prefix + "proj_a.w");
            layer.proj_b = *model.params.find(prefix + "proj_b.w");
            layer.attn_u = *model.params.find("attn.l" + std::to_string(l) + ".u");
        }
        model.language.layers.push_back(std::move(layer));
    }
    model.top_attention_u = *model.params.find("attn.top.u");
    model.prediction.w_attn = *model.params.find("pred.w_attn");
    model.prediction.w_concept = *model.params.find("pred.w_concept");
    model.prediction.bias = *model.params.find("pred.bias");
    model.prediction.w_out = *model.params.find("pred.w_out");
    if (config.has_encoder) {
        for (int l = 1; l <= 3; ++l) {
            const std::string prefix = "vision.l" + std::to_string(l) + ".";
            model.vision.weights.push_back(*model.params.find(prefix + "w"));
            model.vision.biases.push_back(*model.params.find(prefix + "b"));
        }
    }
    return model;
}

void quantize_to_f32(Tensor& t) {
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
}

void init_params(CaptionerModel& model, double stddev, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& entry : model.params.entries()) {
        if (entry.kind == ParamKind::Bias) {
            std::fill(entry.tensor.values().begin(), entry.tensor.values().end(), 0.0);
        } else {
            for (double& v : entry.tensor.values()) v = rng.truncated_normal(stddev);
        }
        quantize_to_f32(entry.tensor);
        entry.tensor.zero_grad();
    }
}

ForwardResult captioner_forward(const CaptionerModel& model, std::span<const int> input_tokens,
                                const Tensor& grid_vectors, const ForwardOptions& options) {
    if (grid_vectors.rank() != 2 || grid_vectors.dim(1) != model.config.grid_channels) {
        throw DimensionError("captioner_forward: grid " + shape_str(grid_vectors.shape()) +
                             " does not match D_c=" + std::to_string(model.config.grid_channels));
    }
    LanguageTrace trace = forward_language(model.language, input_tokens, &grid_vectors,
                                           options.keep_activations);
    AttendResult top = attend(trace.concepts, grid_vectors, model.top_attention_u);
    ForwardResult result;
    result.logits = predict_logits(model.prediction, top.features, trace.concepts);
    result.probs = softmax_lastdim(result.logits);
    result.concepts = trace.concepts;
    if (options.keep_attention) {
        result.top_weights = top.weights;
        result.level_weights = std::move(trace.level_weights);
    }
    if (options.keep_activations) result.activations = std::move(trace.activations);
    return result;
}

FeatureGrid model_encode(const CaptionerModel& model, const Image& image) {
    if (!model.config.has_encoder) {
        throw ConfigError("model_encode: model was built without a vision encoder");
    }
    if (image.width != model.config.image_size || image.height != model.config.image_size) {
        throw ConfigError("model_encode: image " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + " does not match configured size " +
                          std::to_string(model.config.image_size));
    }
    return encode(image_to_tensor(image), model.vision);
}

IncrementalState::IncrementalState(const CaptionerModel& model, Tensor grid_vectors)
    : model_(model), grid_(std::move(grid_vectors)) {
    history_.resize(model.language.layers.size());
}

Tensor IncrementalState::step(int token) {
    const auto& lang = model_.language;
    const int k = lang.kernel_width;
    const int d_e = model_.config.embed_dim;
    const int token_arr[1] = {token};
    Tensor column = embed_tokens(lang.embedding, token_arr);  // [1 x D_e]

    last_level_weights_.clear();
    std::vector<Tensor> ladder;  // h^0..h^l for this position (for skip connections)
    ladder.push_back(column);

    for (std::size_t l = 0; l < lang.layers.size(); ++l) {
        const auto& layer = lang.layers[l];
        auto& past = history_[l];

        // Window of the last k input columns, zero-padded at the front; the
        // final row of a width-k causal conv over it equals position j of
        // the batched conv.
        Tensor window = Tensor::zeros({k, d_e});
        const int have = static_cast<int>(past.size());
        for (int t = 0; t < k - 1; ++t) {
            const int src = have - (k - 1) + t;
            if (src < 0) continue;
            for (int c = 0; c < d_e; ++c) {
                window.at(t, c) = past[static_cast<std::size_t>(src)].at(0, c);
            }
        }
        for (int c = 0; c < d_e; ++c) window.at(k - 1, c) = column.at(0, c);

        Tensor lin_full = causal_conv1d(window, layer.kernel_a, layer.bias_a);
        Tensor gate_full = causal_conv1d(window, layer.kernel_b, layer.bias_b);
        Tensor lin_row = Tensor::zeros({1, d_e});
        Tensor gate_row = Tensor::zeros({1, d_e});
        for (int c = 0; c < d_e; ++c) {
            lin_row.at(0, c) = lin_full.at(k - 1, c);
            gate_row.at(0, c) = gate_full.at(k - 1, c);
        }
        if (lang.hierarchical) {
            AttendResult level = attend(column, grid_, layer.attn_u);
            last_level_weights_.push_back(level.weights);
            lin_row = add(lin_row, matmul(level.features, layer.proj_a));
            gate_row = add(gate_row, matmul(level.features, layer.proj_b));
        }
        Tensor next = elementwise_mul(lin_row, sigmoid(gate_row));

        past.push_back(column);
        if (static_cast<int>(past.size()) > k - 1) past.erase(past.begin());

        const int layer_number = static_cast<int>(l) + 1;
        if (lang.skip_every > 0 && layer_number % lang.skip_every == 0 &&
            layer_number - lang.skip_every >= 0) {
            next = add(next, ladder[static_cast<std::size_t>(layer_number - lang.skip_every)]);
        }
        column = next;
        ladder.push_back(column);
    }

    AttendResult top = attend(column, grid_, model_.top_attention_u);
    last_top_weights_ = top.weights;
    return predict_logits(model_.prediction, top.features, column);
}

ParamCountReport describe_model(const ModelConfig& config) {
    config.validate();
    ParamCountReport report;
    auto bucket = [&report](const std::string& module) -> long long& {
        for (auto& [name, count] : report.per_module) {
            if (name == module) return count;
        }
        report.per_module.emplace_back(module, 0);
        return report.per_module.back().second;
    };
    enumerate_params(config, [&](const std::string& name, Shape shape, ParamKind, bool) {
        const long long n = static_cast<long long>(shape_numel(shape));
        std::string module;
        if (name.rfind("embed.", 0) == 0) module = "embedding";
        else if (name.rfind("lang.", 0) == 0) module = "language";
        else if (name.rfind("attn.", 0) == 0) module = "attention";
        else if (name.rfind("pred.", 0) == 0) module = "prediction";
        else module = "vision";
        bucket(module) += n;
        report.total += n;
    });
    report.receptive_field_positions = receptive_field(config.depth, config.kernel);
    return report;
}

std::string format_describe(const ParamCountReport& report) {
    std::ostringstream os;
    for (const auto& [module, count] : report.per_module) {
        os << module << " " << count << "\n";
    }
    os << "total " << report.total << "\n";
    os << "receptive field " << report.receptive_field_positions << "\n";
    return os.str();
}

}  // namespace ccnn
