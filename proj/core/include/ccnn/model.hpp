#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ccnn/data.hpp"
#include "ccnn/language.hpp"
#include "ccnn/vision.hpp"

namespace ccnn {

struct ModelConfig {
    int vocab_size = 0;
    int embed_dim = 48;      // D_e
    int grid_channels = 32;  // D_c
    int hidden_dim = 128;    // prediction-module hidden size
    int depth = 6;
    int kernel = 3;
    int skip_every = 0;
    bool hierarchical = false;
    bool has_encoder = true;
    int image_size = 32;
    int enc_c1 = 16;
    int enc_c2 = 32;

    int grid_side() const { return image_size / 8; }
    void validate() const;
};

enum class ParamKind { Weight, Bias, Embedding };

struct ParamEntry {
    std::string name;
    Tensor tensor;
    ParamKind kind = ParamKind::Weight;
    bool vision = false;
};

// Every learned tensor of the captioner, in a fixed registration order that
// also fixes the checkpoint layout.
class ModelParams {
public:
    Tensor& add(const std::string& name, Shape shape, ParamKind kind, bool vision = false);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;
    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    long long total_size() const;

private:
    std::vector<ParamEntry> entries_;
};

struct CaptionerModel {
    ModelConfig config;
    ModelParams params;
    LanguageParams language;  // shares storage with `params`
    Tensor top_attention_u;
    PredictionParams prediction;
    VisionParams vision;
};

CaptionerModel build_model(const ModelConfig& config);

// Truncated-normal weights (stddev, clipped at 2 stddev by resampling),
// zero biases, rounded to float32-representable values so checkpoints
// round-trip bit-exactly.
void init_params(CaptionerModel& model, double stddev, std::uint64_t seed);

void quantize_to_f32(Tensor& t);

struct ForwardOptions {
    bool keep_activations = false;
    bool keep_attention = false;
};

struct ForwardResult {
    Tensor logits;  // [L x V]
    Tensor probs;   // [L x V]
    Tensor concepts;
    Tensor top_weights;                // [L x N]
    std::vector<Tensor> level_weights; // hierarchical injection maps, bottom-up
    std::vector<Tensor> activations;
};

ForwardResult captioner_forward(const CaptionerModel& model, std::span<const int> input_tokens,
                                const Tensor& grid_vectors, const ForwardOptions& options = {});

// Runs the vision encoder; differentiable when called under an active tape.
FeatureGrid model_encode(const CaptionerModel& model, const Image& image);

// Feed-forward generation state: per-layer ring of the last k-1 input
// columns. Feeding the same tokens reproduces the batched forward's
// per-position logits exactly.
class IncrementalState {
public:
    IncrementalState(const CaptionerModel& model, Tensor grid_vectors);

    // Appends one token and returns the logits row for the new position.
    Tensor step(int token);

    const Tensor& last_top_weights() const { return last_top_weights_; }
    const std::vector<Tensor>& last_level_weights() const { return last_level_weights_; }

private:
    const CaptionerModel& model_;
    Tensor grid_;
    std::vector<std::vector<Tensor>> history_;  // history_[l] = recent inputs to layer l (1 x D_e each)
    Tensor last_top_weights_;
    std::vector<Tensor> last_level_weights_;
};

struct ParamCountReport {
    std::vector<std::pair<std::string, long long>> per_module;
    long long total = 0;
    long long receptive_field_positions = 0;
};

ParamCountReport describe_model(const ModelConfig& config);
std::string format_describe(const ParamCountReport& report);

}  // namespace ccnn
