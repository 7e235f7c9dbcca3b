#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ccnn/data.hpp"
#include "ccnn/model.hpp"

namespace ccnn {

struct TrainConfig {
    double lambda = 1e-5;
    double base_lr = 1e-3;
    double vision_lr_multiplier = 0.01;
    long long decay_every = 50000;
    double decay_factor = 0.5;
    int batch_size = 10;
    long long max_steps = 10000;
    std::uint64_t seed = 1;
    double init_stddev = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long long eval_every = 200;
    int patience = 5;
    double stop_loss = 0.0;  // stop once validation per-token loss drops below; 0 = off
    int workers = 1;
    int max_len = 70;
    std::string checkpoint_path = "checkpoint.ccnn";

    void validate() const;
};

// Model hyperparameters plus training settings; this is what the config
// file ("key = value" lines) covers, with flags overriding.
struct FullConfig {
    ModelConfig model;
    TrainConfig train;
};

FullConfig parse_config_file(const std::filesystem::path& path, FullConfig base = {});
void apply_config_line(FullConfig& config, const std::string& key, const std::string& value);
std::string dump_config(const FullConfig& config);

// One trainable example: tokenized caption plus its visual source.
struct TrainingItem {
    std::string id;
    std::vector<int> tokens;
    std::optional<Image> image;
    std::optional<FeatureGrid> grid;
};

std::vector<TrainingItem> load_training_items(const Dataset& dataset, const Vocabulary& vocab,
                                              int max_len);

// Cross-entropy sum over one example's prediction positions (graph-building;
// differentiable). `inputs` and `targets` have equal length.
Tensor example_cross_entropy(const CaptionerModel& model, const Tensor& grid_vectors,
                             std::span<const int> inputs, std::span<const int> targets);

// Batch objective as a single graph: mean over rows of the per-sentence
// cross-entropy sum, plus (lambda/2) * sum of squared weight entries
// (biases and the embedding table excluded).
Tensor batch_loss(const CaptionerModel& model, const Batch& batch,
                  const std::vector<Tensor>& grids, double lambda);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long long step = 0;

    static AdamState zeros_like(const CaptionerModel& model);
};

double lr_at(const TrainConfig& config, long long step);

// One optimizer update from the gradients accumulated in the parameters.
// Vision-encoder parameters use base_lr * vision_lr_multiplier. Parameters
// and moments stay float32-representable so checkpoints are lossless.
void adam_step(CaptionerModel& model, AdamState& state, const TrainConfig& config);

struct EvalPoint {
    long long step = 0;
    double train_loss = 0.0;  // per-token cross-entropy over recent batches
    double val_loss = 0.0;    // per-token cross-entropy over the validation set
    double lr = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    long long steps_completed = 0;
    std::vector<EvalPoint> log;
    std::string stop_reason;
};

// Mean per-token cross-entropy of the model over a set of items (no
// regularization term), forward only.
double dataset_per_token_loss(const CaptionerModel& model, const std::vector<TrainingItem>& items,
                              int workers);

// Mini-batch training loop with the configured learning-rate schedule,
// periodic evaluation/checkpointing and validation-based early stopping.
// The batch schedule is a pure function of (seed, step) so a resumed run
// continues the exact trajectory.
TrainResult train(CaptionerModel& model, AdamState& adam, const std::vector<TrainingItem>& train_items,
                  const std::vector<TrainingItem>& val_items, const TrainConfig& config,
                  std::ostream* console, const std::filesystem::path& metrics_path = {});

}  // namespace ccnn
