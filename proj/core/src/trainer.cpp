#include "ccnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "ccnn/checkpoint.hpp"
#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"
#include "ccnn/parallel.hpp"

namespace ccnn {

void TrainConfig::validate() const {
    if (lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (decay_factor <= 0.0 || decay_factor > 1.0) {
        throw ConfigError("train: decay_factor must be in (0, 1]");
    }
    if (decay_every < 1) throw ConfigError("train: decay_every must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
    if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (workers < 1) throw ConfigError("train: workers must be >= 1");
    if (max_len < 1) throw ConfigError("train: max_len must be >= 1");
    if (init_stddev <= 0.0) throw ConfigError("train: init_stddev must be > 0");
}

namespace {

long long parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid integer '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid number '" + value + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    throw ConfigError("config key '" + key + "': invalid flag '" + value + "' (use 0/1)");
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

}  // namespace

void apply_config_line(FullConfig& c, const std::string& key, const std::string& value) {
    if (key == "vocab_size") c.model.vocab_size = static_cast<int>(parse_int(key, value));
    else if (key == "embed_dim") c.model.embed_dim = static_cast<int>(parse_int(key, value));
    else if (key == "grid_channels") c.model.grid_channels = static_cast<int>(parse_int(key, value));
    else if (key == "hidden_dim") c.model.hidden_dim = static_cast<int>(parse_int(key, value));
    else if (key == "depth") c.model.depth = static_cast<int>(parse_int(key, value));
    else if (key == "kernel") c.model.kernel = static_cast<int>(parse_int(key, value));
    else if (key == "skip_every") c.model.skip_every = static_cast<int>(parse_int(key, value));
    else if (key == "hierarchical") c.model.hierarchical = parse_bool(key, value);
    else if (key == "has_encoder") c.model.has_encoder = parse_bool(key, value);
    else if (key == "image_size") c.model.image_size = static_cast<int>(parse_int(key, value));
    else if (key == "enc_c1") c.model.enc_c1 = static_cast<int>(parse_int(key, value));
    else if (key == "enc_c2") c.model.enc_c2 = static_cast<int>(parse_int(key, value));
    else if (key == "lambda") c.train.lambda = parse_double(key, value);
    else if (key == "base_lr") c.train.base_lr = parse_double(key, value);
    else if (key == "vision_lr_multiplier") c.train.vision_lr_multiplier = parse_double(key, value);
    else if (key == "decay_every") c.train.decay_every = parse_int(key, value);
    else if (key == "decay_factor") c.train.decay_factor = parse_double(key, value);
    else if (key == "batch_size") c.train.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "max_steps") c.train.max_steps = parse_int(key, value);
    else if (key == "seed") c.train.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "init_stddev") c.train.init_stddev = parse_double(key, value);
    else if (key == "beta1") c.train.beta1 = parse_double(key, value);
    else if (key == "beta2") c.train.beta2 = parse_double(key, value);
    else if (key == "epsilon") c.train.epsilon = parse_double(key, value);
    else if (key == "eval_every") c.train.eval_every = parse_int(key, value);
    else if (key == "patience") c.train.patience = static_cast<int>(parse_int(key, value));
    else if (key == "stop_loss") c.train.stop_loss = parse_double(key, value);
    else if (key == "workers") c.train.workers = static_cast<int>(parse_int(key, value));
    else if (key == "max_len") c.train.max_len = static_cast<int>(parse_int(key, value));
    else if (key == "checkpoint_path") c.train.checkpoint_path = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

FullConfig parse_config_file(const std::filesystem::path& path, FullConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const std::size_t eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config file " + path.string() + " line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        apply_config_line(base, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    }
    return base;
}

std::string dump_config(const FullConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "vocab_size = " << c.model.vocab_size << "\n";
    os << "embed_dim = " << c.model.embed_dim << "\n";
    os << "grid_channels = " << c.model.grid_channels << "\n";
    os << "hidden_dim = " << c.model.hidden_dim << "\n";
    os << "depth = " << c.model.depth << "\n";
    os << "kernel = " << c.model.kernel << "\n";
    os << "skip_every = " << c.model.skip_every << "\n";
    os << "hierarchical = " << (c.model.hierarchical ? 1 : 0) << "\n";
    os << "has_encoder = " << (c.model.has_encoder ? 1 : 0) << "\n";
    os << "image_size = " << c.model.image_size << "\n";
    os << "enc_c1 = " << c.model.enc_c1 << "\n";
    os << "enc_c2 = " << c.model.enc_c2 << "\n";
    os << "lambda = " << c.train.lambda << "\n";
    os << "base_lr = " << c.train.base_lr << "\n";
    os << "vision_lr_multiplier = " << c.train.vision_lr_multiplier << "\n";
    os << "decay_every = " << c.train.decay_every << "\n";
    os << "decay_factor = " << c.train.decay_factor << "\n";
    os << "batch_size = " << c.train.batch_size << "\n";
    os << "max_steps = " << c.train.max_steps << "\n";
    os << "seed = " << c.train.seed << "\n";
    os << "init_stddev = " << c.train.init_stddev << "\n";
    os << "beta1 = " << c.train.beta1 << "\n";
    os << "beta2 = " << c.train.beta2 << "\n";
    os << "epsilon = " << c.train.epsilon << "\n";
    os << "eval_every = " << c.train.eval_every << "\n";
    os << "patience = " << c.train.patience << "\n";
    os << "stop_loss = " << c.train.stop_loss << "\n";
    os << "workers = " << c.train.workers << "\n";
    os << "max_len = " << c.train.max_len << "\n";
    os << "checkpoint_path = " << c.train.checkpoint_path << "\n";
    return os.str();
}

std::vector<TrainingItem> load_training_items(const Dataset& dataset, const Vocabulary& vocab,
                                              int max_len) {
    std::vector<TrainingItem> items;
    items.reserve(dataset.records.size());
    for (const auto& rec : dataset.records) {
        TrainingItem item;
        item.id = rec.id;
        item.tokens = tokenize(rec.caption, vocab, max_len);
        if (!rec.image_path.empty()) {
            item.image = read_imgr(dataset.resolve(rec.image_path));
        } else {
            item.grid = load_feature_grid(dataset.resolve(rec.features_path));
        }
        items.push_back(std::move(item));
    }
    return items;
}

Tensor example_cross_entropy(const CaptionerModel& model, const Tensor& grid_vectors,
                             std::span<const int> inputs, std::span<const int> targets) {
    if (inputs.size() != targets.size() || inputs.empty()) {
        throw DimensionError("example_cross_entropy: inputs/targets length mismatch");
    }
    ForwardResult fwd = captioner_forward(model, inputs, grid_vectors);
    Tensor picked = take_per_row(fwd.probs, targets);
    Tensor logp = log_elem(clamp_min(picked, 1e-12));
    return scale(sum_all(logp), -1.0);
}

namespace {

Tensor grid_tensor_for(const CaptionerModel& model, const TrainingItem& item) {
    if (item.grid) {
        if (item.grid->channels != model.config.grid_channels) {
            throw ConfigError("feature grid channels " + std::to_string(item.grid->channels) +
                              " do not match model grid_channels " +
                              std::to_string(model.config.grid_channels));
        }
        return item.grid->vectors;
    }
    if (!item.image) throw InputError("training item '" + item.id + "' has no visual source");
    return model_encode(model, *item.image).vectors;
}

struct RowView {
    std::span<const int> inputs;
    std::span<const int> targets;
};

}  // namespace

Tensor batch_loss(const CaptionerModel& model, const Batch& batch, const std::vector<Tensor>& grids,
                  double lambda) {
    if (static_cast<int>(grids.size()) != batch.rows) {
        throw DimensionError("batch_loss: " + std::to_string(grids.size()) + " grids for " +
                             std::to_string(batch.rows) + " rows");
    }
    Tensor total = Tensor::scalar(0.0);
    for (int b = 0; b < batch.rows; ++b) {
        const int npred = batch.prediction_count(b);
        if (npred == 0) throw InputError("batch_loss: row " + std::to_string(b) + " has no targets");
        const std::size_t base = static_cast<std::size_t>(b) * batch.cols;
        std::span<const int> inputs(batch.tokens.data() + base, static_cast<std::size_t>(npred));
        std::span<const int> targets(batch.targets.data() + base, static_cast<std::size_t>(npred));
        total = add(total, example_cross_entropy(model, grids[static_cast<std::size_t>(b)], inputs,
                                                 targets));
    }
    Tensor loss = scale(total, 1.0 / batch.rows);
    if (lambda > 0.0) {
        Tensor sq = Tensor::scalar(0.0);
        for (const auto& entry : model.params.entries()) {
            if (entry.kind != ParamKind::Weight) continue;
            sq = add(sq, sum_all(elementwise_mul(entry.tensor, entry.tensor)));
        }
        loss = add(loss, scale(sq, lambda / 2.0));
    }
    return loss;
}

AdamState AdamState::zeros_like(const CaptionerModel& model) {
    AdamState state;
    for (const auto& entry : model.params.entries()) {
        state.m.push_back(Tensor::zeros(entry.tensor.shape()));
        state.v.push_back(Tensor::zeros(entry.tensor.shape()));
    }
    return state;
}

double lr_at(const TrainConfig& config, long long step) {
    const long long drops = step / config.decay_every;
    return config.base_lr * std::pow(config.decay_factor, static_cast<double>(drops));
}

void adam_step(CaptionerModel& model, AdamState& state, const TrainConfig& config) {
    auto& entries = model.params.entries();
    if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
        throw ConfigError("adam_step: moment state does not match parameter count");
    }
    const double lr = lr_at(config, state.step);
    const long long t = state.step + 1;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    for (std::size_t p = 0; p < entries.size(); ++p) {
        auto& entry = entries[p];
        const double lr_p = entry.vision ? lr * config.vision_lr_multiplier : lr;
        auto& theta = entry.tensor.values();
        auto& g = entry.tensor.grad();
        auto& m = state.m[p].values();
        auto& v = state.v[p].values();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double gi = g[i];
            if (!std::isfinite(gi)) {
                throw NumericError("adam_step: non-finite gradient in " + entry.name);
            }
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
            const double m_hat = m[i] / bias1;
            const double v_hat = v[i] / bias2;
            const double update = lr_p * m_hat / (std::sqrt(v_hat) + config.epsilon);
            theta[i] -= update;
            if (!std::isfinite(theta[i])) {
                throw NumericError("adam_step: non-finite value in " + entry.name);
            }
            theta[i] = static_cast<double>(static_cast<float>(theta[i]));
            m[i] = static_cast<double>(static_cast<float>(m[i]));
            v[i] = static_cast<double>(static_cast<float>(v[i]));
        }
        entry.tensor.zero_grad();
    }
    state.step = t;
}

double dataset_per_token_loss(const CaptionerModel& model, const std::vector<TrainingItem>& items,
                              int workers) {
    if (items.empty()) throw InputError("dataset_per_token_loss: empty item set");
    std::vector<double> ce(items.size(), 0.0);
    std::vector<long long> tokens(items.size(), 0);
    parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
        const auto& item = items[static_cast<std::size_t>(i)];
        const std::size_t n = item.tokens.size() - 1;
        std::span<const int> inputs(item.tokens.data(), n);
        std::span<const int> targets(item.tokens.data() + 1, n);
        Tensor grid = grid_tensor_for(model, item);
        ce[static_cast<std::size_t>(i)] =
            example_cross_entropy(model, grid, inputs, targets).item();
        tokens[static_cast<std::size_t>(i)] = static_cast<long long>(n);
    });
    double ce_sum = 0.0;
    long long token_sum = 0;
    for (std::size_t i = 0; i < ce.size(); ++i) {
        ce_sum += ce[i];
        token_sum += tokens[i];
    }
    return ce_sum / static_cast<double>(token_sum);
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, long long epoch) {
    // splitmix64-style mix so epoch orders are independent.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

TrainResult train(CaptionerModel& model, AdamState& adam, const std::vector<TrainingItem>& train_items,
                  const std::vector<TrainingItem>& val_items, const TrainConfig& config,
                  std::ostream* console, const std::filesystem::path& metrics_path) {
    config.validate();
    if (train_items.empty()) throw InputError("train: empty training set");
    if (val_items.empty()) throw InputError("train: empty validation set");

    std::vector<CaptionExample> schedule_examples;
    schedule_examples.reserve(train_items.size());
    for (std::size_t i = 0; i < train_items.size(); ++i) {
        CaptionExample ex;
        ex.id = train_items[i].id;
        ex.tokens = train_items[i].tokens;
        ex.record_index = static_cast<int>(i);
        schedule_examples.push_back(std::move(ex));
    }
    const long long batches_per_epoch =
        (static_cast<long long>(train_items.size()) + config.batch_size - 1) / config.batch_size;

    std::ofstream metrics;
    if (!metrics_path.empty()) {
        metrics.open(metrics_path, std::ios::app);
        if (!metrics) throw IoError("cannot open metrics log " + metrics_path.string());
    }

    TrainResult result;
    const auto wall_start = std::chrono::steady_clock::now();
    long long cached_epoch = -1;
    std::vector<Batch> batches;
    double running_ce = 0.0;
    long long running_tokens = 0;
    double best_val = std::numeric_limits<double>::infinity();
    int evals_since_best = 0;
    bool saved_at_current_step = false;

    auto save_now = [&](std::uint64_t step) {
        if (!config.checkpoint_path.empty()) {
            save_checkpoint(config.checkpoint_path, model, &adam, step);
        }
    };

    long long step = adam.step;
    for (; step < config.max_steps; ++step) {
        const long long epoch = step / batches_per_epoch;
        if (epoch != cached_epoch) {
            batches = make_batches(schedule_examples, config.batch_size,
                                   epoch_seed(config.seed, epoch));
            cached_epoch = epoch;
        }
        const Batch& batch = batches[static_cast<std::size_t>(step % batches_per_epoch)];
        const int rows = batch.rows;

        std::vector<GradMap> per_example(static_cast<std::size_t>(rows));
        std::vector<double> ce_values(static_cast<std::size_t>(rows), 0.0);
        std::vector<long long> token_counts(static_cast<std::size_t>(rows), 0);
        try {
            parallel_for(rows, config.workers, [&](int b) {
                const auto& item =
                    train_items[static_cast<std::size_t>(batch.example_index[static_cast<std::size_t>(b)])];
                const int npred = batch.prediction_count(b);
                const std::size_t base = static_cast<std::size_t>(b) * batch.cols;
                std::span<const int> inputs(batch.tokens.data() + base,
                                            static_cast<std::size_t>(npred));
                std::span<const int> targets(batch.targets.data() + base,
                                             static_cast<std::size_t>(npred));
                Tape tape;
                TapeScope scope(tape);
                Tensor grid = grid_tensor_for(model, item);
                Tensor ce = example_cross_entropy(model, grid, inputs, targets);
                ce_values[static_cast<std::size_t>(b)] = ce.item();
                token_counts[static_cast<std::size_t>(b)] = npred;
                Tensor contribution = scale(ce, 1.0 / rows);
                tape.backward_into(contribution, per_example[static_cast<std::size_t>(b)]);
            });
        } catch (const NumericError& e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }

        // Merge per-example gradients in batch order, then the L2 term.
        for (int b = 0; b < rows; ++b) {
            for (auto& entry : model.params.entries()) {
                const auto* g = per_example[static_cast<std::size_t>(b)].find(entry.tensor);
                if (!g) continue;
                auto& acc = entry.tensor.grad();
                for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += (*g)[i];
            }
        }
        double l2_value = 0.0;
        if (config.lambda > 0.0) {
            for (auto& entry : model.params.entries()) {
                if (entry.kind != ParamKind::Weight) continue;
                auto& acc = entry.tensor.grad();
                const auto& theta = entry.tensor.values();
                double sq = 0.0;
                for (std::size_t i = 0; i < acc.size(); ++i) {
                    acc[i] += config.lambda * theta[i];
                    sq += theta[i] * theta[i];
                }
                l2_value += sq;
            }
            l2_value *= config.lambda / 2.0;
        }

        double ce_mean = 0.0;
        for (int b = 0; b < rows; ++b) {
            ce_mean += ce_values[static_cast<std::size_t>(b)];
            running_ce += ce_values[static_cast<std::size_t>(b)];
            running_tokens += token_counts[static_cast<std::size_t>(b)];
        }
        ce_mean /= rows;
        const double objective = ce_mean + l2_value;
        if (!std::isfinite(objective)) {
            throw NumericError("step " + std::to_string(step) + ": non-finite loss " +
                               std::to_string(objective));
        }

        try {
            adam_step(model, adam, config);
        } catch (const NumericError& e) {
            throw NumericError("step " + std::to_string(step) + ": " + e.what());
        }
        saved_at_current_step = false;

        const long long done = step + 1;
        if (done % config.eval_every == 0 || done == config.max_steps) {
            EvalPoint point;
            point.step = done;
            point.train_loss = running_tokens > 0 ? running_ce / static_cast<double>(running_tokens)
                                                  : 0.0;
            point.val_loss = dataset_per_token_loss(model, val_items, config.workers);
            point.lr = lr_at(config, step);
            point.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
            result.log.push_back(point);
            running_ce = 0.0;
            running_tokens = 0;

            std::ostringstream line;
            line.precision(10);
            line << point.step << '\t' << point.train_loss << '\t' << point.val_loss << '\t'
                 << point.lr << '\t' << point.wall_seconds;
            if (metrics.is_open()) metrics << line.str() << '\n' << std::flush;
            if (console) (*console) << line.str() << std::endl;

            save_now(static_cast<std::uint64_t>(done));
            saved_at_current_step = true;

            if (config.stop_loss > 0.0 && point.val_loss < config.stop_loss) {
                result.stop_reason = "validation loss below stop threshold";
                ++step;
                break;
            }
            if (point.val_loss < best_val) {
                best_val = point.val_loss;
                evals_since_best = 0;
            } else if (++evals_since_best >= config.patience) {
                result.stop_reason = "validation loss stopped improving";
                ++step;
                break;
            }
        }
    }

    if (!saved_at_current_step) save_now(static_cast<std::uint64_t>(step));
    if (result.stop_reason.empty()) result.stop_reason = "max_steps reached";
    result.steps_completed = adam.step;
    return result;
}

}  // namespace ccnn
