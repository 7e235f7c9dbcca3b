#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "ccnn/checkpoint.hpp"
#include "ccnn/decode.hpp"
#include "ccnn/errors.hpp"
#include "ccnn/grad_check.hpp"
#include "ccnn/rng.hpp"
#include "ccnn/synthetic.hpp"
#include "ccnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace ccnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInternal = 2;

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

fs::path sibling_vocab(const fs::path& checkpoint_path) {
    return checkpoint_path.parent_path() / "vocab.txt";
}

Vocabulary load_vocab_for_checkpoint(const std::string& vocab_flag, const fs::path& checkpoint) {
    const fs::path path = vocab_flag.empty() ? sibling_vocab(checkpoint) : fs::path(vocab_flag);
    if (vocab_flag.empty() && !fs::exists(path)) {
        throw InputError("no vocabulary found next to the checkpoint (" + path.string() +
                         "); pass --vocab");
    }
    return Vocabulary::load(path);
}

Tensor grid_from_source(const CaptionerModel& model, const std::string& image_path,
                        const std::string& features_path) {
    if (image_path.empty() == features_path.empty()) {
        throw InputError("pass exactly one of --image or --features");
    }
    if (!features_path.empty()) {
        FeatureGrid grid = load_feature_grid(features_path);
        if (grid.channels != model.config.grid_channels) {
            throw ConfigError("feature grid channels " + std::to_string(grid.channels) +
                              " do not match the model's " +
                              std::to_string(model.config.grid_channels));
        }
        return grid.vectors;
    }
    return model_encode(model, read_imgr(image_path)).vectors;
}

void print_bleu(const BleuReport& report, std::ostream& os) {
    char buf[96];
    for (int n = 0; n < 4; ++n) {
        std::snprintf(buf, sizeof(buf), "BLEU-%d %.4f (precision %.4f, %lld/%lld)", n + 1,
                      report.bleu[static_cast<std::size_t>(n)],
                      report.precisions[static_cast<std::size_t>(n)],
                      report.matched[static_cast<std::size_t>(n)],
                      report.total[static_cast<std::size_t>(n)]);
        os << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "brevity penalty %.4f (c=%lld, r=%lld)", report.brevity_penalty,
                  report.candidate_length, report.reference_length);
    os << buf << "\n";
}

struct TrainCli {
    std::string data;
    std::string val;
    std::string vocab;
    std::string config_file;
    std::string resume;
    std::string metrics;
    bool dump_config_only = false;
    bool describe_only = false;
};

int run_train(const TrainCli& cli, FullConfig config) {
    if (cli.describe_only) {
        if (config.model.vocab_size == 0 && !cli.vocab.empty()) {
            config.model.vocab_size = Vocabulary::load(cli.vocab).size();
        }
        if (config.model.vocab_size == 0) {
            throw ConfigError("--describe needs vocab_size (set the key or pass --vocab)");
        }
        std::cout << format_describe(describe_model(config.model));
        return kExitOk;
    }
    if (cli.dump_config_only) {
        std::cout << dump_config(config);
        return kExitOk;
    }

    if (cli.data.empty()) throw InputError("train: --data is required");
    if (cli.vocab.empty()) throw InputError("train: --vocab is required");
    Vocabulary vocab = Vocabulary::load(cli.vocab);
    config.model.vocab_size = vocab.size();

    auto train_items = load_training_items(Dataset::load(cli.data), vocab, config.train.max_len);
    std::vector<TrainingItem> val_items;
    if (!cli.val.empty()) {
        val_items = load_training_items(Dataset::load(cli.val), vocab, config.train.max_len);
    } else {
        val_items = train_items;
    }
    if (train_items.empty()) throw InputError("train: dataset is empty");

    if (train_items.front().image) {
        config.model.has_encoder = true;
        config.model.image_size = train_items.front().image->width;
    } else {
        config.model.has_encoder = false;
        config.model.grid_channels = train_items.front().grid->channels;
    }

    CaptionerModel model = build_model(config.model);
    AdamState adam = AdamState::zeros_like(model);
    if (!cli.resume.empty()) {
        RestoredState restored = restore_checkpoint(cli.resume);
        if (restored.model.config.vocab_size != config.model.vocab_size) {
            throw ConfigError("resume: checkpoint vocabulary size " +
                              std::to_string(restored.model.config.vocab_size) +
                              " does not match " + std::to_string(config.model.vocab_size));
        }
        model = std::move(restored.model);
        adam = restored.has_adam ? std::move(restored.adam) : AdamState::zeros_like(model);
        adam.step = static_cast<long long>(restored.step);
    } else {
        init_params(model, config.train.init_stddev, config.train.seed);
    }

    const fs::path checkpoint_path = config.train.checkpoint_path;
    if (!checkpoint_path.parent_path().empty()) {
        fs::create_directories(checkpoint_path.parent_path());
    }
    const fs::path metrics_path = cli.metrics.empty()
                                      ? fs::path(config.train.checkpoint_path + ".metrics")
                                      : fs::path(cli.metrics);

    TrainResult result =
        train(model, adam, train_items, val_items, config.train, &std::cout, metrics_path);
    vocab.save(sibling_vocab(checkpoint_path));
    std::cout << "done: " << result.stop_reason << " after " << result.steps_completed
              << " steps; checkpoint " << config.train.checkpoint_path << "\n";
    return kExitOk;
}

int run_grad_check(int depth, int kernel, int d_e, int d_c, int d_h, int vocab_size, int length,
                   int grid_side, bool hierarchical, double h, double tol, std::uint64_t seed) {
    ModelConfig config;
    config.vocab_size = vocab_size;
    config.embed_dim = d_e;
    config.grid_channels = d_c;
    config.hidden_dim = d_h;
    config.depth = depth;
    config.kernel = kernel;
    config.hierarchical = hierarchical;
    config.has_encoder = false;
    CaptionerModel model = build_model(config);
    init_params(model, 0.05, seed);

    Rng rng(seed + 1);
    Tensor grid = Tensor::zeros({grid_side * grid_side, d_c}, true);
    for (auto& v : grid.values()) v = rng.uniform(-0.5, 0.5);

    std::vector<CaptionExample> examples;
    for (int i = 0; i < 2; ++i) {
        CaptionExample ex;
        ex.id = std::to_string(i);
        ex.tokens.push_back(Vocabulary::kStart);
        const int words = std::max(1, length - 2 + i);
        for (int w = 0; w < words; ++w) {
            ex.tokens.push_back(Vocabulary::kNumReserved +
                                static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                    vocab_size - Vocabulary::kNumReserved))));
        }
        ex.tokens.push_back(Vocabulary::kEnd);
        ex.record_index = i;
        examples.push_back(std::move(ex));
    }
    Batch batch = make_batches(examples, 2, seed)[0];
    std::vector<Tensor> grids = {grid, grid};

    auto f = [&]() { return batch_loss(model, batch, grids, 1e-3); };
    std::vector<std::pair<std::string, Tensor>> checked;
    for (const auto& entry : model.params.entries()) checked.emplace_back(entry.name, entry.tensor);
    checked.emplace_back("grid", grid);
    GradCheckReport report = grad_check(f, checked, h, tol);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max relative error %.3e (%s)", report.max_rel_err,
                  report.worst_param.c_str());
    std::cout << buf << "\n" << (report.pass ? "PASS" : "FAIL") << "\n";
    return report.pass ? kExitOk : kExitInternal;
}

int run_export_attn(const std::string& checkpoint, const std::string& image,
                    const std::string& features, const std::string& vocab_flag,
                    const std::string& out_dir, int max_len) {
    RestoredState restored = restore_checkpoint(checkpoint);
    Vocabulary vocab = load_vocab_for_checkpoint(vocab_flag, checkpoint);
    Tensor grid = grid_from_source(restored.model, image, features);
    fs::create_directories(out_dir);

    DecodeConfig config;
    config.max_len = max_len;
    IncrementalState state(restored.model, grid);
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(grid.dim(0)))));
    int token = Vocabulary::kStart;
    int emitted = 0;
    while (emitted < config.max_len) {
        Tensor logits = state.step(token);
        const int next = pick_next_token(logits, 0, config);
        if (next == Vocabulary::kEnd) break;
        const std::string& word = vocab.word(next);
        char prefix[32];
        std::snprintf(prefix, sizeof(prefix), "w%03d_", emitted);
        auto single_map = [&](const Tensor& weights) {
            AttentionMaps maps;
            maps.side = side;
            maps.labels = {word};
            maps.weights = {weights.values()};
            return maps;
        };
        export_attention(single_map(state.last_top_weights()),
                         fs::path(out_dir) / (std::string(prefix) + word + ".txt"));
        const auto& levels = state.last_level_weights();
        for (std::size_t l = 0; l < levels.size(); ++l) {
            export_attention(single_map(levels[l]),
                             fs::path(out_dir) / (std::string(prefix) + word + "_level" +
                                                  std::to_string(l + 1) + ".txt"));
        }
        ++emitted;
        token = next;
    }
    std::cout << "wrote attention maps for " << emitted << " words to " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"convolutional image captioner"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic two-object scene dataset");
    std::uint64_t gen_seed = 0;
    int gen_n = 100, gen_image = 32, gen_grid = 4;
    std::string gen_out;
    gen->add_option("--seed", gen_seed, "generator seed")->required();
    gen->add_option("--n", gen_n, "number of examples")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--image-size", gen_image, "square image side in pixels");
    gen->add_option("--grid", gen_grid, "placement grid cells per side");

    auto* bv = app.add_subcommand("build-vocab", "build a vocabulary from dataset captions");
    std::string bv_data, bv_out;
    int bv_max = 10000;
    bv->add_option("--data", bv_data, "records file (jsonl)")->required();
    bv->add_option("--out", bv_out, "output vocabulary file")->required();
    bv->add_option("--max-size", bv_max, "vocabulary size cap including reserved ids");

    auto* tr = app.add_subcommand("train", "train the captioner");
    TrainCli train_cli;
    tr->add_option("--data", train_cli.data, "training records file");
    tr->add_option("--val", train_cli.val, "validation records file (defaults to --data)");
    tr->add_option("--vocab", train_cli.vocab, "vocabulary file");
    tr->add_option("--config", train_cli.config_file, "config file (key = value lines)");
    tr->add_option("--resume", train_cli.resume, "checkpoint to resume from");
    tr->add_option("--metrics", train_cli.metrics, "metrics log path");
    tr->add_flag("--dump-config", train_cli.dump_config_only, "print the effective config and exit");
    tr->add_flag("--describe", train_cli.describe_only,
                 "print parameter counts and receptive field, then exit");
    const std::vector<std::string> train_keys = {
        "vocab_size", "embed_dim", "grid_channels", "hidden_dim", "depth", "kernel",
        "skip_every", "hierarchical", "has_encoder", "image_size", "enc_c1", "enc_c2",
        "lambda", "base_lr", "vision_lr_multiplier", "decay_every", "decay_factor",
        "batch_size", "max_steps", "seed", "init_stddev", "beta1", "beta2", "epsilon",
        "eval_every", "patience", "stop_loss", "workers", "max_len", "checkpoint_path"};
    std::vector<std::string> train_values(train_keys.size());
    for (std::size_t i = 0; i < train_keys.size(); ++i) {
        tr->add_option("--" + train_keys[i], train_values[i], "config key override");
    }

    auto* cap = app.add_subcommand("caption", "caption one image or feature grid");
    std::string cap_ckpt, cap_image, cap_features, cap_vocab;
    int cap_max_len = 70;
    bool cap_allow_unk = false;
    cap->add_option("--checkpoint", cap_ckpt, "model checkpoint")->required();
    cap->add_option("--image", cap_image, "IMGR raster to caption");
    cap->add_option("--features", cap_features, "FGRD feature grid to caption");
    cap->add_option("--vocab", cap_vocab, "vocabulary file (default: vocab.txt beside checkpoint)");
    cap->add_option("--max-len", cap_max_len, "maximum caption length in words");
    cap->add_flag("--allow-unk", cap_allow_unk, "let the decoder emit <UNK>");

    auto* ev = app.add_subcommand("eval", "decode a dataset split and report corpus BLEU");
    std::string ev_ckpt, ev_data, ev_vocab, ev_out;
    int ev_max_len = 70, ev_workers = 0;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    ev->add_option("--data", ev_data, "records file to evaluate")->required();
    ev->add_option("--vocab", ev_vocab, "vocabulary file (default: vocab.txt beside checkpoint)");
    ev->add_option("--out", ev_out, "per-example dump file (tsv)");
    ev->add_option("--max-len", ev_max_len, "maximum caption length in words");
    ev->add_option("--workers", ev_workers, "decode workers (0 = all cores)");

    auto* gc = app.add_subcommand("grad-check", "finite-difference check of the full model");
    int gc_depth = 2, gc_kernel = 2, gc_de = 8, gc_dc = 6, gc_dh = 8, gc_vocab = 11, gc_len = 5,
        gc_grid = 2;
    double gc_h = 1e-5, gc_tol = 1e-4;
    std::uint64_t gc_seed = 1;
    bool gc_hier = false;
    gc->add_option("--depth", gc_depth, "language stack depth");
    gc->add_option("--k", gc_kernel, "kernel width");
    gc->add_option("--embed-dim", gc_de, "embedding width");
    gc->add_option("--grid-channels", gc_dc, "feature channels");
    gc->add_option("--hidden-dim", gc_dh, "prediction hidden width");
    gc->add_option("--vocab-size", gc_vocab, "vocabulary size");
    gc->add_option("--length", gc_len, "caption length");
    gc->add_option("--grid-side", gc_grid, "feature grid side");
    gc->add_option("--fd-step", gc_h, "finite-difference step");
    gc->add_option("--tol", gc_tol, "pass threshold on max relative error");
    gc->add_option("--seed", gc_seed, "seed for weights and tokens");
    gc->add_flag("--hier", gc_hier, "enable hierarchical attention");

    auto* ea = app.add_subcommand("export-attn", "decode and export attention maps per word");
    std::string ea_ckpt, ea_image, ea_features, ea_vocab, ea_out;
    int ea_max_len = 70;
    ea->add_option("--checkpoint", ea_ckpt, "model checkpoint")->required();
    ea->add_option("--image", ea_image, "IMGR raster");
    ea->add_option("--features", ea_features, "FGRD feature grid");
    ea->add_option("--vocab", ea_vocab, "vocabulary file (default: vocab.txt beside checkpoint)");
    ea->add_option("--out", ea_out, "output directory")->required();
    ea->add_option("--max-len", ea_max_len, "maximum caption length in words");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            write_synthetic_dataset(
                {.seed = gen_seed, .n = gen_n, .image_size = gen_image, .grid = gen_grid}, gen_out);
            std::cout << "wrote " << gen_n << " examples to " << gen_out << "\n";
            return kExitOk;
        }
        if (bv->parsed()) {
            Dataset dataset = Dataset::load(bv_data);
            std::vector<std::string> captions;
            captions.reserve(dataset.records.size());
            for (const auto& rec : dataset.records) captions.push_back(rec.caption);
            Vocabulary vocab = Vocabulary::build(captions, bv_max);
            vocab.save(bv_out);
            std::cout << "vocabulary of " << vocab.size() << " ids written to " << bv_out << "\n";
            return kExitOk;
        }
        if (tr->parsed()) {
            // Precedence: defaults, then the config file, then flags.
            FullConfig config;
            if (!train_cli.config_file.empty()) {
                config = parse_config_file(train_cli.config_file, config);
            }
            for (std::size_t i = 0; i < train_keys.size(); ++i) {
                if (tr->count("--" + train_keys[i]) > 0) {
                    apply_config_line(config, train_keys[i], train_values[i]);
                }
            }
            if (tr->count("--workers") == 0) config.train.workers = resolve_workers(0);
            return run_train(train_cli, config);
        }
        if (cap->parsed()) {
            RestoredState restored = restore_checkpoint(cap_ckpt);
            Vocabulary vocab = load_vocab_for_checkpoint(cap_vocab, cap_ckpt);
            Tensor grid = grid_from_source(restored.model, cap_image, cap_features);
            DecodeConfig config;
            config.max_len = cap_max_len;
            config.suppress_unk = !cap_allow_unk;
            auto tokens = greedy_decode_incremental(restored.model, grid, config);
            std::cout << detokenize(tokens, vocab) << "\n";
            return kExitOk;
        }
        if (ev->parsed()) {
            RestoredState restored = restore_checkpoint(ev_ckpt);
            Vocabulary vocab = load_vocab_for_checkpoint(ev_vocab, ev_ckpt);
            Dataset dataset = Dataset::load(ev_data);
            auto items = load_training_items(dataset, vocab, ev_max_len);
            DecodeConfig config;
            config.max_len = ev_max_len;
            EvaluationResult result = evaluate(restored.model, items, vocab, config,
                                               resolve_workers(ev_workers), ev_out);
            print_bleu(result.bleu, std::cout);
            return kExitOk;
        }
        if (gc->parsed()) {
            return run_grad_check(gc_depth, gc_kernel, gc_de, gc_dc, gc_dh, gc_vocab, gc_len,
                                  gc_grid, gc_hier, gc_h, gc_tol, gc_seed);
        }
        if (ea->parsed()) {
            return run_export_attn(ea_ckpt, ea_image, ea_features, ea_vocab, ea_out, ea_max_len);
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const DimensionError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const IndexError& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::runtime_error& e) {
        // Input, config, format and I/O problems are user errors.
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
