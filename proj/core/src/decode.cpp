#include "ccnn/decode.hpp"

#include <fstream>

#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"
#include "ccnn/parallel.hpp"

namespace ccnn {

int pick_next_token(const Tensor& logits_row, int row, const DecodeConfig& config) {
    const int vocab = logits_row.dim(1);
    int best = -1;
    double best_value = 0.0;
    for (int v = 0; v < vocab; ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kStart) continue;
        if (config.suppress_unk && v == Vocabulary::kUnk) continue;
        const double value = logits_row.at(row, v);
        if (best < 0 || value > best_value) {
            best = v;
            best_value = value;
        }
    }
    if (best < 0) throw ConfigError("pick_next_token: every token is masked");
    return best;
}

std::vector<int> greedy_decode(const CaptionerModel& model, const Tensor& grid_vectors,
                               const DecodeConfig& config) {
    if (config.max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
    std::vector<int> prefix = {Vocabulary::kStart};
    std::vector<int> emitted;
    while (static_cast<int>(emitted.size()) < config.max_len) {
        ForwardResult fwd = captioner_forward(model, prefix, grid_vectors);
        const int last = static_cast<int>(prefix.size()) - 1;
        const int next = pick_next_token(fwd.logits, last, config);
        if (next == Vocabulary::kEnd) break;
        emitted.push_back(next);
        prefix.push_back(next);
    }
    return emitted;
}

std::vector<int> greedy_decode_incremental(const CaptionerModel& model, const Tensor& grid_vectors,
                                           const DecodeConfig& config) {
    if (config.max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
    IncrementalState state(model, grid_vectors);
    std::vector<int> emitted;
    int token = Vocabulary::kStart;
    while (static_cast<int>(emitted.size()) < config.max_len) {
        Tensor logits = state.step(token);
        const int next = pick_next_token(logits, 0, config);
        if (next == Vocabulary::kEnd) break;
        emitted.push_back(next);
        token = next;
    }
    return emitted;
}

namespace {

Tensor grid_for_item(const CaptionerModel& model, const TrainingItem& item) {
    if (item.grid) return item.grid->vectors;
    if (!item.image) throw InputError("item '" + item.id + "' has no visual source");
    return model_encode(model, *item.image).vectors;
}

std::vector<int> content_tokens(const std::vector<int>& tokens) {
    std::vector<int> out;
    for (int t : tokens) {
        if (t == Vocabulary::kStart || t == Vocabulary::kEnd || t == Vocabulary::kPad) continue;
        out.push_back(t);
    }
    return out;
}

}  // namespace

EvaluationResult evaluate(const CaptionerModel& model, const std::vector<TrainingItem>& items,
                          const Vocabulary& vocab, const DecodeConfig& config, int workers,
                          const std::filesystem::path& dump_path) {
    if (items.empty()) throw InputError("evaluate: empty split");
    EvaluationResult result;
    result.hypotheses.resize(items.size());
    parallel_for(static_cast<int>(items.size()), workers, [&](int i) {
        const auto& item = items[static_cast<std::size_t>(i)];
        Tensor grid = grid_for_item(model, item);
        result.hypotheses[static_cast<std::size_t>(i)] = greedy_decode(model, grid, config);
    });

    std::vector<std::vector<std::vector<int>>> references(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        references[i] = {content_tokens(items[i].tokens)};
    }
    result.bleu = corpus_bleu(result.hypotheses, references);

    if (!dump_path.empty()) {
        std::ofstream out(dump_path);
        if (!out) throw IoError("cannot write evaluation dump " + dump_path.string());
        for (std::size_t i = 0; i < items.size(); ++i) {
            out << items[i].id << '\t' << detokenize(result.hypotheses[i], vocab) << '\t';
            for (std::size_t r = 0; r < references[i].size(); ++r) {
                if (r) out << " ||| ";
                out << detokenize(references[i][r], vocab);
            }
            out << '\n';
        }
        if (!out) throw IoError("write failed for evaluation dump " + dump_path.string());
    }
    return result;
}

}  // namespace ccnn
