#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccnn/bleu.hpp"
#include "ccnn/model.hpp"
#include "ccnn/trainer.hpp"
#include "ccnn/vocab.hpp"

namespace ccnn {

struct DecodeConfig {
    int max_len = 70;
    bool suppress_unk = true;
};

// Greedy feed-forward generation: starting from START, repeatedly append
// the most probable next word (ties broken toward the lowest id) until END
// or max_len content words. PAD and START are never emitted; UNK only when
// suppression is off. Returns content tokens without START/END.
std::vector<int> greedy_decode(const CaptionerModel& model, const Tensor& grid_vectors,
                               const DecodeConfig& config);

// Same decode through the cached incremental state; must match
// greedy_decode token for token.
std::vector<int> greedy_decode_incremental(const CaptionerModel& model, const Tensor& grid_vectors,
                                           const DecodeConfig& config);

// Argmax over one logits row with inference-time masking applied.
int pick_next_token(const Tensor& logits_row, int row, const DecodeConfig& config);

struct EvaluationResult {
    BleuReport bleu;
    std::vector<std::vector<int>> hypotheses;
};

// Decodes every item, computes corpus BLEU against the item captions and
// writes a dump file (id TAB hypothesis TAB references joined by " ||| ").
EvaluationResult evaluate(const CaptionerModel& model, const std::vector<TrainingItem>& items,
                          const Vocabulary& vocab, const DecodeConfig& config, int workers,
                          const std::filesystem::path& dump_path = {});

}  // namespace ccnn
