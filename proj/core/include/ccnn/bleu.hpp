#pragma once

#include <vector>

namespace ccnn {

// Corpus-level BLEU: clipped n-gram matches summed over the corpus,
// geometric mean of precisions, brevity penalty exp(1 - r/c) when c < r
// with r the sum of per-candidate closest reference lengths. No smoothing:
// zero overlap at any order zeroes the score.
struct BleuReport {
    std::vector<double> bleu;        // bleu[n-1] = BLEU-n
    std::vector<double> precisions;  // clipped precision per order
    std::vector<long long> matched;  // clipped matches per order
    std::vector<long long> total;    // candidate n-gram totals per order
    double brevity_penalty = 1.0;
    long long candidate_length = 0;
    long long reference_length = 0;
};

BleuReport corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references, int max_n = 4);

}  // namespace ccnn
