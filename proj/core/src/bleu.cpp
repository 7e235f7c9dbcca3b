#include "ccnn/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "ccnn/errors.hpp"

namespace ccnn {

namespace {

using NgramCounts = std::map<std::vector<int>, long long>;

NgramCounts count_ngrams(const std::vector<int>& tokens, int n) {
    NgramCounts counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::vector<int> gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                              tokens.begin() + static_cast<std::ptrdiff_t>(i) + n);
        counts[gram] += 1;
    }
    return counts;
}

}  // namespace

BleuReport corpus_bleu(const std::vector<std::vector<int>>& candidates,
                       const std::vector<std::vector<std::vector<int>>>& references, int max_n) {
    if (candidates.empty()) throw InputError("corpus_bleu: empty candidate set");
    if (candidates.size() != references.size()) {
        throw InputError("corpus_bleu: " + std::to_string(candidates.size()) + " candidates vs " +
                         std::to_string(references.size()) + " reference lists");
    }
    if (max_n < 1) throw InputError("corpus_bleu: max_n must be >= 1");

    BleuReport report;
    report.matched.assign(static_cast<std::size_t>(max_n), 0);
    report.total.assign(static_cast<std::size_t>(max_n), 0);

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& candidate = candidates[i];
        const auto& refs = references[i];
        if (refs.empty()) {
            throw InputError("corpus_bleu: candidate " + std::to_string(i) + " has no references");
        }
        report.candidate_length += static_cast<long long>(candidate.size());

        // Closest reference length; ties go to the shorter reference.
        long long best_len = static_cast<long long>(refs[0].size());
        for (const auto& ref : refs) {
            const long long len = static_cast<long long>(ref.size());
            const long long cand = static_cast<long long>(candidate.size());
            if (std::llabs(len - cand) < std::llabs(best_len - cand) ||
                (std::llabs(len - cand) == std::llabs(best_len - cand) && len < best_len)) {
                best_len = len;
            }
        }
        report.reference_length += best_len;

        for (int n = 1; n <= max_n; ++n) {
            const NgramCounts cand_counts = count_ngrams(candidate, n);
            NgramCounts max_ref_counts;
            for (const auto& ref : refs) {
                for (const auto& [gram, count] : count_ngrams(ref, n)) {
                    auto& cap = max_ref_counts[gram];
                    cap = std::max(cap, count);
                }
            }
            for (const auto& [gram, count] : cand_counts) {
                report.total[static_cast<std::size_t>(n - 1)] += count;
                auto it = max_ref_counts.find(gram);
                if (it != max_ref_counts.end()) {
                    report.matched[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
                }
            }
        }
    }

    report.precisions.assign(static_cast<std::size_t>(max_n), 0.0);
    for (int n = 0; n < max_n; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        report.precisions[idx] = report.total[idx] > 0
                                     ? static_cast<double>(report.matched[idx]) /
                                           static_cast<double>(report.total[idx])
                                     : 0.0;
    }
    report.brevity_penalty =
        report.candidate_length < report.reference_length && report.candidate_length > 0
            ? std::exp(1.0 - static_cast<double>(report.reference_length) /
                                 static_cast<double>(report.candidate_length))
            : (report.candidate_length == 0 ? 0.0 : 1.0);

    report.bleu.assign(static_cast<std::size_t>(max_n), 0.0);
    for (int n = 1; n <= max_n; ++n) {
        double log_sum = 0.0;
        bool zero = false;
        for (int k = 0; k < n; ++k) {
            const double p = report.precisions[static_cast<std::size_t>(k)];
            if (p <= 0.0) {
                zero = true;
                break;
            }
            log_sum += std::log(p);
        }
        report.bleu[static_cast<std::size_t>(n - 1)] =
            zero ? 0.0 : report.brevity_penalty * std::exp(log_sum / n);
    }
    return report;
}

}  // namespace ccnn
