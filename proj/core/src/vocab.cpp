#include "ccnn/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "ccnn/errors.hpp"

namespace ccnn {

const char* Vocabulary::reserved_name(int id) {
    static const char* names[kNumReserved] = {"<PAD>", "<S>", "</S>", "<UNK>"};
    if (id < 0 || id >= kNumReserved) throw IndexError("reserved_name: id " + std::to_string(id));
    return names[id];
}

std::vector<std::string> split_lowercase_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    v.id_to_word_.reserve(words.size() + kNumReserved);
    for (int i = 0; i < kNumReserved; ++i) v.id_to_word_.emplace_back(reserved_name(i));
    for (const auto& w : words) {
        if (v.word_to_id_.count(w)) throw InputError("duplicate vocabulary word: " + w);
        v.word_to_id_.emplace(w, static_cast<int>(v.id_to_word_.size()));
        v.id_to_word_.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int max_size) {
    if (captions.empty()) throw InputError("build_vocab: empty caption stream");
    if (max_size <= kNumReserved) {
        throw ConfigError("build_vocab: max_size " + std::to_string(max_size) +
                          " leaves no room beyond the " + std::to_string(kNumReserved) +
                          " reserved tokens");
    }
    std::map<std::string, long long> counts;
    for (const auto& caption : captions) {
        for (auto& w : split_lowercase_words(caption)) counts[w] += 1;
    }
    std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t keep = std::min(ranked.size(), static_cast<std::size_t>(max_size - kNumReserved));
    std::vector<std::string> words;
    words.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
    return from_words(words);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file " + path.string());
    std::string line;
    for (int i = 0; i < kNumReserved; ++i) {
        if (!std::getline(in, line)) {
            throw FormatError("vocabulary file " + path.string() + " truncated in reserved header");
        }
        if (line != reserved_name(i)) {
            throw FormatError("vocabulary file " + path.string() + " header line " +
                              std::to_string(i + 1) + " is '" + line + "', expected '" +
                              reserved_name(i) + "'");
        }
    }
    std::vector<std::string> words;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        words.push_back(line);
    }
    return from_words(words);
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file " + path.string());
    for (int i = 0; i < size(); ++i) out << id_to_word_[static_cast<std::size_t>(i)] << '\n';
    if (!out) throw IoError("write failed for vocabulary file " + path.string());
}

int Vocabulary::id(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(int id) const {
    if (id < 0 || id >= size()) {
        throw IndexError("vocabulary id " + std::to_string(id) + " out of range [0, " +
                         std::to_string(size()) + ")");
    }
    return id_to_word_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& word) const { return word_to_id_.count(word) > 0; }

std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab, int max_len) {
    if (max_len < 1) throw ConfigError("tokenize: max_len must be >= 1");
    auto words = split_lowercase_words(caption);
    if (static_cast<int>(words.size()) > max_len) words.resize(static_cast<std::size_t>(max_len));
    std::vector<int> tokens;
    tokens.reserve(words.size() + 2);
    tokens.push_back(Vocabulary::kStart);
    for (const auto& w : words) tokens.push_back(vocab.id(w));
    tokens.push_back(Vocabulary::kEnd);
    return tokens;
}

std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab) {
    std::ostringstream os;
    bool first = true;
    for (int id : tokens) {
        if (id == Vocabulary::kStart || id == Vocabulary::kEnd || id == Vocabulary::kPad) continue;
        if (!first) os << ' ';
        os << vocab.word(id);
        first = false;
    }
    return os.str();
}

}  // namespace ccnn
