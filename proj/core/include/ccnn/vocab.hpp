#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ccnn {

// Word <-> id table with fixed reserved ids. Ids 4.. are assigned by
// descending frequency, ties broken lexicographically.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kStart = 1;
    static constexpr int kEnd = 2;
    static constexpr int kUnk = 3;
    static constexpr int kNumReserved = 4;

    static const char* reserved_name(int id);

    static Vocabulary build(const std::vector<std::string>& captions, int max_size);
    static Vocabulary from_words(const std::vector<std::string>& words);

    static Vocabulary load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    int id(const std::string& word) const;  // kUnk when absent
    const std::string& word(int id) const;
    bool contains(const std::string& word) const;
    int size() const { return static_cast<int>(id_to_word_.size()); }

private:
    std::vector<std::string> id_to_word_;
    std::unordered_map<std::string, int> word_to_id_;
};

std::vector<std::string> split_lowercase_words(const std::string& text);

// [START, w1..wn, END] with n <= max_len; unknown words map to UNK.
std::vector<int> tokenize(const std::string& caption, const Vocabulary& vocab, int max_len);

// Surface form of the content words (reserved tokens skipped).
std::string detokenize(std::span<const int> tokens, const Vocabulary& vocab);

}  // namespace ccnn
