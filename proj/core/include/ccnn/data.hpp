#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ccnn/vocab.hpp"

namespace ccnn {

// Raw RGB raster: "IMGR", width u32 LE, height u32 LE, then 3 bytes/pixel
// row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;
};

Image read_imgr(const std::filesystem::path& path);
void write_imgr(const std::filesystem::path& path, const Image& image);

struct SceneObject {
    std::string shape;
    std::string color;
    int row = 0;
    int col = 0;
};

// One dataset record. Exactly one of image_path / features_path is set;
// paths are relative to the records file. `objects` is generator metadata
// and may be absent for externally produced data.
struct DataRecord {
    std::string id;
    std::string caption;
    std::string image_path;
    std::string features_path;
    std::vector<SceneObject> objects;
};

struct Dataset {
    std::filesystem::path root;
    std::vector<DataRecord> records;

    static Dataset load(const std::filesystem::path& records_file);
    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

void save_records(const std::filesystem::path& records_file, const std::vector<DataRecord>& records);

// Tokenized caption with START prefix and END suffix; no interior padding.
struct CaptionExample {
    std::string id;
    std::vector<int> tokens;
    int record_index = -1;
};

std::vector<CaptionExample> tokenize_dataset(const Dataset& dataset, const Vocabulary& vocab,
                                             int max_len);

// Teacher-forcing batch. tokens[b] = [START w1..wn END PAD...]; the target
// row is the input row shifted left; mask[b][j] = 1 iff target (b, j) is a
// real prediction (content word or END).
struct Batch {
    int rows = 0;
    int cols = 0;
    std::vector<int> tokens;
    std::vector<int> targets;
    std::vector<double> mask;
    std::vector<int> example_index;

    int token(int b, int j) const { return tokens[static_cast<std::size_t>(b) * cols + j]; }
    int target(int b, int j) const { return targets[static_cast<std::size_t>(b) * cols + j]; }
    double mask_at(int b, int j) const { return mask[static_cast<std::size_t>(b) * cols + j]; }
    // Number of prediction positions in row b (caption length + 1).
    int prediction_count(int b) const;
};

std::vector<Batch> make_batches(const std::vector<CaptionExample>& examples, int batch_size,
                                std::uint64_t shuffle_seed);

}  // namespace ccnn
