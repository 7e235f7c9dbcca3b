#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccnn/model.hpp"
#include "ccnn/trainer.hpp"

namespace ccnn {

// Checkpoint file: magic "CCNN", version u32, step u64, entry count u32;
// per entry: name length u16 + UTF-8 name, rank u8, dims u32 each, payload
// float32; trailing CRC32 over all payload bytes. Little-endian throughout.
// Entries cover the numeric model config ("config.*"), every parameter, and
// (when present) the Adam moments ("adam.m.*", "adam.v.*").
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t step = 0;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const CaptionerModel& model,
                     const AdamState* adam, std::uint64_t step);

Checkpoint read_checkpoint(const std::filesystem::path& path);

struct RestoredState {
    CaptionerModel model;
    AdamState adam;
    bool has_adam = false;
    std::uint64_t step = 0;
};

// Rebuilds the model (and optimizer state if stored) from a checkpoint.
RestoredState restore_checkpoint(const std::filesystem::path& path);

}  // namespace ccnn
