#include "ccnn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <zlib.h>

#include "ccnn/errors.hpp"

namespace ccnn {

namespace {

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot write checkpoint " + path.string());
    }
    void bytes(const void* data, std::size_t n) {
        out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
    }
    void u16(std::uint16_t v) {
        std::uint8_t b[2] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, 8);
    }
    void f32_payload(const std::vector<double>& values, uLong& crc) {
        buffer_.resize(values.size() * 4);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const float f = static_cast<float>(values[i]);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            for (int k = 0; k < 4; ++k) {
                buffer_[i * 4 + static_cast<std::size_t>(k)] =
                    static_cast<std::uint8_t>(bits >> (8 * k));
            }
        }
        crc = crc32(crc, buffer_.data(), static_cast<uInt>(buffer_.size()));
        bytes(buffer_.data(), buffer_.size());
    }
    void finish() {
        out_.flush();
        if (!out_) throw IoError("write failed for checkpoint " + path_.string());
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
    std::vector<std::uint8_t> buffer_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open checkpoint " + path.string());
    }
    std::size_t offset() const { return offset_; }
    void bytes(void* data, std::size_t n, const char* what) {
        in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw FormatError("checkpoint " + path_.string() + ": truncated " + what +
                              " at offset " + std::to_string(offset_));
        }
        offset_ += n;
    }
    std::uint16_t u16(const char* what) {
        std::uint8_t b[2];
        bytes(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32(const char* what) {
        std::uint8_t b[4];
        bytes(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64(const char* what) {
        std::uint8_t b[8];
        bytes(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    std::vector<double> f32_payload(std::size_t count, uLong& crc) {
        buffer_.resize(count * 4);
        bytes(buffer_.data(), buffer_.size(), "payload");
        crc = crc32(crc, buffer_.data(), static_cast<uInt>(buffer_.size()));
        std::vector<double> values(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits = 0;
            for (int k = 0; k < 4; ++k) {
                bits |= static_cast<std::uint32_t>(buffer_[i * 4 + static_cast<std::size_t>(k)])
                        << (8 * k);
            }
            float f;
            std::memcpy(&f, &bits, 4);
            values[i] = static_cast<double>(f);
        }
        return values;
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::ifstream in_;
    std::filesystem::path path_;
    std::size_t offset_ = 0;
    std::vector<std::uint8_t> buffer_;
};

std::vector<CheckpointEntry> config_entries(const ModelConfig& c) {
    auto scalar = [](const std::string& name, double v) {
        CheckpointEntry e;
        e.name = name;
        e.shape = {};
        e.values = {v};
        return e;
    };
    return {
        scalar("config.vocab_size", c.vocab_size),
        scalar("config.embed_dim", c.embed_dim),
        scalar("config.grid_channels", c.grid_channels),
        scalar("config.hidden_dim", c.hidden_dim),
        scalar("config.depth", c.depth),
        scalar("config.kernel", c.kernel),
        scalar("config.skip_every", c.skip_every),
        scalar("config.hierarchical", c.hierarchical ? 1 : 0),
        scalar("config.has_encoder", c.has_encoder ? 1 : 0),
        scalar("config.image_size", c.image_size),
        scalar("config.enc_c1", c.enc_c1),
        scalar("config.enc_c2", c.enc_c2),
    };
}

void write_entry(Writer& w, const std::string& name, const Shape& shape,
                 const std::vector<double>& values, uLong& crc) {
    if (name.size() > 0xFFFF) throw ConfigError("checkpoint entry name too long: " + name);
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    const std::uint8_t rank = static_cast<std::uint8_t>(shape.size());
    w.bytes(&rank, 1);
    for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32_payload(values, crc);
}

}  // namespace

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
    for (const auto& e : entries) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const CaptionerModel& model,
                     const AdamState* adam, std::uint64_t step) {
    Writer w(path);
    w.bytes("CCNN", 4);
    w.u32(kCheckpointVersion);
    w.u64(step);

    const auto config = config_entries(model.config);
    std::uint32_t count = static_cast<std::uint32_t>(config.size() + model.params.entries().size());
    if (adam) count += static_cast<std::uint32_t>(2 * model.params.entries().size());
    w.u32(count);

    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& e : config) write_entry(w, e.name, e.shape, e.values, crc);
    for (const auto& entry : model.params.entries()) {
        write_entry(w, entry.name, entry.tensor.shape(), entry.tensor.values(), crc);
    }
    if (adam) {
        const auto& entries = model.params.entries();
        for (std::size_t p = 0; p < entries.size(); ++p) {
            write_entry(w, "adam.m." + entries[p].name, adam->m[p].shape(), adam->m[p].values(), crc);
        }
        for (std::size_t p = 0; p < entries.size(); ++p) {
            write_entry(w, "adam.v." + entries[p].name, adam->v[p].shape(), adam->v[p].values(), crc);
        }
    }
    w.u32(static_cast<std::uint32_t>(crc));
    w.finish();
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::string(magic, 4) != "CCNN") {
        throw FormatError("checkpoint " + path.string() + ": bad magic at offset 0");
    }
    Checkpoint ck;
    ck.version = r.u32("version");
    if (ck.version != kCheckpointVersion) {
        throw FormatError("checkpoint " + path.string() + ": unsupported version " +
                          std::to_string(ck.version) + " at offset 4");
    }
    ck.step = r.u64("step");
    const std::uint32_t count = r.u32("entry count");
    uLong crc = crc32(0L, Z_NULL, 0);
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointEntry entry;
        const std::uint16_t name_len = r.u16("entry name length");
        entry.name.resize(name_len);
        r.bytes(entry.name.data(), name_len, "entry name");
        std::uint8_t rank = 0;
        r.bytes(&rank, 1, "entry rank");
        std::size_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32("entry dimension");
            if (dim == 0 || dim > (1u << 28)) {
                throw FormatError("checkpoint " + path.string() + ": implausible dimension " +
                                  std::to_string(dim) + " at offset " + std::to_string(r.offset() - 4));
            }
            entry.shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        entry.values = r.f32_payload(numel, crc);
        ck.entries.push_back(std::move(entry));
    }
    const std::uint32_t stored_crc = r.u32("checksum");
    if (stored_crc != static_cast<std::uint32_t>(crc)) {
        throw FormatError("checkpoint " + path.string() + ": payload checksum mismatch at offset " +
                          std::to_string(r.offset() - 4));
    }
    return ck;
}

namespace {

double config_value(const Checkpoint& ck, const std::string& name) {
    const auto* e = ck.find(name);
    if (!e) throw FormatError("checkpoint is missing entry '" + name + "'");
    if (e->values.size() != 1) throw FormatError("checkpoint entry '" + name + "' is not scalar");
    return e->values[0];
}

}  // namespace

RestoredState restore_checkpoint(const std::filesystem::path& path) {
    const Checkpoint ck = read_checkpoint(path);
    ModelConfig config;
    config.vocab_size = static_cast<int>(config_value(ck, "config.vocab_size"));
    config.embed_dim = static_cast<int>(config_value(ck, "config.embed_dim"));
    config.grid_channels = static_cast<int>(config_value(ck, "config.grid_channels"));
    config.hidden_dim = static_cast<int>(config_value(ck, "config.hidden_dim"));
    config.depth = static_cast<int>(config_value(ck, "config.depth"));
    config.kernel = static_cast<int>(config_value(ck, "config.kernel"));
    config.skip_every = static_cast<int>(config_value(ck, "config.skip_every"));
    config.hierarchical = config_value(ck, "config.hierarchical") != 0.0;
    config.has_encoder = config_value(ck, "config.has_encoder") != 0.0;
    config.image_size = static_cast<int>(config_value(ck, "config.image_size"));
    config.enc_c1 = static_cast<int>(config_value(ck, "config.enc_c1"));
    config.enc_c2 = static_cast<int>(config_value(ck, "config.enc_c2"));

    RestoredState state{build_model(config), AdamState{}, false, ck.step};
    for (auto& entry : state.model.params.entries()) {
        const auto* stored = ck.find(entry.name);
        if (!stored) throw FormatError("checkpoint is missing parameter '" + entry.name + "'");
        if (stored->shape != entry.tensor.shape()) {
            throw FormatError("checkpoint parameter '" + entry.name + "' has shape " +
                              shape_str(stored->shape) + ", expected " +
                              shape_str(entry.tensor.shape()));
        }
        entry.tensor.values() = stored->values;
    }
    if (ck.find("adam.m." + state.model.params.entries().front().name)) {
        state.has_adam = true;
        state.adam = AdamState::zeros_like(state.model);
        state.adam.step = static_cast<long long>(ck.step);
        auto& entries = state.model.params.entries();
        for (std::size_t p = 0; p < entries.size(); ++p) {
            const auto* m = ck.find("adam.m." + entries[p].name);
            const auto* v = ck.find("adam.v." + entries[p].name);
            if (!m || !v) {
                throw FormatError("checkpoint is missing optimizer state for '" + entries[p].name + "'");
            }
            state.adam.m[p].values() = m->values;
            state.adam.v[p].values() = v->values;
        }
    }
    return state;
}

}  // namespace ccnn
