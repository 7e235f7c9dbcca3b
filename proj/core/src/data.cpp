#include "ccnn/data.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "ccnn/errors.hpp"
#include "ccnn/rng.hpp"

namespace ccnn {

namespace {

std::uint32_t read_u32_le(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

Image read_imgr(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image file " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "IMGR") {
        throw FormatError("image file " + path.string() + ": bad magic at offset 0");
    }
    const std::uint32_t width = read_u32_le(in);
    const std::uint32_t height = read_u32_le(in);
    if (!in) throw FormatError("image file " + path.string() + ": truncated header at offset 4");
    if (width == 0 || height == 0 || width > 1u << 16 || height > 1u << 16) {
        throw FormatError("image file " + path.string() + ": implausible dimensions " +
                          std::to_string(width) + "x" + std::to_string(height));
    }
    Image image;
    image.width = static_cast<int>(width);
    image.height = static_cast<int>(height);
    image.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (static_cast<std::size_t>(in.gcount()) != image.rgb.size()) {
        throw FormatError("image file " + path.string() + ": truncated payload at offset " +
                          std::to_string(12 + in.gcount()));
    }
    return image;
}

void write_imgr(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image file " + path.string());
    out.write("IMGR", 4);
    write_u32_le(out, static_cast<std::uint32_t>(image.width));
    write_u32_le(out, static_cast<std::uint32_t>(image.height));
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              static_cast<std::streamsize>(image.rgb.size()));
    if (!out) throw IoError("write failed for image file " + path.string());
}

Dataset Dataset::load(const std::filesystem::path& records_file) {
    std::ifstream in(records_file);
    if (!in) throw IoError("cannot open records file " + records_file.string());
    Dataset dataset;
    dataset.root = records_file.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("records file " + records_file.string() + " line " +
                              std::to_string(line_no) + ": " + e.what());
        }
        DataRecord rec;
        if (!j.contains("id") || !j.contains("caption")) {
            throw FormatError("records file " + records_file.string() + " line " +
                              std::to_string(line_no) + ": missing id or caption");
        }
        rec.id = j["id"].get<std::string>();
        rec.caption = j["caption"].get<std::string>();
        if (j.contains("image")) rec.image_path = j["image"].get<std::string>();
        if (j.contains("features")) rec.features_path = j["features"].get<std::string>();
        if (rec.image_path.empty() == rec.features_path.empty()) {
            throw FormatError("records file " + records_file.string() + " line " +
                              std::to_string(line_no) + ": need exactly one of image/features");
        }
        if (j.contains("objects")) {
            for (const auto& o : j["objects"]) {
                SceneObject obj;
                obj.shape = o["shape"].get<std::string>();
                obj.color = o["color"].get<std::string>();
                obj.row = o["row"].get<int>();
                obj.col = o["col"].get<int>();
                rec.objects.push_back(std::move(obj));
            }
        }
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

void save_records(const std::filesystem::path& records_file, const std::vector<DataRecord>& records) {
    std::ofstream out(records_file);
    if (!out) throw IoError("cannot write records file " + records_file.string());
    for (const auto& rec : records) {
        nlohmann::json j;
        j["id"] = rec.id;
        j["caption"] = rec.caption;
        if (!rec.image_path.empty()) j["image"] = rec.image_path;
        if (!rec.features_path.empty()) j["features"] = rec.features_path;
        if (!rec.objects.empty()) {
            nlohmann::json objs = nlohmann::json::array();
            for (const auto& o : rec.objects) {
                objs.push_back({{"shape", o.shape}, {"color", o.color}, {"row", o.row}, {"col", o.col}});
            }
            j["objects"] = objs;
        }
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed for records file " + records_file.string());
}

std::vector<CaptionExample> tokenize_dataset(const Dataset& dataset, const Vocabulary& vocab,
                                             int max_len) {
    std::vector<CaptionExample> examples;
    examples.reserve(dataset.records.size());
    for (std::size_t i = 0; i < dataset.records.size(); ++i) {
        CaptionExample ex;
        ex.id = dataset.records[i].id;
        ex.tokens = tokenize(dataset.records[i].caption, vocab, max_len);
        ex.record_index = static_cast<int>(i);
        examples.push_back(std::move(ex));
    }
    return examples;
}

int Batch::prediction_count(int b) const {
    int count = 0;
    for (int j = 0; j < cols; ++j) count += mask_at(b, j) > 0.0 ? 1 : 0;
    return count;
}

std::vector<Batch> make_batches(const std::vector<CaptionExample>& examples, int batch_size,
                                std::uint64_t shuffle_seed) {
    if (examples.empty()) throw InputError("make_batches: empty dataset");
    if (batch_size < 1) throw ConfigError("make_batches: batch_size must be >= 1");

    std::vector<int> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng rng(shuffle_seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        Batch batch;
        batch.rows = static_cast<int>(stop - start);
        int longest = 0;
        for (std::size_t i = start; i < stop; ++i) {
            longest = std::max(longest,
                               static_cast<int>(examples[static_cast<std::size_t>(order[i])].tokens.size()));
        }
        batch.cols = longest;
        batch.tokens.assign(static_cast<std::size_t>(batch.rows) * longest, Vocabulary::kPad);
        batch.targets.assign(static_cast<std::size_t>(batch.rows) * longest, Vocabulary::kPad);
        batch.mask.assign(static_cast<std::size_t>(batch.rows) * longest, 0.0);
        for (std::size_t i = start; i < stop; ++i) {
            const int b = static_cast<int>(i - start);
            const auto& toks = examples[static_cast<std::size_t>(order[i])].tokens;
            const std::size_t base = static_cast<std::size_t>(b) * longest;
            for (std::size_t j = 0; j < toks.size(); ++j) batch.tokens[base + j] = toks[j];
            for (std::size_t j = 0; j + 1 < toks.size(); ++j) {
                batch.targets[base + j] = toks[j + 1];
                batch.mask[base + j] = 1.0;
            }
            batch.example_index.push_back(order[i]);
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

}  // namespace ccnn
