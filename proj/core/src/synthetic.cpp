#include "ccnn/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "ccnn/errors.hpp"
#include "ccnn/rng.hpp"

namespace ccnn {

const std::vector<std::string> kShapeNames = {"circle", "square", "triangle"};
const std::vector<std::string> kColorNames = {"red", "green", "blue"};

namespace {

void validate(const SyntheticConfig& c) {
    if (c.n < 1) throw InputError("generate_synthetic: n must be >= 1");
    if (c.grid < 1 || c.grid * c.grid < 2) {
        throw ConfigError("generate_synthetic: grid " + std::to_string(c.grid) +
                          " too small to place two objects");
    }
    if (c.image_size < c.grid || c.image_size % c.grid != 0) {
        throw ConfigError("generate_synthetic: image_size " + std::to_string(c.image_size) +
                          " must be a positive multiple of grid " + std::to_string(c.grid));
    }
}

std::array<std::uint8_t, 3> color_rgb(const std::string& color) {
    if (color == "red") return {255, 0, 0};
    if (color == "green") return {0, 255, 0};
    if (color == "blue") return {0, 0, 255};
    throw InputError("unknown color: " + color);
}

void draw_object(Image& image, const SceneObject& object, int cell_size) {
    const auto rgb = color_rgb(object.color);
    const int x0 = object.col * cell_size;
    const int y0 = object.row * cell_size;
    const double center_x = x0 + (cell_size - 1) / 2.0;
    const double center_y = y0 + (cell_size - 1) / 2.0;
    const double radius = cell_size / 2.0 - 1.0;
    auto put = [&](int x, int y) {
        const std::size_t off = (static_cast<std::size_t>(y) * image.width + x) * 3;
        image.rgb[off] = rgb[0];
        image.rgb[off + 1] = rgb[1];
        image.rgb[off + 2] = rgb[2];
    };
    for (int y = y0; y < y0 + cell_size; ++y) {
        for (int x = x0; x < x0 + cell_size; ++x) {
            bool inside = false;
            if (object.shape == "circle") {
                const double dx = x - center_x;
                const double dy = y - center_y;
                inside = dx * dx + dy * dy <= radius * radius;
            } else if (object.shape == "square") {
                inside = x > x0 && x < x0 + cell_size - 1 && y > y0 && y < y0 + cell_size - 1;
            } else if (object.shape == "triangle") {
                // Apex at the top of the cell, base across the bottom.
                const double progress = static_cast<double>(y - y0) / (cell_size - 1);
                inside = std::abs(x - center_x) <= progress * radius && y > y0;
            } else {
                throw InputError("unknown shape: " + object.shape);
            }
            if (inside) put(x, y);
        }
    }
}

bool canonical_before(const SceneObject& a, const SceneObject& b) {
    return std::tie(a.shape, a.color, a.row, a.col) < std::tie(b.shape, b.color, b.row, b.col);
}

}  // namespace

std::string relation_between(const SceneObject& first, const SceneObject& second) {
    if (first.row != second.row) return first.row < second.row ? "above" : "below";
    return first.col < second.col ? "left of" : "right of";
}

std::string caption_for(const SceneObject& first, const SceneObject& second) {
    return "a " + first.color + " " + first.shape + " is " + relation_between(first, second) +
           " a " + second.color + " " + second.shape;
}

Image render_scene(const SceneObject& first, const SceneObject& second, int image_size, int grid) {
    Image image;
    image.width = image_size;
    image.height = image_size;
    image.rgb.assign(static_cast<std::size_t>(image_size) * image_size * 3, 0);
    const int cell_size = image_size / grid;
    draw_object(image, first, cell_size);
    draw_object(image, second, cell_size);
    return image;
}

std::vector<SyntheticExample> generate_synthetic(const SyntheticConfig& config) {
    validate(config);
    Rng rng(config.seed);
    std::vector<SyntheticExample> out;
    out.reserve(static_cast<std::size_t>(config.n));
    const int cells = config.grid * config.grid;
    for (int i = 0; i < config.n; ++i) {
        SceneObject a, b;
        a.shape = kShapeNames[rng.below(kShapeNames.size())];
        a.color = kColorNames[rng.below(kColorNames.size())];
        do {
            b.shape = kShapeNames[rng.below(kShapeNames.size())];
            b.color = kColorNames[rng.below(kColorNames.size())];
        } while (a.shape == b.shape && a.color == b.color);
        const int cell_a = static_cast<int>(rng.below(static_cast<std::uint64_t>(cells)));
        int cell_b;
        do {
            cell_b = static_cast<int>(rng.below(static_cast<std::uint64_t>(cells)));
        } while (cell_b == cell_a);
        a.row = cell_a / config.grid;
        a.col = cell_a % config.grid;
        b.row = cell_b / config.grid;
        b.col = cell_b % config.grid;
        if (canonical_before(b, a)) std::swap(a, b);

        SyntheticExample ex;
        char id[16];
        std::snprintf(id, sizeof(id), "ex%06d", i);
        ex.record.id = id;
        ex.record.caption = caption_for(a, b);
        ex.record.objects = {a, b};
        ex.image = render_scene(a, b, config.image_size, config.grid);
        out.push_back(std::move(ex));
    }
    return out;
}

void write_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& out_dir) {
    auto examples = generate_synthetic(config);
    std::filesystem::create_directories(out_dir / "images");
    std::vector<DataRecord> records;
    records.reserve(examples.size());
    for (auto& ex : examples) {
        ex.record.image_path = "images/" + ex.record.id + ".imgr";
        write_imgr(out_dir / ex.record.image_path, ex.image);
        records.push_back(ex.record);
    }
    save_records(out_dir / "captions.jsonl", records);
}

}  // namespace ccnn
