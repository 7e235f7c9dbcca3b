#include "ccnn/vision.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"

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

float to_f32_le(const std::uint8_t* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

void from_f32_le(float f, std::uint8_t* p) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    p[0] = static_cast<std::uint8_t>(bits);
    p[1] = static_cast<std::uint8_t>(bits >> 8);
    p[2] = static_cast<std::uint8_t>(bits >> 16);
    p[3] = static_cast<std::uint8_t>(bits >> 24);
}

}  // namespace

FeatureGrid load_feature_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature-grid file " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "FGRD") {
        throw FormatError("feature-grid file " + path.string() + ": bad magic at offset 0");
    }
    const std::uint32_t side = read_u32_le(in);
    const std::uint32_t channels = read_u32_le(in);
    if (!in) throw FormatError("feature-grid file " + path.string() + ": truncated header at offset 4");
    if (side == 0 || channels == 0 || side > 1024 || channels > (1u << 20)) {
        throw FormatError("feature-grid file " + path.string() + ": implausible dimensions d=" +
                          std::to_string(side) + " D_c=" + std::to_string(channels));
    }
    const std::size_t count = static_cast<std::size_t>(side) * side * channels;
    std::vector<std::uint8_t> raw(count * 4);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
        throw FormatError("feature-grid file " + path.string() + ": truncated payload at offset " +
                          std::to_string(12 + in.gcount()));
    }
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = to_f32_le(raw.data() + i * 4);
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw FormatError("feature-grid file " + path.string() + ": non-finite value in payload");
        }
    }
    FeatureGrid grid;
    grid.side = static_cast<int>(side);
    grid.channels = static_cast<int>(channels);
    grid.vectors = Tensor::from({static_cast<int>(side * side), static_cast<int>(channels)},
                                std::move(values));
    return grid;
}

void save_feature_grid(const std::filesystem::path& path, const FeatureGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write feature-grid file " + path.string());
    out.write("FGRD", 4);
    write_u32_le(out, static_cast<std::uint32_t>(grid.side));
    write_u32_le(out, static_cast<std::uint32_t>(grid.channels));
    std::vector<std::uint8_t> raw(grid.vectors.size() * 4);
    const auto& values = grid.vectors.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        from_f32_le(static_cast<float>(values[i]), raw.data() + i * 4);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("write failed for feature-grid file " + path.string());
}

Tensor image_to_tensor(const Image& image) {
    std::vector<double> values(image.rgb.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = image.rgb[i] / 255.0;
    return Tensor::from({image.height, image.width, 3}, std::move(values));
}

FeatureGrid encode(const Tensor& image_hwc, const VisionParams& params) {
    if (image_hwc.rank() != 3 || image_hwc.dim(2) != 3) {
        throw DimensionError("encode: expected [HxWx3] image, got " + shape_str(image_hwc.shape()));
    }
    const int side = image_hwc.dim(0);
    if (image_hwc.dim(1) != side) {
        throw ConfigError("encode: image must be square, got " + shape_str(image_hwc.shape()));
    }
    if (side % 8 != 0) {
        throw ConfigError("encode: image side " + std::to_string(side) + " is not divisible by 8");
    }
    if (params.weights.size() != 3 || params.biases.size() != 3) {
        throw ConfigError("encode: expected 3 convolution layers, got " +
                          std::to_string(params.weights.size()));
    }
    Tensor h = image_hwc;
    for (int layer = 0; layer < 3; ++layer) {
        h = conv2d_replicate(h, params.weights[static_cast<std::size_t>(layer)],
                             params.biases[static_cast<std::size_t>(layer)], /*stride=*/2, /*pad=*/1);
        h = leaky_relu(h);
    }
    FeatureGrid grid;
    grid.side = side / 8;
    grid.channels = h.dim(2);
    grid.vectors = reshape(h, {grid.side * grid.side, grid.channels});
    return grid;
}

PixelRect encoder_receptive_rect(int grid_row, int grid_col, int image_size) {
    auto widen = [](int lo, int hi, int limit) {
        // One 3x3 stride-2 pad-1 layer maps output o to inputs [2o-1, 2o+1],
        // clamped by the replicate padding.
        int nlo = 2 * lo - 1;
        int nhi = 2 * hi + 1;
        return std::pair<int, int>{std::max(0, nlo), std::min(limit - 1, nhi)};
    };
    int y0 = grid_row, y1 = grid_row, x0 = grid_col, x1 = grid_col;
    int size = image_size / 8;
    for (int layer = 0; layer < 3; ++layer) {
        size *= 2;
        std::tie(y0, y1) = widen(y0, y1, size);
        std::tie(x0, x1) = widen(x0, x1, size);
    }
    return PixelRect{y0, y1, x0, x1};
}

}  // namespace ccnn
