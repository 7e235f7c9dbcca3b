#include "ccnn/attention.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ccnn/errors.hpp"
#include "ccnn/ops.hpp"

namespace ccnn {

AttendResult attend(const Tensor& concepts, const Tensor& grid_vectors, const Tensor& u) {
    if (concepts.rank() != 2 || grid_vectors.rank() != 2 || u.rank() != 2 ||
        concepts.dim(1) != u.dim(0) || u.dim(1) != grid_vectors.dim(1)) {
        throw DimensionError("attend: incompatible shapes concepts" + shape_str(concepts.shape()) +
                             " U" + shape_str(u.shape()) + " grid" + shape_str(grid_vectors.shape()));
    }
    const Tensor projected = matmul(concepts, u);                      // [L x D_c]
    const Tensor scores = matmul(projected, transpose(grid_vectors));  // [L x N]
    AttendResult result;
    result.weights = softmax_lastdim(scores);
    result.features = matmul(result.weights, grid_vectors);  // [L x D_c]
    return result;
}

Tensor predict_logits(const PredictionParams& params, const Tensor& attn_features,
                      const Tensor& concepts) {
    Tensor pre = add(matmul(attn_features, transpose(params.w_attn)),
                     matmul(concepts, transpose(params.w_concept)));
    Tensor hidden = leaky_relu(add_bias_rows(pre, params.bias));
    return matmul(hidden, transpose(params.w_out));  // [L x V], no output bias
}

void export_attention(const AttentionMaps& maps, const std::filesystem::path& path) {
    if (maps.labels.size() != maps.weights.size()) {
        throw InputError("export_attention: " + std::to_string(maps.labels.size()) + " labels for " +
                         std::to_string(maps.weights.size()) + " maps");
    }
    const std::size_t cells = static_cast<std::size_t>(maps.side) * maps.side;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write attention file " + path.string());
    for (std::size_t j = 0; j < maps.weights.size(); ++j) {
        const auto& w = maps.weights[j];
        if (w.size() != cells) {
            throw InputError("export_attention: map " + std::to_string(j) + " has " +
                             std::to_string(w.size()) + " cells, expected " + std::to_string(cells));
        }
        for (double v : w) {
            if (!std::isfinite(v)) throw NumericError("export_attention: non-finite weight");
        }
        out << maps.labels[j] << '\n';
        char buf[32];
        for (int r = 0; r < maps.side; ++r) {
            for (int c = 0; c < maps.side; ++c) {
                std::snprintf(buf, sizeof(buf), "%.6f", w[static_cast<std::size_t>(r) * maps.side + c]);
                out << buf << (c + 1 == maps.side ? "" : " ");
            }
            out << '\n';
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed for attention file " + path.string());
}

AttentionMaps parse_attention_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open attention file " + path.string());
    AttentionMaps maps;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::string label = line;
        std::vector<double> weights;
        int rows = 0;
        while (std::getline(in, line) && !line.empty()) {
            std::istringstream row(line);
            double v;
            while (row >> v) weights.push_back(v);
            ++rows;
        }
        if (rows == 0) throw FormatError("attention file " + path.string() + ": empty block '" + label + "'");
        if (maps.side == 0) {
            maps.side = rows;
        } else if (maps.side != rows) {
            throw FormatError("attention file " + path.string() + ": inconsistent block height");
        }
        if (weights.size() != static_cast<std::size_t>(rows) * rows) {
            throw FormatError("attention file " + path.string() + ": block '" + label +
                              "' is not square");
        }
        maps.labels.push_back(label);
        maps.weights.push_back(std::move(weights));
    }
    return maps;
}

}  // namespace ccnn
