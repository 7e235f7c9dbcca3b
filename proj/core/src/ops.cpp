#include "ccnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ccnn/errors.hpp"

namespace ccnn {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

bool recording(const Tensor& a) { return Tape::current() && a.requires_grad(); }
bool recording(const Tensor& a, const Tensor& b) {
    return Tape::current() && (a.requires_grad() || b.requires_grad());
}

void record(Tape::Entry entry) { Tape::current()->record(std::move(entry)); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (recording(a, b)) {
        out.set_requires_grad(true);
        record({[a, b, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            if (a.requires_grad()) {
                auto& ga = g.at_or_create(a);
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*go)[i];
            }
            if (b.requires_grad()) {
                auto& gb = g.at_or_create(b);
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += (*go)[i];
            }
        }});
    }
    return out;
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * factor;
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out, factor](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i] * factor;
        }});
    }
    return out;
}

Tensor add_bias_rows(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || x.dim(1) != bias.dim(0)) {
        throw DimensionError("add_bias_rows: incompatible shapes " + shape_str(x.shape()) +
                             " vs " + shape_str(bias.shape()));
    }
    const int rows = x.dim(0);
    const int cols = x.dim(1);
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    const auto& bv = bias.values();
    auto& ov = out.values();
    for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) ov[base + c] = xv[base + c] + bv[c];
    }
    if (recording(x, bias)) {
        out.set_requires_grad(true);
        record({[x, bias, out, rows, cols](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            if (x.requires_grad()) {
                auto& gx = g.at_or_create(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i];
            }
            if (bias.requires_grad()) {
                auto& gb = g.at_or_create(bias);
                for (int r = 0; r < rows; ++r) {
                    const std::size_t base = static_cast<std::size_t>(r) * cols;
                    for (int c = 0; c < cols; ++c) gb[c] += (*go)[base + c];
                }
            }
        }});
    }
    return out;
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "elementwise_mul");
    Tensor out = Tensor::zeros(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (recording(a, b)) {
        out.set_requires_grad(true);
        record({[a, b, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            if (a.requires_grad()) {
                auto& ga = g.at_or_create(a);
                const auto& bv2 = b.values();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*go)[i] * bv2[i];
            }
            if (b.requires_grad()) {
                auto& gb = g.at_or_create(b);
                const auto& av2 = a.values();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += (*go)[i] * av2[i];
            }
        }});
    }
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 1.0 / (1.0 + std::exp(-xv[i]));
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            const auto& ov2 = out.values();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += (*go)[i] * ov2[i] * (1.0 - ov2[i]);
            }
        }});
    }
    return out;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out, slope](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            const auto& xv2 = x.values();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                gx[i] += (*go)[i] * (xv2[i] >= 0.0 ? 1.0 : slope);
            }
        }});
    }
    return out;
}

Tensor log_elem(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(xv[i]);
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            const auto& xv2 = x.values();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i] / xv2[i];
        }});
    }
    return out;
}

Tensor clamp_min(const Tensor& x, double floor) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::max(xv[i], floor);
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out, floor](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            const auto& xv2 = x.values();
            for (std::size_t i = 0; i < gx.size(); ++i) {
                if (xv2[i] > floor) gx[i] += (*go)[i];
            }
        }});
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() < 1) throw DimensionError("softmax_lastdim: scalar input");
    const int cols = x.shape().back();
    const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
    Tensor out = Tensor::zeros(x.shape());
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = r * static_cast<std::size_t>(cols);
        double m = xv[base];
        for (int c = 1; c < cols; ++c) m = std::max(m, xv[base + c]);
        double sum = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double e = std::exp(xv[base + c] - m);
            ov[base + c] = e;
            sum += e;
        }
        for (int c = 0; c < cols; ++c) ov[base + c] /= sum;
    }
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out, rows, cols](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            const auto& ov2 = out.values();
            for (std::size_t r = 0; r < rows; ++r) {
                const std::size_t base = r * static_cast<std::size_t>(cols);
                double dot = 0.0;
                for (int c = 0; c < cols; ++c) dot += (*go)[base + c] * ov2[base + c];
                for (int c = 0; c < cols; ++c) {
                    gx[base + c] += ov2[base + c] * ((*go)[base + c] - dot);
                }
            }
        }});
    }
    return out;
}

namespace {

// C[m x n] += A[m x k] * B[k x n]; row-outer so a single-row product executes
// the identical FLOP sequence as one row of a full product.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B^T where B is [k x n].
void gemm_nt(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * n;
            double acc = 0.0;
            for (int p = 0; p < n; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k x n] += A^T * B where A is [m x k], B is [m x n].
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const int m = a.dim(0);
    const int k = a.dim(1);
    const int n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    gemm_nn(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    if (recording(a, b)) {
        out.set_requires_grad(true);
        record({[a, b, out, m, k, n](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            if (a.requires_grad()) {
                auto& ga = g.at_or_create(a);
                gemm_nt(go->data(), b.values().data(), ga.data(), m, n, k);
            }
            if (b.requires_grad()) {
                auto& gb = g.at_or_create(b);
                gemm_tn(a.values().data(), go->data(), gb.data(), m, k, n);
            }
        }});
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(x.shape()));
    const int m = x.dim(0);
    const int n = x.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) out.at(j, i) = x.at(i, j);
    }
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out, m, n](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) {
                    gx[static_cast<std::size_t>(i) * n + j] += (*go)[static_cast<std::size_t>(j) * m + i];
                }
            }
        }});
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                             " changes element count");
    }
    Tensor out = Tensor::from(std::move(shape), x.values());
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[i];
        }});
    }
    return out;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (recording(x)) {
        out.set_requires_grad(true);
        record({[x, out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*go)[0];
        }});
    }
    return out;
}

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    if (x.rank() != 2 || kernel.rank() != 3 || bias.rank() != 1) {
        throw DimensionError("causal_conv1d: expected x[LxC_in], kernel[kxC_inxC_out], bias[C_out]; got " +
                             shape_str(x.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                             shape_str(bias.shape()));
    }
    const int length = x.dim(0);
    const int c_in = x.dim(1);
    const int k = kernel.dim(0);
    const int c_out = kernel.dim(2);
    if (k < 1 || length < 1) {
        throw DimensionError("causal_conv1d: empty kernel or input (k=" + std::to_string(k) +
                             ", L=" + std::to_string(length) + ")");
    }
    if (kernel.dim(1) != c_in || bias.dim(0) != c_out) {
        throw DimensionError("causal_conv1d: channel mismatch x" + shape_str(x.shape()) +
                             " kernel" + shape_str(kernel.shape()) + " bias" + shape_str(bias.shape()));
    }

    Tensor out = Tensor::zeros({length, c_out});
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();
    double* ov = out.values().data();
    for (int j = 0; j < length; ++j) {
        double* orow = ov + static_cast<std::size_t>(j) * c_out;
        for (int co = 0; co < c_out; ++co) orow[co] = bv[co];
        for (int t = 0; t < k; ++t) {
            const int src = j + t - (k - 1);
            if (src < 0) continue;
            const double* xrow = xv + static_cast<std::size_t>(src) * c_in;
            const double* kslab = kv + static_cast<std::size_t>(t) * c_in * c_out;
            for (int ci = 0; ci < c_in; ++ci) {
                const double xval = xrow[ci];
                const double* krow = kslab + static_cast<std::size_t>(ci) * c_out;
                for (int co = 0; co < c_out; ++co) orow[co] += xval * krow[co];
            }
        }
    }

    if (Tape::current() && (x.requires_grad() || kernel.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        record({[x, kernel, bias, out, length, c_in, k, c_out](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            const double* gov = go->data();
            if (bias.requires_grad()) {
                auto& gb = g.at_or_create(bias);
                for (int j = 0; j < length; ++j) {
                    const double* grow = gov + static_cast<std::size_t>(j) * c_out;
                    for (int co = 0; co < c_out; ++co) gb[co] += grow[co];
                }
            }
            const double* xv = x.values().data();
            const double* kv = kernel.values().data();
            double* gx = x.requires_grad() ? g.at_or_create(x).data() : nullptr;
            double* gk = kernel.requires_grad() ? g.at_or_create(kernel).data() : nullptr;
            if (!gx && !gk) return;
            for (int j = 0; j < length; ++j) {
                const double* grow = gov + static_cast<std::size_t>(j) * c_out;
                for (int t = 0; t < k; ++t) {
                    const int src = j + t - (k - 1);
                    if (src < 0) continue;
                    const double* xrow = xv + static_cast<std::size_t>(src) * c_in;
                    const double* kslab = kv + static_cast<std::size_t>(t) * c_in * c_out;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double* krow = kslab + static_cast<std::size_t>(ci) * c_out;
                        double acc = 0.0;
                        for (int co = 0; co < c_out; ++co) acc += grow[co] * krow[co];
                        if (gx) gx[static_cast<std::size_t>(src) * c_in + ci] += acc;
                        if (gk) {
                            double* gkrow = gk + static_cast<std::size_t>(t) * c_in * c_out +
                                            static_cast<std::size_t>(ci) * c_out;
                            const double xval = xrow[ci];
                            for (int co = 0; co < c_out; ++co) gkrow[co] += grow[co] * xval;
                        }
                    }
                }
            }
        }});
    }
    return out;
}

Tensor conv2d_replicate(const Tensor& x, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad) {
    if (x.rank() != 3 || kernel.rank() != 4 || bias.rank() != 1) {
        throw DimensionError("conv2d: expected x[HxWxC_in], kernel[khxkwxC_inxC_out], bias[C_out]; got " +
                             shape_str(x.shape()) + ", " + shape_str(kernel.shape()) + ", " +
                             shape_str(bias.shape()));
    }
    const int height = x.dim(0);
    const int width = x.dim(1);
    const int c_in = x.dim(2);
    const int kh = kernel.dim(0);
    const int kw = kernel.dim(1);
    const int c_out = kernel.dim(3);
    if (kernel.dim(2) != c_in || bias.dim(0) != c_out) {
        throw DimensionError("conv2d: channel mismatch x" + shape_str(x.shape()) + " kernel" +
                             shape_str(kernel.shape()));
    }
    if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
    const int out_h = (height + 2 * pad - kh) / stride + 1;
    const int out_w = (width + 2 * pad - kw) / stride + 1;
    if (out_h < 1 || out_w < 1) {
        throw DimensionError("conv2d: output collapses for input " + shape_str(x.shape()));
    }

    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };

    Tensor out = Tensor::zeros({out_h, out_w, c_out});
    const double* xv = x.values().data();
    const double* kv = kernel.values().data();
    const double* bv = bias.values().data();
    double* ov = out.values().data();
    for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            double* orow = ov + (static_cast<std::size_t>(oy) * out_w + ox) * c_out;
            for (int co = 0; co < c_out; ++co) orow[co] = bv[co];
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = clampi(oy * stride - pad + ky, height - 1);
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = clampi(ox * stride - pad + kx, width - 1);
                    const double* xrow = xv + (static_cast<std::size_t>(iy) * width + ix) * c_in;
                    const double* kslab =
                        kv + ((static_cast<std::size_t>(ky) * kw + kx) * c_in) * c_out;
                    for (int ci = 0; ci < c_in; ++ci) {
                        const double xval = xrow[ci];
                        const double* krow = kslab + static_cast<std::size_t>(ci) * c_out;
                        for (int co = 0; co < c_out; ++co) orow[co] += xval * krow[co];
                    }
                }
            }
        }
    }

    if (Tape::current() && (x.requires_grad() || kernel.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        record({[x, kernel, bias, out, height, width, c_in, kh, kw, c_out, stride, pad, out_h,
                 out_w](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
            const double* gov = go->data();
            if (bias.requires_grad()) {
                auto& gb = g.at_or_create(bias);
                for (int p = 0; p < out_h * out_w; ++p) {
                    const double* grow = gov + static_cast<std::size_t>(p) * c_out;
                    for (int co = 0; co < c_out; ++co) gb[co] += grow[co];
                }
            }
            const double* xv = x.values().data();
            const double* kv = kernel.values().data();
            double* gx = x.requires_grad() ? g.at_or_create(x).data() : nullptr;
            double* gk = kernel.requires_grad() ? g.at_or_create(kernel).data() : nullptr;
            if (!gx && !gk) return;
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    const double* grow = gov + (static_cast<std::size_t>(oy) * out_w + ox) * c_out;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = clampi(oy * stride - pad + ky, height - 1);
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = clampi(ox * stride - pad + kx, width - 1);
                            const std::size_t xoff = (static_cast<std::size_t>(iy) * width + ix) * c_in;
                            const double* kslab =
                                kv + ((static_cast<std::size_t>(ky) * kw + kx) * c_in) * c_out;
                            for (int ci = 0; ci < c_in; ++ci) {
                                const double* krow = kslab + static_cast<std::size_t>(ci) * c_out;
                                if (gx) {
                                    double acc = 0.0;
                                    for (int co = 0; co < c_out; ++co) acc += grow[co] * krow[co];
                                    gx[xoff + ci] += acc;
                                }
                                if (gk) {
                                    double* gkrow =
                                        gk + ((static_cast<std::size_t>(ky) * kw + kx) * c_in +
                                              ci) * c_out;
                                    const double xval = xv[xoff + ci];
                                    for (int co = 0; co < c_out; ++co) gkrow[co] += grow[co] * xval;
                                }
                            }
                        }
                    }
                }
            }
        }});
    }
    return out;
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) {
        throw DimensionError("gather_rows: table must be rank 2, got " + shape_str(table.shape()));
    }
    const int vocab = table.dim(0);
    const int dim = table.dim(1);
    const int length = static_cast<int>(ids.size());
    if (length < 1) throw DimensionError("gather_rows: empty id sequence");
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw IndexError("gather_rows: id " + std::to_string(id) + " out of range [0, " +
                             std::to_string(vocab) + ")");
        }
    }
    Tensor out = Tensor::zeros({length, dim});
    const auto& tv = table.values();
    auto& ov = out.values();
    for (int j = 0; j < length; ++j) {
        const std::size_t src = static_cast<std::size_t>(ids[j]) * dim;
        const std::size_t dst = static_cast<std::size_t>(j) * dim;
        for (int c = 0; c < dim; ++c) ov[dst + c] = tv[src + c];
    }
    if (recording(table)) {
        out.set_requires_grad(true);
        std::vector<int> ids_copy(ids.begin(), ids.end());
        record({[table, out, ids_copy, dim](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gt = g.at_or_create(table);
            for (std::size_t j = 0; j < ids_copy.size(); ++j) {
                const std::size_t dst = static_cast<std::size_t>(ids_copy[j]) * dim;
                const std::size_t src = j * dim;
                for (int c = 0; c < dim; ++c) gt[dst + c] += (*go)[src + c];
            }
        }});
    }
    return out;
}

Tensor take_per_row(const Tensor& x, std::span<const int> ids) {
    if (x.rank() != 2) {
        throw DimensionError("take_per_row: input must be rank 2, got " + shape_str(x.shape()));
    }
    const int rows = x.dim(0);
    const int cols = x.dim(1);
    if (static_cast<int>(ids.size()) != rows) {
        throw DimensionError("take_per_row: " + std::to_string(ids.size()) + " ids for " +
                             std::to_string(rows) + " rows");
    }
    for (int id : ids) {
        if (id < 0 || id >= cols) {
            throw IndexError("take_per_row: column " + std::to_string(id) + " out of range [0, " +
                             std::to_string(cols) + ")");
        }
    }
    Tensor out = Tensor::zeros({rows});
    for (int r = 0; r < rows; ++r) out.at(r) = x.at(r, ids[r]);
    if (recording(x)) {
        out.set_requires_grad(true);
        std::vector<int> ids_copy(ids.begin(), ids.end());
        record({[x, out, ids_copy, cols](GradMap& g) {
            const auto* go = g.find(out);
            if (!go) return;
            auto& gx = g.at_or_create(x);
            for (std::size_t r = 0; r < ids_copy.size(); ++r) {
                gx[r * cols + static_cast<std::size_t>(ids_copy[r])] += (*go)[r];
            }
        }});
    }
    return out;
}

}  // namespace ccnn
