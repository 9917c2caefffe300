#include "lfa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace lfa {

namespace {

int64_t shape_product(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape");
        n *= d;
    }
    return n;
}

using NodePtr = std::shared_ptr<detail::TensorNode>;

bool needs_grad(const NodePtr& n) { return n->requires_grad || n->tape_output; }

void ensure_grad(const NodePtr& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0);
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

void check_rank(const Tensor& t, size_t rank, const char* op, const char* role) {
    if (t.shape().size() != rank) {
        std::ostringstream os;
        os << op << ": " << role << " must have rank " << rank << ", got shape "
           << shape_str(t.shape());
        throw DimensionError(os.str());
    }
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape, bool requires_grad) {
    node_ = std::make_shared<detail::TensorNode>();
    int64_t n = shape_product(shape);
    node_->shape = std::move(shape);
    node_->data.assign(static_cast<size_t>(n), 0.0);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data, bool requires_grad) {
    int64_t n = shape_product(shape);
    if (n != static_cast<int64_t>(data.size())) {
        std::ostringstream os;
        os << "tensor: shape " << shape_str(shape) << " implies " << n << " values, got "
           << data.size();
        throw DimensionError(os.str());
    }
    node_ = std::make_shared<detail::TensorNode>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({1}, {v}, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double v, bool requires_grad) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), v);
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item(): tensor is not scalar, shape " + shape_str(shape()));
    return node_->data[0];
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->data.size(), 0.0);
}

void Tensor::clear_grad() {
    node_->grad.clear();
}

bool Tensor::all_finite() const {
    for (double v : node_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::clone() const {
    Tensor t;
    t.node_ = std::make_shared<detail::TensorNode>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    t.node_->requires_grad = node_->requires_grad;
    return t;
}

// ---------------------------------------------------------------------------
// Tape

void Tape::record(std::function<void()> backprop, const Tensor& out) {
    out.node()->tape_output = true;
    records_.push_back({std::move(backprop), out.node()});
    final_out_ = out;
}

void Tape::clear() {
    records_.clear();
    final_out_ = Tensor();
}

Tensor Tape::output() const {
    if (!final_out_.defined()) throw UsageError("tape has no recorded output");
    return final_out_;
}

void Tape::backward(const Tensor& seed) {
    if (records_.empty()) throw UsageError("backward on empty tape");
    auto out_node = final_out_.node();
    if (seed.shape() != out_node->shape) {
        throw DimensionError("backward: seed shape " + shape_str(seed.shape()) +
                             " does not match output shape " + shape_str(out_node->shape));
    }
    ensure_grad(out_node);
    for (size_t i = 0; i < out_node->grad.size(); ++i) {
        out_node->grad[i] += seed.data()[i];
    }
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->out->grad.empty()) continue;  // not an ancestor of the seeded output
        it->backprop();
    }
}

void backward(Tape& tape, const Tensor& seed) { tape.backward(seed); }

// ---------------------------------------------------------------------------
// Ops

Tensor conv3d(const Tensor& input, const Tensor& kernel, Dims3 stride, Dims3 padding,
              Tape* tape) {
    check_rank(input, 4, "conv3d", "input");
    check_rank(kernel, 5, "conv3d", "kernel");
    const int64_t T = input.dim(0), H = input.dim(1), W = input.dim(2), Cin = input.dim(3);
    const int64_t kT = kernel.dim(0), kH = kernel.dim(1), kW = kernel.dim(2);
    const int64_t kCin = kernel.dim(3), Cout = kernel.dim(4);
    if (kCin != Cin) {
        std::ostringstream os;
        os << "conv3d: channel axis mismatch, input C=" << Cin << " vs kernel Cin=" << kCin;
        throw DimensionError(os.str());
    }
    if (stride.t < 1 || stride.h < 1 || stride.w < 1) {
        throw DimensionError("conv3d: strides must be >= 1");
    }
    if (padding.t < 0 || padding.h < 0 || padding.w < 0) {
        throw DimensionError("conv3d: padding must be >= 0");
    }
    struct AxisCheck {
        const char* name;
        int64_t k, padded;
    };
    for (AxisCheck a : {AxisCheck{"T", kT, T + 2 * padding.t}, AxisCheck{"H", kH, H + 2 * padding.h},
                        AxisCheck{"W", kW, W + 2 * padding.w}}) {
        if (a.k < 1 || a.k > a.padded) {
            std::ostringstream os;
            os << "conv3d: kernel exceeds padded input on axis " << a.name << " (kernel " << a.k
               << " vs padded " << a.padded << ")";
            throw DimensionError(os.str());
        }
    }
    const int64_t To = (T + 2 * padding.t - kT) / stride.t + 1;
    const int64_t Ho = (H + 2 * padding.h - kH) / stride.h + 1;
    const int64_t Wo = (W + 2 * padding.w - kW) / stride.w + 1;

    Tensor out({To, Ho, Wo, Cout});
    double* o = out.mutable_data().data();
    const double* in = input.data().data();
    const double* k = kernel.data().data();

    for (int64_t to = 0; to < To; ++to) {
        for (int64_t ho = 0; ho < Ho; ++ho) {
            for (int64_t wo = 0; wo < Wo; ++wo) {
                double* orow = o + ((to * Ho + ho) * Wo + wo) * Cout;
                for (int64_t dt = 0; dt < kT; ++dt) {
                    const int64_t t = to * stride.t + dt - padding.t;
                    if (t < 0 || t >= T) continue;
                    for (int64_t dh = 0; dh < kH; ++dh) {
                        const int64_t h = ho * stride.h + dh - padding.h;
                        if (h < 0 || h >= H) continue;
                        for (int64_t dw = 0; dw < kW; ++dw) {
                            const int64_t w = wo * stride.w + dw - padding.w;
                            if (w < 0 || w >= W) continue;
                            const double* irow = in + ((t * H + h) * W + w) * Cin;
                            const double* krow = k + (((dt * kH + dh) * kW + dw) * Cin) * Cout;
                            for (int64_t ci = 0; ci < Cin; ++ci) {
                                const double a = irow[ci];
                                const double* kc = krow + ci * Cout;
                                for (int64_t co = 0; co < Cout; ++co) {
                                    orow[co] += a * kc[co];
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if (tape && (needs_grad(input.node()) || needs_grad(kernel.node()))) {
        auto in_node = input.node();
        auto k_node = kernel.node();
        auto out_node = out.node();
        tape->record(
            [in_node, k_node, out_node, T, H, W, Cin, kT, kH, kW, Cout, To, Ho, Wo, stride,
             padding]() {
                const bool gi = needs_grad(in_node);
                const bool gk = needs_grad(k_node);
                if (gi) ensure_grad(in_node);
                if (gk) ensure_grad(k_node);
                const double* go = out_node->grad.data();
                const double* in = in_node->data.data();
                const double* k = k_node->data.data();
                double* gin = gi ? in_node->grad.data() : nullptr;
                double* gker = gk ? k_node->grad.data() : nullptr;
                for (int64_t to = 0; to < To; ++to) {
                    for (int64_t ho = 0; ho < Ho; ++ho) {
                        for (int64_t wo = 0; wo < Wo; ++wo) {
                            const double* grow = go + ((to * Ho + ho) * Wo + wo) * Cout;
                            for (int64_t dt = 0; dt < kT; ++dt) {
                                const int64_t t = to * stride.t + dt - padding.t;
                                if (t < 0 || t >= T) continue;
                                for (int64_t dh = 0; dh < kH; ++dh) {
                                    const int64_t h = ho * stride.h + dh - padding.h;
                                    if (h < 0 || h >= H) continue;
                                    for (int64_t dw = 0; dw < kW; ++dw) {
                                        const int64_t w = wo * stride.w + dw - padding.w;
                                        if (w < 0 || w >= W) continue;
                                        const int64_t ibase = ((t * H + h) * W + w) * Cin;
                                        const int64_t kbase =
                                            (((dt * kH + dh) * kW + dw) * Cin) * Cout;
                                        for (int64_t ci = 0; ci < Cin; ++ci) {
                                            const double a = in[ibase + ci];
                                            const double* kc = k + kbase + ci * Cout;
                                            if (gk) {
                                                double* gkc = gker + kbase + ci * Cout;
                                                for (int64_t co = 0; co < Cout; ++co) {
                                                    gkc[co] += a * grow[co];
                                                }
                                            }
                                            if (gi) {
                                                double acc = 0.0;
                                                for (int64_t co = 0; co < Cout; ++co) {
                                                    acc += kc[co] * grow[co];
                                                }
                                                gin[ibase + ci] += acc;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            },
            out);
    }
    return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
    Tensor out(x.shape());
    const double* xi = x.data().data();
    double* o = out.mutable_data().data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) o[i] = xi[i] > 0.0 ? xi[i] : 0.0;

    if (tape && needs_grad(x.node())) {
        auto x_node = x.node();
        auto out_node = out.node();
        tape->record(
            [x_node, out_node]() {
                ensure_grad(x_node);
                const double* go = out_node->grad.data();
                const double* xv = x_node->data.data();
                double* gx = x_node->grad.data();
                for (size_t i = 0; i < x_node->data.size(); ++i) {
                    if (xv[i] > 0.0) gx[i] += go[i];
                }
            },
            out);
    }
    return out;
}

Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift, Tape* tape) {
    if (x.shape().empty()) throw DimensionError("channel_affine: input must have rank >= 1");
    check_rank(scale, 1, "channel_affine", "scale");
    check_rank(shift, 1, "channel_affine", "shift");
    const int64_t C = x.shape().back();
    if (scale.dim(0) != C || shift.dim(0) != C) {
        std::ostringstream os;
        os << "channel_affine: channel axis mismatch, x C=" << C << " vs scale "
           << scale.dim(0) << " / shift " << shift.dim(0);
        throw DimensionError(os.str());
    }
    Tensor out(x.shape());
    const double* xi = x.data().data();
    const double* s = scale.data().data();
    const double* b = shift.data().data();
    double* o = out.mutable_data().data();
    const int64_t rows = x.size() / C;
    for (int64_t r = 0; r < rows; ++r) {
        const double* xr = xi + r * C;
        double* orow = o + r * C;
        for (int64_t c = 0; c < C; ++c) orow[c] = s[c] * xr[c] + b[c];
    }

    if (tape && (needs_grad(x.node()) || needs_grad(scale.node()) || needs_grad(shift.node()))) {
        auto x_node = x.node();
        auto s_node = scale.node();
        auto b_node = shift.node();
        auto out_node = out.node();
        tape->record(
            [x_node, s_node, b_node, out_node, rows, C]() {
                const double* go = out_node->grad.data();
                const double* xv = x_node->data.data();
                const double* sv = s_node->data.data();
                if (needs_grad(x_node)) {
                    ensure_grad(x_node);
                    double* gx = x_node->grad.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* grow = go + r * C;
                        double* gxr = gx + r * C;
                        for (int64_t c = 0; c < C; ++c) gxr[c] += sv[c] * grow[c];
                    }
                }
                if (needs_grad(s_node)) {
                    ensure_grad(s_node);
                    double* gs = s_node->grad.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* grow = go + r * C;
                        const double* xr = xv + r * C;
                        for (int64_t c = 0; c < C; ++c) gs[c] += xr[c] * grow[c];
                    }
                }
                if (needs_grad(b_node)) {
                    ensure_grad(b_node);
                    double* gb = b_node->grad.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* grow = go + r * C;
                        for (int64_t c = 0; c < C; ++c) gb[c] += grow[c];
                    }
                }
            },
            out);
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x, Tape* tape) {
    check_rank(x, 4, "global_avg_pool", "input");
    const int64_t T = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (T < 1 || H < 1 || W < 1) throw DimensionError("global_avg_pool: empty spatial extent");
    const int64_t vol = T * H * W;
    Tensor out({C});
    const double* xi = x.data().data();
    double* o = out.mutable_data().data();
    for (int64_t r = 0; r < vol; ++r) {
        const double* xr = xi + r * C;
        for (int64_t c = 0; c < C; ++c) o[c] += xr[c];
    }
    for (int64_t c = 0; c < C; ++c) o[c] /= static_cast<double>(vol);

    if (tape && needs_grad(x.node())) {
        auto x_node = x.node();
        auto out_node = out.node();
        tape->record(
            [x_node, out_node, vol, C]() {
                ensure_grad(x_node);
                const double* go = out_node->grad.data();
                double* gx = x_node->grad.data();
                const double inv = 1.0 / static_cast<double>(vol);
                for (int64_t r = 0; r < vol; ++r) {
                    double* gxr = gx + r * C;
                    for (int64_t c = 0; c < C; ++c) gxr[c] += go[c] * inv;
                }
            },
            out);
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape) {
    check_rank(x, 1, "linear", "input");
    check_rank(w, 2, "linear", "weight");
    check_rank(b, 1, "linear", "bias");
    const int64_t Din = x.dim(0), Dout = w.dim(1);
    if (w.dim(0) != Din) {
        std::ostringstream os;
        os << "linear: inner dimension mismatch, x Din=" << Din << " vs weight rows " << w.dim(0);
        throw DimensionError(os.str());
    }
    if (b.dim(0) != Dout) {
        std::ostringstream os;
        os << "linear: bias size " << b.dim(0) << " vs weight cols " << Dout;
        throw DimensionError(os.str());
    }
    Tensor out({Dout});
    const double* xv = x.data().data();
    const double* wv = w.data().data();
    const double* bv = b.data().data();
    double* o = out.mutable_data().data();
    for (int64_t j = 0; j < Dout; ++j) o[j] = bv[j];
    for (int64_t i = 0; i < Din; ++i) {
        const double a = xv[i];
        const double* wr = wv + i * Dout;
        for (int64_t j = 0; j < Dout; ++j) o[j] += a * wr[j];
    }

    if (tape && (needs_grad(x.node()) || needs_grad(w.node()) || needs_grad(b.node()))) {
        auto x_node = x.node();
        auto w_node = w.node();
        auto b_node = b.node();
        auto out_node = out.node();
        tape->record(
            [x_node, w_node, b_node, out_node, Din, Dout]() {
                const double* go = out_node->grad.data();
                if (needs_grad(x_node)) {
                    ensure_grad(x_node);
                    double* gx = x_node->grad.data();
                    const double* wv = w_node->data.data();
                    for (int64_t i = 0; i < Din; ++i) {
                        const double* wr = wv + i * Dout;
                        double acc = 0.0;
                        for (int64_t j = 0; j < Dout; ++j) acc += wr[j] * go[j];
                        gx[i] += acc;
                    }
                }
                if (needs_grad(w_node)) {
                    ensure_grad(w_node);
                    double* gw = w_node->grad.data();
                    const double* xv = x_node->data.data();
                    for (int64_t i = 0; i < Din; ++i) {
                        const double a = xv[i];
                        double* gwr = gw + i * Dout;
                        for (int64_t j = 0; j < Dout; ++j) gwr[j] += a * go[j];
                    }
                }
                if (needs_grad(b_node)) {
                    ensure_grad(b_node);
                    double* gb = b_node->grad.data();
                    for (int64_t j = 0; j < Dout; ++j) gb[j] += go[j];
                }
            },
            out);
    }
    return out;
}

Tensor temporal_stride(const Tensor& x, int64_t stride, Tape* tape) {
    if (x.shape().empty()) throw DimensionError("temporal_stride: input must have rank >= 1");
    if (stride < 1) throw DimensionError("temporal_stride: stride must be >= 1");
    const int64_t T = x.dim(0);
    const int64_t To = (T + stride - 1) / stride;
    int64_t row = 1;
    for (size_t i = 1; i < x.shape().size(); ++i) row *= x.shape()[i];
    std::vector<int64_t> out_shape = x.shape();
    out_shape[0] = To;
    Tensor out(out_shape);
    const double* xi = x.data().data();
    double* o = out.mutable_data().data();
    for (int64_t to = 0; to < To; ++to) {
        std::copy(xi + to * stride * row, xi + (to * stride + 1) * row, o + to * row);
    }

    if (tape && needs_grad(x.node())) {
        auto x_node = x.node();
        auto out_node = out.node();
        tape->record(
            [x_node, out_node, stride, To, row]() {
                ensure_grad(x_node);
                const double* go = out_node->grad.data();
                double* gx = x_node->grad.data();
                for (int64_t to = 0; to < To; ++to) {
                    double* dst = gx + to * stride * row;
                    const double* src = go + to * row;
                    for (int64_t i = 0; i < row; ++i) dst[i] += src[i];
                }
            },
            out);
    }
    return out;
}

Tensor concat_last(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.shape().size() != b.shape().size() || a.shape().empty()) {
        throw DimensionError("concat_last: ranks differ or rank 0");
    }
    for (size_t i = 0; i + 1 < a.shape().size(); ++i) {
        if (a.shape()[i] != b.shape()[i]) {
            std::ostringstream os;
            os << "concat_last: leading axis " << i << " mismatch, " << a.shape()[i] << " vs "
               << b.shape()[i];
            throw DimensionError(os.str());
        }
    }
    const int64_t ca = a.shape().back(), cb = b.shape().back();
    std::vector<int64_t> out_shape = a.shape();
    out_shape.back() = ca + cb;
    const int64_t rows = a.size() / std::max<int64_t>(ca, 1);
    Tensor out(out_shape);
    const double* av = a.data().data();
    const double* bv = b.data().data();
    double* o = out.mutable_data().data();
    for (int64_t r = 0; r < rows; ++r) {
        std::copy(av + r * ca, av + (r + 1) * ca, o + r * (ca + cb));
        std::copy(bv + r * cb, bv + (r + 1) * cb, o + r * (ca + cb) + ca);
    }

    if (tape && (needs_grad(a.node()) || needs_grad(b.node()))) {
        auto a_node = a.node();
        auto b_node = b.node();
        auto out_node = out.node();
        tape->record(
            [a_node, b_node, out_node, rows, ca, cb]() {
                const double* go = out_node->grad.data();
                if (needs_grad(a_node)) {
                    ensure_grad(a_node);
                    double* ga = a_node->grad.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* src = go + r * (ca + cb);
                        for (int64_t i = 0; i < ca; ++i) ga[r * ca + i] += src[i];
                    }
                }
                if (needs_grad(b_node)) {
                    ensure_grad(b_node);
                    double* gb = b_node->grad.data();
                    for (int64_t r = 0; r < rows; ++r) {
                        const double* src = go + r * (ca + cb) + ca;
                        for (int64_t i = 0; i < cb; ++i) gb[r * cb + i] += src[i];
                    }
                }
            },
            out);
    }
    return out;
}

Tensor l2_normalize(const Tensor& x, Tape* tape) {
    constexpr double kEps = 1e-12;
    const int64_t n = x.size();
    double ss = 0.0;
    const double* xv = x.data().data();
    for (int64_t i = 0; i < n; ++i) ss += xv[i] * xv[i];
    const double norm = std::sqrt(ss);
    const double denom = std::max(norm, kEps);
    Tensor out(x.shape());
    double* o = out.mutable_data().data();
    for (int64_t i = 0; i < n; ++i) o[i] = xv[i] / denom;

    if (tape && needs_grad(x.node())) {
        auto x_node = x.node();
        auto out_node = out.node();
        const bool degenerate = norm <= kEps;
        tape->record(
            [x_node, out_node, denom, degenerate, n]() {
                ensure_grad(x_node);
                const double* go = out_node->grad.data();
                const double* y = out_node->data.data();
                double* gx = x_node->grad.data();
                if (degenerate) {
                    for (int64_t i = 0; i < n; ++i) gx[i] += go[i] / denom;
                    return;
                }
                double dot = 0.0;
                for (int64_t i = 0; i < n; ++i) dot += go[i] * y[i];
                for (int64_t i = 0; i < n; ++i) gx[i] += (go[i] - dot * y[i]) / denom;
            },
            out);
    }
    return out;
}

Tensor cosine_distance(const Tensor& a, const Tensor& b, Tape* tape) {
    if (a.size() != b.size()) {
        throw DimensionError("cosine_distance: size mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    const int64_t n = a.size();
    const double* av = a.data().data();
    const double* bv = b.data().data();
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        dot += av[i] * bv[i];
        na2 += av[i] * av[i];
        nb2 += bv[i] * bv[i];
    }
    if (na2 == 0.0 || nb2 == 0.0) throw UsageError("cosine_distance: zero-norm input");
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    const double sim = dot / (na * nb);
    Tensor out = Tensor::scalar(1.0 - sim);

    if (tape && (needs_grad(a.node()) || needs_grad(b.node()))) {
        auto a_node = a.node();
        auto b_node = b.node();
        auto out_node = out.node();
        tape->record(
            [a_node, b_node, out_node, na, nb, sim, n]() {
                const double g = out_node->grad[0];
                const double* av = a_node->data.data();
                const double* bv = b_node->data.data();
                if (needs_grad(a_node)) {
                    ensure_grad(a_node);
                    double* ga = a_node->grad.data();
                    for (int64_t i = 0; i < n; ++i) {
                        ga[i] += g * (sim * av[i] / (na * na) - bv[i] / (na * nb));
                    }
                }
                if (needs_grad(b_node)) {
                    ensure_grad(b_node);
                    double* gb = b_node->grad.data();
                    for (int64_t i = 0; i < n; ++i) {
                        gb[i] += g * (sim * bv[i] / (nb * nb) - av[i] / (na * nb));
                    }
                }
            },
            out);
    }
    return out;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.mutable_data()[i] = a.data()[i] + b.data()[i];
    if (tape && (needs_grad(a.node()) || needs_grad(b.node()))) {
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        tape->record(
            [an, bn, on]() {
                if (needs_grad(an)) {
                    ensure_grad(an);
                    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
                }
                if (needs_grad(bn)) {
                    ensure_grad(bn);
                    for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
                }
            },
            out);
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.mutable_data()[i] = a.data()[i] - b.data()[i];
    if (tape && (needs_grad(a.node()) || needs_grad(b.node()))) {
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        tape->record(
            [an, bn, on]() {
                if (needs_grad(an)) {
                    ensure_grad(an);
                    for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
                }
                if (needs_grad(bn)) {
                    ensure_grad(bn);
                    for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
                }
            },
            out);
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) out.mutable_data()[i] = a.data()[i] * b.data()[i];
    if (tape && (needs_grad(a.node()) || needs_grad(b.node()))) {
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        tape->record(
            [an, bn, on]() {
                if (needs_grad(an)) {
                    ensure_grad(an);
                    for (size_t i = 0; i < on->grad.size(); ++i) {
                        an->grad[i] += bn->data[i] * on->grad[i];
                    }
                }
                if (needs_grad(bn)) {
                    ensure_grad(bn);
                    for (size_t i = 0; i < on->grad.size(); ++i) {
                        bn->grad[i] += an->data[i] * on->grad[i];
                    }
                }
            },
            out);
    }
    return out;
}

Tensor scale(const Tensor& x, double k, Tape* tape) {
    Tensor out(x.shape());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) out.mutable_data()[i] = k * x.data()[i];
    if (tape && needs_grad(x.node())) {
        auto xn = x.node();
        auto on = out.node();
        tape->record(
            [xn, on, k]() {
                ensure_grad(xn);
                for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += k * on->grad[i];
            },
            out);
    }
    return out;
}

Tensor add_scalar(const Tensor& x, double c, Tape* tape) {
    Tensor out(x.shape());
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) out.mutable_data()[i] = x.data()[i] + c;
    if (tape && needs_grad(x.node())) {
        auto xn = x.node();
        auto on = out.node();
        tape->record(
            [xn, on]() {
                ensure_grad(xn);
                for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
            },
            out);
    }
    return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (tape && needs_grad(x.node())) {
        auto xn = x.node();
        auto on = out.node();
        tape->record(
            [xn, on]() {
                ensure_grad(xn);
                const double g = on->grad[0];
                for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
            },
            out);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const DiffFn& f, const std::vector<Tensor>& inputs, double step,
                           double tol) {
    if (inputs.empty()) throw UsageError("grad_check: no inputs");
    for (const Tensor& t : inputs) {
        if (!t.all_finite()) throw UsageError("grad_check: non-finite input");
    }
    std::vector<Tensor> work;
    work.reserve(inputs.size());
    for (const Tensor& t : inputs) {
        Tensor c = t.clone();
        c.set_requires_grad(true);
        work.push_back(c);
    }

    Tape tape;
    Tensor out = f(work, &tape);
    if (out.size() != 1) {
        throw UsageError("grad_check: f must be scalar-valued, got shape of size " +
                         std::to_string(out.size()));
    }
    tape.backward(Tensor::scalar(1.0));

    std::vector<std::vector<double>> analytic;
    for (Tensor& t : work) {
        if (t.has_grad()) {
            analytic.emplace_back(t.grad().begin(), t.grad().end());
        } else {
            analytic.emplace_back(static_cast<size_t>(t.size()), 0.0);
        }
    }

    GradCheckReport report;
    for (size_t k = 0; k < work.size(); ++k) {
        auto vals = work[k].mutable_data();
        for (int64_t i = 0; i < work[k].size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + step;
            const double fp = f(work, nullptr).item();
            vals[i] = orig - step;
            const double fm = f(work, nullptr).item();
            vals[i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[k][static_cast<size_t>(i)];
            const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
            const double rel = std::fabs(a - numeric) / denom;
            report.max_rel_err = std::max(report.max_rel_err, rel);
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

// ---------------------------------------------------------------------------
// Optimizer

void Optimizer::step(std::vector<Parameter>& params) {
    ++step_count_;
    for (Parameter& p : params) {
        if (!p.tensor.has_grad()) {
            throw UsageError("optimizer step: parameter '" + p.name + "' has no gradient");
        }
        auto vals = p.tensor.mutable_data();
        auto g = p.tensor.grad();
        const size_t n = vals.size();
        if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
            for (size_t i = 0; i < n; ++i) vals[i] -= cfg_.lr * g[i];
            continue;
        }
        auto& m = m_[p.name];
        auto& v = v_[p.name];
        if (m.empty()) m.assign(n, 0.0);
        if (v.empty()) v.assign(n, 0.0);
        if (m.size() != n || v.size() != n) {
            throw UsageError("optimizer step: moment size mismatch for '" + p.name + "'");
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        for (size_t i = 0; i < n; ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            vals[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace lfa
