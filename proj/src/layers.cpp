#include "urfb/layers.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace urfb {

namespace {

void check_batch_input(const std::vector<const Tensor*>& in, std::size_t n_expected,
                       int flat, const char* kind) {
    if (in.size() != n_expected)
        throw std::invalid_argument(std::string(kind) + ": expected " +
                                    std::to_string(n_expected) + " input(s)");
    for (const Tensor* t : in) {
        if (t->rank() != 2 || t->dim(1) != static_cast<std::size_t>(flat))
            throw std::invalid_argument(std::string(kind) + ": input shape " + t->shape_str() +
                                        " does not match fan-in " + std::to_string(flat));
    }
}

void check_delta_shape(const Tensor& d_out, const Tensor& x_out, const char* kind) {
    if (!d_out.same_shape(x_out))
        throw std::invalid_argument(std::string(kind) + ": delta shape " + d_out.shape_str() +
                                    " does not match output " + x_out.shape_str());
}

void saturate_and_gate(const Tensor& h, Tensor& x, Tensor& gate) {
    x = h;
    gate = h;
    for (std::size_t i = 0; i < h.size(); ++i) {
        x[i] = saturate(h[i]);
        gate[i] = gate_open(h[i]);
    }
}

}  // namespace

Tensor bernoulli_mask(Rng& rng, double drop_fraction, std::vector<std::size_t> shape) {
    if (!(drop_fraction >= 0.0 && drop_fraction < 1.0))
        throw std::invalid_argument("bernoulli_mask: drop fraction must be in [0, 1)");
    Tensor m(std::move(shape));
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = rng.uniform() < drop_fraction ? 0.0 : 1.0;
    return m;
}

double Layer::alignment() const { return std::numeric_limits<double>::quiet_NaN(); }

// --- FullLayer -----------------------------------------------------------------

FullLayer::FullLayer(Rng& rng, int n_in, int n_out, bool is_output) : is_output_(is_output) {
    if (n_in < 1 || n_out < 1) throw std::invalid_argument("FullLayer: bad dimensions");
    auto ni = static_cast<std::size_t>(n_in), no = static_cast<std::size_t>(n_out);
    w_.W = glorot_uniform(rng, ni, no, {no, ni});
    w_.R = glorot_uniform(rng, ni, no, {ni, no});
    in_shape = FeatShape::flat(n_in);
    out_shape = FeatShape::flat(n_out);
}

void FullLayer::forward(const std::vector<const Tensor*>& in, bool, Rng&) {
    check_batch_input(in, 1, in_shape.flat_size(), kind());
    x_in_ = in[0];
    const std::size_t B = x_in_->dim(0);
    h_ = Tensor({B, w_.W.dim(0)});
    gemm_nt(h_, *x_in_, w_.W);
    check_finite(h_, kind());
    if (is_output_) {
        x_out_ = h_;
        gate_ = Tensor();
    } else {
        saturate_and_gate(h_, x_out_, gate_);
    }
}

std::vector<Tensor> FullLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    delta_ = is_output_ ? d_out : hadamard(d_out, gate_);
    if (!need_input_delta) return {};
    Tensor d_in({d_out.dim(0), w_.R.dim(0)});
    gemm_nt(d_in, delta_, w_.R);
    return {std::move(d_in)};
}

void FullLayer::update(double step, Mode mode) {
    if (delta_.size() == 0) throw std::logic_error("FullLayer::update before feedback");
    const std::size_t no = w_.W.dim(0), ni = w_.W.dim(1);
    if (!grad_.same_shape(w_.W)) grad_ = Tensor({no, ni});
    gemm_tn(grad_, delta_, *x_in_);
    double* W = w_.W.data();
    const double* G = grad_.data();
    if (w_.masked) {
        const double* mW = w_.maskW.data();
        for (std::size_t e = 0; e < no * ni; ++e) W[e] += step * G[e] * mW[e];
    } else {
        for (std::size_t e = 0; e < no * ni; ++e) W[e] += step * G[e];
    }
    if (mode != Mode::FRFB) {
        // same Hebbian increment for R, transposed into [n_in, n_out]
        double* R = w_.R.data();
        const double* mR = w_.masked ? w_.maskR.data() : nullptr;
        for (std::size_t k = 0; k < no; ++k)
            for (std::size_t i = 0; i < ni; ++i) {
                double g = step * G[k * ni + i];
                R[i * no + k] += mR ? g * mR[i * no + k] : g;
            }
    }
}

void FullLayer::prune(double drop_fraction, Rng& rng, Mode mode) {
    w_.maskW = bernoulli_mask(rng, drop_fraction, w_.W.shape());
    // the R draw is burned in BP mode so the stream stays aligned across modes
    Tensor r_draw = bernoulli_mask(rng, drop_fraction, w_.R.shape());
    w_.maskR = mode == Mode::BP ? transpose(w_.maskW) : std::move(r_draw);
    w_.masked = true;
    w_.W = hadamard(w_.W, w_.maskW);
    w_.R = hadamard(w_.R, w_.maskR);
}

void FullLayer::tie_feedback() {
    if (w_.masked) {
        w_.maskR = transpose(w_.maskW);
        w_.R = hadamard(transpose(w_.W), w_.maskR);
    } else {
        w_.R = transpose(w_.W);
    }
}

double FullLayer::alignment() const {
    const std::size_t no = w_.W.dim(0), ni = w_.W.dim(1);
    std::vector<double> a, b;
    a.reserve(no * ni);
    b.reserve(no * ni);
    for (std::size_t k = 0; k < no; ++k)
        for (std::size_t i = 0; i < ni; ++i) {
            if (w_.masked && (w_.maskW[k * ni + i] == 0.0 || w_.maskR[i * no + k] == 0.0))
                continue;
            a.push_back(w_.W[k * ni + i]);
            b.push_back(w_.R[i * no + k]);
        }
    return pearson(a, b);
}

// --- ConvLayer -------------------------------------------------------------------
// Same-padded cross-correlation, stride 1. The filter bank W is [filters, K]
// with K = in_c*kh*kw; forward is one GEMM per sample over an im2col buffer.

ConvLayer::ConvLayer(Rng& rng, FeatShape in, int filters, int kh, int kw)
    : kh_(kh), kw_(kw), pad_t_((kh - 1) / 2), pad_l_((kw - 1) / 2) {
    if (!in.spatial) throw std::invalid_argument("ConvLayer: needs a spatial input");
    if (filters < 1 || kh < 1 || kw < 1) throw std::invalid_argument("ConvLayer: bad geometry");
    in_shape = in;
    out_shape = FeatShape::image(filters, in.h, in.w);
    const std::size_t K = static_cast<std::size_t>(in.c) * kh * kw;
    const std::size_t fan_in = K;
    const std::size_t fan_out = static_cast<std::size_t>(filters) * kh * kw;
    w_.W = glorot_uniform(rng, fan_in, fan_out, {static_cast<std::size_t>(filters), K});
    w_.R = glorot_uniform(rng, fan_in, fan_out, {static_cast<std::size_t>(filters), K});
    col_.resize(K * static_cast<std::size_t>(in.h) * in.w);
}

void ConvLayer::im2col(const double* x, double* col) const {
    const int H = in_shape.h, W = in_shape.w, C = in_shape.c;
    const std::size_t HW = static_cast<std::size_t>(H) * W;
    std::size_t r = 0;
    for (int c0 = 0; c0 < C; ++c0)
        for (int ky = 0; ky < kh_; ++ky)
            for (int kx = 0; kx < kw_; ++kx, ++r) {
                const int dy = ky - pad_t_, dx = kx - pad_l_;
                double* dst_row = col + r * HW;
                for (int oy = 0; oy < H; ++oy) {
                    double* dst = dst_row + static_cast<std::size_t>(oy) * W;
                    const int iy = oy + dy;
                    if (iy < 0 || iy >= H) {
                        std::memset(dst, 0, sizeof(double) * W);
                        continue;
                    }
                    const double* src = x + (static_cast<std::size_t>(c0) * H + iy) * W;
                    const int ox_lo = std::max(0, -dx);
                    const int ox_hi = std::min(W, W - dx);  // exclusive
                    for (int ox = 0; ox < ox_lo; ++ox) dst[ox] = 0.0;
                    if (ox_hi > ox_lo)
                        std::memcpy(dst + ox_lo, src + ox_lo + dx,
                                    sizeof(double) * (ox_hi - ox_lo));
                    for (int ox = ox_hi; ox < W; ++ox) dst[ox] = 0.0;
                }
            }
}

void ConvLayer::col2im_add(const double* col, double* x) const {
    const int H = in_shape.h, W = in_shape.w, C = in_shape.c;
    const std::size_t HW = static_cast<std::size_t>(H) * W;
    std::size_t r = 0;
    for (int c0 = 0; c0 < C; ++c0)
        for (int ky = 0; ky < kh_; ++ky)
            for (int kx = 0; kx < kw_; ++kx, ++r) {
                const int dy = ky - pad_t_, dx = kx - pad_l_;
                const double* src_row = col + r * HW;
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + dy;
                    if (iy < 0 || iy >= H) continue;
                    const double* src = src_row + static_cast<std::size_t>(oy) * W;
                    double* dst = x + (static_cast<std::size_t>(c0) * H + iy) * W;
                    const int ox_lo = std::max(0, -dx);
                    const int ox_hi = std::min(W, W - dx);
                    for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox + dx] += src[ox];
                }
            }
}

void ConvLayer::forward(const std::vector<const Tensor*>& in, bool, Rng&) {
    check_batch_input(in, 1, in_shape.flat_size(), kind());
    x_in_ = in[0];
    const std::size_t B = x_in_->dim(0);
    const int filters = static_cast<int>(w_.W.dim(0));
    const int K = static_cast<int>(w_.W.dim(1));
    const int HW = in_shape.h * in_shape.w;
    h_ = Tensor({B, static_cast<std::size_t>(out_shape.flat_size())});
    for (std::size_t b = 0; b < B; ++b) {
        im2col(x_in_->data() + b * in_shape.flat_size(), col_.data());
        gemm_nn_raw(h_.data() + b * out_shape.flat_size(), w_.W.data(), col_.data(), filters, K,
                    HW, false);
    }
    check_finite(h_, kind());
    saturate_and_gate(h_, x_out_, gate_);
}

std::vector<Tensor> ConvLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    delta_ = hadamard(d_out, gate_);
    if (!need_input_delta) return {};
    const std::size_t B = d_out.dim(0);
    const int filters = static_cast<int>(w_.W.dim(0));
    const int K = static_cast<int>(w_.W.dim(1));
    const int HW = in_shape.h * in_shape.w;
    Tensor d_in({B, static_cast<std::size_t>(in_shape.flat_size())});
    for (std::size_t b = 0; b < B; ++b) {
        gemm_tn_raw(col_.data(), w_.R.data(), delta_.data() + b * out_shape.flat_size(), K,
                    filters, HW, false);
        col2im_add(col_.data(), d_in.data() + b * in_shape.flat_size());
    }
    return {std::move(d_in)};
}

void ConvLayer::update(double step, Mode mode) {
    if (delta_.size() == 0) throw std::logic_error("ConvLayer::update before feedback");
    const std::size_t B = delta_.dim(0);
    const int filters = static_cast<int>(w_.W.dim(0));
    const int K = static_cast<int>(w_.W.dim(1));
    const int HW = in_shape.h * in_shape.w;
    if (!grad_.same_shape(w_.W)) grad_ = Tensor(w_.W.shape());
    grad_.fill(0.0);
    for (std::size_t b = 0; b < B; ++b) {
        im2col(x_in_->data() + b * in_shape.flat_size(), col_.data());
        gemm_nt_raw(grad_.data(), delta_.data() + b * out_shape.flat_size(), col_.data(), filters,
                    HW, K, true);
    }
    double* W = w_.W.data();
    double* R = w_.R.data();
    const double* G = grad_.data();
    const std::size_t n = w_.W.size();
    if (w_.masked) {
        const double* mW = w_.maskW.data();
        const double* mR = w_.maskR.data();
        for (std::size_t e = 0; e < n; ++e) W[e] += step * G[e] * mW[e];
        if (mode != Mode::FRFB)
            for (std::size_t e = 0; e < n; ++e) R[e] += step * G[e] * mR[e];
    } else {
        for (std::size_t e = 0; e < n; ++e) W[e] += step * G[e];
        if (mode != Mode::FRFB)
            for (std::size_t e = 0; e < n; ++e) R[e] += step * G[e];
    }
}

void ConvLayer::prune(double drop_fraction, Rng& rng, Mode mode) {
    w_.maskW = bernoulli_mask(rng, drop_fraction, w_.W.shape());
    Tensor r_draw = bernoulli_mask(rng, drop_fraction, w_.R.shape());
    w_.maskR = mode == Mode::BP ? w_.maskW : std::move(r_draw);
    w_.masked = true;
    w_.W = hadamard(w_.W, w_.maskW);
    w_.R = hadamard(w_.R, w_.maskR);
}

void ConvLayer::tie_feedback() {
    if (w_.masked) {
        w_.maskR = w_.maskW;
        w_.R = hadamard(w_.W, w_.maskR);
    } else {
        w_.R = w_.W;
    }
}

double ConvLayer::alignment() const {
    if (!w_.masked) return pearson(w_.W, w_.R);
    std::vector<double> a, b;
    for (std::size_t e = 0; e < w_.W.size(); ++e) {
        if (w_.maskW[e] == 0.0 || w_.maskR[e] == 0.0) continue;
        a.push_back(w_.W[e]);
        b.push_back(w_.R[e]);
    }
    return pearson(a, b);
}

// --- LocalConvLayer ---------------------------------------------------------------
// Conv geometry with untied weights: a sparse matrix over the conv-induced
// support. The feedback weights live on the transposed support (same edges,
// independent values).

LocalConvLayer::LocalConvLayer(FeatShape in, int filters, int kh, int kw)
    : kh_(kh), kw_(kw), pad_t_((kh - 1) / 2), pad_l_((kw - 1) / 2) {
    if (!in.spatial) throw std::invalid_argument("LocalConvLayer: needs a spatial input");
    if (filters < 1 || kh < 1 || kw < 1)
        throw std::invalid_argument("LocalConvLayer: bad geometry");
    in_shape = in;
    out_shape = FeatShape::image(filters, in.h, in.w);
    build_support(in, filters, kh, kw);
}

LocalConvLayer::LocalConvLayer(Rng& rng, FeatShape in, int filters, int kh, int kw)
    : LocalConvLayer(in, filters, kh, kw) {
    // per-edge glorot draws using the inducing kernel's fans
    const std::size_t fan_in = static_cast<std::size_t>(in.c) * kh * kw;
    const std::size_t fan_out = static_cast<std::size_t>(filters) * kh * kw;
    const double b = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    w_.W_vals.resize(w_.col_idx.size());
    w_.R_vals.resize(w_.col_idx.size());
    for (double& v : w_.W_vals) v = rng.uniform(-b, b);
    for (double& v : w_.R_vals) v = rng.uniform(-b, b);
    grad_vals_.resize(w_.col_idx.size());
}

void LocalConvLayer::build_support(FeatShape in, int filters, int kh, int kw) {
    const int H = in.h, W = in.w, C = in.c;
    const std::size_t rows = static_cast<std::size_t>(filters) * H * W;
    w_.row_ptr.reserve(rows + 1);
    w_.row_ptr.push_back(0);
    for (int f = 0; f < filters; ++f)
        for (int oy = 0; oy < H; ++oy)
            for (int ox = 0; ox < W; ++ox) {
                for (int c0 = 0; c0 < C; ++c0)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy + ky - pad_t_, ix = ox + kx - pad_l_;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            w_.col_idx.push_back((c0 * H + iy) * W + ix);
                            w_.tap_idx.push_back((c0 * kh + ky) * kw + kx);
                        }
                w_.row_ptr.push_back(w_.col_idx.size());
            }
}

std::unique_ptr<LocalConvLayer> LocalConvLayer::tied_copy(const ConvLayer& conv) {
    auto layer = std::unique_ptr<LocalConvLayer>(new LocalConvLayer(
        conv.in_shape, conv.out_shape.c, conv.kh(), conv.kw()));
    const LocalConvWeights& s = layer->w_;
    const std::size_t rows = layer->w_.row_ptr.size() - 1;
    const std::size_t HW = static_cast<std::size_t>(conv.in_shape.h) * conv.in_shape.w;
    layer->w_.W_vals.resize(s.col_idx.size());
    layer->w_.R_vals.resize(s.col_idx.size());
    const DualWeights* cw = conv.Layer::dual_weights();
    const std::size_t K = cw->W.dim(1);
    for (std::size_t o = 0; o < rows; ++o) {
        const std::size_t f = o / HW;
        for (std::size_t e = s.row_ptr[o]; e < s.row_ptr[o + 1]; ++e) {
            layer->w_.W_vals[e] = cw->W[f * K + s.tap_idx[e]];
            layer->w_.R_vals[e] = cw->R[f * K + s.tap_idx[e]];
        }
    }
    layer->grad_vals_.resize(s.col_idx.size());
    return layer;
}

void LocalConvLayer::forward(const std::vector<const Tensor*>& in, bool, Rng&) {
    check_batch_input(in, 1, in_shape.flat_size(), kind());
    x_in_ = in[0];
    const std::size_t B = x_in_->dim(0);
    const std::size_t rows = w_.row_ptr.size() - 1;
    h_ = Tensor({B, rows});
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = x_in_->data() + b * in_shape.flat_size();
        double* hb = h_.data() + b * rows;
        for (std::size_t o = 0; o < rows; ++o) {
            double s = 0.0;
            for (std::size_t e = w_.row_ptr[o]; e < w_.row_ptr[o + 1]; ++e)
                s += w_.W_vals[e] * x[w_.col_idx[e]];
            hb[o] = s;
        }
    }
    check_finite(h_, kind());
    saturate_and_gate(h_, x_out_, gate_);
}

std::vector<Tensor> LocalConvLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    delta_ = hadamard(d_out, gate_);
    if (!need_input_delta) return {};
    const std::size_t B = d_out.dim(0);
    const std::size_t rows = w_.row_ptr.size() - 1;
    Tensor d_in({B, static_cast<std::size_t>(in_shape.flat_size())});
    for (std::size_t b = 0; b < B; ++b) {
        const double* db = delta_.data() + b * rows;
        double* out = d_in.data() + b * in_shape.flat_size();
        for (std::size_t o = 0; o < rows; ++o) {
            const double d = db[o];
            if (d == 0.0) continue;
            for (std::size_t e = w_.row_ptr[o]; e < w_.row_ptr[o + 1]; ++e)
                out[w_.col_idx[e]] += d * w_.R_vals[e];
        }
    }
    return {std::move(d_in)};
}

void LocalConvLayer::update(double step, Mode mode) {
    if (delta_.size() == 0) throw std::logic_error("LocalConvLayer::update before feedback");
    const std::size_t B = delta_.dim(0);
    const std::size_t rows = w_.row_ptr.size() - 1;
    std::fill(grad_vals_.begin(), grad_vals_.end(), 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const double* db = delta_.data() + b * rows;
        const double* x = x_in_->data() + b * in_shape.flat_size();
        for (std::size_t o = 0; o < rows; ++o) {
            const double d = db[o];
            if (d == 0.0) continue;
            for (std::size_t e = w_.row_ptr[o]; e < w_.row_ptr[o + 1]; ++e)
                grad_vals_[e] += d * x[w_.col_idx[e]];
        }
    }
    const std::size_t n = grad_vals_.size();
    if (w_.masked) {
        for (std::size_t e = 0; e < n; ++e) w_.W_vals[e] += step * grad_vals_[e] * w_.maskW_vals[e];
        if (mode != Mode::FRFB)
            for (std::size_t e = 0; e < n; ++e)
                w_.R_vals[e] += step * grad_vals_[e] * w_.maskR_vals[e];
    } else {
        for (std::size_t e = 0; e < n; ++e) w_.W_vals[e] += step * grad_vals_[e];
        if (mode != Mode::FRFB)
            for (std::size_t e = 0; e < n; ++e) w_.R_vals[e] += step * grad_vals_[e];
    }
}

void LocalConvLayer::prune(double drop_fraction, Rng& rng, Mode mode) {
    const std::size_t n = w_.W_vals.size();
    w_.maskW_vals.resize(n);
    w_.maskR_vals.resize(n);
    for (std::size_t e = 0; e < n; ++e)
        w_.maskW_vals[e] = rng.uniform() < drop_fraction ? 0.0 : 1.0;
    for (std::size_t e = 0; e < n; ++e)
        w_.maskR_vals[e] = rng.uniform() < drop_fraction ? 0.0 : 1.0;
    if (mode == Mode::BP) w_.maskR_vals = w_.maskW_vals;
    w_.masked = true;
    for (std::size_t e = 0; e < n; ++e) {
        w_.W_vals[e] *= w_.maskW_vals[e];
        w_.R_vals[e] *= w_.maskR_vals[e];
    }
}

void LocalConvLayer::tie_feedback() {
    if (w_.masked) {
        w_.maskR_vals = w_.maskW_vals;
    }
    w_.R_vals = w_.W_vals;
}

double LocalConvLayer::alignment() const {
    if (!w_.masked) return pearson(w_.W_vals, w_.R_vals);
    std::vector<double> a, b;
    for (std::size_t e = 0; e < w_.W_vals.size(); ++e) {
        if (w_.maskW_vals[e] == 0.0 || w_.maskR_vals[e] == 0.0) continue;
        a.push_back(w_.W_vals[e]);
        b.push_back(w_.R_vals[e]);
    }
    return pearson(a, b);
}

// --- MaxPoolLayer -----------------------------------------------------------------
// n x n window centered on the pixel (zero-padded outside the grid), output
// recorded every `stride` pixels: extent e -> ceil(e/stride). Feedback routes
// each output delta to the input position that won the max; ties go to the
// lowest flat index (scan order), and a window whose maximum is a zero pad
// routes nowhere (argmax -1).

MaxPoolLayer::MaxPoolLayer(FeatShape in, int pool, int stride) : pool_(pool), stride_(stride) {
    if (!in.spatial) throw std::invalid_argument("MaxPoolLayer: needs a spatial input");
    if (pool < 1 || stride < 1) throw std::invalid_argument("MaxPoolLayer: bad geometry");
    in_shape = in;
    out_shape = FeatShape::image(in.c, static_cast<int>(std::ceil(double(in.h) / stride)),
                                 static_cast<int>(std::ceil(double(in.w) / stride)));
}

void MaxPoolLayer::forward(const std::vector<const Tensor*>& in, bool, Rng&) {
    check_batch_input(in, 1, in_shape.flat_size(), kind());
    x_in_ = in[0];
    const std::size_t B = x_in_->dim(0);
    const int H = in_shape.h, W = in_shape.w, C = in_shape.c;
    const int OH = out_shape.h, OW = out_shape.w;
    const int off = (pool_ - 1) / 2;
    x_out_ = Tensor({B, static_cast<std::size_t>(out_shape.flat_size())});
    argmax_.assign(B * out_shape.flat_size(), -1);
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = x_in_->data() + b * in_shape.flat_size();
        double* y = x_out_.data() + b * out_shape.flat_size();
        int* am = argmax_.data() + b * out_shape.flat_size();
        for (int c0 = 0; c0 < C; ++c0) {
            const double* plane = x + static_cast<std::size_t>(c0) * H * W;
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    const int iy0 = oy * stride_ - off, ix0 = ox * stride_ - off;
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = -1;
                    for (int ky = 0; ky < pool_; ++ky)
                        for (int kx = 0; kx < pool_; ++kx) {
                            const int iy = iy0 + ky, ix = ix0 + kx;
                            const bool inb = iy >= 0 && iy < H && ix >= 0 && ix < W;
                            const double v = inb ? plane[iy * W + ix] : 0.0;
                            if (v > best) {
                                best = v;
                                best_idx = inb ? iy * W + ix : -1;
                            }
                        }
                    const std::size_t o = (static_cast<std::size_t>(c0) * OH + oy) * OW + ox;
                    y[o] = best;
                    am[o] = best_idx;
                }
        }
    }
    h_ = Tensor();
    gate_ = Tensor();
}

std::vector<Tensor> MaxPoolLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    if (!need_input_delta) return {};
    const std::size_t B = d_out.dim(0);
    const int H = in_shape.h, W = in_shape.w;
    Tensor d_in({B, static_cast<std::size_t>(in_shape.flat_size())});
    const std::size_t out_flat = out_shape.flat_size();
    const std::size_t plane_out = static_cast<std::size_t>(out_shape.h) * out_shape.w;
    for (std::size_t b = 0; b < B; ++b) {
        const double* d = d_out.data() + b * out_flat;
        const int* am = argmax_.data() + b * out_flat;
        double* out = d_in.data() + b * in_shape.flat_size();
        for (std::size_t o = 0; o < out_flat; ++o) {
            if (am[o] < 0) continue;
            const std::size_t c0 = o / plane_out;
            out[c0 * H * W + am[o]] += d[o];
        }
    }
    return {std::move(d_in)};
}

// --- DropoutLayer -----------------------------------------------------------------
// Pure zeroing: each training batch draws a fresh {0,1} mask over the feature
// positions (shared by the samples of the batch), zeroing a fraction p in
// expectation. No 1/(1-p) rescaling; evaluation mode is the identity.

DropoutLayer::DropoutLayer(FeatShape shape, double p) : p_(p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("DropoutLayer: p must be in [0, 1)");
    in_shape = shape;
    out_shape = shape;
}

void DropoutLayer::set_mask(Tensor mask) {
    if (mask.size() != static_cast<std::size_t>(in_shape.flat_size()))
        throw std::invalid_argument("DropoutLayer::set_mask: wrong mask size");
    mask_ = std::move(mask);
    frozen_ = true;
}

void DropoutLayer::forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) {
    check_batch_input(in, 1, in_shape.flat_size(), kind());
    x_in_ = in[0];
    last_train_ = train;
    if (!train) {
        x_out_ = *in[0];
        return;
    }
    const std::size_t n = static_cast<std::size_t>(in_shape.flat_size());
    if (!frozen_) mask_ = bernoulli_mask(rng, p_, {n});
    const std::size_t B = in[0]->dim(0);
    x_out_ = Tensor({B, n});
    for (std::size_t b = 0; b < B; ++b) {
        const double* x = in[0]->data() + b * n;
        double* y = x_out_.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) y[i] = x[i] * mask_[i];
    }
}

std::vector<Tensor> DropoutLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    if (!need_input_delta) return {};
    if (!last_train_) return {d_out};
    const std::size_t B = d_out.dim(0);
    const std::size_t n = static_cast<std::size_t>(in_shape.flat_size());
    Tensor d_in({B, n});
    for (std::size_t b = 0; b < B; ++b) {
        const double* d = d_out.data() + b * n;
        double* out = d_in.data() + b * n;
        for (std::size_t i = 0; i < n; ++i) out[i] = d[i] * mask_[i];
    }
    return {std::move(d_in)};
}

// --- SumLayer ----------------------------------------------------------------------

SumLayer::SumLayer(FeatShape shape) {
    in_shape = shape;
    out_shape = shape;
}

void SumLayer::forward(const std::vector<const Tensor*>& in, bool, Rng&) {
    check_batch_input(in, 2, in_shape.flat_size(), kind());
    if (!in[0]->same_shape(*in[1]))
        throw std::invalid_argument("SumLayer: operand shapes differ");
    x_in_ = in[0];
    x_in2_ = in[1];
    x_out_ = *in[0];
    add_scaled(x_out_, *in[1], 1.0);
}

std::vector<Tensor> SumLayer::feedback(const Tensor& d_out, Mode, bool need_input_delta) {
    check_delta_shape(d_out, x_out_, kind());
    if (!need_input_delta) return {};
    return {d_out, d_out};
}

}  // namespace urfb
