#pragma once

// Layer implementations. Every tensor that crosses a layer boundary is
// batched, shape [B, features] row-major (spatial features flattened as
// c*h*w). Weighted hidden layers apply the saturating nonlinearity
// (clamp to [-1,1]) and keep the derivative gate (open iff |h| < 1 strictly);
// the Output layer is linear. Structural layers (Maxpool/Drop/Sum) route
// feedback without gating.
//
// Feedback weights R are stored separately from W:
//   - dense layers:  W is [n_out, n_in], R is [n_in, n_out]
//   - conv layers:   both live in filter-bank geometry [filters, in_c*kh*kw];
//     R parameterizes the transposed convolution and is per-tap tied like W
//   - localconv:     per-edge values on the conv-induced sparse support, with
//     R on the transposed support (same edge set, independent values)
// In BP mode R is kept identical to W (transposed for dense layers), so all
// three modes share one feedback code path. Updates accumulate the Hebbian
// increment delta*x over the batch and are applied once per batch, scaled by
// eta/B; in URFB the same increment (transposed as appropriate) goes to R,
// in FRFB R is frozen.

#include "urfb/netspec.hpp"
#include "urfb/tensor.hpp"

#include <memory>
#include <vector>

namespace urfb {

struct DualWeights {
    Tensor W;      // dense: [n_out, n_in]; conv: [filters, in_c*kh*kw]
    Tensor R;      // dense: [n_in, n_out]; conv: same geometry as W
    Tensor maskW;  // {0,1} keep-masks, same shape as W/R; empty when dense-connected
    Tensor maskR;
    bool masked = false;
};

struct LocalConvWeights {
    // CSR over output units; col_idx holds flat input indices, tap_idx the
    // (in_c, ky, kx) tap each edge corresponds to in the inducing kernel.
    std::vector<std::size_t> row_ptr;
    std::vector<int> col_idx;
    std::vector<int> tap_idx;
    std::vector<double> W_vals, R_vals;
    std::vector<double> maskW_vals, maskR_vals;  // empty when dense-connected
    bool masked = false;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual const char* kind() const = 0;
    virtual int num_inputs() const { return 1; }

    // `in` holds pointers to the inputs (two for Sum). The layer caches what
    // it needs for feedback/update; pointers must stay valid until then.
    virtual void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) = 0;

    // d_out is the accumulated delta at this layer's output. Computes and
    // caches this layer's own (gated) delta, then returns the delta
    // contribution for each input. Skips that work when need_input_delta is
    // false (bottom layer).
    virtual std::vector<Tensor> feedback(const Tensor& d_out, Mode mode,
                                         bool need_input_delta = true) = 0;

    // apply the per-batch accumulated update; step = eta / batch_size
    virtual void update(double step, Mode mode) { (void)step; (void)mode; }

    // draw keep-masks removing `drop_fraction` of W and R entries (independent
    // draws; BP ties maskR to maskW since R must track W exactly)
    virtual void prune(double drop_fraction, Rng& rng, Mode mode) {
        (void)drop_fraction; (void)rng; (void)mode;
    }

    // set R := W^T (dense) / R := W (conv geometry). Used at init in BP mode;
    // also the starting point of the BP-equivalence property for URFB.
    virtual void tie_feedback() {}

    virtual std::unique_ptr<Layer> clone() const = 0;

    // state of the most recent forward/feedback pass
    const Tensor& out() const { return x_out_; }
    const Tensor& preact() const { return h_; }
    const Tensor& gate() const { return gate_; }
    const Tensor& delta() const { return delta_; }
    const Tensor* input() const { return x_in_; }

    virtual DualWeights* dual_weights() { return nullptr; }
    virtual LocalConvWeights* local_weights() { return nullptr; }
    const DualWeights* dual_weights() const { return const_cast<Layer*>(this)->dual_weights(); }
    const LocalConvWeights* local_weights() const {
        return const_cast<Layer*>(this)->local_weights();
    }
    // weight/feedback alignment: pearson over (W_e, R_e) pairs, masked entries
    // excluded; layers without weights return NaN
    virtual double alignment() const;

    FeatShape in_shape, out_shape;

protected:
    Tensor x_out_, h_, gate_, delta_;
    const Tensor* x_in_ = nullptr;
};

class FullLayer : public Layer {
public:
    FullLayer(Rng& rng, int n_in, int n_out, bool is_output);
    const char* kind() const override { return is_output_ ? "Output" : "Full"; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    void update(double step, Mode mode) override;
    void prune(double drop_fraction, Rng& rng, Mode mode) override;
    void tie_feedback() override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<FullLayer>(*this); }
    DualWeights* dual_weights() override { return &w_; }
    double alignment() const override;
    bool is_output() const { return is_output_; }

private:
    DualWeights w_;
    Tensor grad_;  // scratch [n_out, n_in]
    bool is_output_;
};

class ConvLayer : public Layer {
public:
    ConvLayer(Rng& rng, FeatShape in, int filters, int kh, int kw);
    const char* kind() const override { return "Conv"; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    void update(double step, Mode mode) override;
    void prune(double drop_fraction, Rng& rng, Mode mode) override;
    void tie_feedback() override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvLayer>(*this); }
    DualWeights* dual_weights() override { return &w_; }
    double alignment() const override;

    int kh() const { return kh_; }
    int kw() const { return kw_; }

private:
    friend class LocalConvLayer;
    void im2col(const double* x, double* col) const;
    void col2im_add(const double* col, double* x) const;

    DualWeights w_;   // [filters, in_c*kh*kw]
    Tensor grad_;     // scratch, same shape as W
    int kh_, kw_, pad_t_, pad_l_;
    std::vector<double> col_;  // scratch [in_c*kh*kw, h*w]
};

class LocalConvLayer : public Layer {
public:
    LocalConvLayer(Rng& rng, FeatShape in, int filters, int kh, int kw);
    // untied copy of an existing conv layer: every location starts from the
    // inducing kernel's taps, so outputs initially match the conv exactly
    static std::unique_ptr<LocalConvLayer> tied_copy(const ConvLayer& conv);

    const char* kind() const override { return "LocalConv"; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    void update(double step, Mode mode) override;
    void prune(double drop_fraction, Rng& rng, Mode mode) override;
    void tie_feedback() override;
    std::unique_ptr<Layer> clone() const override {
        return std::make_unique<LocalConvLayer>(*this);
    }
    LocalConvWeights* local_weights() override { return &w_; }
    double alignment() const override;

private:
    LocalConvLayer(FeatShape in, int filters, int kh, int kw);  // support only
    void build_support(FeatShape in, int filters, int kh, int kw);

    LocalConvWeights w_;
    std::vector<double> grad_vals_;
    int kh_, kw_, pad_t_, pad_l_;
};

class MaxPoolLayer : public Layer {
public:
    MaxPoolLayer(FeatShape in, int pool, int stride);
    const char* kind() const override { return "Maxpool"; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPoolLayer>(*this); }
    // in-plane flat argmax per output unit, -1 where a zero pad won (feedback
    // routed nowhere); exposed for routing tests
    const std::vector<int>& argmax() const { return argmax_; }

private:
    int pool_, stride_;
    std::vector<int> argmax_;
};

class DropoutLayer : public Layer {
public:
    DropoutLayer(FeatShape shape, double p);
    const char* kind() const override { return "Drop"; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DropoutLayer>(*this); }

    const Tensor& mask() const { return mask_; }
    // test hooks: pin the mask so forward(train=true) stops redrawing it
    void set_mask(Tensor mask);
    void freeze_mask(bool frozen) { frozen_ = frozen; }
    bool frozen() const { return frozen_; }
    double p() const { return p_; }

private:
    double p_;
    Tensor mask_;  // [features], shared across the batch, redrawn per batch
    bool frozen_ = false;
    bool last_train_ = false;
};

class SumLayer : public Layer {
public:
    explicit SumLayer(FeatShape shape);
    const char* kind() const override { return "Sum"; }
    int num_inputs() const override { return 2; }
    void forward(const std::vector<const Tensor*>& in, bool train, Rng& rng) override;
    std::vector<Tensor> feedback(const Tensor& d_out, Mode mode, bool need_input_delta) override;
    std::unique_ptr<Layer> clone() const override { return std::make_unique<SumLayer>(*this); }

private:
    const Tensor* x_in2_ = nullptr;
};

// mask helper shared by the layer prune() implementations: Bernoulli keep-mask
// with P(keep) = 1 - drop_fraction
Tensor bernoulli_mask(Rng& rng, double drop_fraction, std::vector<std::size_t> shape);

}  // namespace urfb
