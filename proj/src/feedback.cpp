#include "urfb/feedback.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace urfb {

namespace {

void check_class_vector(const Tensor& x, int target, const char* what) {
    if (x.rank() != 1)
        throw std::invalid_argument(std::string(what) + ": expected a [classes] vector, got " +
                                    x.shape_str());
    if (target < 0 || static_cast<std::size_t>(target) >= x.size())
        throw std::invalid_argument(std::string(what) + ": target " + std::to_string(target) +
                                    " out of range for " + std::to_string(x.size()) + " classes");
}

int argmax_row(const double* row, std::size_t n) {
    int best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (row[j] > row[best]) best = static_cast<int>(j);
    return best;
}

}  // namespace

// --- losses and output deltas ---------------------------------------------------

double hinge_loss(const Tensor& x, int target, double mu) {
    check_class_vector(x, target, "hinge_loss");
    double total = std::max(1.0 - x[static_cast<std::size_t>(target)], 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (static_cast<int>(i) == target) continue;
        total += mu * std::max(1.0 + x[i], 0.0);
    }
    return total;
}

Tensor hinge_output_delta(const Tensor& x, int target, double mu) {
    check_class_vector(x, target, "hinge_output_delta");
    Tensor d = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (static_cast<int>(i) == target)
            d[i] = x[i] <= 1.0 ? 1.0 : 0.0;
        else
            d[i] = x[i] >= -1.0 ? -mu : 0.0;
    }
    return d;
}

double softmax_xent_loss(const Tensor& x, int target) {
    check_class_vector(x, target, "softmax_xent_loss");
    const double m = *std::max_element(x.data(), x.data() + x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::exp(x[i] - m);
    return std::log(sum) - (x[static_cast<std::size_t>(target)] - m);
}

Tensor softmax_xent_delta(const Tensor& x, int target) {
    check_class_vector(x, target, "softmax_xent_delta");
    const double m = *std::max_element(x.data(), x.data() + x.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::exp(x[i] - m);
    Tensor d = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        d[i] = -std::exp(x[i] - m) / sum;
        if (static_cast<int>(i) == target) d[i] += 1.0;
    }
    return d;
}

// --- Network --------------------------------------------------------------------

Network::Network(const NetSpec& spec, const ExperimentConfig& cfg, Rng& rng)
    : mode_(cfg.mode), loss_(cfg.loss), mu_(cfg.mu) {
    if (spec.layers.empty()) throw std::invalid_argument("Network: empty architecture");
    if (spec.shapes.size() != spec.layers.size())
        throw std::invalid_argument("Network: NetSpec lacks inferred shapes (use make_netspec)");
    FeatShape in = spec.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& ls = spec.layers[i];
        switch (ls.kind) {
            case LayerKind::Conv:
                if (cfg.untied)
                    layers_.push_back(
                        std::make_unique<LocalConvLayer>(rng, in, ls.filters, ls.kh, ls.kw));
                else
                    layers_.push_back(
                        std::make_unique<ConvLayer>(rng, in, ls.filters, ls.kh, ls.kw));
                break;
            case LayerKind::LocalConv:
                layers_.push_back(
                    std::make_unique<LocalConvLayer>(rng, in, ls.filters, ls.kh, ls.kw));
                break;
            case LayerKind::Maxpool:
                layers_.push_back(std::make_unique<MaxPoolLayer>(in, ls.pool, ls.stride));
                break;
            case LayerKind::Dropout:
                layers_.push_back(std::make_unique<DropoutLayer>(in, ls.drop_p));
                break;
            case LayerKind::Full:
                layers_.push_back(std::make_unique<FullLayer>(rng, in.flat_size(), ls.units,
                                                              /*is_output=*/false));
                break;
            case LayerKind::Sum:
                layers_.push_back(std::make_unique<SumLayer>(in));
                break;
            case LayerKind::Output:
                layers_.push_back(std::make_unique<FullLayer>(rng, in.flat_size(), spec.classes,
                                                              /*is_output=*/true));
                break;
        }
        in = spec.shapes[i];
    }
    if (cfg.connectivity < 1.0) {
        const double drop = 1.0 - cfg.connectivity;
        for (auto& l : layers_) l->prune(drop, rng, mode_);
    }
    // BP feedback is the transposed forward weights from the start
    if (mode_ == Mode::BP)
        for (auto& l : layers_) l->tie_feedback();
}

const Tensor& Network::forward(const Tensor& X, bool train, Rng* rng) {
    if (X.rank() != 2)
        throw std::invalid_argument("Network::forward: X must be [batch, features], got " +
                                    X.shape_str());
    if (train && rng == nullptr) {
        for (auto& l : layers_) {
            auto* d = dynamic_cast<DropoutLayer*>(l.get());
            if (d && !d->frozen())
                throw std::invalid_argument(
                    "Network::forward: training with active dropout needs an rng");
        }
    }
    input_ = X;
    Rng idle(0);  // placeholder; never drawn from on rng-free paths
    Rng& r = rng ? *rng : idle;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::vector<const Tensor*> in;
        in.push_back(i == 0 ? &input_ : &layers_[i - 1]->out());
        if (layers_[i]->num_inputs() == 2) {
            if (i < 2) throw std::logic_error("Network: Sum layer without two predecessors");
            in.push_back(&layers_[i - 2]->out());
        }
        layers_[i]->forward(in, train, r);
    }
    return layers_.back()->out();
}

const Tensor& Network::output() const { return layers_.back()->out(); }

double Network::batch_loss(const Tensor& out, const std::vector<int>& labels) const {
    if (out.rank() != 2 || out.dim(0) != labels.size())
        throw std::invalid_argument("batch_loss: output/label shape mismatch");
    const std::size_t B = out.dim(0), C = out.dim(1);
    Tensor row = Tensor::zeros({C});
    double total = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(out.data() + b * C, C, row.data());
        total += loss_ == Loss::Hinge ? hinge_loss(row, labels[b], mu_)
                                      : softmax_xent_loss(row, labels[b]);
    }
    return total / static_cast<double>(B);
}

Tensor Network::output_deltas(const Tensor& out, const std::vector<int>& labels) const {
    if (out.rank() != 2 || out.dim(0) != labels.size())
        throw std::invalid_argument("output_deltas: output/label shape mismatch");
    const std::size_t B = out.dim(0), C = out.dim(1);
    Tensor row = Tensor::zeros({C});
    Tensor d({B, C});
    for (std::size_t b = 0; b < B; ++b) {
        std::copy_n(out.data() + b * C, C, row.data());
        Tensor db = loss_ == Loss::Hinge ? hinge_output_delta(row, labels[b], mu_)
                                         : softmax_xent_delta(row, labels[b]);
        std::copy_n(db.data(), C, d.data() + b * C);
    }
    return d;
}

void Network::backward_sweep(const Tensor& out_delta, double eta) {
    const std::size_t n = layers_.size();
    if (!out_delta.same_shape(layers_.back()->out()))
        throw std::invalid_argument("backward_sweep: delta shape does not match the last forward");
    const double step = eta / static_cast<double>(out_delta.dim(0));
    // dbuf[i] accumulates the delta arriving at layer i's output; every
    // consumer of that output sits above i and is processed first
    std::vector<Tensor> dbuf(n);
    std::vector<char> have(n, 0);
    dbuf[n - 1] = out_delta;
    have[n - 1] = 1;
    auto add_into = [&](std::size_t j, Tensor&& t) {
        if (!have[j]) {
            dbuf[j] = std::move(t);
            have[j] = 1;
        } else {
            add_scaled(dbuf[j], t, 1.0);
        }
    };
    for (std::size_t i = n; i-- > 0;) {
        if (!have[i])
            throw std::logic_error("backward_sweep: no delta reached layer " + std::to_string(i));
        // the layer transmits through its own feedback weights before they
        // (and its forward weights) are touched by update
        std::vector<Tensor> dins = layers_[i]->feedback(dbuf[i], mode_, /*need_input_delta=*/i > 0);
        layers_[i]->update(step, mode_);
        if (i > 0) {
            add_into(i - 1, std::move(dins[0]));
            if (layers_[i]->num_inputs() == 2) add_into(i - 2, std::move(dins[1]));
        }
    }
}

std::vector<int> Network::predict(const Tensor& X) {
    const Tensor& out = forward(X, /*train=*/false);
    const std::size_t B = out.dim(0), C = out.dim(1);
    std::vector<int> pred(B);
    for (std::size_t b = 0; b < B; ++b) pred[b] = argmax_row(out.data() + b * C, C);
    return pred;
}

std::vector<double> Network::alignment() const {
    std::vector<double> corr;
    for (const auto& l : layers_) {
        Layer* p = l.get();
        if (p->dual_weights() != nullptr || p->local_weights() != nullptr)
            corr.push_back(p->alignment());
    }
    return corr;
}

std::vector<Layer*> Network::layers() {
    std::vector<Layer*> out;
    out.reserve(layers_.size());
    for (auto& l : layers_) out.push_back(l.get());
    return out;
}

std::vector<const Layer*> Network::layers() const {
    std::vector<const Layer*> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back(l.get());
    return out;
}

std::vector<Network::ParamView> Network::named_params() {
    std::vector<ParamView> out;
    auto push = [&out](std::string name, Tensor& t) {
        out.push_back({std::move(name), t.shape(), t.data(), t.size()});
    };
    auto push_vals = [&out](std::string name, std::vector<double>& v) {
        out.push_back({std::move(name), {v.size()}, v.data(), v.size()});
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        // the kind token tells checkpoint readers how W and R pair up:
        // "full" weights are mutually transposed, "conv"/"local" share layout
        const std::string k = layers_[i]->kind();
        const char* kind_tok = k == "Conv" ? "conv" : k == "LocalConv" ? "local" : "full";
        const std::string base = "layer" + std::to_string(i) + "." + kind_tok;
        if (auto* dw = layers_[i]->dual_weights()) {
            push(base + ".W", dw->W);
            push(base + ".R", dw->R);
            if (dw->masked) {
                push(base + ".maskW", dw->maskW);
                push(base + ".maskR", dw->maskR);
            }
        } else if (auto* lw = layers_[i]->local_weights()) {
            push_vals(base + ".Wvals", lw->W_vals);
            push_vals(base + ".Rvals", lw->R_vals);
            if (lw->masked) {
                push_vals(base + ".maskWvals", lw->maskW_vals);
                push_vals(base + ".maskRvals", lw->maskR_vals);
            }
        }
    }
    return out;
}

Network Network::clone() const {
    // layer input caches are not rewired; run forward on the clone before
    // using feedback or update
    Network c;
    c.mode_ = mode_;
    c.loss_ = loss_;
    c.mu_ = mu_;
    c.input_ = input_;
    c.layers_.reserve(layers_.size());
    for (const auto& l : layers_) c.layers_.push_back(l->clone());
    return c;
}

void Network::tie_feedback() {
    for (auto& l : layers_) l->tie_feedback();
}

Network build_network(const NetSpec& spec, const ExperimentConfig& cfg, Rng& rng) {
    return Network(spec, cfg, rng);
}

// --- training loop ----------------------------------------------------------------

MetricsRecord train_epoch(Network& net, const Dataset& data, int train_count,
                          const ExperimentConfig& cfg, Rng& rng, int epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (train_count < 1 || static_cast<std::size_t>(train_count) > data.size())
        throw std::invalid_argument("train_epoch: bad train_count");
    if (cfg.batch_size > train_count)
        throw std::invalid_argument("train_epoch: batch_size exceeds the training split");

    std::vector<int> order(static_cast<std::size_t>(train_count));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    const int nb = train_count / cfg.batch_size;  // final partial batch dropped
    double loss_sum = 0.0;
    long wrong = 0, seen = 0;
    for (int b = 0; b < nb; ++b) {
        const int lo = b * cfg.batch_size, hi = lo + cfg.batch_size;
        Tensor Xb = gather_rows(data.X, order, lo, hi);
        std::vector<int> yb = gather_labels(data.labels, order, lo, hi);
        const Tensor& out = net.forward(Xb, /*train=*/true, &rng);
        loss_sum += net.batch_loss(out, yb);
        const std::size_t C = out.dim(1);
        for (int s = 0; s < cfg.batch_size; ++s)
            wrong += argmax_row(out.data() + static_cast<std::size_t>(s) * C, C) != yb[s];
        seen += cfg.batch_size;
        Tensor dout = net.output_deltas(out, yb);
        net.backward_sweep(dout, cfg.eta);
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = nb > 0 ? loss_sum / nb : std::numeric_limits<double>::quiet_NaN();
    rec.train_err = seen > 0 ? static_cast<double>(wrong) / static_cast<double>(seen)
                             : std::numeric_limits<double>::quiet_NaN();
    if (static_cast<std::size_t>(train_count) < data.size())
        rec.val_err = evaluate(net, data, train_count, static_cast<int>(data.size())).first;
    else
        rec.val_err = std::numeric_limits<double>::quiet_NaN();
    rec.layer_corr = net.alignment();
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::pair<double, double> evaluate(Network& net, const Dataset& data, int begin, int end,
                                   int eval_batch) {
    if (begin < 0 || end > static_cast<int>(data.size()) || begin >= end)
        throw std::invalid_argument("evaluate: bad index range");
    if (eval_batch < 1) throw std::invalid_argument("evaluate: bad batch size");
    std::vector<int> order(static_cast<std::size_t>(end - begin));
    std::iota(order.begin(), order.end(), begin);
    const int n = end - begin;
    long wrong = 0;
    double loss_sum = 0.0;
    for (int lo = 0; lo < n; lo += eval_batch) {
        const int hi = std::min(n, lo + eval_batch);
        Tensor Xb = gather_rows(data.X, order, lo, hi);
        std::vector<int> yb = gather_labels(data.labels, order, lo, hi);
        const Tensor& out = net.forward(Xb, /*train=*/false);
        loss_sum += net.batch_loss(out, yb) * (hi - lo);
        const std::size_t C = out.dim(1);
        for (int s = 0; s < hi - lo; ++s)
            wrong += argmax_row(out.data() + static_cast<std::size_t>(s) * C, C) != yb[s];
    }
    return {static_cast<double>(wrong) / n, loss_sum / n};
}

}  // namespace urfb
