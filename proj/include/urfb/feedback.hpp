#pragma once

// Loss functions, output deltas, the network container and the training loop.
//
// The output delta is defined as minus the loss gradient at the output
// activations, so every weight update is uniformly W += step * delta * x.
// For the multi-class hinge with margin 1 and off-class weight mu,
//   L(x, c) = max(1 - x_c, 0) + mu * sum_{i != c} max(1 + x_i, 0)
// the delta is +1 at the correct class while x_c <= 1, -mu at wrong classes
// while x_i >= -1, and 0 otherwise (boundaries inclusive). For softmax
// cross-entropy the delta is onehot(c) - softmax(x).
//
// backward_sweep runs strictly top-down: each layer's delta is computed from
// the layer above first, then the weights feeding that layer are updated from
// the still-cached feedforward activities below (the updates that have
// already happened above never enter this batch's deltas a second time).

#include "urfb/data.hpp"
#include "urfb/layers.hpp"
#include "urfb/netspec.hpp"
#include "urfb/tensor.hpp"

#include <memory>
#include <string>
#include <vector>

namespace urfb {

double hinge_loss(const Tensor& x, int target, double mu);         // x: [classes]
Tensor hinge_output_delta(const Tensor& x, int target, double mu);
double softmax_xent_loss(const Tensor& x, int target);
Tensor softmax_xent_delta(const Tensor& x, int target);

struct MetricsRecord {
    int epoch = 0;
    double train_err = 0.0;
    double val_err = 0.0;
    double train_loss = 0.0;
    std::vector<double> layer_corr;  // one entry per weighted layer, input->output order
    double wall_seconds = 0.0;
};

class Network {
public:
    Network(const NetSpec& spec, const ExperimentConfig& cfg, Rng& rng);

    // X is [B, input_flat]; caches all layer states until the next forward.
    // rng drives dropout masks and is only touched in train mode (a frozen
    // dropout mask also leaves it untouched, keeping streams comparable).
    const Tensor& forward(const Tensor& X, bool train, Rng* rng = nullptr);
    const Tensor& output() const;

    // mean loss / classifier delta over the batch for the configured loss
    double batch_loss(const Tensor& out, const std::vector<int>& labels) const;
    Tensor output_deltas(const Tensor& out, const std::vector<int>& labels) const;

    // top-down feedback sweep + one per-batch weight update (step = eta/B)
    void backward_sweep(const Tensor& out_delta, double eta);

    std::vector<int> predict(const Tensor& X);  // eval-mode argmax
    std::vector<double> alignment() const;      // per weighted layer

    std::vector<Layer*> layers();
    std::vector<const Layer*> layers() const;
    Layer* layer(std::size_t i) { return layers_[i].get(); }
    std::size_t num_layers() const { return layers_.size(); }
    Mode mode() const { return mode_; }
    Loss loss() const { return loss_; }
    double mu() const { return mu_; }

    // all parameter arrays by stable name, for checkpoints and tests:
    // layer<i>.<kind>.W / .R / .maskW / .maskR with kind in {full, conv},
    // and layer<i>.local.Wvals / .Rvals / ... for localconv. The kind token
    // tells readers how W and R pair up (full: mutually transposed;
    // conv/local: same layout). Mask entries appear only after pruning.
    struct ParamView {
        std::string name;
        std::vector<std::size_t> shape;  // {n} for flat localconv arrays
        double* data = nullptr;
        std::size_t size = 0;
    };
    std::vector<ParamView> named_params();

    Network clone() const;
    // test hook: R := W^T everywhere (the BP initialization)
    void tie_feedback();

private:
    Network() = default;
    std::vector<std::unique_ptr<Layer>> layers_;
    Mode mode_ = Mode::BP;
    Loss loss_ = Loss::SoftmaxXent;
    double mu_ = 1.0;
    Tensor input_;  // batch cache, keeps layer input pointers valid
};

Network build_network(const NetSpec& spec, const ExperimentConfig& cfg, Rng& rng);

// One pass over the training split: seeded shuffle, batches of
// cfg.batch_size (the final partial batch is dropped), forward/backward on
// each, then evaluation on the validation split. train_err/train_loss are
// averaged over the training batches as they are seen during the epoch.
MetricsRecord train_epoch(Network& net, const Dataset& data, int train_count,
                          const ExperimentConfig& cfg, Rng& rng, int epoch);

// classification error + mean loss of an index range, eval mode
std::pair<double, double> evaluate(Network& net, const Dataset& data, int begin, int end,
                                   int eval_batch = 512);

}  // namespace urfb
