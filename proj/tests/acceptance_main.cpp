// End-to-end checks of the guarantees the library is built around. Each
// check prints one [PASS]/[FAIL] line with its measured numbers and wall
// time; the process exits nonzero if any check fails.
//
// Run a single check with --criterion=<n>.

#include "urfb/circuits.hpp"
#include "urfb/data.hpp"
#include "urfb/feedback.hpp"
#include "urfb/harness.hpp"
#include "urfb/layers.hpp"
#include "urfb/lindyn.hpp"
#include "urfb/netspec.hpp"
#include "urfb/tensor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

using namespace urfb;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

// center each feature and scale the whole matrix into [-0.5, 0.5]: hidden
// clamp units need inputs near the origin or their gates start closed
void normalize_features(Dataset& data) {
    const std::size_t dim = data.X.dim(1);
    for (std::size_t j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) mean += data.X.at(i, j);
        mean /= double(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) data.X.at(i, j) -= mean;
    }
    double amax = 0.0;
    for (std::size_t e = 0; e < data.X.size(); ++e) amax = std::max(amax, std::abs(data.X[e]));
    for (std::size_t e = 0; e < data.X.size(); ++e) data.X[e] /= 2.0 * amax;
}

// ---------------------------------------------------------------------------
// 1. With feedback initialized to the transposed weights, the Hebbian rule
//    and the gradient rule produce identical networks after 200 batches.

Result check_bp_equivalence() {
    const double t0 = now_seconds();
    Rng data_rng(301);
    Dataset data = toy_blobs(data_rng, 100, 5, 20, 6.0);  // 500 samples
    normalize_features(data);
    NetSpec spec = make_netspec("Full 64; Full 48; Full 32; Output", data.shape, data.classes);

    const std::string base_cfg =
        "arch=Full 64; Full 48; Full 32; Output\nloss=hinge\neta=0.1\nbatch_size=20\n";
    ExperimentConfig cfg_bp = parse_config_text(base_cfg + "mode=bp\n");
    ExperimentConfig cfg_ur = parse_config_text(base_cfg + "mode=urfb\n");

    Rng i1(77), i2(77);
    Network bp = build_network(spec, cfg_bp, i1);
    Network ur = build_network(spec, cfg_ur, i2);
    ur.tie_feedback();

    // 500 samples / batch 20 = 25 batches per epoch; 8 epochs = 200 batches
    Rng t1(11), t2(11);
    for (int e = 0; e < 8; ++e) {
        train_epoch(bp, data, int(data.size()), cfg_bp, t1, e);
        train_epoch(ur, data, int(data.size()), cfg_ur, t2, e);
    }

    auto pa = bp.named_params();
    auto pb = ur.named_params();
    double max_dev = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t e = 0; e < pa[i].size; ++e)
            max_dev = std::max(max_dev, std::abs(pa[i].data[e] - pb[i].data[e]));

    const double secs = now_seconds() - t0;
    return {max_dev <= 1e-10 && secs < 10.0,
            fmt("max weight deviation %.3g after 200 batches (budget 1e-10), %.1fs", max_dev,
                secs)};
}

// ---------------------------------------------------------------------------
// 2. In gradient mode the per-batch weight increment equals minus the batch
//    loss gradient, checked by central differences through every layer kind.

Result check_finite_difference() {
    const double t0 = now_seconds();
    const std::string arch =
        "Conv 3 3x3; Maxpool 3; Localconv 4 3x3; Full 12; Drop .4; Full 12; Sum; Output";
    NetSpec spec = make_netspec(arch, FeatShape::image(2, 6, 6), 4);
    ExperimentConfig cfg = parse_config_text("arch=" + arch + "\nmode=bp\nloss=softmax\n");
    Rng rng(501);
    Network net = build_network(spec, cfg, rng);

    // pin the dropout mask so every forward sees the same sub-network
    auto* drop = dynamic_cast<DropoutLayer*>(net.layer(4));
    if (!drop) return {false, "expected a dropout layer at index 4"};
    Tensor mask({12});
    for (std::size_t i = 0; i < 12; ++i) mask[i] = i % 3 == 0 ? 0.0 : 1.0;
    drop->set_mask(mask);

    const std::size_t B = 3;
    Tensor X({B, 72});
    for (std::size_t e = 0; e < X.size(); ++e) X[e] = 0.15 * rng.normal();
    std::vector<int> y = {0, 2, 3};

    net.forward(X, true);
    for (Layer* l : net.layers()) {
        if (l->dual_weights() == nullptr && l->local_weights() == nullptr) continue;
        const Tensor& g = l->gate();
        for (std::size_t e = 0; e < g.size(); ++e)
            if (g[e] == 0.0 && std::string(l->kind()) != "Output")
                return {false, "activation left the interior; pick a smaller input scale"};
    }

    // analytic gradient from one sweep with step = 1: dL/dw = -(w' - w)/B
    Network swept = net.clone();
    swept.forward(X, true);
    swept.backward_sweep(swept.output_deltas(swept.output(), y), double(B));
    auto p_base = net.named_params();
    auto p_new = swept.named_params();

    const double h = 1e-5;
    double max_rel = 0.0, max_abs_small = 0.0;
    long checked = 0;
    for (std::size_t i = 0; i < p_base.size(); ++i) {
        if (p_base[i].name.find(".W") == std::string::npos) continue;  // forward weights only
        for (std::size_t e = 0; e < p_base[i].size; ++e) {
            const double analytic = -(p_new[i].data[e] - p_base[i].data[e]) / double(B);
            double* w = p_base[i].data + e;
            const double keep = *w;
            *w = keep + h;
            const double lp = net.batch_loss(net.forward(X, true), y);
            *w = keep - h;
            const double lm = net.batch_loss(net.forward(X, true), y);
            *w = keep;
            const double fd = (lp - lm) / (2 * h);
            const double scale = std::max(std::abs(fd), std::abs(analytic));
            ++checked;
            if (scale > 1e-6)
                max_rel = std::max(max_rel, std::abs(fd - analytic) / scale);
            else
                max_abs_small = std::max(max_abs_small, std::abs(fd - analytic));
        }
    }
    net.forward(X, true);  // leave caches consistent

    const double secs = now_seconds() - t0;
    return {max_rel <= 1e-6 && max_abs_small <= 1e-8 && secs < 30.0,
            fmt("%ld weights: max rel err %.3g (budget 1e-6), zero-grad abs %.3g, %.1fs",
                checked, max_rel, max_abs_small, secs)};
}

// ---------------------------------------------------------------------------
// 3. Deep-chain convergence speeds up strictly with the feedback update
//    share eps, reproducibly across seeds, and the top layer aligns.

Result check_convergence_ordering() {
    const double t0 = now_seconds();
    // fixed 1000-iteration budget: every run settles well before the end, and
    // first passage below 1e-6 * e^2(0) is recorded along the way
    const double dt = 5e-3, eps_list[] = {0.0, 0.25, 0.5, 1.0};
    std::string detail;
    bool ok = true;
    for (std::uint64_t seed : {401u, 402u, 403u}) {
        Rng rng(seed);
        lindyn::MatrixSystem base = lindyn::make_replication_system(rng, 0.0, 3);
        int prev = -1;
        detail += fmt("seed %llu:", (unsigned long long)seed);
        for (double eps : eps_list) {
            lindyn::MatrixSystem s = base;
            s.eps = eps;
            lindyn::MatrixTrace tr = lindyn::run_matrix(s, dt, 1000, 1e-6, 250, false);
            const double top = lindyn::layer_correlations(s).back();
            detail += fmt(" eps=%g:%d(corr %.3f)", eps, tr.first_passage, top);
            if (tr.first_passage < 0 || !(top > 0.99)) ok = false;
            if (prev >= 0 && !(tr.first_passage < prev)) ok = false;
            prev = tr.first_passage;
        }
        detail += ";";
    }
    const double secs = now_seconds() - t0;
    if (secs >= 120.0) ok = false;
    return {ok, detail + fmt(" %.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 4. The pairwise conservation law drifts at first order in the Euler step.

Result check_invariant_drift() {
    const double t0 = now_seconds();
    struct Case {
        int k;
        double eps, lambda_T;
        std::vector<double> lambda_R;
    };
    const std::vector<Case> cases = {
        {3, 0.0, 0.9, {0.10, 0.08, 0.05}},
        {3, 1.0, 0.9, {0.10, 0.08, 0.05}},
        {2, 0.5, 0.8, {0.05, 0.04}},
    };
    bool ok = true;
    std::string detail;
    for (const auto& c : cases) {
        auto residual_at = [&](double dt) {
            lindyn::ScalarSystem s;
            s.k = c.k;
            s.eps = c.eps;
            s.lambda_T = c.lambda_T;
            s.lambda.assign(std::size_t(c.k), 0.0);
            s.lambda_R = c.lambda_R;
            lindyn::ScalarTrace tr = lindyn::run_scalar(s, dt, 30000000, 1e-6);
            if (tr.first_passage < 0) ok = false;
            return tr.max_rel_residual;
        };
        const double r1 = residual_at(1e-3);
        const double r2 = residual_at(5e-4);
        const double ratio = r1 / r2;
        detail += fmt("k=%d eps=%g: resid %.2e ratio %.2f; ", c.k, c.eps, r1, ratio);
        if (!(r1 <= 1e-2) || !(ratio >= 1.7 && ratio <= 2.3)) ok = false;
    }
    const double secs = now_seconds() - t0;
    return {ok, detail + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 5. With the SVD-aligned initialization the matrix dynamics equal the
//    per-direction scalar dynamics at every step.

Result check_matrix_scalar_decoupling() {
    const double t0 = now_seconds();
    bool ok = true;
    std::string detail;
    for (int k : {2, 3}) {
        Rng rng(600 + std::uint64_t(k));
        const std::vector<int> dims =
            k == 2 ? std::vector<int>{12, 16, 10} : std::vector<int>{12, 20, 16, 10};
        lindyn::AlignedSystem a = lindyn::svd_aligned_init(rng, dims, 1.0);
        auto scalars = lindyn::scalar_systems_of(a);
        double max_dev = 0.0;
        for (int it = 0; it < 2000; ++it) {
            lindyn::euler_step(a.sys, 1e-2);
            double e2 = 0.0;
            for (auto& s : scalars) {
                lindyn::scalar_euler_step(s, 1e-2);
                const double e = lindyn::scalar_error(s);
                e2 += e * e;
            }
            auto W_want = lindyn::reconstruct_weights(a, scalars);
            for (int i = 0; i < k; ++i)
                for (std::size_t e = 0; e < W_want[std::size_t(i)].size(); ++e)
                    max_dev = std::max(max_dev, std::abs(W_want[std::size_t(i)][e] -
                                                         a.sys.W[std::size_t(i)][e]));
            max_dev = std::max(max_dev, std::abs(e2 - lindyn::error_sq(a.sys)));
        }
        detail += fmt("k=%d: max dev %.3g over 2000 steps; ", k, max_dev);
        if (!(max_dev <= 1e-6)) ok = false;
    }
    const double secs = now_seconds() - t0;
    return {ok, detail + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------------------
// 6. The two error circuits reproduce the learning rule on a fine grid.

Result check_circuit_grids() {
    const double t0 = now_seconds();
    const double step = 0.05;
    OutputCircuit proto;  // defaults: M=10, S=1, mu=1
    const long n = std::lround(proto.M / step);
    long out_cases = 0, out_bad = 0;
    for (long i = -n; i <= n; ++i) {
        const double h = std::clamp(double(i) * step, -proto.M, proto.M);
        for (int s : {1, -1}) {
            OutputCircuit c = proto;
            c.h = h;
            c.s = s;
            const double got = output_circuit_effective(c);
            const double want = s == 1 ? (h <= proto.S ? 1.0 : 0.0)
                                       : (h >= -proto.S ? -proto.mu : 0.0);
            ++out_cases;
            out_bad += got != want;
        }
    }

    const long nd = std::lround(2.0 / step);
    long sd_cases = 0, sd_bad = 0;
    for (long i = -n; i <= n; ++i) {
        const double x = std::clamp(double(i) * step, -proto.M, proto.M);
        Tensor xt({1}, {x});
        const double open = gate_mask(xt)[0];  // the production saturation gate
        for (long j = -nd; j <= nd; ++j) {
            const double delta = double(j) * step;
            ShutdownCircuit sd;
            sd.x = x;
            const double got = shutdown_step(sd, delta);
            ++sd_cases;
            sd_bad += got != open * delta;
        }
    }

    const double secs = now_seconds() - t0;
    return {out_bad == 0 && sd_bad == 0 && secs < 5.0,
            fmt("output rule: %ld cases %ld wrong; gate: %ld cases %ld wrong; %.1fs", out_cases,
                out_bad, sd_cases, sd_bad, secs)};
}

// ---------------------------------------------------------------------------
// 7. A location-wise layer tied to a convolution starts exactly equivalent,
//    and the conv update is the spatial sum of the location-wise updates.

Result check_tied_localconv() {
    const double t0 = now_seconds();
    Rng rng(701);
    ConvLayer conv(rng, FeatShape::image(2, 8, 8), 3, 3, 3);
    auto local = LocalConvLayer::tied_copy(conv);

    Tensor X({4, 128});
    for (std::size_t e = 0; e < X.size(); ++e) X[e] = 0.05 * rng.normal();
    Rng fwd(0);
    conv.forward({&X}, false, fwd);
    local->forward({&X}, false, fwd);

    double fwd_dev = 0.0;
    for (std::size_t e = 0; e < conv.out().size(); ++e)
        fwd_dev = std::max(fwd_dev, std::abs(conv.out()[e] - local->out()[e]));

    const std::size_t out_n = conv.out().size() / 4;
    Tensor d({4, out_n});
    for (std::size_t e = 0; e < d.size(); ++e) d[e] = rng.normal();
    conv.feedback(d, Mode::BP, false);
    local->feedback(d, Mode::BP, false);

    Tensor convW0 = conv.dual_weights()->W;
    Tensor convR0 = conv.dual_weights()->R;
    std::vector<double> localW0 = local->local_weights()->W_vals;
    std::vector<double> localR0 = local->local_weights()->R_vals;
    conv.update(0.1, Mode::BP);
    local->update(0.1, Mode::BP);

    // pool the per-edge increments back onto the inducing kernel's taps
    const auto& lw = *local->local_weights();
    const std::size_t taps = convW0.dim(1);
    Tensor sumW({3, taps}), sumR({3, taps});
    const std::size_t per_filter = lw.row_ptr.size() > 1 ? (lw.row_ptr.size() - 1) / 3 : 0;
    for (std::size_t row = 0; row + 1 < lw.row_ptr.size(); ++row) {
        const std::size_t f = row / per_filter;
        for (std::size_t e = lw.row_ptr[row]; e < lw.row_ptr[row + 1]; ++e) {
            sumW.at(f, std::size_t(lw.tap_idx[e])) += lw.W_vals[e] - localW0[e];
            sumR.at(f, std::size_t(lw.tap_idx[e])) += lw.R_vals[e] - localR0[e];
        }
    }
    double upd_dev = 0.0;
    for (std::size_t f = 0; f < 3; ++f)
        for (std::size_t t = 0; t < taps; ++t) {
            upd_dev = std::max(upd_dev, std::abs((conv.dual_weights()->W.at(f, t) -
                                                  convW0.at(f, t)) -
                                                 sumW.at(f, t)));
            upd_dev = std::max(upd_dev, std::abs((conv.dual_weights()->R.at(f, t) -
                                                  convR0.at(f, t)) -
                                                 sumR.at(f, t)));
        }

    const double secs = now_seconds() - t0;
    return {fwd_dev == 0.0 && upd_dev <= 1e-12,
            fmt("tied forward dev %.3g (must be 0), update-sum dev %.3g (budget 1e-12), %.1fs",
                fwd_dev, upd_dev, secs)};
}

// ---------------------------------------------------------------------------
// 8. A small convnet on the synthetic image corpus: every mode beats chance,
//    the Hebbian rule stays within 5 points of the gradient rule, and its
//    feedback alignment grows past the frozen baseline.

Result check_convnet_study() {
    const double t0 = now_seconds();
    Rng data_rng(801);
    Dataset data = synth_dataset(data_rng, 6000, 64.0);
    const int train_n = 5000, epochs = 20;
    // Center and shrink the pixels: clamp units gate on |preactivation| < 1,
    // and the positive mean of raw [0,1] pixels drives the hidden layers into
    // saturation before they can learn anything. Halving the scale leaves the
    // layers headroom so even frozen random feedback keeps its gates open.
    for (std::size_t i = 0; i < data.X.size(); ++i) data.X[i] = (data.X[i] - 0.5) * 0.5;

    struct RunOut {
        double final_val = 1.0;
        std::vector<double> first_corr, last_corr;
    };
    auto run_mode = [&](const std::string& mode) {
        ExperimentConfig cfg = parse_config_text(
            "arch=Conv 16 5x5; Maxpool 3; Full 128; Output\nmode=" + mode +
            "\nbatch_size=100\neta=0.1\n");
        Rng init(901);
        Network net = build_network(make_netspec(cfg.arch, data.shape, data.classes), cfg, init);
        Rng train(902);
        RunOut out;
        out.first_corr = net.alignment();  // alignment at initialization
        for (int e = 0; e < epochs; ++e) {
            MetricsRecord rec = train_epoch(net, data, train_n, cfg, train, e);
            if (e == epochs - 1) {
                out.last_corr = rec.layer_corr;
                out.final_val = rec.val_err;
            }
        }
        return out;
    };

    RunOut bp = run_mode("bp");
    RunOut fr = run_mode("frfb");
    RunOut ur = run_mode("urfb");

    const double chance = 1.0 - 1.0 / data.classes;
    bool ok = true;
    std::string detail = fmt("val err bp %.3f frfb %.3f urfb %.3f (chance bar %.3f); ",
                             bp.final_val, fr.final_val, ur.final_val, 0.9 * chance);
    for (double v : {bp.final_val, fr.final_val, ur.final_val})
        if (!(v < 0.9 * chance)) ok = false;
    if (!(ur.final_val <= bp.final_val + 0.05)) ok = false;

    // non-output layers: conv (index 0) and the hidden full layer (index 1)
    for (std::size_t i = 0; i < 2; ++i) {
        detail += fmt("l%zu corr urfb %.3f->%.3f frfb %.3f; ", i + 1, ur.first_corr[i],
                      ur.last_corr[i], fr.last_corr[i]);
        if (!(ur.last_corr[i] > ur.first_corr[i])) ok = false;
        if (!(ur.last_corr[i] > fr.last_corr[i])) ok = false;
    }

    const double secs = now_seconds() - t0;
    if (secs >= 1200.0) ok = false;
    return {ok, detail + fmt("%.0fs", secs)};
}

// ---------------------------------------------------------------------------
// 9. A single hinge layer reaches zero training error on separable blobs.

Result check_separable_blobs() {
    const double t0 = now_seconds();
    bool ok = true;
    std::string detail = "epochs to zero error:";
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Rng rng(seed);
        Dataset data = toy_blobs(rng, 50, 5, 15, 8.0);
        ExperimentConfig cfg = parse_config_text(
            "arch=Output\nmode=urfb\nloss=hinge\neta=0.1\nbatch_size=25\n");
        Rng init(seed + 100);
        Network net = build_network(make_netspec(cfg.arch, data.shape, data.classes), cfg, init);
        Rng train(seed + 200);
        int reached = -1;
        for (int e = 0; e < 100; ++e) {
            MetricsRecord rec = train_epoch(net, data, int(data.size()), cfg, train, e);
            if (rec.train_err == 0.0) {
                reached = e + 1;
                break;
            }
        }
        detail += fmt(" seed%llu:%d", (unsigned long long)seed, reached);
        if (reached < 0) ok = false;
    }
    const double secs = now_seconds() - t0;
    return {ok, detail + fmt(" (%.1fs)", secs)};
}

// ---------------------------------------------------------------------------
// 10. Every dataset format round-trips bit-exactly through write and load.

Result check_format_roundtrip() {
    const double t0 = now_seconds();
    Rng rng(1001);
    SynthImages img = make_synth_images(rng, 25, 10, 3, 32, 32, 24.0);
    const std::string dir =
        (std::filesystem::temp_directory_path() / "urfb_roundtrip").string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    long checked = 0, bad = 0;
    auto compare = [&](const Dataset& d, const std::vector<std::uint8_t>& labels,
                       const std::vector<std::uint8_t>& pixels, std::size_t flat) {
        if (d.size() != labels.size()) {
            ++bad;
            return;
        }
        for (std::size_t i = 0; i < d.size(); ++i) {
            bad += d.labels[i] != int(labels[i]);
            for (std::size_t j = 0; j < flat; ++j) {
                const double v = d.X.at(i, j);
                // exact scaling and exact byte reconstruction
                bad += v != double(pixels[i * flat + j]) / 255.0;
                bad += v * 255.0 != double(pixels[i * flat + j]);
                ++checked;
            }
        }
    };

    write_cifar10(dir + "/c10.bin", img.labels, img.pixels);
    compare(load_cifar10_file(dir + "/c10.bin"), img.labels, img.pixels, 3072);

    std::vector<std::uint8_t> coarse(img.labels.size(), 7);
    write_cifar100(dir + "/c100.bin", coarse, img.labels, img.pixels);
    compare(load_cifar100_file(dir + "/c100.bin"), img.labels, img.pixels, 3072);

    Rng rng2(1002);
    SynthImages small = make_synth_images(rng2, 30, 10, 1, 9, 7, 16.0);
    write_idx_images(dir + "/imgs", small.pixels, 30, 9, 7);
    write_idx_labels(dir + "/labs", small.labels);
    compare(load_idx_pair(dir + "/imgs", dir + "/labs"), small.labels, small.pixels, 63);
    std::filesystem::remove_all(dir);

    const double secs = now_seconds() - t0;
    return {bad == 0, fmt("%ld values across 3 formats, %ld mismatches, %.1fs", checked, bad,
                          secs)};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const char* a = argv[i];
        if (std::strncmp(a, "--criterion=", 12) == 0) {
            only = std::atoi(a + 12);
        } else {
            std::fprintf(stderr, "usage: %s [--criterion=<1-10>]\n", argv[0]);
            return 2;
        }
    }

    struct Check {
        const char* name;
        Result (*fn)();
    };
    const Check checks[] = {
        {"tied feedback matches the gradient rule", check_bp_equivalence},
        {"updates equal finite-difference gradients", check_finite_difference},
        {"faster feedback adaptation converges first", check_convergence_ordering},
        {"conservation-law drift is first order in dt", check_invariant_drift},
        {"aligned matrix flow decouples into scalars", check_matrix_scalar_decoupling},
        {"error circuits reproduce the learning rule", check_circuit_grids},
        {"tied localconv equals conv until untied", check_tied_localconv},
        {"convnet study: accuracy and alignment", check_convnet_study},
        {"one hinge layer separates blob data", check_separable_blobs},
        {"dataset formats round-trip bit-exactly", check_format_roundtrip},
    };

    int failures = 0;
    for (int i = 0; i < 10; ++i) {
        if (only != 0 && only != i + 1) continue;
        Result r;
        try {
            r = checks[i].fn();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2d %s: %s\n", r.pass ? "PASS" : "FAIL", i + 1, checks[i].name,
                    r.detail.c_str());
        std::fflush(stdout);
        failures += !r.pass;
    }
    if (failures) std::printf("%d of 10 checks failed\n", failures);
    return failures == 0 ? 0 : 1;
}
