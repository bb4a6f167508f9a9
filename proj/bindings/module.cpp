// Python bindings for the main operations: full training runs, the linear
// dynamics integrators, the error-signal circuits, losses, toy data and
// checkpoint inspection.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "urfb/circuits.hpp"
#include "urfb/harness.hpp"
#include "urfb/lindyn.hpp"

#include <cstring>

namespace py = pybind11;
using namespace urfb;
using namespace urfb::lindyn;

namespace {

Tensor tensor_from_np(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    const py::buffer_info info = a.request();
    std::vector<std::size_t> shape(info.shape.begin(), info.shape.end());
    Tensor t(std::move(shape));
    std::memcpy(t.data(), info.ptr, sizeof(double) * t.size());
    return t;
}

py::array_t<double> np_from_tensor(const Tensor& t) {
    py::array_t<double> a(t.shape());
    std::memcpy(a.mutable_data(), t.data(), sizeof(double) * t.size());
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "training with asymmetric Hebbian feedback: core operations";
    m.attr("__version__") = kVersion;

    // --- experiment runs -------------------------------------------------------
    m.def(
        "train",
        [](const std::string& config_text, const std::string& out_dir) {
            return run_training(parse_config_text(config_text), out_dir);
        },
        py::arg("config_text"), py::arg("out_dir"),
        "Run one training job from key=value config text; writes metrics.csv, "
        "checkpoints and manifest.json into out_dir.");
    m.def(
        "resolve_config",
        [](const std::string& text) { return dump_config(parse_config_text(text)); },
        py::arg("config_text"), "Validate config text and return the fully resolved settings.");

    // --- losses (single sample: scores is a 1-d class-score array) --------------
    m.def(
        "hinge_loss",
        [](const py::array_t<double>& scores, int target, double mu) {
            return hinge_loss(tensor_from_np(scores), target, mu);
        },
        py::arg("scores"), py::arg("target"), py::arg("mu") = 1.0);
    m.def(
        "hinge_delta",
        [](const py::array_t<double>& scores, int target, double mu) {
            return np_from_tensor(hinge_output_delta(tensor_from_np(scores), target, mu));
        },
        py::arg("scores"), py::arg("target"), py::arg("mu") = 1.0);
    m.def(
        "softmax_xent_loss",
        [](const py::array_t<double>& scores, int target) {
            return softmax_xent_loss(tensor_from_np(scores), target);
        },
        py::arg("scores"), py::arg("target"));
    m.def(
        "softmax_xent_delta",
        [](const py::array_t<double>& scores, int target) {
            return np_from_tensor(softmax_xent_delta(tensor_from_np(scores), target));
        },
        py::arg("scores"), py::arg("target"));

    // --- toy data ---------------------------------------------------------------
    m.def(
        "toy_blobs",
        [](std::uint64_t seed, int per_class, int classes, int dim, double separation) {
            Rng rng(seed);
            const Dataset d = toy_blobs(rng, per_class, classes, dim, separation);
            return py::make_tuple(np_from_tensor(d.X), d.labels);
        },
        py::arg("seed"), py::arg("per_class"), py::arg("classes"), py::arg("dim"),
        py::arg("separation"), "Separable Gaussian blobs; returns (X, labels).");

    // --- linear dynamics ----------------------------------------------------------
    m.def(
        "lindyn_replicate",
        [](int k, const std::vector<double>& eps_list, double dt, int iters, double tol,
           int record_every, std::uint64_t seed, bool include_bp) {
            ReplicationConfig rc;
            rc.k = k;
            rc.eps_list = eps_list;
            rc.dt = dt;
            rc.iters = iters;
            rc.tol_frac = tol;
            rc.record_every = record_every;
            rc.seed = seed;
            rc.include_bp = include_bp;
            py::list out;
            for (const auto& r : replicate_sim(rc)) {
                py::dict d;
                d["name"] = r.name;
                d["eps"] = r.eps;
                d["iterations"] = r.trace.iters;
                d["e2"] = r.trace.err2;
                d["corr"] = r.trace.corr;
                d["e2_0"] = r.trace.err2_0;
                d["first_passage"] = r.trace.first_passage;
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("k") = 3, py::arg("eps_list") = std::vector<double>{0.0, 0.25, 0.5, 1.0},
        py::arg("dt") = 1e-3, py::arg("iters") = 1000, py::arg("tol") = 1e-6,
        py::arg("record_every") = 10, py::arg("seed") = 12345, py::arg("include_bp") = true,
        "Integrate the zero-init error flow per feedback strength, plus a "
        "gradient-descent baseline; returns one trace dict per run.");
    m.def(
        "scalar_run",
        [](int k, double eps, double lambda_T, const std::vector<double>& lambda_R, double dt,
           int max_iters, double tol) {
            ScalarSystem s;
            s.k = k;
            s.eps = eps;
            s.lambda_T = lambda_T;
            s.lambda.assign(static_cast<std::size_t>(k), 0.0);
            s.lambda_R = lambda_R;
            const ScalarTrace t = run_scalar(s, dt, max_iters, tol);
            py::dict d;
            d["e2_0"] = t.e2_0;
            d["e2_final"] = t.e2_final;
            d["first_passage"] = t.first_passage;
            d["total_iters"] = t.total_iters;
            d["max_rel_residual"] = t.max_rel_residual;
            d["lambda"] = s.lambda;
            return d;
        },
        py::arg("k"), py::arg("eps"), py::arg("lambda_T"), py::arg("lambda_R"),
        py::arg("dt") = 1e-3, py::arg("max_iters") = 2000000, py::arg("tol") = 1e-6,
        "Integrate one decoupled singular-direction system from zero weights.");
    m.def(
        "rate_monotonicity",
        [](int k, const std::vector<double>& eps_list, double lambda_T,
           const std::vector<double>& lambda_R, double dt, int max_iters, double tol) {
            ScalarSystem base;
            base.k = k;
            base.lambda_T = lambda_T;
            base.lambda.assign(static_cast<std::size_t>(k), 0.0);
            base.lambda_R = lambda_R;
            const RateReport r = rate_monotonicity(base, eps_list, dt, max_iters, tol);
            py::dict d;
            d["eps"] = r.eps;
            d["first_passage"] = r.first_passage;
            d["never_slower"] = r.never_slower;
            d["strictly_faster"] = r.strictly_faster;
            return d;
        },
        py::arg("k"), py::arg("eps_list"), py::arg("lambda_T"), py::arg("lambda_R"),
        py::arg("dt") = 1e-3, py::arg("max_iters") = 2000000, py::arg("tol") = 1e-6,
        "Compare scalar first-passage iterations across feedback strengths.");

    // --- circuits ---------------------------------------------------------------
    m.def(
        "output_circuit_effective",
        [](double h, int s, double mu, double eps_osc, double t_hi) {
            OutputCircuit c;
            c.h = h;
            c.s = s;
            c.mu = mu;
            c.eps_osc = eps_osc;
            c.t_hi = t_hi;
            return output_circuit_effective(c);
        },
        py::arg("h"), py::arg("s"), py::arg("mu") = 1.0, py::arg("eps_osc") = 0.1,
        py::arg("t_hi") = 1.0,
        "Effective per-batch teaching signal of the spiking output circuit "
        "(cycles average to zero).");
    m.def(
        "shutdown_gate",
        [](double x, double delta, double K) {
            ShutdownCircuit c;
            c.K = K;
            c.x = x;
            return shutdown_step(c, delta);
        },
        py::arg("x"), py::arg("delta"), py::arg("K") = 10.0,
        "Feedback delta after the saturation-shutdown circuit at activity x.");

    // --- checkpoints --------------------------------------------------------------
    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            py::dict d;
            for (const auto& t : load_checkpoint(path)) {
                py::array_t<double> a(t.shape);
                std::memcpy(a.mutable_data(), t.values.data(),
                            sizeof(double) * t.values.size());
                d[py::str(t.name)] = std::move(a);
            }
            return d;
        },
        py::arg("path"), "All tensors of a checkpoint file, by name.");
    m.def(
        "checkpoint_alignment",
        [](const std::string& path) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& a : checkpoint_alignment(load_checkpoint(path)))
                out.emplace_back(a.layer, a.corr);
            return out;
        },
        py::arg("path"), "Per-layer forward/feedback weight correlation of a checkpoint.");

    // --- rng (stream verification) -------------------------------------------------
    m.def(
        "rng_uniforms",
        [](std::uint64_t seed, int n) {
            Rng rng(seed);
            std::vector<double> v(static_cast<std::size_t>(n));
            for (auto& x : v) x = rng.uniform();
            return v;
        },
        py::arg("seed"), py::arg("n"), "First n uniforms of the seeded generator.");
}
