#include "doctest.h"

#include "urfb/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

using namespace urfb;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path dir = fs::path("harness_test_tmp") / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Network small_net(const std::string& mode, std::uint64_t seed) {
    ExperimentConfig cfg = parse_config_text("arch=Full 6; Output\nmode=" + mode +
                                             "\ndataset=blobs\nblobs_dim=8\nblobs_classes=3\n");
    Rng rng(seed);
    return build_network(make_netspec(cfg.arch, FeatShape::flat(8), 3), cfg, rng);
}

}  // namespace

TEST_CASE("checkpoints restore the exact parameter state into a fresh network") {
    fs::path dir = scratch("ckpt");
    Network net = small_net("urfb", 5);

    Rng data_rng(1);
    Dataset data = toy_blobs(data_rng, 10, 3, 8, 6.0);
    ExperimentConfig cfg = parse_config_text("arch=Full 6; Output\nmode=urfb\nbatch_size=10\n");
    Rng train(2);
    train_epoch(net, data, 30, cfg, train, 0);

    const std::string path = (dir / "state.bin").string();
    save_checkpoint(path, net);

    auto tensors = load_checkpoint(path);
    REQUIRE(tensors.size() == 4);
    CHECK(tensors[0].name == "layer0.full.W");
    CHECK(tensors[0].shape == std::vector<std::size_t>{6, 8});
    CHECK(tensors[3].name == "layer1.full.R");

    Network other = small_net("urfb", 999);  // different init
    restore_checkpoint(other, path);
    auto pa = net.named_params();
    auto pb = other.named_params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t e = 0; e < pa[i].size; ++e) REQUIRE(pa[i].data[e] == pb[i].data[e]);

    // the restored net behaves identically
    Tensor X({2, 8});
    X.fill(0.3);
    const Tensor& ya = net.forward(X, false);
    Tensor ya_copy = ya;
    const Tensor& yb = other.forward(X, false);
    for (std::size_t e = 0; e < ya_copy.size(); ++e) CHECK(ya_copy[e] == yb[e]);
}

TEST_CASE("checkpoint files are validated on load and restore") {
    fs::path dir = scratch("ckpt_bad");
    CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), std::runtime_error);

    std::ofstream(dir / "junk.bin", std::ios::binary) << "NOTACKPT\n";
    CHECK_THROWS_AS(load_checkpoint((dir / "junk.bin").string()), std::runtime_error);

    Network net = small_net("urfb", 5);
    const std::string good = (dir / "good.bin").string();
    save_checkpoint(good, net);

    // truncation: drop the trailing bytes
    std::string bytes = slurp(good);
    std::ofstream(dir / "trunc.bin", std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_checkpoint((dir / "trunc.bin").string()), std::runtime_error);

    // structural mismatch: different architecture
    ExperimentConfig cfg2 = parse_config_text("arch=Full 4; Full 4; Output\nmode=urfb\n");
    Rng rng(3);
    Network other = build_network(make_netspec(cfg2.arch, FeatShape::flat(8), 3), cfg2, rng);
    CHECK_THROWS_AS(restore_checkpoint(other, good), std::runtime_error);
}

TEST_CASE("alignment recomputed from a checkpoint matches the live network") {
    fs::path dir = scratch("ckpt_align");

    Network bp = small_net("bp", 7);
    const std::string bp_path = (dir / "bp.bin").string();
    save_checkpoint(bp_path, bp);
    auto al = checkpoint_alignment(load_checkpoint(bp_path));
    REQUIRE(al.size() == 2);
    CHECK(al[0].layer == "layer0.full");
    CHECK(al[1].layer == "layer1.full");
    CHECK(al[0].corr == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(al[1].corr == doctest::Approx(1.0).epsilon(1e-12));

    Network ur = small_net("urfb", 7);
    const std::string ur_path = (dir / "ur.bin").string();
    save_checkpoint(ur_path, ur);
    auto al2 = checkpoint_alignment(load_checkpoint(ur_path));
    auto live = ur.alignment();
    REQUIRE(al2.size() == live.size());
    for (std::size_t i = 0; i < live.size(); ++i)
        CHECK(al2[i].corr == doctest::Approx(live[i]).epsilon(1e-12));
    CHECK(std::abs(al2[0].corr) < 0.9);  // random W vs random R: far from aligned
}

TEST_CASE("metrics csv formatting is stable and self-consistent") {
    CHECK(metrics_csv_header(2) == "epoch,train_err,val_err,train_loss,corr_l1,corr_l2");
    CHECK(metrics_csv_header(0) == "epoch,train_err,val_err,train_loss");

    MetricsRecord rec;
    rec.epoch = 3;
    rec.train_err = 0.25;
    rec.val_err = 0.5;
    rec.train_loss = 0.125;
    rec.layer_corr = {0.5, 1.0};
    CHECK(metrics_csv_row(rec) == "3,0.25,0.5,0.125,0.5,1");

    rec.val_err = std::nan("");
    CHECK(metrics_csv_row(rec) == "3,0.25,nan,0.125,0.5,1");

    fs::path dir = scratch("metrics");
    write_metrics_csv((dir / "m.csv").string(), 2, {rec});
    CHECK(slurp(dir / "m.csv") ==
          "epoch,train_err,val_err,train_loss,corr_l1,corr_l2\n3,0.25,nan,0.125,0.5,1\n");

    MetricsRecord wrong = rec;
    wrong.layer_corr = {0.5};
    CHECK_THROWS_AS(write_metrics_csv((dir / "m2.csv").string(), 2, {wrong}),
                    std::runtime_error);
}

TEST_CASE("manifests are valid json with escaped config text") {
    RunManifest m;
    m.command = "train";
    m.config_text = "arch=Full 6; Output\nnote=\"quoted\"\tend";
    m.seed = 42;
    m.code_version = kVersion;
    m.output_dir = "runs/x";
    m.started = "2026-01-01T00:00:00Z";
    m.finished = "2026-01-01T00:00:05Z";
    m.outputs = {"metrics.csv", "ckpt_0001.bin"};
    const std::string j = manifest_json(m);
    CHECK(j.find("\"command\": \"train\"") != std::string::npos);
    CHECK(j.find("\"seed\": 42") != std::string::npos);
    CHECK(j.find("\\\"quoted\\\"") != std::string::npos);
    CHECK(j.find("\\t") != std::string::npos);
    CHECK(j.find("metrics.csv") != std::string::npos);
    // no raw control characters inside the rendered string values
    for (std::size_t i = 0; i < j.size(); ++i)
        if (j[i] == '\n') CHECK((i == j.size() - 1 || j[i + 1] == ' ' || j[i + 1] == '}' ||
                                 j[i + 1] == ']' || j[i + 1] == '"'));

    const std::string ts = utc_timestamp_now();
    REQUIRE(ts.size() == 20);
    CHECK(ts[4] == '-');
    CHECK(ts[10] == 'T');
    CHECK(ts.back() == 'Z');
}

TEST_CASE("identical configs produce byte-identical metrics files") {
    const std::string cfg_text =
        "arch=Full 8; Output\nmode=urfb\ndataset=blobs\nblobs_per_class=20\n"
        "blobs_classes=3\nblobs_dim=8\nbatch_size=10\neta=0.05\nepochs=3\n"
        "val_size=10\nseed=77\ncheckpoint_every=2\n";
    ExperimentConfig cfg = parse_config_text(cfg_text);
    fs::path a = scratch("run_a"), b = scratch("run_b");
    REQUIRE(run_training(cfg, a.string()) == 0);
    REQUIRE(run_training(cfg, b.string()) == 0);

    CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));

    // header + one row per epoch
    std::istringstream lines(slurp(a / "metrics.csv"));
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) ++count;
    CHECK(count == 4);

    // cadence 2 over 3 epochs: initial state, epoch 2, and the final epoch
    CHECK(fs::exists(a / "ckpt_0000.bin"));
    CHECK(fs::exists(a / "ckpt_0002.bin"));
    CHECK(fs::exists(a / "ckpt_0003.bin"));
    CHECK(!fs::exists(a / "ckpt_0001.bin"));

    const std::string manifest = slurp(a / "manifest.json");
    CHECK(manifest.find("metrics.csv") != std::string::npos);
    CHECK(manifest.find("ckpt_0002.bin") != std::string::npos);
    CHECK(manifest.find("\"seed\": 77") != std::string::npos);
}

TEST_CASE("dataset resolution: generated sets need no directory, file sets do") {
    ExperimentConfig cfg;
    cfg.dataset = "blobs";
    cfg.blobs_per_class = 5;
    cfg.blobs_classes = 3;
    cfg.blobs_dim = 6;
    Rng rng(1);
    Dataset d = load_dataset(cfg, rng);
    CHECK(d.size() == 15);

    cfg.dataset = "synth";
    cfg.synth_n = 8;
    Rng rng2(1);
    CHECK(load_dataset(cfg, rng2).size() == 8);

    cfg.dataset = "cifar10";
    cfg.data_dir.clear();
    unsetenv("URFB_DATA_ROOT");
    Rng rng3(1);
    CHECK_THROWS_WITH_AS(load_dataset(cfg, rng3), doctest::Contains("URFB_DATA_ROOT"),
                         std::runtime_error);

    // explicit data_dir wins
    fs::path dir = scratch("dataset_dir");
    Rng img_rng(4);
    SynthImages img = make_synth_images(img_rng, 4, 10, 3, 32, 32, 24.0);
    write_cifar10((dir / "data_batch_1.bin").string(), img.labels, img.pixels);
    cfg.data_dir = dir.string();
    Rng rng4(1);
    CHECK(load_dataset(cfg, rng4).size() == 4);
}

TEST_CASE("align subcommand reports per-checkpoint correlations") {
    const std::string cfg_text =
        "arch=Full 8; Output\nmode=urfb\ndataset=blobs\nblobs_per_class=20\n"
        "blobs_classes=3\nblobs_dim=8\nbatch_size=10\neta=0.05\nepochs=2\n"
        "val_size=10\nseed=7\ncheckpoint_every=1\n";
    fs::path run = scratch("align_run");
    REQUIRE(run_training(parse_config_text(cfg_text), run.string()) == 0);

    fs::path out = scratch("align_out");
    REQUIRE(cmd_align({run.string(), "--out=" + out.string()}) == 0);
    const std::string csv = slurp(out / "alignment.csv");
    CHECK(csv.rfind("checkpoint,layer,correlation\n", 0) == 0);
    CHECK(csv.find("ckpt_0000.bin") != std::string::npos);
    CHECK(csv.find("layer0.full") != std::string::npos);

    fs::path empty = scratch("align_empty");
    CHECK(cmd_align({empty.string(), "--out=" + out.string()}) != 0);
}

TEST_CASE("circuit subcommand verifies the narrow grid and writes a report") {
    fs::path out = scratch("circuit_out");
    REQUIRE(cmd_circuit({"--out=" + out.string(), "--grid-step=0.5"}) == 0);
    const std::string report = slurp(out / "report.csv");
    CHECK(report.rfind("check,cases,counterexamples,equivalent\n", 0) == 0);
    CHECK(report.find("\noutput_delta,") != std::string::npos);
    CHECK(report.find("\nshutdown_gate,") != std::string::npos);
    // both rows: zero counterexamples, equivalent flag set
    std::istringstream rows(report);
    std::string row;
    std::getline(rows, row);  // header
    while (std::getline(rows, row)) {
        CAPTURE(row);
        CHECK(row.substr(row.size() - 4) == ",0,1");
    }

    fs::path out2 = scratch("circuit_trace");
    REQUIRE(cmd_circuit({"--out=" + out2.string(), "--trace=h=0.5,s=1"}) == 0);
    const std::string trace = slurp(out2 / "trace.csv");
    CHECK(trace.rfind("step,delta,t\n", 0) == 0);
}

TEST_CASE("lindyn subcommand writes trajectories, the rate study, and a plot") {
    fs::path out = scratch("lindyn_out");
    REQUIRE(cmd_lindyn({"--k=2", "--iters=40", "--record-every=20", "--eps=0,1",
                        "--rate-iters=400000", "--out=" + out.string()}) == 0);
    const std::string traj = slurp(out / "trajectories.csv");
    CHECK(traj.rfind("run,eps,iteration,e2,corr_l1,corr_l2\n", 0) == 0);
    CHECK(traj.find("eps=0") != std::string::npos);
    CHECK(traj.find("eps=1") != std::string::npos);
    const std::string rates = slurp(out / "rate_report.csv");
    CHECK(rates.rfind("eps,first_passage,never_slower,strictly_faster\n", 0) == 0);
    CHECK(fs::exists(out / "lindyn.png"));
    CHECK(fs::exists(out / "manifest.json"));
    // png magic
    const std::string png = slurp(out / "lindyn.png");
    REQUIRE(png.size() > 8);
    CHECK(png[1] == 'P');
    CHECK(png[2] == 'N');
    CHECK(png[3] == 'G');
}

TEST_CASE("train subcommand accepts a config file plus overriding flags") {
    fs::path dir = scratch("train_cmd");
    const std::string cfg_path = (dir / "exp.cfg").string();
    std::ofstream(cfg_path) << "arch=Full 8; Output\nmode=urfb\ndataset=blobs\n"
                               "blobs_per_class=20\nblobs_classes=3\nblobs_dim=8\n"
                               "batch_size=10\neta=0.05\nepochs=5\nval_size=10\nseed=3\n";
    fs::path out = dir / "run";
    REQUIRE(cmd_train({cfg_path, "--out=" + out.string(), "--epochs=1"}) == 0);
    std::istringstream lines(slurp(out / "metrics.csv"));
    std::string line;
    int count = 0;
    while (std::getline(lines, line)) ++count;
    CHECK(count == 2);  // the flag override beat the file's epochs=5

    // a mode sweep fans out into one run directory per mode
    fs::path sweep = dir / "sweep";
    REQUIRE(cmd_train({cfg_path, "--out=" + sweep.string(), "--epochs=1",
                       "--modes=bp,urfb"}) == 0);
    CHECK(fs::exists(sweep / "bp" / "metrics.csv"));
    CHECK(fs::exists(sweep / "urfb" / "metrics.csv"));

    CHECK(cmd_train({"nonexistent.cfg"}) != 0);
    CHECK(cmd_train({cfg_path, "extra_positional", "oops"}) != 0);
}
