// urfb: train networks with asymmetric feedback, study the linear dynamics,
// simulate the error-signal circuits, and inspect checkpoint alignment.

#include "urfb/harness.hpp"

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

namespace {

void usage() {
    std::printf(
        "usage: urfb <command> [args]\n"
        "\n"
        "commands:\n"
        "  train [config] [--key=value ...] [--out=DIR] [--modes=BP,URFB,FRFB]\n"
        "      Train a network. Config is key=value lines; flags override file\n"
        "      settings (--mode=URFB --epochs=20 --dataset=synth ...). --modes\n"
        "      sweeps several feedback modes into sibling run directories.\n"
        "      File datasets resolve under $URFB_DATA_ROOT or data_dir.\n"
        "      Writes metrics.csv, ckpt_*.bin and manifest.json into --out\n"
        "      (default runs/train).\n"
        "\n"
        "  lindyn [--k=3] [--eps=0,0.25,0.5,1] [--dt=1e-3] [--iters=1000]\n"
        "         [--seed=N] [--bp=0|1] [--out=DIR]\n"
        "      Integrate the deep linear-network error flow from zero weights\n"
        "      for each feedback strength eps, next to a gradient-descent\n"
        "      baseline, and compare scalar convergence rates across eps.\n"
        "      Writes trajectories.csv, rate_report.csv and lindyn.png.\n"
        "\n"
        "  circuit [--grid-step=0.05] [--perturb-t=V] [--trace=h=2,s=1] [--out=DIR]\n"
        "      Check the spiking error circuits against their closed forms on\n"
        "      an exhaustive grid (report.csv, counterexamples.csv), or dump a\n"
        "      state trace for one input (trace.csv). --perturb-t moves the\n"
        "      control unit's trigger to demonstrate fault detection.\n"
        "\n"
        "  align CKPT_DIR [--out=DIR]\n"
        "      Per-checkpoint, per-layer correlation between forward and\n"
        "      feedback weights (alignment.csv).\n");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2 || std::strcmp(argv[1], "--help") == 0 || std::strcmp(argv[1], "-h") == 0) {
        usage();
        return argc < 2 ? 2 : 0;
    }
    const std::string cmd = argv[1];
    const std::vector<std::string> args(argv + 2, argv + argc);
    if (cmd == "train") return urfb::cmd_train(args);
    if (cmd == "lindyn") return urfb::cmd_lindyn(args);
    if (cmd == "circuit") return urfb::cmd_circuit(args);
    if (cmd == "align") return urfb::cmd_align(args);
    std::fprintf(stderr, "error: unknown command '%s' (try --help)\n", cmd.c_str());
    return 2;
}
