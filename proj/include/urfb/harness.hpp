#pragma once

// Experiment harness: run directories with metrics.csv + checkpoints + a
// manifest, and the four CLI subcommands (train / lindyn / circuit / align).
//
// Checkpoint format ("flat tensors, small text header"):
//   URFBCKPT1\n
//   tensor <name> <rank> <d0> <d1> ...\n   followed immediately by the
//                                          d0*d1*... doubles, little-endian
//   ...one such block per tensor...
//   end\n
//
// metrics.csv header: epoch,train_err,val_err,train_loss,corr_l1,...,corr_lk
// where k is the number of layers carrying feedback weights. CSV files are
// the authoritative outputs; PNG plots are quick-look renderings only.

#include "urfb/data.hpp"
#include "urfb/feedback.hpp"
#include "urfb/netspec.hpp"
#include "urfb/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace urfb {

extern const char* const kVersion;

// --- checkpoints --------------------------------------------------------------------

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;
};

void save_checkpoint(const std::string& path, Network& net);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

// copy a saved state back into a structurally identical network; the name
// sets and every shape must match exactly
void restore_checkpoint(Network& net, const std::string& path);

// W/R correlation per weight-carrying layer, recomputed from a checkpoint
// alone. The kind token in the tensor names ("full" / "conv" / "local")
// selects the pairing: dense feedback is the transpose orientation, conv and
// localconv share their forward layout. Pruned-away entries are excluded;
// degenerate (zero-variance) layers report NaN.
struct CkptAlignment {
    std::string layer;  // "layer<i>.<kind>"
    double corr = 0.0;
};
std::vector<CkptAlignment> checkpoint_alignment(const std::vector<NamedTensor>& tensors);

// --- metrics ------------------------------------------------------------------------

std::string metrics_csv_header(std::size_t corr_layers);
std::string metrics_csv_row(const MetricsRecord& rec);
void write_metrics_csv(const std::string& path, std::size_t corr_layers,
                       const std::vector<MetricsRecord>& records);

// --- manifest -----------------------------------------------------------------------

// Every output file a run produces is referenced by exactly one manifest
// (manifest.json in the run directory, which lists its sibling artifacts).
struct RunManifest {
    std::string command;      // subcommand that produced the run
    std::string config_text;  // resolved key=value settings
    std::uint64_t seed = 0;
    std::string code_version;
    std::string output_dir;
    std::string started;   // UTC, ISO-8601
    std::string finished;
    std::vector<std::string> outputs;  // file names relative to output_dir
};

std::string manifest_json(const RunManifest& m);
void write_manifest(const RunManifest& m);
std::string utc_timestamp_now();

// --- shared run machinery -----------------------------------------------------------

// Load (or synthesize) the dataset a config names. File-backed datasets
// resolve their directory from cfg.data_dir, falling back to
// $URFB_DATA_ROOT/<dataset>; blobs and synth are generated from `rng`.
Dataset load_dataset(const ExperimentConfig& cfg, Rng& rng);

// One full training run: writes metrics.csv, checkpoints at the configured
// cadence (always one after the final epoch; an initial-state checkpoint too
// when checkpoint_every > 0), and manifest.json into out_dir. Identical
// config and seed produce byte-identical metrics.csv.
int run_training(const ExperimentConfig& cfg, const std::string& out_dir);

// --- subcommands (argv after the subcommand word; return process exit code) ----------

int cmd_train(const std::vector<std::string>& args);
int cmd_lindyn(const std::vector<std::string>& args);
int cmd_circuit(const std::vector<std::string>& args);
int cmd_align(const std::vector<std::string>& args);

}  // namespace urfb
