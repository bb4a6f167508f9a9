#pragma once

// Architecture-string parsing, shape inference and experiment configuration.
//
// Architecture grammar (case-insensitive, items separated by ';'):
//   Conv <filters> <h>x<w>        same-padded cross-correlation, stride 1
//   LocalConv <filters> <h>x<w>   conv geometry with untied per-location weights
//   Maxpool <n> [stride <s>]      n x n window centered on the pixel, default stride 2
//   Drop <p>                      zero a random fraction p per training batch
//   Full <units>                  dense ("Full conn. 500" is accepted)
//   Sum                           adds the outputs of the two preceding layers
//   Output                        dense classifier head, no nonlinearity
//
// Config files are `key=value` lines, '#' comments; unknown keys are rejected.

#include <cstdint>
#include <string>
#include <vector>

namespace urfb {

enum class LayerKind { Conv, LocalConv, Maxpool, Dropout, Full, Sum, Output };
enum class Mode { BP, FRFB, URFB };
enum class Loss { Hinge, SoftmaxXent };

const char* to_string(LayerKind k);
const char* to_string(Mode m);
const char* to_string(Loss l);
Mode mode_from_string(const std::string& s);    // accepts BP, BP-H, FRFB, URFB
Loss loss_from_string(const std::string& s);    // hinge | softmax-xent

struct LayerSpec {
    LayerKind kind;
    int filters = 0;      // Conv / LocalConv
    int kh = 0, kw = 0;   // Conv / LocalConv
    int pool = 0;         // Maxpool window
    int stride = 2;       // Maxpool stride
    double drop_p = 0.0;  // Dropout
    int units = 0;        // Full

    bool operator==(const LayerSpec&) const = default;
};

// Feature shape flowing between layers: spatial (c,h,w) until the first
// Full/Output layer flattens it, then a plain unit count.
struct FeatShape {
    bool spatial = false;
    int c = 0, h = 0, w = 0;
    int units = 0;

    static FeatShape image(int c, int h, int w) { return {true, c, h, w, 0}; }
    static FeatShape flat(int units) { return {false, 0, 0, 0, units}; }
    int flat_size() const { return spatial ? c * h * w : units; }
    bool operator==(const FeatShape&) const = default;
    std::string str() const;
};

struct NetSpec {
    std::vector<LayerSpec> layers;
    FeatShape input;
    int classes = 0;
    std::vector<FeatShape> shapes;  // output shape of each layer, filled by infer_shapes
};

// Parse an architecture string into layer specs. Throws std::runtime_error
// naming the offending item ("arch item 3: ...") on malformed input.
std::vector<LayerSpec> parse_arch(const std::string& text);

// Canonical rendering; parse_arch(print_arch(parse_arch(s))) == parse_arch(s).
std::string print_arch(const std::vector<LayerSpec>& layers);

// Propagate shapes from the input, validating every transition (spatial ops
// after flattening, Sum over unequal shapes, missing Output, ... are errors).
std::vector<FeatShape> infer_shapes(const std::vector<LayerSpec>& layers, FeatShape input,
                                    int classes);

NetSpec make_netspec(std::vector<LayerSpec> layers, FeatShape input, int classes);
NetSpec make_netspec(const std::string& arch, FeatShape input, int classes);

// --- experiment configuration --------------------------------------------------

struct ExperimentConfig {
    std::string arch = "Conv 32 5x5; Maxpool 3; Drop .8; Full 500; Drop .3; Output";
    Mode mode = Mode::BP;
    Loss loss = Loss::SoftmaxXent;  // default derived from mode unless set explicitly
    double eta = 0.1;
    double mu = 1.0;
    int batch_size = 500;
    int epochs = 10;
    double connectivity = 1.0;      // fraction of connections kept (1.0 = dense)
    std::uint64_t seed = 12345;
    bool untied = false;            // build Conv layers as LocalConv
    std::string dataset = "cifar10";  // cifar10 | cifar100 | mnist | blobs | synth
    std::string data_dir;           // defaults to $URFB_DATA_ROOT/<dataset>
    int val_size = 5000;            // validation = last val_size training images
    int checkpoint_every = 0;       // epochs between checkpoints; 0 = final only
    // synthetic datasets
    int blobs_per_class = 200;
    int blobs_dim = 20;
    double blobs_sep = 10.0;
    int blobs_classes = 10;
    int synth_n = 5000;
    double synth_noise = 24.0;      // byte-scale noise sd for `synth` images
};

// `key=value` text; '#' starts a comment; blank lines ignored. Unknown keys,
// unparsable values and out-of-range settings all throw std::runtime_error.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void validate_config(const ExperimentConfig& cfg);

// render the resolved config back as key=value lines (manifest/debugging)
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace urfb
