#pragma once

// Dataset loading and synthesis. Images are stored as doubles scaled v/255
// exactly; labels are ints. Loaders validate magic numbers / record sizes and
// throw std::runtime_error on truncated or malformed files. Empty files yield
// empty datasets.

#include "urfb/netspec.hpp"
#include "urfb/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace urfb {

struct Dataset {
    Tensor X;                 // [N, flat]
    std::vector<int> labels;  // [N]
    int classes = 0;
    FeatShape shape;          // per-sample feature shape

    std::size_t size() const { return labels.size(); }
};

// 3073-byte records (label byte + 3x32x32 channel-planar pixels). Reads
// data_batch_*.bin when present in `dir`, otherwise every *.bin file in
// lexicographic order.
Dataset load_cifar10(const std::string& dir);
Dataset load_cifar10_file(const std::string& path);

// 3074-byte records (coarse byte, fine byte, pixels); the fine label is used.
// Reads train.bin when present, otherwise every *.bin in lexicographic order.
Dataset load_cifar100(const std::string& dir);
Dataset load_cifar100_file(const std::string& path);

// IDX pair; magic 0x00000803 (images) / 0x00000801 (labels), big-endian
// header fields. load_mnist reads the standard train-* filenames in `dir`.
Dataset load_mnist(const std::string& dir);
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path);

// writers for the same formats (round-trip tests, synthetic corpora)
void write_cifar10(const std::string& path, const std::vector<std::uint8_t>& labels,
                   const std::vector<std::uint8_t>& pixels);  // pixels: N*3072
void write_cifar100(const std::string& path, const std::vector<std::uint8_t>& coarse,
                    const std::vector<std::uint8_t>& fine,
                    const std::vector<std::uint8_t>& pixels);
void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      int n, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// Gaussian blobs (unit sd) around seeded random centers with pairwise
// distance >= separation; labels 0..classes-1, per_class samples each.
Dataset toy_blobs(Rng& rng, int per_class, int classes, int dim, double separation);

// Synthetic 10-class image corpus in CIFAR-sized byte planes: per-class
// low-frequency templates plus per-image pixel noise (sd noise_sd in byte
// units), quantized to bytes. Returned as raw bytes for the format writers.
struct SynthImages {
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> pixels;  // n * c*h*w, channel-planar
};
SynthImages make_synth_images(Rng& rng, int n, int classes, int c, int h, int w,
                              double noise_sd);
Dataset synth_dataset(Rng& rng, int n, double noise_sd);  // 3x32x32, 10 classes

// rows of `data.X` selected by indices [begin, end) of `order`
Tensor gather_rows(const Tensor& X, const std::vector<int>& order, int begin, int end);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& order,
                               int begin, int end);

}  // namespace urfb
